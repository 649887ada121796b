#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hypino/hypernet.hpp"
#include "hypino/losses.hpp"
#include "hypino/metrics.hpp"
#include "hypino/pde.hpp"

namespace hypino {

// Pointwise violations of the PDE and the boundary conditions by a candidate
// solution: r_f = L[u] - f on the cell-center grid, r_D = u - g and
// r_N = du/dn - h on the instance's boundary samples (half-cell spacing, the
// same sets the rasterizer marks).
struct ResidualFields {
    int resolution = 0;
    std::vector<double> r_f;
    std::vector<BoundarySample> dirichlet_samples;
    std::vector<double> r_d;
    std::vector<BoundarySample> neumann_samples;
    std::vector<double> r_n;

    double max_abs() const {
        double m = 0;
        for (double v : r_f) m = std::max(m, std::abs(v));
        for (double v : r_d) m = std::max(m, std::abs(v));
        for (double v : r_n) m = std::max(m, std::abs(v));
        return m;
    }
};

inline ResidualFields compute_residual_fields(const PdeInstance& inst, const FieldEval& u,
                                              int resolution) {
    ResidualFields out;
    out.resolution = resolution;
    out.r_f.resize(static_cast<std::size_t>(resolution) * resolution);
    for (int i = 0; i < resolution; ++i) {
        double py = PdeGrids::center(i, resolution);
        for (int j = 0; j < resolution; ++j) {
            double px = PdeGrids::center(j, resolution);
            Jet2 jet = u.jet(px, py);
            double lu = apply_operator_at(inst.coeffs,
                                          {jet.v, jet.dx, jet.dy, jet.dxx, jet.dxy, jet.dyy});
            out.r_f[static_cast<std::size_t>(i) * resolution + j] =
                lu - inst.source.eval_raw(px, py);
        }
    }
    double spacing = (2.0 / resolution) / 2.0;
    for (const auto& s : boundary_samples(inst.domain, spacing)) {
        const BoundaryCondition* bc = inst.condition_for(s.component);
        if (!bc) continue;
        if (bc->kind == BcKind::Dirichlet || bc->kind == BcKind::Both) {
            double g = inst.dirichlet_value_at(*bc, s.point);
            out.dirichlet_samples.push_back(s);
            out.r_d.push_back(u.value(s.point.x, s.point.y) - g);
        }
        if (bc->kind == BcKind::Neumann || bc->kind == BcKind::Both) {
            double h = inst.neumann_value_at(*bc, s.point, s.normal);
            Jet2 jet = u.jet(s.point.x, s.point.y);
            out.neumann_samples.push_back(s);
            out.r_n.push_back(jet.dx * s.normal.x + jet.dy * s.normal.y - h);
        }
    }
    return out;
}

// The delta problem in grid form. The correction must satisfy
// L[delta] = f - L[u] = -r_f with boundary data -r_D / -r_N, so the residual
// fields enter the source and value slots negated; masks reproduce the
// original rasterization exactly (same samples, same 4-nearest marking).
inline PdeGrids delta_grids(const ResidualFields& fields) {
    PdeGrids g;
    int res = fields.resolution;
    g.resolution = res;
    g.source.resize(fields.r_f.size());
    for (std::size_t i = 0; i < fields.r_f.size(); ++i)
        g.source[i] = static_cast<float>(-fields.r_f[i]);
    g.mask_g.assign(g.cells(), 0.0f);
    g.value_g.assign(g.cells(), 0.0f);
    g.mask_h.assign(g.cells(), 0.0f);
    g.value_h.assign(g.cells(), 0.0f);
    for (std::size_t i = 0; i < fields.dirichlet_samples.size(); ++i)
        detail::mark_nearest(g.mask_g, g.value_g, res, fields.dirichlet_samples[i].point,
                             -fields.r_d[i]);
    for (std::size_t i = 0; i < fields.neumann_samples.size(); ++i)
        detail::mark_nearest(g.mask_h, g.value_h, res, fields.neumann_samples[i].point,
                             -fields.r_n[i]);
    return g;
}

// Base PINN plus ordered delta PINNs, combined with uniform unit weights.
struct EnsembleSolution {
    PinnParams base;
    std::vector<PinnParams> deltas;

    std::shared_ptr<SumEval> evaluator(int rounds = -1) const {
        auto sum = std::make_shared<SumEval>();
        sum->add(std::make_shared<PinnEval>(base));
        std::size_t take = rounds < 0 ? deltas.size()
                                      : std::min(deltas.size(), static_cast<std::size_t>(rounds));
        for (std::size_t i = 0; i < take; ++i)
            sum->add(std::make_shared<PinnEval>(deltas[i]));
        return sum;
    }
};

// Generic refinement loop over an arbitrary delta solver; the hypernet path
// and the oracle tests share this machinery.
template <class SolverFn>
std::vector<std::shared_ptr<const FieldEval>> refine_with_solver(
    const PdeInstance& inst, int resolution, int rounds,
    std::shared_ptr<const FieldEval> base, SolverFn&& solver) {
    std::vector<std::shared_ptr<const FieldEval>> members{std::move(base)};
    for (int t = 0; t < rounds; ++t) {
        auto running = std::make_shared<SumEval>();
        for (const auto& m : members) running->add(m);
        ResidualFields fields = compute_residual_fields(inst, *running, resolution);
        PdeGrids grids = delta_grids(fields);
        members.push_back(solver(grids, fields));
    }
    return members;
}

// Inference-only iterative refinement through the hypernetwork: residuals of
// the running sum become a delta problem with unchanged coefficients.
inline EnsembleSolution refine(const PdeInstance& inst, Hypernet& net, int rounds) {
    int res = net.config().resolution;
    EnsembleSolution ens;
    ens.base = net.generate(rasterize(inst, res), inst.coeffs);
    auto members = refine_with_solver(
        inst, res, rounds, std::make_shared<PinnEval>(ens.base),
        [&](const PdeGrids& grids, const ResidualFields&) {
            PinnParams delta = net.generate(grids, inst.coeffs);
            ens.deltas.push_back(delta);
            return std::make_shared<PinnEval>(std::move(delta));
        });
    (void)members;
    return ens;
}

}  // namespace hypino
