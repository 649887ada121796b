#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypino/expr.hpp"
#include "hypino/geometry.hpp"

namespace hypino {

// Coefficients of L[u] = c1 u + c2 u_x + c3 u_y + c4 u_xx + c5 u_yy.
struct OperatorCoeffs {
    std::array<double, 5> c{0, 0, 0, 0, 0};

    double c1() const { return c[0]; }
    double c2() const { return c[1]; }
    double c3() const { return c[2]; }
    double c4() const { return c[3]; }
    double c5() const { return c[4]; }

    bool all_zero() const {
        for (double v : c)
            if (v != 0.0) return false;
        return true;
    }
    bool within_training_range() const {
        for (double v : c)
            if (std::abs(v) > 2.0) return false;
        return true;
    }
};

enum class PdeClass : std::uint8_t { Elliptic, Parabolic, Hyperbolic, Degenerate };

inline const char* pde_class_name(PdeClass c) {
    switch (c) {
        case PdeClass::Elliptic: return "elliptic";
        case PdeClass::Parabolic: return "parabolic";
        case PdeClass::Hyperbolic: return "hyperbolic";
        case PdeClass::Degenerate: return "degenerate";
    }
    return "?";
}

// Discriminant of the second-order part (A = c4, B = 0, C = c5). A lone
// second-order term counts as parabolic only when the first-order term of
// the other variable can act as a time derivative.
inline PdeClass classify(const OperatorCoeffs& op) {
    double a = op.c4(), c = op.c5();
    if (a * c > 0) return PdeClass::Elliptic;
    if (a * c < 0) return PdeClass::Hyperbolic;
    if (a != 0.0 && c == 0.0 && op.c3() != 0.0) return PdeClass::Parabolic;
    if (c != 0.0 && a == 0.0 && op.c2() != 0.0) return PdeClass::Parabolic;
    return PdeClass::Degenerate;
}

// L applied symbolically: the exact source of a manufactured solution.
inline Expr apply_operator(const OperatorCoeffs& op, const Expr& u) {
    std::vector<Expr> terms;
    auto push = [&](double coeff, Expr e) {
        if (coeff != 0.0) terms.push_back(Expr::mul({Expr::constant(coeff), std::move(e)}));
    };
    Expr ux = u.derivative('x');
    Expr uy = u.derivative('y');
    push(op.c1(), u);
    push(op.c2(), ux);
    push(op.c3(), uy);
    push(op.c4(), ux.derivative('x'));
    push(op.c5(), uy.derivative('y'));
    return Expr::add(std::move(terms));
}

enum class BcKind : std::uint8_t { Dirichlet, Neumann, Both };

// Boundary data on one component. Values are either explicit expressions or
// derived from the instance's analytic solution (g = u, h = grad u . n).
struct BoundaryCondition {
    int component = 0;
    BcKind kind = BcKind::Dirichlet;
    bool from_solution = false;
    Expr dirichlet_value = Expr::constant(0.0);
    Expr neumann_value = Expr::constant(0.0);
};

struct PdeInstance {
    OperatorCoeffs coeffs;
    Domain domain;
    Expr source = Expr::constant(0.0);
    std::vector<BoundaryCondition> conditions;
    std::optional<Expr> solution;
    bool supervised = false;
    std::uint64_t seed = 0;  // provenance
    std::string name;        // benchmarks only

    // Cached solution derivatives: first order for normal-derivative data,
    // second order for the Sobolev supervision targets.
    std::optional<Expr> solution_dx, solution_dy, solution_dxx, solution_dyy;

    void attach_solution(Expr u) {
        solution_dx = u.derivative('x');
        solution_dy = u.derivative('y');
        solution_dxx = solution_dx->derivative('x');
        solution_dyy = solution_dy->derivative('y');
        solution = std::move(u);
        supervised = true;
    }

    const BoundaryCondition* condition_for(int component) const {
        for (const auto& bc : conditions)
            if (bc.component == component) return &bc;
        return nullptr;
    }

    double dirichlet_value_at(const BoundaryCondition& bc, Vec2 p) const {
        return bc.from_solution ? solution->eval(p.x, p.y) : bc.dirichlet_value.eval(p.x, p.y);
    }
    double neumann_value_at(const BoundaryCondition& bc, Vec2 p, Vec2 n) const {
        if (bc.from_solution)
            return solution_dx->eval(p.x, p.y) * n.x + solution_dy->eval(p.x, p.y) * n.y;
        return bc.neumann_value.eval(p.x, p.y);
    }
};

// Model-facing grid encoding. Row-major, cell-centered, float storage so the
// dataset files round-trip bit-exactly.
struct PdeGrids {
    int resolution = 0;
    std::vector<float> source;   // F
    std::vector<float> mask_g;   // M_g
    std::vector<float> value_g;  // V_g
    std::vector<float> mask_h;   // M_h
    std::vector<float> value_h;  // V_h

    std::size_t cells() const { return static_cast<std::size_t>(resolution) * resolution; }
    static double center(int idx, int res) { return -1.0 + (idx + 0.5) * 2.0 / res; }
    double cell_size() const { return 2.0 / resolution; }
};

namespace detail {

// Marks the (clamped) 2x2 block of cell centers surrounding p. On the outer
// edge only the in-grid half of the block exists.
inline void mark_nearest(std::vector<float>& mask, std::vector<float>& value, int res, Vec2 p,
                         double v) {
    double h = 2.0 / res;
    int i0 = static_cast<int>(std::floor((p.y + 1.0) / h - 0.5));
    int j0 = static_cast<int>(std::floor((p.x + 1.0) / h - 0.5));
    for (int di = 0; di <= 1; ++di) {
        for (int dj = 0; dj <= 1; ++dj) {
            int i = i0 + di, j = j0 + dj;
            if (i < 0 || i >= res || j < 0 || j >= res) continue;
            mask[static_cast<std::size_t>(i) * res + j] = 1.0f;
            value[static_cast<std::size_t>(i) * res + j] = static_cast<float>(v);
        }
    }
}

}  // namespace detail

// Grid encoding of one instance. Boundary samples at half-cell spacing mark
// the four nearest cell centers; Dirichlet and Neumann data go to separate
// mask/value pairs. The source stays active inside subtracted primitives.
inline PdeGrids rasterize(const PdeInstance& inst, int resolution) {
    if (resolution < 8) throw std::invalid_argument("resolution must be at least 8");
    PdeGrids g;
    g.resolution = resolution;
    g.source.assign(g.cells(), 0.0f);
    g.mask_g.assign(g.cells(), 0.0f);
    g.value_g.assign(g.cells(), 0.0f);
    g.mask_h.assign(g.cells(), 0.0f);
    g.value_h.assign(g.cells(), 0.0f);

    for (int i = 0; i < resolution; ++i) {
        double py = PdeGrids::center(i, resolution);
        for (int j = 0; j < resolution; ++j) {
            double px = PdeGrids::center(j, resolution);
            g.source[static_cast<std::size_t>(i) * resolution + j] =
                static_cast<float>(inst.source.eval(px, py));
        }
    }

    double spacing = g.cell_size() / 2.0;
    for (const auto& s : boundary_samples(inst.domain, spacing)) {
        const BoundaryCondition* bc = inst.condition_for(s.component);
        if (!bc) continue;
        if (bc->kind == BcKind::Dirichlet || bc->kind == BcKind::Both)
            detail::mark_nearest(g.mask_g, g.value_g, resolution, s.point,
                                 inst.dirichlet_value_at(*bc, s.point));
        if (bc->kind == BcKind::Neumann || bc->kind == BcKind::Both)
            detail::mark_nearest(g.mask_h, g.value_h, resolution, s.point,
                                 inst.neumann_value_at(*bc, s.point, s.normal));
    }
    return g;
}

// Chain-rule transport of a problem stated on [ax,bx] x [ay,by] onto the
// canonical square. First-order coefficients scale by 2/(b-a), second-order
// by (2/(b-a))^2; expressions get the inverse map substituted.
struct SourceRect {
    double ax = -1, bx = 1, ay = -1, by = 1;
};

inline PdeInstance remap_affine(const PdeInstance& orig, const SourceRect& r) {
    if (!(r.bx > r.ax) || !(r.by > r.ay)) throw std::invalid_argument("degenerate interval");
    double sx = 2.0 / (r.bx - r.ax);
    double sy = 2.0 / (r.by - r.ay);

    PdeInstance out = orig;
    out.coeffs.c = {orig.coeffs.c1(), orig.coeffs.c2() * sx, orig.coeffs.c3() * sy,
                    orig.coeffs.c4() * sx * sx, orig.coeffs.c5() * sy * sy};

    // x(tilde x) = (tilde x + 1)/sx + ax
    Expr inv_x = Expr::add({Expr::mul({Expr::constant(1.0 / sx), Expr::x()}),
                            Expr::constant(1.0 / sx + r.ax)});
    Expr inv_y = Expr::add({Expr::mul({Expr::constant(1.0 / sy), Expr::y()}),
                            Expr::constant(1.0 / sy + r.ay)});
    out.source = orig.source.substitute(inv_x, inv_y);
    if (orig.solution) {
        out.attach_solution(orig.solution->substitute(inv_x, inv_y));
        out.supervised = orig.supervised;
    }
    for (auto& bc : out.conditions) {
        if (!bc.from_solution) {
            bc.dirichlet_value = bc.dirichlet_value.substitute(inv_x, inv_y);
            bc.neumann_value = bc.neumann_value.substitute(inv_x, inv_y);
        }
    }
    return out;
}

inline Vec2 map_to_canonical(Vec2 p, const SourceRect& r) {
    return {2.0 * (p.x - r.ax) / (r.bx - r.ax) - 1.0, 2.0 * (p.y - r.ay) / (r.by - r.ay) - 1.0};
}

// Numeric L[u] from a bundle of point derivatives.
struct PointDerivs {
    double u = 0, ux = 0, uy = 0, uxx = 0, uxy = 0, uyy = 0;
};

inline double apply_operator_at(const OperatorCoeffs& op, const PointDerivs& d) {
    return op.c1() * d.u + op.c2() * d.ux + op.c3() * d.uy + op.c4() * d.uxx + op.c5() * d.uyy;
}

// max over probe points of |L[u] - f| / (1 + |f|); used as the supervised
// consistency audit.
inline double mms_consistency_error(const PdeInstance& inst, int probes = 100,
                                    std::uint64_t seed = 9000) {
    if (!inst.solution) throw std::invalid_argument("instance has no analytic solution");
    Expr lu = apply_operator(inst.coeffs, *inst.solution);
    Rng rng(seed);
    double worst = 0;
    int found = 0;
    while (found < probes) {
        Vec2 p{rng.uniform(-1, 1), rng.uniform(-1, 1)};
        if (!inst.domain.contains(p)) continue;
        ++found;
        double want = inst.source.eval_raw(p.x, p.y);
        double got = lu.eval_raw(p.x, p.y);
        if (!std::isfinite(want) || !std::isfinite(got)) return HUGE_VAL;
        worst = std::max(worst, std::abs(got - want) / (1.0 + std::abs(want)));
    }
    return worst;
}

}  // namespace hypino
