#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hypino/jet.hpp"
#include "hypino/pde.hpp"
#include "hypino/pinn.hpp"

namespace hypino {

struct HuberConfig {
    double delta = 1.0;
};

inline double huber(double r, const HuberConfig& cfg = {}) {
    double a = std::abs(r);
    if (a <= cfg.delta) return 0.5 * r * r;
    return cfg.delta * (a - 0.5 * cfg.delta);
}

inline double huber_grad(double r, const HuberConfig& cfg = {}) {
    if (std::abs(r) <= cfg.delta) return r;
    return r > 0 ? cfg.delta : -cfg.delta;
}

struct LossWeights {
    double residual = 0.1;   // lambda_R
    double dirichlet = 10.0; // lambda_D
    double neumann = 1.0;    // lambda_N
    double sobolev0 = 1.0;   // lambda_S^(0)
    double sobolev1 = 1.0;   // lambda_S^(1)
    double sobolev2 = 0.1;   // lambda_S^(2)

    static LossWeights phase1() { return {0.01, 10.0, 1.0, 1.0, 0.1, 0.01}; }
    static LossWeights phase2() { return {0.1, 10.0, 1.0, 1.0, 1.0, 0.1}; }
};

// Anything that can be evaluated with exact derivatives at a point: a PINN,
// a symbolic expression, or a running refinement sum.
class FieldEval {
public:
    virtual ~FieldEval() = default;
    virtual Jet2 jet(double x, double y) const = 0;
    double value(double x, double y) const { return jet(x, y).v; }
};

class PinnEval : public FieldEval {
public:
    explicit PinnEval(PinnParams params) : params_(std::move(params)) {}
    Jet2 jet(double x, double y) const override {
        return pinn_forward_jet(params_, x, y, ws_);
    }
    const PinnParams& params() const { return params_; }

private:
    PinnParams params_;
    mutable PinnWorkspace ws_;
};

class ExprEval : public FieldEval {
public:
    explicit ExprEval(const Expr& u)
        : u_(u),
          ux_(u.derivative('x')),
          uy_(u.derivative('y')),
          uxx_(ux_.derivative('x')),
          uxy_(ux_.derivative('y')),
          uyy_(uy_.derivative('y')) {}
    Jet2 jet(double x, double y) const override {
        Jet2 j;
        j.v = u_.eval_raw(x, y);
        j.dx = ux_.eval_raw(x, y);
        j.dy = uy_.eval_raw(x, y);
        j.dxx = uxx_.eval_raw(x, y);
        j.dxy = uxy_.eval_raw(x, y);
        j.dyy = uyy_.eval_raw(x, y);
        return j;
    }

private:
    Expr u_, ux_, uy_, uxx_, uxy_, uyy_;
};

class SumEval : public FieldEval {
public:
    void add(std::shared_ptr<const FieldEval> member) { members_.push_back(std::move(member)); }
    Jet2 jet(double x, double y) const override {
        Jet2 total{};
        for (const auto& m : members_) total += m->jet(x, y);
        return total;
    }
    std::size_t size() const { return members_.size(); }

private:
    std::vector<std::shared_ptr<const FieldEval>> members_;
};

// --- collocation -------------------------------------------------------------

struct InteriorPoint {
    Vec2 p{};
    double f = 0;  // source value
};

struct SolutionTarget {
    double u = 0, ux = 0, uy = 0, uxx = 0, uyy = 0;
};

struct DirichletPoint {
    Vec2 p{};
    double g = 0;
};

struct NeumannPoint {
    Vec2 p{};
    Vec2 n{};
    double h = 0;
};

struct CollocationSet {
    std::vector<InteriorPoint> interior;
    std::vector<SolutionTarget> targets;  // parallel to interior when supervised
    std::vector<DirichletPoint> dirichlet;
    std::vector<NeumannPoint> neumann;
    bool has_targets() const { return !targets.empty(); }
};

struct CollocationConfig {
    int interior = 1024;
    int dirichlet = 256;
    int neumann = 256;
    double boundary_spacing = 2.0 / 128.0;
};

inline CollocationSet sample_collocation(const PdeInstance& inst, Rng& rng,
                                         const CollocationConfig& cfg = {}) {
    CollocationSet set;
    set.interior.reserve(static_cast<std::size_t>(cfg.interior));
    int guard = 0;
    while (static_cast<int>(set.interior.size()) < cfg.interior) {
        Vec2 p{rng.uniform(-1, 1), rng.uniform(-1, 1)};
        if (++guard > cfg.interior * 1000)
            throw std::runtime_error("interior sampling stalled; domain nearly empty");
        if (!inst.domain.contains(p)) continue;
        set.interior.push_back({p, inst.source.eval_raw(p.x, p.y)});
        if (inst.supervised) {
            SolutionTarget t;
            t.u = inst.solution->eval_raw(p.x, p.y);
            t.ux = inst.solution_dx->eval_raw(p.x, p.y);
            t.uy = inst.solution_dy->eval_raw(p.x, p.y);
            t.uxx = inst.solution_dxx->eval_raw(p.x, p.y);
            t.uyy = inst.solution_dyy->eval_raw(p.x, p.y);
            set.targets.push_back(t);
        }
    }

    std::vector<BoundarySample> dpool, npool;
    for (const auto& s : boundary_samples(inst.domain, cfg.boundary_spacing)) {
        const BoundaryCondition* bc = inst.condition_for(s.component);
        if (!bc) continue;
        if (bc->kind == BcKind::Dirichlet || bc->kind == BcKind::Both) dpool.push_back(s);
        if (bc->kind == BcKind::Neumann || bc->kind == BcKind::Both) npool.push_back(s);
    }
    auto pick = [&](std::vector<BoundarySample>& pool, int want) {
        std::vector<BoundarySample> out;
        if (static_cast<int>(pool.size()) <= want) {
            out = pool;
        } else {
            // Fisher-Yates prefix
            for (int i = 0; i < want; ++i) {
                std::size_t j = i + rng.below(pool.size() - static_cast<std::size_t>(i));
                std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
                out.push_back(pool[static_cast<std::size_t>(i)]);
            }
        }
        return out;
    };
    for (const auto& s : pick(dpool, cfg.dirichlet)) {
        const BoundaryCondition* bc = inst.condition_for(s.component);
        set.dirichlet.push_back({s.point, inst.dirichlet_value_at(*bc, s.point)});
    }
    for (const auto& s : pick(npool, cfg.neumann)) {
        const BoundaryCondition* bc = inst.condition_for(s.component);
        set.neumann.push_back({s.point, s.normal, inst.neumann_value_at(*bc, s.point, s.normal)});
    }
    return set;
}

// --- losses ------------------------------------------------------------------

struct LossBreakdown {
    double total = 0;
    double residual = 0;   // J_R (unweighted)
    double dirichlet = 0;  // J_D
    double neumann = 0;    // J_N
    double sobolev = 0;    // J_S (includes its per-order weights)
    bool has_dirichlet = false, has_neumann = false, has_sobolev = false;

    bool finite() const {
        return std::isfinite(total) && std::isfinite(residual) && std::isfinite(dirichlet) &&
               std::isfinite(neumann) && std::isfinite(sobolev);
    }
};

inline double residual_loss(const std::vector<Jet2>& jets, const OperatorCoeffs& op,
                            const std::vector<double>& f, const HuberConfig& hcfg = {}) {
    if (jets.empty()) throw std::invalid_argument("residual loss over an empty set");
    double sum = 0;
    for (std::size_t i = 0; i < jets.size(); ++i) {
        const Jet2& j = jets[i];
        double lu = op.c1() * j.v + op.c2() * j.dx + op.c3() * j.dy + op.c4() * j.dxx +
                    op.c5() * j.dyy;
        sum += huber(lu - f[i], hcfg);
    }
    return sum / static_cast<double>(jets.size());
}

inline double dirichlet_loss(const std::vector<double>& u, const std::vector<double>& g,
                             const HuberConfig& hcfg = {}) {
    if (u.empty()) throw std::invalid_argument("dirichlet loss over an empty set");
    double sum = 0;
    for (std::size_t i = 0; i < u.size(); ++i) sum += huber(u[i] - g[i], hcfg);
    return sum / static_cast<double>(u.size());
}

inline double neumann_loss(const std::vector<Jet2>& jets, const std::vector<NeumannPoint>& pts,
                           const HuberConfig& hcfg = {}) {
    if (jets.empty()) throw std::invalid_argument("neumann loss over an empty set");
    double sum = 0;
    for (std::size_t i = 0; i < jets.size(); ++i) {
        double m = jets[i].dx * pts[i].n.x + jets[i].dy * pts[i].n.y - pts[i].h;
        sum += huber(m, hcfg);
    }
    return sum / static_cast<double>(jets.size());
}

// Order-k mismatch terms, each order Huberized componentwise then summed.
inline double sobolev_loss(const std::vector<Jet2>& jets,
                           const std::vector<SolutionTarget>& targets, const LossWeights& w,
                           const HuberConfig& hcfg = {}) {
    if (targets.empty()) throw std::invalid_argument("sobolev loss without targets");
    double sum = 0;
    for (std::size_t i = 0; i < jets.size(); ++i) {
        const Jet2& j = jets[i];
        const SolutionTarget& t = targets[i];
        sum += w.sobolev0 * huber(j.v - t.u, hcfg);
        sum += w.sobolev1 * (huber(j.dx - t.ux, hcfg) + huber(j.dy - t.uy, hcfg));
        sum += w.sobolev2 * (huber(j.dxx - t.uxx, hcfg) + huber(j.dyy - t.uyy, hcfg));
    }
    return sum / static_cast<double>(jets.size());
}

// Weighted total per the gating rules: residual always active, boundary
// terms when their point sets are nonempty, Sobolev when targets exist.
inline LossBreakdown total_loss(const FieldEval& u, const OperatorCoeffs& op,
                                const CollocationSet& set, const LossWeights& w,
                                const HuberConfig& hcfg = {}) {
    LossBreakdown out;
    std::vector<Jet2> ijets;
    std::vector<double> fvals;
    ijets.reserve(set.interior.size());
    for (const auto& ip : set.interior) {
        ijets.push_back(u.jet(ip.p.x, ip.p.y));
        fvals.push_back(ip.f);
    }
    out.residual = residual_loss(ijets, op, fvals, hcfg);
    out.total = w.residual * out.residual;

    if (!set.dirichlet.empty()) {
        std::vector<double> uv, gv;
        for (const auto& dp : set.dirichlet) {
            uv.push_back(u.value(dp.p.x, dp.p.y));
            gv.push_back(dp.g);
        }
        out.dirichlet = dirichlet_loss(uv, gv, hcfg);
        out.has_dirichlet = true;
        out.total += w.dirichlet * out.dirichlet;
    }
    if (!set.neumann.empty()) {
        std::vector<Jet2> njets;
        for (const auto& np : set.neumann) njets.push_back(u.jet(np.p.x, np.p.y));
        out.neumann = neumann_loss(njets, set.neumann, hcfg);
        out.has_neumann = true;
        out.total += w.neumann * out.neumann;
    }
    if (set.has_targets()) {
        out.sobolev = sobolev_loss(ijets, set.targets, w, hcfg);
        out.has_sobolev = true;
        out.total += out.sobolev;
    }
    return out;
}

// Same value as total_loss(PinnEval(params), ...) plus the exact parameter
// gradient, accumulated point by point through the jet adjoints.
inline LossBreakdown total_loss_with_gradient(const PinnParams& params, const OperatorCoeffs& op,
                                              const CollocationSet& set, const LossWeights& w,
                                              std::vector<double>& grad,
                                              const HuberConfig& hcfg = {}) {
    if (set.interior.empty()) throw std::invalid_argument("empty interior collocation set");
    grad.assign(params.values.size(), 0.0);
    PinnWorkspace ws;
    LossBreakdown out;
    out.has_sobolev = set.has_targets();
    out.has_dirichlet = !set.dirichlet.empty();
    out.has_neumann = !set.neumann.empty();

    const double n_int = static_cast<double>(set.interior.size());
    for (std::size_t i = 0; i < set.interior.size(); ++i) {
        const auto& ip = set.interior[i];
        Jet2 j = pinn_forward_jet(params, ip.p.x, ip.p.y, ws);
        double lu = op.c1() * j.v + op.c2() * j.dx + op.c3() * j.dy + op.c4() * j.dxx +
                    op.c5() * j.dyy;
        double r = lu - ip.f;
        out.residual += huber(r, hcfg) / n_int;
        Jet2 adj{};
        double rw = w.residual * huber_grad(r, hcfg) / n_int;
        adj.v = rw * op.c1();
        adj.dx = rw * op.c2();
        adj.dy = rw * op.c3();
        adj.dxx = rw * op.c4();
        adj.dyy = rw * op.c5();
        if (out.has_sobolev) {
            const SolutionTarget& t = set.targets[i];
            double s0 = huber(j.v - t.u, hcfg);
            double s1 = huber(j.dx - t.ux, hcfg) + huber(j.dy - t.uy, hcfg);
            double s2 = huber(j.dxx - t.uxx, hcfg) + huber(j.dyy - t.uyy, hcfg);
            out.sobolev += (w.sobolev0 * s0 + w.sobolev1 * s1 + w.sobolev2 * s2) / n_int;
            adj.v += w.sobolev0 * huber_grad(j.v - t.u, hcfg) / n_int;
            adj.dx += w.sobolev1 * huber_grad(j.dx - t.ux, hcfg) / n_int;
            adj.dy += w.sobolev1 * huber_grad(j.dy - t.uy, hcfg) / n_int;
            adj.dxx += w.sobolev2 * huber_grad(j.dxx - t.uxx, hcfg) / n_int;
            adj.dyy += w.sobolev2 * huber_grad(j.dyy - t.uyy, hcfg) / n_int;
        }
        pinn_backward(params, ws, adj, grad);
    }

    const double n_d = static_cast<double>(set.dirichlet.size());
    for (const auto& dp : set.dirichlet) {
        Jet2 j = pinn_forward_jet(params, dp.p.x, dp.p.y, ws);
        double r = j.v - dp.g;
        out.dirichlet += huber(r, hcfg) / n_d;
        Jet2 adj{};
        adj.v = w.dirichlet * huber_grad(r, hcfg) / n_d;
        pinn_backward(params, ws, adj, grad);
    }

    const double n_n = static_cast<double>(set.neumann.size());
    for (const auto& np : set.neumann) {
        Jet2 j = pinn_forward_jet(params, np.p.x, np.p.y, ws);
        double m = j.dx * np.n.x + j.dy * np.n.y - np.h;
        out.neumann += huber(m, hcfg) / n_n;
        Jet2 adj{};
        double mw = w.neumann * huber_grad(m, hcfg) / n_n;
        adj.dx = mw * np.n.x;
        adj.dy = mw * np.n.y;
        pinn_backward(params, ws, adj, grad);
    }

    out.total = w.residual * out.residual + w.dirichlet * out.dirichlet * (out.has_dirichlet ? 1 : 0) +
                w.neumann * out.neumann * (out.has_neumann ? 1 : 0) + out.sobolev;
    if (!std::isfinite(out.total)) throw std::runtime_error("non-finite loss");
    return out;
}

}  // namespace hypino
