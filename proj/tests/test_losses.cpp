#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <hypino/dataset.hpp>
#include <hypino/losses.hpp>
#include <hypino/optim.hpp>

#include "oracles.hpp"

using namespace hypino;

TEST_CASE("huber") {
    HuberConfig cfg;  // delta = 1
    CHECK(huber(0, cfg) == 0.0);
    CHECK(huber(0.5, cfg) == doctest::Approx(0.125));
    CHECK(huber(2.0, cfg) == doctest::Approx(1.5));
    CHECK(huber(-2.0, cfg) == doctest::Approx(1.5));

    // continuous and C1 at |r| = delta
    double below = huber(1.0 - 1e-9, cfg), above = huber(1.0 + 1e-9, cfg);
    CHECK(std::abs(below - above) < 1e-8);
    CHECK(std::abs(huber_grad(1.0 - 1e-9, cfg) - huber_grad(1.0 + 1e-9, cfg)) < 1e-8);
    // quadratic branch scaling
    CHECK(huber(0.2, cfg) * 4 == doctest::Approx(huber(0.4, cfg)));
}

TEST_CASE("loss weight presets match the curriculum") {
    LossWeights p1 = LossWeights::phase1();
    CHECK(p1.residual == 0.01);
    CHECK(p1.sobolev0 == 1.0);
    CHECK(p1.sobolev1 == 0.1);
    CHECK(p1.sobolev2 == 0.01);
    CHECK(p1.dirichlet == 10.0);
    CHECK(p1.neumann == 1.0);
    LossWeights p2 = LossWeights::phase2();
    CHECK(p2.residual == 0.1);
    CHECK(p2.sobolev1 == 1.0);
    CHECK(p2.sobolev2 == 0.1);
}

namespace {

PdeInstance supervised_square_instance(std::uint64_t seed) {
    SamplerConfig cfg;
    cfg.geometry.min_primitives = cfg.geometry.max_primitives = 0;
    Rng rng(seed);
    return sample_supervised(rng, cfg);
}

}  // namespace

TEST_CASE("losses vanish for the exact solution injected symbolically") {
    PdeInstance inst = supervised_square_instance(42);
    Rng rng(7);
    CollocationConfig ccfg;
    ccfg.interior = 64;
    ccfg.dirichlet = 32;
    ccfg.neumann = 32;
    CollocationSet set = sample_collocation(inst, rng, ccfg);
    ExprEval exact(*inst.solution);
    LossBreakdown b = total_loss(exact, inst.coeffs, set, LossWeights::phase1());
    CHECK(b.residual < 1e-12);
    CHECK(b.dirichlet < 1e-12);
    CHECK(b.sobolev < 1e-12);
    CHECK(b.total < 1e-10);
}

TEST_CASE("loss gating") {
    PdeInstance inst = supervised_square_instance(43);
    Rng rng(8);
    CollocationConfig ccfg;
    ccfg.interior = 16;
    ccfg.dirichlet = 8;
    ccfg.neumann = 8;
    CollocationSet set = sample_collocation(inst, rng, ccfg);

    PinnArchitecture arch;
    Rng prng(9);
    PinnEval net(PinnParams::random_init(arch, prng));

    SUBCASE("unsupervised instance drops the Sobolev term") {
        CollocationSet nosup = set;
        nosup.targets.clear();
        LossBreakdown b = total_loss(net, inst.coeffs, nosup, LossWeights::phase2());
        CHECK_FALSE(b.has_sobolev);
        CHECK(b.sobolev == 0.0);
    }
    SUBCASE("no neumann points drops J_N") {
        CollocationSet non = set;
        non.neumann.clear();
        LossBreakdown b = total_loss(net, inst.coeffs, non, LossWeights::phase2());
        CHECK_FALSE(b.has_neumann);
        CHECK(b.neumann == 0.0);
    }
    SUBCASE("empty interior set is an error") {
        CollocationSet empty = set;
        empty.interior.clear();
        empty.targets.clear();
        CHECK_THROWS(total_loss(net, inst.coeffs, empty, LossWeights::phase2()));
    }
    SUBCASE("constant net, zero h: neumann loss is zero") {
        PinnParams constant = PinnParams::zeros(arch);
        constant.values.back() = 0.77;
        PinnEval cnet(constant);
        CollocationSet s2 = set;
        for (auto& np : s2.neumann) np.h = 0.0;
        LossBreakdown b = total_loss(cnet, inst.coeffs, s2, LossWeights::phase2());
        CHECK(b.neumann == 0.0);
    }
}

TEST_CASE("gradient path agrees with the loss value path") {
    PdeInstance inst = supervised_square_instance(44);
    Rng rng(10);
    CollocationConfig ccfg;
    ccfg.interior = 32;
    ccfg.dirichlet = 16;
    ccfg.neumann = 16;
    CollocationSet set = sample_collocation(inst, rng, ccfg);
    PinnArchitecture arch;
    Rng prng(11);
    PinnParams params = PinnParams::random_init(arch, prng);
    LossWeights w = LossWeights::phase2();
    std::vector<double> grad;
    LossBreakdown a = total_loss_with_gradient(params, inst.coeffs, set, w, grad);
    LossBreakdown b = total_loss(PinnEval(params), inst.coeffs, set, w);
    CHECK(a.total == doctest::Approx(b.total).epsilon(1e-12));
    CHECK(a.residual == doctest::Approx(b.residual).epsilon(1e-12));
    CHECK(a.sobolev == doctest::Approx(b.sobolev).epsilon(1e-12));
}

TEST_CASE("parameter gradients match finite differences") {
    PdeInstance inst = supervised_square_instance(45);
    Rng rng(12);
    CollocationConfig ccfg;
    ccfg.interior = 8;
    ccfg.dirichlet = 6;
    ccfg.neumann = 6;
    CollocationSet set = sample_collocation(inst, rng, ccfg);
    PinnArchitecture arch;
    Rng prng(13);
    PinnParams params = PinnParams::random_init(arch, prng);
    for (auto& v : params.values) v *= 0.5;
    LossWeights w = LossWeights::phase2();
    std::vector<double> grad;
    total_loss_with_gradient(params, inst.coeffs, set, w, grad);

    Rng pick(14);
    int compared = 0;
    for (int k = 0; k < 50; ++k) {
        std::size_t idx = pick.below(params.values.size());
        double h = 1e-6;
        PinnParams pp = params, pm = params;
        pp.values[idx] += h;
        pm.values[idx] -= h;
        double lp = total_loss(PinnEval(pp), inst.coeffs, set, w).total;
        double lm = total_loss(PinnEval(pm), inst.coeffs, set, w).total;
        double fd = (lp - lm) / (2 * h);
        CHECK(oracle::rel_err(grad[idx], fd) < 1e-4);
        ++compared;
    }
    CHECK(compared == 50);
}

TEST_CASE("loss of u^2 at a point gives gradient 2 u du/dtheta") {
    PinnArchitecture arch;
    Rng rng(15);
    PinnParams params = PinnParams::random_init(arch, rng);
    double x = 0.31, y = -0.22;
    PinnWorkspace ws;
    Jet2 j = pinn_forward_jet(params, x, y, ws);
    std::vector<double> grad(params.values.size(), 0.0);
    Jet2 adj{};
    adj.v = 2.0 * j.v;  // d(u^2)/du
    pinn_backward(params, ws, adj, grad);
    // check two random coordinates by finite differences
    Rng pick(16);
    for (int k = 0; k < 10; ++k) {
        std::size_t idx = pick.below(params.values.size());
        double h = 1e-6;
        PinnParams pp = params, pm = params;
        pp.values[idx] += h;
        pm.values[idx] -= h;
        double fd = (std::pow(pinn_forward(pp, x, y), 2) - std::pow(pinn_forward(pm, x, y), 2)) /
                    (2 * h);
        CHECK(oracle::rel_err(grad[idx], fd) < 1e-6);
    }
    // constant loss -> zero gradient
    std::vector<double> zgrad(params.values.size(), 0.0);
    pinn_backward(params, ws, Jet2{}, zgrad);
    for (double g : zgrad) CHECK(g == 0.0);
}

TEST_CASE("every tensor receives gradient for a generic loss") {
    PdeInstance inst = supervised_square_instance(46);
    Rng rng(17);
    CollocationConfig ccfg;
    ccfg.interior = 16;
    ccfg.dirichlet = 8;
    ccfg.neumann = 8;
    CollocationSet set = sample_collocation(inst, rng, ccfg);
    PinnArchitecture arch;
    Rng prng(18);
    PinnParams params = PinnParams::random_init(arch, prng);
    std::vector<double> grad;
    total_loss_with_gradient(params, inst.coeffs, set, LossWeights::phase2(), grad);
    for (const auto& t : arch.tensors()) {
        double norm = 0;
        for (std::size_t i = 0; i < t.size(); ++i) norm += std::abs(grad[t.offset + i]);
        CAPTURE(t.name);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("cosine schedule") {
    CosineSchedule s{1e-4, 1e-6, 1000};
    CHECK(s.at(0) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(s.at(1000) == doctest::Approx(1e-6).epsilon(1e-12));
    CHECK(s.at(500) == doctest::Approx(1e-6 + (1e-4 - 1e-6) * 0.5).epsilon(1e-12));
    for (long k : {17L, 333L, 888L}) {
        double want = 1e-6 + (1e-4 - 1e-6) * (1 + std::cos(M_PI * k / 1000.0)) / 2.0;
        CHECK(std::abs(s.at(k) - want) < 1e-12);
    }
}

TEST_CASE("adam reduces a quadratic and weight decay shrinks parameters") {
    std::vector<double> p = {5.0, -3.0};
    Adam opt(2, {});
    for (int i = 0; i < 2000; ++i) {
        std::vector<double> g = {2 * p[0], 2 * p[1]};
        opt.step(p, g, 1e-2);
    }
    CHECK(std::abs(p[0]) < 1e-3);
    CHECK(std::abs(p[1]) < 1e-3);

    std::vector<double> q = {1.0};
    Adam wd(1, {0.9, 0.999, 1e-8, 0.1});
    std::vector<double> zero = {0.0};
    for (int i = 0; i < 10; ++i) wd.step(q, zero, 1e-2);
    CHECK(q[0] < 1.0);
    CHECK(q[0] > 0.98);
}

TEST_CASE("gradient clipping") {
    std::vector<double> g = {3.0, 4.0};
    double f = clip_gradient_norm(g, 1.0);
    CHECK(f == doctest::Approx(0.2));
    CHECK(std::hypot(g[0], g[1]) == doctest::Approx(1.0));
    std::vector<double> small = {0.1, 0.1};
    CHECK(clip_gradient_norm(small, 1.0) == 1.0);
}
