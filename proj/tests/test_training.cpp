#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <hypino/training.hpp>

using namespace hypino;

TEST_CASE("smoke training run reduces the loss") {
    TrainConfig cfg;
    cfg.sampler.seed = 7;
    cfg.sampler.resolution = 16;
    cfg.sampler.fixed_operator = OperatorCoeffs{{0, 0, 0, 1, 1}};
    cfg.sampler.geometry.min_primitives = cfg.sampler.geometry.max_primitives = 0;
    cfg.sampler.mms.slope_limit = 1.5;
    cfg.sampler.mms.probe_bound = 20;
    cfg.sampler.supervised_source_bound = 200;
    cfg.batches = 120;
    cfg.batch_size = 4;
    cfg.phase1_batches = 120;
    cfg.lr_max = 3e-4;
    cfg.collocation = {16, 12, 12, 2.0 / 64.0};

    HypernetConfig hcfg;
    hcfg.resolution = 16;
    Hypernet net(hcfg);
    TrainResult r = train_hypernet(net, cfg);
    REQUIRE_FALSE(r.diverged);
    REQUIRE(r.completed_batches == 120);
    auto window = [&](int a, int b) {
        double s = 0;
        for (int i = a; i < b; ++i) s += r.batch_loss[static_cast<std::size_t>(i)];
        return s / (b - a);
    };
    CHECK(window(70, 120) < window(0, 50));
}

TEST_CASE("fine-tuning from an optimum stays at the optimum") {
    // zero boundary data, zero source: u = 0 solves the problem and the
    // zero parameter vector represents it exactly
    PdeInstance inst;
    inst.coeffs = {{0, 0, 0, 1, 1}};
    inst.source = Expr::constant(0.0);
    for (int side = 0; side < 4; ++side) {
        BoundaryCondition bc;
        bc.component = side;
        bc.kind = BcKind::Dirichlet;
        bc.dirichlet_value = Expr::constant(0.0);
        inst.conditions.push_back(bc);
    }
    PinnParams theta = PinnParams::zeros(PinnArchitecture{});
    FinetuneConfig cfg;
    cfg.steps = 60;
    cfg.seed = 5;
    cfg.collocation = {32, 16, 16, 2.0 / 64.0};
    FinetuneResult r = finetune_pinn(theta, inst, cfg);
    REQUIRE_FALSE(r.diverged);
    for (const auto& row : r.curve) CHECK(row.loss < 1e-10);
}

TEST_CASE("divergence aborts and reports") {
    // an absurd learning rate blows the parameters up; training must stop
    // with the diverged flag rather than looping on non-finite losses
    TrainConfig cfg;
    cfg.sampler.seed = 3;
    cfg.sampler.resolution = 16;
    cfg.sampler.fixed_operator = OperatorCoeffs{{0, 0, 0, 1, 1}};
    cfg.sampler.geometry.max_primitives = 0;
    cfg.sampler.mms.slope_limit = 1.5;
    cfg.batches = 40;
    cfg.batch_size = 2;
    cfg.phase1_batches = 40;
    cfg.lr_max = 1e6;
    cfg.lr_min = 1e6;
    cfg.grad_clip = 0;
    cfg.collocation = {8, 8, 8, 2.0 / 64.0};
    HypernetConfig hcfg;
    hcfg.resolution = 16;
    Hypernet net(hcfg);
    TrainResult r = train_hypernet(net, cfg);
    CHECK(r.diverged);
    CHECK(r.completed_batches < 40);
}
