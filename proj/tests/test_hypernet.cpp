#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <hypino/dataset.hpp>
#include <hypino/hypernet.hpp>

#include <cstdio>

#include "oracles.hpp"

using namespace hypino;

namespace {

HypernetConfig small_config() {
    HypernetConfig cfg;
    cfg.resolution = 16;
    cfg.embed_channels = 4;  // first stage 12 channels
    cfg.blocks = 2;
    cfg.window = 2;
    cfg.attn_heads = 2;
    cfg.coeff_dim = 16;
    cfg.film_hidden = 8;
    cfg.head_hidden = 16;
    cfg.pool_heads = 2;
    cfg.target.width = 8;
    cfg.target.hidden_layers = 2;
    cfg.target.fourier.n_frequencies = 2;
    cfg.init_seed = 3;
    return cfg;
}

PdeGrids random_grids(int res, std::uint64_t seed) {
    SamplerConfig cfg;
    cfg.resolution = res;
    cfg.geometry.max_primitives = 1;
    Rng rng(seed);
    PdeInstance inst = sample_unsupervised(rng, cfg);
    return rasterize(inst, res);
}

}  // namespace

TEST_CASE("coefficient embedding") {
    HypernetConfig cfg = small_config();
    Hypernet net(cfg);
    OperatorCoeffs zero;
    Mat f = net.coeff_features(zero);
    for (int k = 0; k < f.cols; k += 2) {
        CHECK(f.a[static_cast<std::size_t>(k)] == 0.0);      // sines
        CHECK(f.a[static_cast<std::size_t>(k) + 1] == 1.0);  // cosines
    }
    Mat zc = net.embed_coeffs(zero);
    CHECK(zc.rows == 1);
    CHECK(zc.cols == cfg.coeff_dim);

    Mat za = net.embed_coeffs({{0, 0, 0, 1, 0}});
    Mat zb = net.embed_coeffs({{0, 0, 0, 0, 1}});
    double diff = 0;
    for (int i = 0; i < za.cols; ++i) diff = std::max(diff, std::abs(za.a[static_cast<std::size_t>(i)] - zb.a[static_cast<std::size_t>(i)]));
    CHECK(diff > 1e-9);  // distinct operators do not collide
}

TEST_CASE("grid embedding") {
    HypernetConfig cfg = small_config();
    Hypernet net(cfg);

    SUBCASE("all-zero grids give a finite embedding") {
        PdeGrids g;
        g.resolution = cfg.resolution;
        g.source.assign(g.cells(), 0.0f);
        g.mask_g = g.value_g = g.mask_h = g.value_h = g.source;
        Mat zg = net.embed_grids(g);
        CHECK(zg.rows == (cfg.resolution / 4) * (cfg.resolution / 4));
        CHECK(zg.cols == 3 * cfg.embed_channels);
        for (double v : zg.a) CHECK(std::isfinite(v));
    }

    SUBCASE("value perturbations on the mask change the embedding") {
        PdeGrids g = random_grids(cfg.resolution, 12);
        Mat base = net.embed_grids(g);
        // find a masked Dirichlet cell
        std::size_t idx = 0;
        while (idx < g.cells() && g.mask_g[idx] == 0.0f) ++idx;
        REQUIRE(idx < g.cells());
        PdeGrids pert = g;
        pert.value_g[idx] += 1.0f;
        Mat moved = net.embed_grids(pert);
        double diff = 0;
        for (std::size_t i = 0; i < base.a.size(); ++i)
            diff = std::max(diff, std::abs(base.a[i] - moved.a[i]));
        CHECK(diff > 1e-12);
    }

    SUBCASE("resolution mismatch is rejected") {
        PdeGrids g = random_grids(32, 13);
        CHECK_THROWS(net.embed_grids(g));
    }
}

TEST_CASE("FiLM behaviour") {
    HypernetConfig cfg = small_config();
    Hypernet net(cfg);
    PdeGrids g = random_grids(cfg.resolution, 14);
    Mat zc = net.embed_coeffs({{0, 0, 0, 1, 1}});
    Mat zg = net.embed_grids(g);

    SUBCASE("identity-initialized FiLM equals the raw block stack bit-for-bit") {
        auto with = net.encode(zg, zc, true);
        auto without = net.encode(zg, zc, false);
        REQUIRE(with.size() == without.size());
        for (std::size_t i = 0; i < with.size(); ++i)
            for (std::size_t k = 0; k < with[i].a.size(); ++k)
                CHECK(with[i].a[k] == without[i].a[k]);
    }

    SUBCASE("gamma = 0 makes latents grid-independent") {
        // zero the FiLM gamma bias; latents become beta broadcasts
        net.visit_tensors([](const std::string& name, std::vector<double>& p,
                             std::vector<double>&) {
            if (name.find(".film.fc2.b") != std::string::npos)
                std::fill(p.begin(), p.end(), 0.0);
        });
        auto la = net.encode(net.embed_grids(g), zc, true);
        auto lb = net.encode(net.embed_grids(random_grids(cfg.resolution, 77)), zc, true);
        for (std::size_t i = 0; i < la.size(); ++i)
            for (std::size_t k = 0; k < la[i].a.size(); ++k)
                CHECK(la[i].a[k] == doctest::Approx(lb[i].a[k]).epsilon(1e-14));
    }

    SUBCASE("different coefficient embeddings give different latents") {
        // randomize the FiLM output layer so modulation is active
        Rng rw(5);
        net.visit_tensors([&](const std::string& name, std::vector<double>& p,
                              std::vector<double>&) {
            if (name.find(".film.fc2.W") != std::string::npos)
                for (auto& v : p) v = rw.uniform(-0.2, 0.2);
        });
        auto la = net.encode(zg, net.embed_coeffs({{0, 0, 0, 1, 1}}), true);
        auto lb = net.encode(zg, net.embed_coeffs({{1, 0, 0, -1, 0.5}}), true);
        double diff = 0;
        for (std::size_t k = 0; k < la[0].a.size(); ++k)
            diff = std::max(diff, std::abs(la[0].a[k] - lb[0].a[k]));
        CHECK(diff > 1e-9);
    }
}

TEST_CASE("attention pooling properties") {
    Rng rng(21);
    hn::AttentionPool pool;
    pool.init("t.pool", 8, 2, 5, rng);

    SUBCASE("single token: softmax over one key") {
        Mat kv(1, 8);
        for (auto& v : kv.a) v = rng.uniform(-1, 1);
        Mat p;
        pool.forward(kv, p);
        CHECK(p.rows == 5);
        CHECK(p.cols == 8);
        for (double v : p.a) CHECK(std::isfinite(v));
    }

    SUBCASE("token permutation leaves the pooled output unchanged") {
        Mat kv(6, 8);
        for (auto& v : kv.a) v = rng.uniform(-1, 1);
        Mat p1;
        pool.forward(kv, p1);
        Mat shuffled(6, 8);
        int perm[6] = {3, 0, 5, 1, 4, 2};
        for (int t = 0; t < 6; ++t)
            for (int c = 0; c < 8; ++c) shuffled.at(t, c) = kv.at(perm[t], c);
        Mat p2;
        pool.forward(shuffled, p2);
        for (std::size_t i = 0; i < p1.a.size(); ++i)
            CHECK(p1.a[i] == doctest::Approx(p2.a[i]).epsilon(1e-12));
    }
}

TEST_CASE("generate: shape contract, determinism, sensitivity") {
    HypernetConfig cfg = small_config();
    Hypernet net(cfg);
    PdeGrids g = random_grids(cfg.resolution, 31);
    OperatorCoeffs op{{0, 0, 0, 1, 1}};

    LatentBundle bundle;
    PinnParams a = net.generate(g, op, &bundle);
    CHECK(a.values.size() == cfg.target.param_count());
    // loads straight into the forward pass
    CHECK(std::isfinite(pinn_forward(a, 0.2, -0.3)));

    // retained latents and the pooled matrix have the contracted shapes
    CHECK(bundle.z.size() == static_cast<std::size_t>(cfg.blocks));
    CHECK(bundle.pooled.size() == static_cast<std::size_t>(cfg.blocks));
    CHECK(bundle.p.rows == cfg.target.tensor_count());
    int channel_sum = 0;
    for (const auto& zi : bundle.z) channel_sum += zi.cols;
    CHECK(bundle.p.cols == channel_sum);
    for (std::size_t i = 0; i < bundle.pooled.size(); ++i) {
        CHECK(bundle.pooled[i].rows == cfg.target.tensor_count());
        CHECK(bundle.pooled[i].cols == bundle.z[i].cols);
    }

    PinnParams b = net.generate(g, op);
    CHECK(a.values == b.values);

    PdeGrids g2 = g;
    g2.source[10] += 2.0f;
    PinnParams c = net.generate(g2, op);
    double diff = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        diff = std::max(diff, std::abs(a.values[i] - c.values[i]));
    CHECK(diff > 0.0);
}

TEST_CASE("hypernet gradients match finite differences") {
    HypernetConfig cfg = small_config();
    Hypernet net(cfg);
    PdeGrids g = random_grids(cfg.resolution, 41);
    OperatorCoeffs op{{0.5, 0, 0, 1, -0.5}};

    // randomize FiLM so its gradient path is generic
    Rng rw(6);
    net.visit_tensors([&](const std::string& name, std::vector<double>& p, std::vector<double>&) {
        if (name.find(".film.fc2.W") != std::string::npos)
            for (auto& v : p) v = rw.uniform(-0.2, 0.2);
    });

    auto loss_of = [&](Hypernet& h) {
        PinnParams t = h.generate(g, op);
        double s = 0;
        for (double v : t.values) s += 0.5 * v * v;
        return s;
    };

    net.zero_grads();
    PinnParams theta = net.generate(g, op);
    std::vector<double> dtheta = theta.values;  // d(sum v^2/2)/dv = v
    net.backward(dtheta);

    struct Slot {
        std::string name;
        std::vector<double>* p;
        std::vector<double>* g;
    };
    std::vector<Slot> slots;
    net.visit_tensors([&](const std::string& n, std::vector<double>& p, std::vector<double>& gr) {
        slots.push_back({n, &p, &gr});
    });

    Rng pick(77);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        auto& slot = slots[pick.below(slots.size())];
        if (slot.p->empty()) continue;
        std::size_t idx = pick.below(slot.p->size());
        double saved = (*slot.p)[idx];
        double h = 1e-6;
        (*slot.p)[idx] = saved + h;
        double lp = loss_of(net);
        (*slot.p)[idx] = saved - h;
        double lm = loss_of(net);
        (*slot.p)[idx] = saved;
        double fd = (lp - lm) / (2 * h);
        double an = (*slot.g)[idx];
        CAPTURE(slot.name);
        CAPTURE(idx);
        CHECK(oracle::rel_err(an, fd) < 2e-5);
        ++checked;
    }
    CHECK(checked >= 55);
}

TEST_CASE("end-to-end differentiability: every tensor sees gradient") {
    HypernetConfig cfg = small_config();
    Hypernet net(cfg);
    // activate FiLM modulation so its first layer is on a live path
    Rng rw(9);
    net.visit_tensors([&](const std::string& name, std::vector<double>& p, std::vector<double>&) {
        if (name.find(".film.fc2.W") != std::string::npos)
            for (auto& v : p) v = rw.uniform(-0.2, 0.2);
    });
    PdeGrids g = random_grids(cfg.resolution, 51);
    net.zero_grads();
    PinnParams theta = net.generate(g, {{0.3, -1, 0.2, 1, 1}});
    std::vector<double> dtheta(theta.values.size(), 1.0);
    net.backward(dtheta);
    net.visit_tensors([&](const std::string& name, std::vector<double>&, std::vector<double>& gr) {
        double norm = 0;
        for (double v : gr) norm += std::abs(v);
        CAPTURE(name);
        CHECK(norm > 0.0);
    });
}

TEST_CASE("checkpoint round-trip") {
    HypernetConfig cfg = small_config();
    Hypernet net(cfg);
    PdeGrids g = random_grids(cfg.resolution, 61);
    OperatorCoeffs op{{0, 0, 0, 1, 1}};
    PinnParams before = net.generate(g, op);

    const std::string path = "/tmp/hypino_test_ckpt.bin";
    save_hypernet(path, net);
    auto back = load_hypernet(path);
    PinnParams after = back->generate(g, op);
    REQUIRE(after.values.size() == before.values.size());
    for (std::size_t i = 0; i < before.values.size(); ++i) {
        // f32 storage quantizes: match at float precision
        CHECK(static_cast<float>(before.values[i]) ==
              doctest::Approx(static_cast<float>(after.values[i])).epsilon(1e-5));
    }
    // saving the loaded net again is byte-identical
    const std::string path2 = "/tmp/hypino_test_ckpt2.bin";
    save_hypernet(path2, *back);
    auto b1 = read_file(path);
    auto b2 = read_file(path2);
    CHECK(b1 == b2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}
