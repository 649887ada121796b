#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <hypino/dataset.hpp>

#include <cstdio>
#include <map>

using namespace hypino;

TEST_CASE("sample_operator") {
    SamplerConfig cfg;
    SUBCASE("term-count histogram is roughly uniform over {1,2,3}") {
        Rng rng(100);
        std::map<int, int> hist;
        const int draws = 10000;
        for (int i = 0; i < draws; ++i) {
            OperatorCoeffs op = sample_operator(rng, cfg);
            int nz = 0;
            for (double c : op.c) nz += (c != 0.0);
            hist[nz]++;
        }
        // each bucket ~ draws/3, 3 sigma of a binomial(draws, 1/3)
        double sigma = std::sqrt(draws * (1.0 / 3) * (2.0 / 3));
        for (int n : {1, 2, 3})
            CHECK(std::abs(hist[n] - draws / 3.0) < 3.5 * sigma);
        CHECK(hist[0] == 0);
        CHECK(hist[4] == 0);
    }
    SUBCASE("coefficients stay in range and seeds repeat") {
        Rng a(7), b(7);
        for (int i = 0; i < 200; ++i) {
            OperatorCoeffs x = sample_operator(a, cfg);
            OperatorCoeffs y = sample_operator(b, cfg);
            for (int k = 0; k < 5; ++k) {
                CHECK(x.c[k] == y.c[k]);
                CHECK(std::abs(x.c[k]) <= 2.0);
            }
        }
    }
}

TEST_CASE("supervised samples satisfy MMS consistency and normal-derivative data") {
    SamplerConfig cfg;
    cfg.geometry.max_primitives = 2;
    Rng rng(2025);
    int with_inner = 0;
    for (int i = 0; i < 25; ++i) {
        PdeInstance inst = sample_supervised(rng, cfg);
        CHECK(inst.supervised);
        CHECK(mms_consistency_error(inst, 100) < 1e-5);
        with_inner += !inst.domain.primitives.empty();

        // h(p) = grad u . n against an independent dot product of the
        // symbolic partials
        auto samples = boundary_samples(inst.domain, 0.1);
        Expr ux = inst.solution->derivative('x');
        Expr uy = inst.solution->derivative('y');
        for (const auto& s : samples) {
            const BoundaryCondition* bc = inst.condition_for(s.component);
            if (!bc || bc->kind == BcKind::Dirichlet) continue;
            double want = ux.eval_raw(s.point.x, s.point.y) * s.normal.x +
                          uy.eval_raw(s.point.x, s.point.y) * s.normal.y;
            if (!std::isfinite(want)) continue;
            double got = inst.neumann_value_at(*bc, s.point, s.normal);
            CHECK(std::abs(got - want) < 1e-8 * (1 + std::abs(want)));
        }
    }
    CHECK(with_inner > 5);  // geometry config admits inner boundaries
}

TEST_CASE("unsupervised sampling follows the compatibility rules") {
    SamplerConfig cfg;
    Rng rng(31337);
    for (int i = 0; i < 1000; ++i) {
        PdeInstance inst = sample_unsupervised(rng, cfg);
        auto bad = audit_bc_rules(inst);
        if (!bad.empty()) {
            CAPTURE(bad[0]);
            CHECK(bad.empty());
        }
    }
}

TEST_CASE("unsupervised rule cases") {
    SamplerConfig cfg;
    SUBCASE("standalone u forces zero Dirichlet values") {
        cfg.fixed_operator = OperatorCoeffs{{1, 0, 0, 0, 0}};
        Rng rng(5);
        PdeInstance inst = sample_unsupervised(rng, cfg);
        for (const auto& bc : inst.conditions) {
            CHECK(bc.dirichlet_value.eval(0.3, -0.7) == 0.0);
        }
    }
    SUBCASE("first-order-only gives constant Dirichlet values") {
        cfg.fixed_operator = OperatorCoeffs{{0, 1, 0, 0, 0}};
        Rng rng(6);
        PdeInstance inst = sample_unsupervised(rng, cfg);
        for (const auto& bc : inst.conditions) {
            if (bc.kind == BcKind::Neumann) continue;
            CHECK(bc.dirichlet_value.eval(-0.5, 0.5) == bc.dirichlet_value.eval(0.5, -0.5));
        }
    }
    SUBCASE("hyperbolic operators put Neumann data exactly on the initial side") {
        cfg.fixed_operator = OperatorCoeffs{{0, 0, 0, -4, 1}};
        Rng rng(7);
        for (int i = 0; i < 20; ++i) {
            PdeInstance inst = sample_unsupervised(rng, cfg);
            for (int side = 0; side < 4; ++side) {
                const BoundaryCondition* bc = inst.condition_for(side);
                if (side == 0) {
                    REQUIRE(bc != nullptr);
                    CHECK(bc->kind == BcKind::Both);
                } else if (side == 2) {
                    CHECK(bc == nullptr);
                } else if (bc) {
                    CHECK(bc->kind == BcKind::Dirichlet);
                }
            }
        }
    }
}

TEST_CASE("dataset round-trips bit-exactly") {
    SamplerConfig cfg;
    cfg.resolution = 16;
    cfg.seed = 99;
    std::vector<DatasetRecord> records;
    for (int b = 0; b < 4; ++b) {
        auto batch = curriculum_batch(cfg, b, 4, 2);
        records.insert(records.end(), batch.begin(), batch.end());
    }
    const std::string path = "/tmp/hypino_test_dataset.bin";
    write_dataset(path, records, cfg.metadata());
    Dataset back = read_dataset(path);
    REQUIRE(back.records.size() == records.size());
    CHECK(back.metadata == cfg.metadata());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(back.records[i].grids.source == records[i].grids.source);
        CHECK(back.records[i].grids.mask_g == records[i].grids.mask_g);
        CHECK(back.records[i].grids.value_g == records[i].grids.value_g);
        CHECK(back.records[i].grids.mask_h == records[i].grids.mask_h);
        CHECK(back.records[i].grids.value_h == records[i].grids.value_h);
        CHECK(back.records[i].instance.source.serialize() ==
              records[i].instance.source.serialize());
    }
    // writing the reread dataset again is byte-identical
    const std::string path2 = "/tmp/hypino_test_dataset2.bin";
    write_dataset(path2, back.records, back.metadata);
    CHECK(read_file(path) == read_file(path2));

    SUBCASE("empty dataset round-trip") {
        write_dataset(path, {}, "empty=1\n");
        Dataset empty = read_dataset(path);
        CHECK(empty.records.empty());
        CHECK(empty.metadata == "empty=1\n");
    }

    SUBCASE("corrupting one byte is caught and names the record") {
        auto bytes = read_file(path2);
        bytes[bytes.size() - 20] ^= 0x5a;
        const std::string bad_path = "/tmp/hypino_test_dataset_bad.bin";
        write_file(bad_path, bytes);
        CHECK_THROWS_WITH_AS(read_dataset(bad_path),
                             doctest::Contains("record"), IoError);
        std::remove(bad_path.c_str());
    }
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("curriculum phases") {
    SamplerConfig cfg;
    cfg.resolution = 16;
    cfg.geometry.max_primitives = 1;
    auto count_supervised = [](const std::vector<DatasetRecord>& batch) {
        int n = 0;
        for (const auto& r : batch) n += r.instance.supervised;
        return n;
    };
    CHECK(count_supervised(curriculum_batch(cfg, 0, 8, 1)) == 8);
    CHECK(count_supervised(curriculum_batch(cfg, 0, 8, 2)) == 4);
    CHECK(count_supervised(curriculum_batch(cfg, 0, 7, 2)) == 4);  // ceil

    // determinism
    auto a = curriculum_batch(cfg, 3, 4, 2);
    auto b = curriculum_batch(cfg, 3, 4, 2);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].instance.source.serialize() == b[i].instance.source.serialize());
        CHECK(a[i].grids.source == b[i].grids.source);
    }
}
