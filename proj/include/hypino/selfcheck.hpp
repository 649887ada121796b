#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hypino/dataset.hpp"
#include "hypino/losses.hpp"
#include "hypino/metrics.hpp"
#include "hypino/pinn.hpp"

namespace hypino {

struct CheckReport {
    std::string name;
    bool passed = false;
    int checked = 0;
    int failed = 0;
    std::string detail;
};

// Built-in oracle suites, runnable from the CLI. `inject_fault` perturbs the
// quantity under test so a broken pipeline is distinguishable from a vacuous
// suite.
inline std::vector<CheckReport> run_selfcheck(std::uint64_t seed, bool inject_fault = false) {
    std::vector<CheckReport> reports;
    double fault = inject_fault ? 1e-2 : 0.0;

    {  // symbolic derivatives against validated central differences
        CheckReport r;
        r.name = "symbolic-derivative-vs-fd";
        Rng rng(seed + 1);
        for (int s = 0; s < 40; ++s) {
            Expr u = sample_manufactured_solution(rng);
            Expr ux = u.derivative('x');
            for (int p = 0; p < 4; ++p) {
                double px = rng.uniform(-0.95, 0.95), py = rng.uniform(-0.95, 0.95);
                auto f = [&](double x) { return u.eval_raw(x, py); };
                double h = 1e-4;
                double fd = (f(px + h) - f(px - h)) / (2 * h);
                double fd2 = (f(px + h / 2) - f(px - h / 2)) / h;
                if (!std::isfinite(fd) || std::abs(fd - fd2) > 1e-8 * (1 + std::abs(fd2)))
                    continue;
                double got = ux.eval_raw(px, py) * (1.0 + fault);
                ++r.checked;
                if (std::abs(got - fd) > 1e-6 * (1 + std::abs(fd))) ++r.failed;
            }
        }
        r.passed = r.failed == 0 && r.checked > 60;
        reports.push_back(r);
    }

    {  // MMS consistency of freshly sampled supervised instances
        CheckReport r;
        r.name = "mms-consistency";
        SamplerConfig cfg;
        cfg.geometry.max_primitives = 2;
        Rng rng(seed + 2);
        for (int i = 0; i < 20; ++i) {
            PdeInstance inst = sample_supervised(rng, cfg);
            ++r.checked;
            if (mms_consistency_error(inst) + fault > 1e-5) ++r.failed;
        }
        r.passed = r.failed == 0;
        reports.push_back(r);
    }

    {  // geometry audits: normals, membership, determinism
        CheckReport r;
        r.name = "geometry-audit";
        Rng rng(seed + 3);
        GeometryConfig gcfg;
        gcfg.min_primitives = 1;
        for (int i = 0; i < 10; ++i) {
            Domain dom = sample_domain(rng, gcfg);
            for (const auto& s : boundary_samples(dom, 0.1)) {
                ++r.checked;
                const double eps = 1e-4;
                Vec2 out = s.point + (eps * (1.0 + fault * 1e6)) * s.normal;
                bool ok = !dom.contains(out) && dom.in_closure(s.point - eps * s.normal) &&
                          dom.component_distance(s.point, s.component) < 1e-9;
                if (!ok) ++r.failed;
            }
        }
        r.passed = r.failed == 0 && r.checked > 100;
        reports.push_back(r);
    }

    {  // autodiff jets against finite differences of the scalar forward pass
        CheckReport r;
        r.name = "pinn-jet-vs-fd";
        Rng rng(seed + 4);
        PinnArchitecture arch;
        PinnWorkspace ws;
        for (int t = 0; t < 20; ++t) {
            PinnParams p = PinnParams::random_init(arch, rng);
            for (auto& v : p.values) v *= 0.25;
            double x = rng.uniform(-0.9, 0.9), y = rng.uniform(-0.9, 0.9);
            Jet2 j = pinn_forward_jet(p, x, y, ws);
            auto f = [&](double xx) { return pinn_forward(p, xx, y); };
            double fd = (f(x + 1e-5) - f(x - 1e-5)) / 2e-5;
            ++r.checked;
            if (std::abs(j.dx * (1.0 + fault) - fd) > 1e-6 * (1 + std::abs(fd))) ++r.failed;
        }
        r.passed = r.failed == 0;
        reports.push_back(r);
    }

    {  // parameter gradient against finite differences
        CheckReport r;
        r.name = "loss-gradient-vs-fd";
        Rng rng(seed + 5);
        SamplerConfig cfg;
        cfg.geometry.max_primitives = 0;
        PdeInstance inst = sample_supervised(rng, cfg);
        CollocationConfig ccfg{8, 6, 6, 2.0 / 64.0};
        CollocationSet set = sample_collocation(inst, rng, ccfg);
        PinnArchitecture arch;
        PinnParams params = PinnParams::random_init(arch, rng);
        std::vector<double> grad;
        LossWeights w = LossWeights::phase2();
        total_loss_with_gradient(params, inst.coeffs, set, w, grad);
        for (int k = 0; k < 25; ++k) {
            std::size_t idx = rng.below(params.values.size());
            double h = 1e-6;
            PinnParams pp = params, pm = params;
            pp.values[idx] += h;
            pm.values[idx] -= h;
            double fd = (total_loss(PinnEval(pp), inst.coeffs, set, w).total -
                         total_loss(PinnEval(pm), inst.coeffs, set, w).total) /
                        (2 * h);
            ++r.checked;
            if (std::abs(grad[idx] * (1.0 + fault) - fd) > 1e-4 * (1 + std::abs(fd)))
                ++r.failed;
        }
        r.passed = r.failed == 0;
        reports.push_back(r);
    }

    {  // metric unit checks
        CheckReport r;
        r.name = "metric-units";
        std::vector<double> y = {1, 2, 3, 4};
        std::vector<double> twice = {2, 4, 6, 8};
        std::vector<std::uint8_t> all = {1, 1, 1, 1};
        auto near = [](double a, double b) { return std::abs(a - b) < 1e-9; };
        r.checked = 3;
        if (!near(mse(y, y, all) + fault, 0.0)) ++r.failed;
        if (!(std::abs(smape(twice, y, all) * (1.0 + fault) - 200.0 / 3) < 1e-6)) ++r.failed;
        if (!near(mse(twice, y, all) * (1.0 + fault), 7.5)) ++r.failed;
        r.passed = r.failed == 0;
        reports.push_back(r);
    }
    return reports;
}

}  // namespace hypino
