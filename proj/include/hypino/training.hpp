#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "hypino/dataset.hpp"
#include "hypino/hypernet.hpp"
#include "hypino/losses.hpp"
#include "hypino/optim.hpp"

namespace hypino {

// Append-only CSV with the resolved run configuration embedded as comment
// lines, so every artifact carries its provenance.
class MetricLog {
public:
    MetricLog() = default;
    MetricLog(const std::string& path, const std::string& header,
              const std::string& config_echo) {
        if (path.empty()) return;
        out_.open(path, std::ios::trunc);
        if (!out_) throw IoError("cannot open metric log: " + path);
        std::istringstream lines(config_echo);
        std::string line;
        while (std::getline(lines, line))
            if (!line.empty()) out_ << "# " << line << "\n";
        out_ << header << "\n";
    }
    void row(const std::string& r) {
        if (out_.is_open()) out_ << r << "\n";
    }
    void flush() {
        if (out_.is_open()) out_.flush();
    }

private:
    std::ofstream out_;
};

inline std::string csv_num(double v) {
    std::ostringstream s;
    s << std::setprecision(12) << v;
    return s.str();
}

struct TrainConfig {
    SamplerConfig sampler;
    int batches = 3000;
    int batch_size = 8;
    int phase1_batches = 1000;
    double lr_max = 1e-4;
    double lr_min = 1e-6;
    AdamConfig adam{0.9, 0.999, 1e-8, 0.01};
    double grad_clip = 1.0;  // 0 disables
    int checkpoint_every = 500;
    std::string checkpoint_path;
    std::string metrics_path;
    CollocationConfig collocation{64, 32, 32, 2.0 / 128.0};
    std::string config_echo;
    int log_every = 1;
};

struct TrainResult {
    bool diverged = false;
    int completed_batches = 0;
    std::vector<double> batch_loss;
};

namespace train_detail {

// One flat Adam state over every hypernet tensor, iterated in registry order.
struct FlatParams {
    std::vector<std::vector<double>*> params;
    std::vector<std::vector<double>*> grads;
    std::size_t total = 0;

    explicit FlatParams(Hypernet& net) {
        net.visit_tensors([&](const std::string&, std::vector<double>& p,
                              std::vector<double>& g) {
            params.push_back(&p);
            grads.push_back(&g);
            total += p.size();
        });
    }
    void gather(std::vector<double>& p, std::vector<double>& g) const {
        p.resize(total);
        g.resize(total);
        std::size_t off = 0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            std::copy(params[i]->begin(), params[i]->end(), p.begin() + static_cast<long>(off));
            std::copy(grads[i]->begin(), grads[i]->end(), g.begin() + static_cast<long>(off));
            off += params[i]->size();
        }
    }
    void scatter(const std::vector<double>& p) const {
        std::size_t off = 0;
        for (auto* dst : params) {
            std::copy(p.begin() + static_cast<long>(off),
                      p.begin() + static_cast<long>(off + dst->size()), dst->begin());
            off += dst->size();
        }
    }
};

}  // namespace train_detail

// Two-phase curriculum: supervised-only batches with the phase-1 weight
// preset, then the 50/50 mix with the phase-2 preset. Deterministic under
// the sampler seed in single-worker mode.
inline TrainResult train_hypernet(Hypernet& net, const TrainConfig& cfg) {
    if (cfg.sampler.resolution != net.config().resolution)
        throw std::invalid_argument("sampler and hypernet resolutions differ");
    MetricLog log(cfg.metrics_path, "batch,phase,lr,J,J_R,J_D,J_N,J_S", cfg.config_echo);
    train_detail::FlatParams flat(net);
    Adam opt(flat.total, cfg.adam);
    CosineSchedule schedule{cfg.lr_max, cfg.lr_min, cfg.batches};
    std::vector<double> p, g;
    std::vector<double> dtheta;
    TrainResult result;

    for (int b = 0; b < cfg.batches; ++b) {
        int phase = b < cfg.phase1_batches ? 1 : 2;
        LossWeights weights = phase == 1 ? LossWeights::phase1() : LossWeights::phase2();
        auto batch = curriculum_batch(cfg.sampler, b, cfg.batch_size, phase);

        net.zero_grads();
        double mean_total = 0, mean_r = 0, mean_d = 0, mean_n = 0, mean_s = 0;
        bool finite = true;
        for (int slot = 0; slot < static_cast<int>(batch.size()) && finite; ++slot) {
            const DatasetRecord& rec = batch[static_cast<std::size_t>(slot)];
            Rng crng = Rng::derive(cfg.sampler.seed ^ 0x5eedc011u,
                                   static_cast<std::uint64_t>(b),
                                   static_cast<std::uint64_t>(slot));
            CollocationSet set = sample_collocation(rec.instance, crng, cfg.collocation);
            LossBreakdown loss;
            try {
                PinnParams theta = net.generate(rec.grids, rec.instance.coeffs);
                loss = total_loss_with_gradient(theta, rec.instance.coeffs, set, weights, dtheta);
            } catch (const std::runtime_error&) {
                finite = false;
                break;
            }
            net.backward(dtheta);
            mean_total += loss.total;
            mean_r += loss.residual;
            mean_d += loss.dirichlet;
            mean_n += loss.neumann;
            mean_s += loss.sobolev;
        }
        double inv = 1.0 / static_cast<double>(batch.size());
        mean_total *= inv;
        mean_r *= inv;
        mean_d *= inv;
        mean_n *= inv;
        mean_s *= inv;
        if (!finite || !std::isfinite(mean_total)) {
            result.diverged = true;
            break;
        }

        flat.gather(p, g);
        for (auto& gv : g) gv *= inv;
        if (cfg.grad_clip > 0) clip_gradient_norm(g, cfg.grad_clip);
        double lr = schedule.at(b);
        opt.step(p, g, lr);
        flat.scatter(p);

        result.batch_loss.push_back(mean_total);
        result.completed_batches = b + 1;
        if (b % cfg.log_every == 0 || b + 1 == cfg.batches) {
            log.row(std::to_string(b) + "," + std::to_string(phase) + "," + csv_num(lr) + "," +
                    csv_num(mean_total) + "," + csv_num(mean_r) + "," + csv_num(mean_d) + "," +
                    csv_num(mean_n) + "," + csv_num(mean_s));
        }
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            (b + 1) % cfg.checkpoint_every == 0) {
            save_hypernet(cfg.checkpoint_path + ".last", net);
        }
    }
    log.flush();
    if (!cfg.checkpoint_path.empty() && !result.diverged) save_hypernet(cfg.checkpoint_path, net);
    return result;
}

// --- single-instance fine-tuning ------------------------------------------------

struct FinetuneConfig {
    int steps = 10000;
    double lr_max = 1e-4;
    double lr_min = 1e-7;
    AdamConfig adam{};  // plain Adam
    CollocationConfig collocation{1024, 256, 256, 2.0 / 128.0};
    std::uint64_t seed = 0;
    int mse_probe_points = 512;
    std::string metrics_path;
    std::string config_echo;
    int log_every = 1;
};

struct FinetuneResult {
    PinnParams params;
    struct Row {
        int step;
        double loss, mse, lr;
    };
    std::vector<Row> curve;
    bool diverged = false;
};

// Physics-only optimization of one PINN on one instance (the analytic
// solution, when present, is used for reporting MSE, never for training).
inline FinetuneResult finetune_pinn(const PinnParams& init, const PdeInstance& inst,
                                    const FinetuneConfig& cfg) {
    FinetuneResult result;
    result.params = init;
    MetricLog log(cfg.metrics_path, "step,loss,mse,lr", cfg.config_echo);
    Adam opt(init.values.size(), cfg.adam);
    CosineSchedule schedule{cfg.lr_max, cfg.lr_min, cfg.steps};
    LossWeights weights = LossWeights::phase2();

    // fixed probe set for the error trace
    std::vector<Vec2> probes;
    if (inst.solution) {
        Rng prng = Rng::derive(cfg.seed, 0xeea1u);
        while (static_cast<int>(probes.size()) < cfg.mse_probe_points) {
            Vec2 q{prng.uniform(-1, 1), prng.uniform(-1, 1)};
            if (inst.domain.contains(q)) probes.push_back(q);
        }
    }

    std::vector<double> grad;
    for (int step = 0; step < cfg.steps; ++step) {
        Rng crng = Rng::derive(cfg.seed ^ 0xf1e7u, static_cast<std::uint64_t>(step));
        CollocationSet set = sample_collocation(inst, crng, cfg.collocation);
        LossBreakdown loss;
        try {
            loss = total_loss_with_gradient(result.params, inst.coeffs, set, weights, grad);
        } catch (const std::runtime_error&) {
            result.diverged = true;
            break;
        }
        double lr = schedule.at(step);
        opt.step(result.params.values, grad, lr);

        double err = -1.0;
        if (!probes.empty()) {
            double sum = 0;
            for (const auto& q : probes) {
                double d = pinn_forward(result.params, q.x, q.y) -
                           inst.solution->eval_raw(q.x, q.y);
                sum += d * d;
            }
            err = sum / static_cast<double>(probes.size());
        }
        result.curve.push_back({step, loss.total, err, lr});
        if (step % cfg.log_every == 0 || step + 1 == cfg.steps)
            log.row(std::to_string(step) + "," + csv_num(loss.total) + "," + csv_num(err) + "," +
                    csv_num(lr));
    }
    log.flush();
    return result;
}

}  // namespace hypino
