#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace hypino {

// lr(s) = lr_min + (lr_max - lr_min) * (1 + cos(pi s / S)) / 2
struct CosineSchedule {
    double lr_max = 1e-4;
    double lr_min = 1e-6;
    long total_steps = 1;

    double at(long step) const {
        if (step >= total_steps) return lr_min;
        double phase = M_PI * static_cast<double>(step) / static_cast<double>(total_steps);
        return lr_min + (lr_max - lr_min) * (1.0 + std::cos(phase)) / 2.0;
    }
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled (AdamW) when nonzero
};

// Adam / AdamW over a flat parameter vector. Weight decay is decoupled from
// the moment update.
class Adam {
public:
    Adam(std::size_t n, AdamConfig cfg = {}) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

    long step_count() const { return t_; }

    void step(std::span<double> params, std::span<const double> grad, double lr) {
        if (params.size() != m_.size() || grad.size() != m_.size())
            throw std::invalid_argument("optimizer state size mismatch");
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < m_.size(); ++i) {
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            double mhat = m_[i] / bc1;
            double vhat = v_[i] / bc2;
            params[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                               cfg_.weight_decay * params[i]);
        }
    }

private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

// Global-norm clipping; returns the factor applied (1 = untouched).
inline double clip_gradient_norm(std::span<double> grad, double max_norm) {
    if (max_norm <= 0) return 1.0;
    double sq = 0;
    for (double g : grad) sq += g * g;
    double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return 1.0;
    double f = max_norm / norm;
    for (double& g : grad) g *= f;
    return f;
}

}  // namespace hypino
