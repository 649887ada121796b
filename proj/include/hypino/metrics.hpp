#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace hypino {

// Mean squared error over masked cells.
inline double mse(const std::vector<double>& pred, const std::vector<double>& ref,
                  const std::vector<std::uint8_t>& mask) {
    if (pred.size() != ref.size() || pred.size() != mask.size())
        throw std::invalid_argument("metric input shapes differ");
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        double d = pred[i] - ref[i];
        sum += d * d;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("metric mask is empty");
    return sum / static_cast<double>(n);
}

// Symmetric mean absolute percentage error on the 0..200 scale:
// 100 * mean of 2|a-b| / (|a|+|b|+eps).
inline double smape(const std::vector<double>& pred, const std::vector<double>& ref,
                    const std::vector<std::uint8_t>& mask, double eps = 1e-8) {
    if (pred.size() != ref.size() || pred.size() != mask.size())
        throw std::invalid_argument("metric input shapes differ");
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        double num = 2.0 * std::abs(pred[i] - ref[i]);
        double den = std::abs(pred[i]) + std::abs(ref[i]) + eps;
        sum += num / den;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("metric mask is empty");
    return 100.0 * sum / static_cast<double>(n);
}

}  // namespace hypino
