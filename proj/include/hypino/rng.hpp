#pragma once

#include <cstdint>
#include <cmath>

namespace hypino {

// Deterministic PRNG used everywhere instead of <random>: the standard
// distributions are implementation-defined, which would break the
// byte-identical-output guarantees across toolchains.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    // Derive an independent stream, e.g. per (batch, slot).
    static Rng derive(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
        std::uint64_t s = base;
        std::uint64_t m = splitmix64(s) ^ (a * 0x9e3779b97f4a7c15ULL);
        m = m ^ (b + 0x165667b19e3779f9ULL + (m << 6) + (m >> 2));
        return Rng(m);
    }

    // xoshiro256**
    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0.
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free Lemire-style mapping is fine here; the tiny bias of
        // the plain multiply-shift is irrelevant for sampling but we keep the
        // rejection loop to make histogram audits exact.
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int range_int(int lo, int hi) {  // inclusive ends
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; one value per call keeps the stream layout obvious.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * M_PI * u2);
    }

    // Shifted geometric: number of trials until first success, >= 1.
    int geometric(double p) {
        int k = 1;
        while (!bernoulli(p) && k < 64) ++k;
        return k;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t state_[4];
};

}  // namespace hypino
