#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <hypino/pinn.hpp>

#include <cstdio>

#include "oracles.hpp"

using namespace hypino;

namespace {

// Deliberately plain reimplementation of the forward pass; shares nothing
// with the library's layout helpers.
double straight_line_forward(const PinnParams& p, double x, double y) {
    const auto tensors = p.arch.tensors();
    auto find = [&](const std::string& name) {
        for (const auto& t : tensors)
            if (t.name == name) return t;
        REQUIRE(false);
        return tensors[0];
    };
    auto at = [&](const PinnArchitecture::TensorInfo& t, int r, int c) {
        return p.values[t.offset + static_cast<std::size_t>(r) * t.cols + c];
    };
    int d = p.arch.width;
    int e = p.arch.fourier.encoding_dim();
    std::vector<double> xi(static_cast<std::size_t>(e));
    for (int k = 0; k < p.arch.fourier.n_frequencies; ++k) {
        double f = p.arch.fourier.base_frequency * std::pow(2.0, k / 2);
        double arg = 2 * M_PI * f * (k % 2 == 0 ? x : y);
        xi[static_cast<std::size_t>(k)] = std::sin(arg);
        xi[static_cast<std::size_t>(p.arch.fourier.n_frequencies + k)] = std::cos(arg);
    }
    xi[static_cast<std::size_t>(e - 2)] = x;
    xi[static_cast<std::size_t>(e - 1)] = y;

    auto proj = [&](const std::string& wn, const std::string& bn) {
        auto W = find(wn);
        auto b = find(bn);
        std::vector<double> out(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) {
            double s = at(b, i, 0);
            for (int j = 0; j < e; ++j) s += at(W, i, j) * xi[static_cast<std::size_t>(j)];
            out[static_cast<std::size_t>(i)] = std::tanh(s);
        }
        return out;
    };
    auto z = proj("W0", "b0");
    auto zu = proj("U", "bu");
    auto zv = proj("V", "bv");
    for (int l = 1; l <= p.arch.update_layers(); ++l) {
        auto W = find("W" + std::to_string(l));
        auto b = find("b" + std::to_string(l));
        std::vector<double> nz(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) {
            double s = at(b, i, 0);
            for (int j = 0; j < d; ++j) s += at(W, i, j) * z[static_cast<std::size_t>(j)];
            double t = std::tanh(s);
            nz[static_cast<std::size_t>(i)] =
                zu[static_cast<std::size_t>(i)] * t + zv[static_cast<std::size_t>(i)] * (1 - t);
        }
        z = nz;
    }
    auto Wout = find("Wout");
    auto bout = find("bout");
    double out = at(bout, 0, 0);
    for (int j = 0; j < d; ++j) out += at(Wout, 0, j) * z[static_cast<std::size_t>(j)];
    return out;
}

}  // namespace

TEST_CASE("fourier encoding") {
    FourierFeatureConfig cfg;
    auto enc = fourier_encode(cfg, 0.0, 0.0);
    CHECK(enc.size() == 18);  // 2N + 2
    for (int k = 0; k < cfg.n_frequencies; ++k) {
        CHECK(enc[static_cast<std::size_t>(k)] == 0.0);
        CHECK(enc[static_cast<std::size_t>(cfg.n_frequencies + k)] == 1.0);
    }
    CHECK(enc[16] == 0.0);
    CHECK(enc[17] == 0.0);

    // derivative of the sine rows w.r.t. x equals 2 pi B cos(...)
    std::vector<Jet2> jets;
    fourier_encode_jets(cfg, 0.37, -0.11, jets);
    for (int k = 0; k < cfg.n_frequencies; ++k) {
        auto f = [&](double x) { return fourier_encode(cfg, x, -0.11)[static_cast<std::size_t>(k)]; };
        double fd = oracle::fd1(f, 0.37, 1e-6);
        CHECK(oracle::rel_err(jets[static_cast<std::size_t>(k)].dx, fd) < 1e-8);
    }
}

TEST_CASE("parameter bookkeeping matches the closed form") {
    PinnArchitecture arch;  // d=32, N=8, 3 hidden layers
    int d = 32, e = 18, upd = 2;
    std::size_t want = 3u * d * e + 3u * d + static_cast<std::size_t>(upd) * d * d +
                       static_cast<std::size_t>(upd) * d + d + 1;
    CHECK(arch.param_count() == want);
    CHECK(arch.param_count() == 3969);
    CHECK(arch.tensor_count() == 12);
    CHECK(arch.tensors().size() == 12);
}

TEST_CASE("all-zero parameters collapse to b_out") {
    PinnArchitecture arch;
    PinnParams p = PinnParams::zeros(arch);
    p.values.back() = 1.37;  // b_out is the final scalar
    CHECK(pinn_forward(p, 0.3, -0.8) == doctest::Approx(1.37));
    PinnWorkspace ws;
    Jet2 j = pinn_forward_jet(p, 0.3, -0.8, ws);
    CHECK(j.v == doctest::Approx(1.37));
    CHECK(j.dx == 0.0);
    CHECK(j.dxx == 0.0);
}

TEST_CASE("forward matches an independent reimplementation") {
    Rng rng(404);
    for (int trial = 0; trial < 5; ++trial) {
        PinnArchitecture arch;
        PinnParams p = PinnParams::random_init(arch, rng);
        for (int i = 0; i < 10; ++i) {
            double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
            double a = pinn_forward(p, x, y);
            double b = straight_line_forward(p, x, y);
            CHECK(std::abs(a - b) < 1e-12 * (1 + std::abs(b)));
            PinnWorkspace ws;
            CHECK(std::abs(pinn_forward_jet(p, x, y, ws).v - a) < 1e-12);
        }
    }
}

TEST_CASE("output stays within the affine bound of the final layer") {
    Rng rng(17);
    PinnArchitecture arch;
    auto tensors = arch.tensors();
    for (int trial = 0; trial < 20; ++trial) {
        PinnParams p = PinnParams::random_init(arch, rng);
        double wout_l1 = 0;
        for (const auto& t : tensors)
            if (t.name == "Wout")
                for (std::size_t i = 0; i < t.size(); ++i)
                    wout_l1 += std::abs(p.values[t.offset + i]);
        double bout = p.values.back();
        double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
        // tanh outputs are in (-1,1); the gated mixture z = zu t + zv (1-t)
        // is bounded by 3 in the worst case
        CHECK(std::abs(pinn_forward(p, x, y) - bout) <= 3.0 * wout_l1);
    }
}

TEST_CASE("jets match finite differences of the forward pass") {
    Rng rng(9090);
    PinnArchitecture arch;
    PinnWorkspace ws;
    int second_checked = 0;
    for (int trial = 0; trial < 30; ++trial) {
        PinnParams p = PinnParams::random_init(arch, rng);
        for (auto& v : p.values) v *= 0.25;
        double x = rng.uniform(-0.9, 0.9), y = rng.uniform(-0.9, 0.9);
        Jet2 j = pinn_forward_jet(p, x, y, ws);
        auto fx = [&](double xx) { return pinn_forward(p, xx, y); };
        auto fy = [&](double yy) { return pinn_forward(p, x, yy); };
        CHECK(oracle::rel_err(j.dx, oracle::fd1(fx, x, 1e-5)) < 1e-6);
        CHECK(oracle::rel_err(j.dy, oracle::fd1(fy, y, 1e-5)) < 1e-6);
        // second-order differences at the fixed step 1e-3 are only valid
        // oracles where halving the step leaves them stable
        double fdxx = oracle::fd2(fx, x, 1e-3);
        if (oracle::fd_is_trustworthy(fdxx, oracle::fd2(fx, x, 5e-4), 5e-5)) {
            CHECK(oracle::rel_err(j.dxx, fdxx) < 1e-4);
            ++second_checked;
        }
        double fdyy = oracle::fd2(fy, y, 1e-3);
        if (oracle::fd_is_trustworthy(fdyy, oracle::fd2(fy, y, 5e-4), 5e-5)) {
            CHECK(oracle::rel_err(j.dyy, fdyy) < 1e-4);
            ++second_checked;
        }
        auto fxy = [&](double a, double b) { return pinn_forward(p, a, b); };
        double fdxy = oracle::fd_cross(fxy, x, y, 1e-3);
        if (oracle::fd_is_trustworthy(fdxy, oracle::fd_cross(fxy, x, y, 5e-4), 5e-5)) {
            CHECK(oracle::rel_err(j.dxy, fdxy) < 1e-4);
            ++second_checked;
        }
    }
    CHECK(second_checked > 45);  // the guard must not hollow the test out
}

TEST_CASE("jet convergence at the theoretical rate") {
    Rng rng(3131);
    PinnArchitecture arch;
    PinnParams p = PinnParams::random_init(arch, rng);
    PinnWorkspace ws;
    double x = 0.21, y = -0.47;
    Jet2 j = pinn_forward_jet(p, x, y, ws);
    auto fx = [&](double xx) { return pinn_forward(p, xx, y); };
    double prev = HUGE_VAL;
    for (double h : {1e-2, 1e-3, 1e-4}) {
        double err = std::abs(oracle::fd1(fx, x, h) - j.dx);
        CHECK(err < prev);
        prev = err;
    }
    // second-order errors shrink ~h^2 until roundoff
    double e2a = std::abs(oracle::fd2(fx, x, 1e-2) - j.dxx);
    double e2b = std::abs(oracle::fd2(fx, x, 1e-3) - j.dxx);
    CHECK(e2b < e2a);
}

TEST_CASE("closed form for a net reduced to w * tanh(v * sin(2 pi f x))") {
    PinnArchitecture arch;
    arch.hidden_layers = 1;  // no update layers: out = Wout tanh(W0 xi + b0) ... careful
    // with hidden_layers = 1 the chain is just z0; keep default instead and
    // zero everything but one W0 row so z passes through the gate unchanged
    arch = PinnArchitecture{};
    PinnParams p = PinnParams::zeros(arch);
    auto tensors = arch.tensors();
    auto find = [&](const std::string& n) {
        for (const auto& t : tensors)
            if (t.name == n) return t;
        REQUIRE(false);
        return tensors[0];
    };
    // route: zu = tanh(0) = 0, zv = 0 => z1 = 0 everywhere... instead use
    // hidden_layers' gates: set U row 0 bias large so zu_0 ~ 1, W1 = I on
    // row 0, so z1_0 = zu_0 tanh(z0_0) + zv_0 (1 - tanh(z0_0)).
    // Simplest exact route: make updates pass-through is impossible without
    // saturating tanh, so check the analytic value of the full composition.
    double v = 0.8, wout = 1.3;
    auto W0 = find("W0");
    p.values[W0.offset + 0] = v;  // row 0, feature 0 = sin(2 pi f0 x)
    auto bu = find("bu");
    (void)bu;
    auto Wout = find("Wout");
    p.values[Wout.offset + 0] = wout;
    auto W1 = find("W1");
    p.values[W1.offset + 0] = 1.0;  // W1[0,0]
    auto W2 = find("W2");
    p.values[W2.offset + 0] = 1.0;

    // With zu = zv = 0 every update kills the signal; output must be b_out.
    CHECK(pinn_forward(p, 0.3, 0.1) == doctest::Approx(0.0));

    // Now open the gate: zu_0 = tanh(10) ~ 1, zv_0 = 0.
    auto U = find("U");
    (void)U;
    p.values[find("bu").offset + 0] = 10.0;
    double f0 = arch.fourier.base_frequency;
    double x = 0.27, y = -0.66;
    double s = std::sin(2 * M_PI * f0 * x);
    double zu0 = std::tanh(10.0);
    double z0 = std::tanh(v * s);
    double z1 = zu0 * std::tanh(z0);
    double z2 = zu0 * std::tanh(z1);
    CHECK(pinn_forward(p, x, y) == doctest::Approx(wout * z2).epsilon(1e-12));

    // closed-form u_xx for the first stage: d2/dx2 tanh(v sin(w x)) carries
    // the exact -(2 pi f)^2 modulation of the feature
    PinnWorkspace ws;
    Jet2 j = pinn_forward_jet(p, x, y, ws);
    double w = 2 * M_PI * f0;
    double sp = w * std::cos(w * x);
    double spp = -w * w * std::sin(w * x);
    double g1 = 1 - z0 * z0;
    double g2 = -2 * z0 * g1;
    double z0_x = g1 * v * sp;
    double z0_xx = g2 * (v * sp) * (v * sp) + g1 * v * spp;
    // chain through the two gated updates
    auto step = [&](double zin, double zin_x, double zin_xx) {
        double t = std::tanh(zin);
        double h1 = 1 - t * t;
        double h2 = -2 * t * h1;
        double zout = zu0 * t;
        double zout_x = zu0 * h1 * zin_x;
        double zout_xx = zu0 * (h2 * zin_x * zin_x + h1 * zin_xx);
        return std::array<double, 3>{zout, zout_x, zout_xx};
    };
    auto s1 = step(z0, z0_x, z0_xx);
    auto s2 = step(s1[0], s1[1], s1[2]);
    CHECK(j.dxx == doctest::Approx(wout * s2[2]).epsilon(1e-10));
}

TEST_CASE("serialization round-trip") {
    Rng rng(55);
    PinnArchitecture arch;
    PinnParams p = PinnParams::random_init(arch, rng);
    const std::string path = "/tmp/hypino_test_pinn.bin";
    save_pinn(path, p);
    PinnParams q = load_pinn(path);
    CHECK(q.arch == p.arch);
    // f32 storage: reloading and re-saving is bit-stable
    save_pinn(path, q);
    PinnParams q2 = load_pinn(path);
    CHECK(q.values == q2.values);
    std::remove(path.c_str());
}
