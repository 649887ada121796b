#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <hypino/expr.hpp>

#include "oracles.hpp"

using namespace hypino;

namespace {

Expr sin_pix_sin_4piy() {
    Expr sx = Expr::unary(Basis::Sin, Expr::mul({Expr::constant(M_PI), Expr::x()}));
    Expr sy = Expr::unary(Basis::Sin, Expr::mul({Expr::constant(4.0 * M_PI), Expr::y()}));
    return sx * sy;
}

}  // namespace

TEST_CASE("eval basics") {
    CHECK(sin_pix_sin_4piy().eval(0.5, 0.125) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(Expr::constant(0.0).eval(3.7, -2.1) == 0.0);

    // tanh(2x + 3y + 1) at (0.1, -0.4): inner affine cancels
    Expr inner = Expr::add({Expr::mul({Expr::constant(2.0), Expr::x()}),
                            Expr::mul({Expr::constant(3.0), Expr::y()}), Expr::constant(1.0)});
    CHECK(Expr::unary(Basis::Tanh, inner).eval(0.1, -0.4) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("eval overflow is detected and names a subtree") {
    // exp-free basis set, so force overflow through repeated multiplication
    Expr big = Expr::constant(1e308);
    Expr prod = Expr::mul({big, Expr::add({Expr::x(), Expr::constant(10.0)})});
    Expr worse = prod * prod;
    CHECK_THROWS_AS(worse.eval(1.0, 0.0), EvalOverflow);
    try {
        worse.eval(1.0, 0.0);
    } catch (const EvalOverflow& e) {
        CHECK(std::string(e.what()).find("subtree") != std::string::npos);
    }
}

TEST_CASE("differentiate: chain rule and simple rules") {
    // d/dx sin(2x+3y) = 2 cos(2x+3y)
    Expr inner = Expr::add({Expr::mul({Expr::constant(2.0), Expr::x()}),
                            Expr::mul({Expr::constant(3.0), Expr::y()})});
    Expr d = Expr::unary(Basis::Sin, inner).derivative('x');
    for (double px : {-0.7, 0.0, 0.33})
        for (double py : {-0.2, 0.5})
            CHECK(d.eval(px, py) ==
                  doctest::Approx(2.0 * std::cos(2 * px + 3 * py)).epsilon(1e-13));

    // d/dy (x*y) = x
    Expr xy = Expr::x() * Expr::y();
    CHECK(xy.derivative('y').serialize() == "x");
}

TEST_CASE("second derivative matches the finite-difference oracle") {
    Expr u = sin_pix_sin_4piy();
    Expr uxx = u.derivative('x').derivative('x');
    double got = uxx.eval(0.3, 0.2);
    double want = -M_PI * M_PI * std::sin(0.3 * M_PI) * std::sin(0.8 * M_PI);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    double fd = oracle::fd2([&](double x) { return u.eval(x, 0.2); }, 0.3, 1e-4);
    CHECK(oracle::rel_err(got, fd) < 1e-4);
}

TEST_CASE("derivative oracle over random manufactured solutions") {
    Rng rng(1234);
    SolutionSamplingConfig cfg;
    int checked_first = 0, checked_second = 0;
    for (int s = 0; s < 60; ++s) {
        Expr u = sample_manufactured_solution(rng, cfg);
        Expr ux = u.derivative('x');
        Expr uxx = ux.derivative('x');
        Expr uy = u.derivative('y');
        for (int p = 0; p < 5; ++p) {
            double px = rng.uniform(-0.95, 0.95);
            double py = rng.uniform(-0.95, 0.95);
            auto fx = [&](double x) { return u.eval_raw(x, py); };
            auto fy = [&](double y) { return u.eval_raw(px, y); };
            double scale = fx(px);
            double fd_x = oracle::fd1(fx, px, 1e-4);
            double fd_y = oracle::fd1(fy, py, 1e-4);
            double fd_xx = oracle::fd2(fx, px, 1e-4);
            if (oracle::fd_is_trustworthy(fd_x, oracle::fd1(fx, px, 5e-5)) &&
                oracle::fd_noise_ok(scale, 1e-4, 1, 1e-6, fd_x)) {
                CHECK(oracle::rel_err(ux.eval_raw(px, py), fd_x) < 1e-6);
                ++checked_first;
            }
            if (oracle::fd_is_trustworthy(fd_y, oracle::fd1(fy, py, 5e-5)) &&
                oracle::fd_noise_ok(scale, 1e-4, 1, 1e-6, fd_y)) {
                CHECK(oracle::rel_err(uy.eval_raw(px, py), fd_y) < 1e-6);
                ++checked_first;
            }
            if (oracle::fd_is_trustworthy(fd_xx, oracle::fd2(fx, px, 5e-5), 1e-6) &&
                oracle::fd_noise_ok(scale, 1e-4, 2, 1e-4, fd_xx)) {
                CHECK(oracle::rel_err(uxx.eval_raw(px, py), fd_xx) < 1e-4);
                ++checked_second;
            }
        }
    }
    CHECK(checked_first > 200);
    CHECK(checked_second > 80);
}

TEST_CASE("manufactured-solution sampler") {
    SUBCASE("single additive identity term gives x") {
        TermSpec t;
        t.a = 1;
        t.b = 0;
        t.c = 0;
        t.d = 1;
        t.e = 0;
        t.psi = Basis::Identity;
        t.rule = TermSpec::Rule::Add;
        Expr u = t.apply(Expr::constant(0.0));
        CHECK(u.serialize() == "x");
    }
    SUBCASE("determinism") {
        Rng a(77), b(77);
        Expr ua = sample_manufactured_solution(a);
        Expr ub = sample_manufactured_solution(b);
        CHECK(ua.serialize() == ub.serialize());
    }
    SUBCASE("sampled term coefficients stay in their documented ranges") {
        Rng rng(5);
        SolutionSamplingConfig cfg;
        for (int i = 0; i < 1000; ++i) {
            TermSpec t = sample_term(rng, cfg);
            CHECK(t.valid());
        }
    }
    SUBCASE("probe bound is honored") {
        Rng rng(99);
        for (int i = 0; i < 20; ++i) {
            Expr u = sample_manufactured_solution(rng);
            double worst = 0;
            for (int gx = 0; gx < 16; ++gx)
                for (int gy = 0; gy < 16; ++gy)
                    worst = std::max(worst, std::abs(u.eval_raw(-1 + (gx + 0.5) / 8.0,
                                                                -1 + (gy + 0.5) / 8.0)));
            CHECK(worst <= 1e6);
        }
    }
}

TEST_CASE("serialization round-trips exactly") {
    Rng rng(31);
    for (int i = 0; i < 40; ++i) {
        Expr u = sample_manufactured_solution(rng);
        std::string s = u.serialize();
        Expr back = Expr::deserialize(s);
        CHECK(back.serialize() == s);
        double px = rng.uniform(-1, 1), py = rng.uniform(-1, 1);
        CHECK(u.eval_raw(px, py) == back.eval_raw(px, py));
    }
    CHECK_THROWS_AS(Expr::deserialize("(bogus x)"), IoError);
}

TEST_CASE("substitute performs affine remaps symbolically") {
    // u(x, y) = x^2 y, substitute x -> (x+1)/2
    Expr u = Expr::x() * Expr::x() * Expr::y();
    Expr half_x = Expr::add({Expr::mul({Expr::constant(0.5), Expr::x()}), Expr::constant(0.5)});
    Expr v = u.substitute(half_x, Expr::y());
    CHECK(v.eval(0.0, 2.0) == doctest::Approx(0.25 * 2.0));
}
