#pragma once

#include <cmath>

namespace hypino {

// Second-order 2D jet: value, gradient and (symmetric) Hessian carried
// through arithmetic exactly. The cross derivative is propagated even though
// the operator basis never reads it; Neumann data along arbitrary normals
// only needs first order, but the slot costs little.
struct Jet2 {
    double v = 0, dx = 0, dy = 0, dxx = 0, dxy = 0, dyy = 0;

    static Jet2 constant(double c) { return {c, 0, 0, 0, 0, 0}; }
    static Jet2 var_x(double x) { return {x, 1, 0, 0, 0, 0}; }
    static Jet2 var_y(double y) { return {y, 0, 1, 0, 0, 0}; }

    Jet2& operator+=(const Jet2& o) {
        v += o.v;
        dx += o.dx;
        dy += o.dy;
        dxx += o.dxx;
        dxy += o.dxy;
        dyy += o.dyy;
        return *this;
    }
    Jet2& operator-=(const Jet2& o) {
        v -= o.v;
        dx -= o.dx;
        dy -= o.dy;
        dxx -= o.dxx;
        dxy -= o.dxy;
        dyy -= o.dyy;
        return *this;
    }
    friend Jet2 operator+(Jet2 a, const Jet2& b) { return a += b; }
    friend Jet2 operator-(Jet2 a, const Jet2& b) { return a -= b; }
    friend Jet2 operator-(const Jet2& a) { return {-a.v, -a.dx, -a.dy, -a.dxx, -a.dxy, -a.dyy}; }

    friend Jet2 operator*(double s, const Jet2& a) {
        return {s * a.v, s * a.dx, s * a.dy, s * a.dxx, s * a.dxy, s * a.dyy};
    }
    friend Jet2 operator*(const Jet2& a, double s) { return s * a; }
    friend Jet2 operator+(const Jet2& a, double s) {
        return {a.v + s, a.dx, a.dy, a.dxx, a.dxy, a.dyy};
    }
    friend Jet2 operator+(double s, const Jet2& a) { return a + s; }
    friend Jet2 operator-(double s, const Jet2& a) { return s + (-a); }
    friend Jet2 operator-(const Jet2& a, double s) { return a + (-s); }

    friend Jet2 operator*(const Jet2& a, const Jet2& b) {
        Jet2 c;
        c.v = a.v * b.v;
        c.dx = a.dx * b.v + a.v * b.dx;
        c.dy = a.dy * b.v + a.v * b.dy;
        c.dxx = a.dxx * b.v + 2.0 * a.dx * b.dx + a.v * b.dxx;
        c.dxy = a.dxy * b.v + a.dx * b.dy + a.dy * b.dx + a.v * b.dxy;
        c.dyy = a.dyy * b.v + 2.0 * a.dy * b.dy + a.v * b.dyy;
        return c;
    }

    bool finite() const {
        return std::isfinite(v) && std::isfinite(dx) && std::isfinite(dy) &&
               std::isfinite(dxx) && std::isfinite(dxy) && std::isfinite(dyy);
    }
};

namespace jet_detail {

// Chain rule through a scalar function given g(v), g'(v), g''(v).
inline Jet2 lift(const Jet2& a, double g, double g1, double g2) {
    Jet2 r;
    r.v = g;
    r.dx = g1 * a.dx;
    r.dy = g1 * a.dy;
    r.dxx = g2 * a.dx * a.dx + g1 * a.dxx;
    r.dxy = g2 * a.dx * a.dy + g1 * a.dxy;
    r.dyy = g2 * a.dy * a.dy + g1 * a.dyy;
    return r;
}

}  // namespace jet_detail

inline Jet2 tanh(const Jet2& a) {
    double t = std::tanh(a.v);
    double g1 = 1.0 - t * t;
    return jet_detail::lift(a, t, g1, -2.0 * t * g1);
}

inline Jet2 sin(const Jet2& a) {
    double s = std::sin(a.v), c = std::cos(a.v);
    return jet_detail::lift(a, s, c, -s);
}

inline Jet2 cos(const Jet2& a) {
    double s = std::sin(a.v), c = std::cos(a.v);
    return jet_detail::lift(a, c, -s, -c);
}

inline Jet2 exp(const Jet2& a) {
    double e = std::exp(a.v);
    return jet_detail::lift(a, e, e, e);
}

// Adjoint of jet multiplication: accumulates d(loss)/d(a) given the
// adjoint of c = a * b. Each forward component is bilinear, so the adjoint
// is the transpose of the (b-dependent) linear map acting on a.
inline void jet_mul_adjoint(const Jet2& cbar, const Jet2& b, Jet2& abar) {
    abar.v += cbar.v * b.v + cbar.dx * b.dx + cbar.dy * b.dy + cbar.dxx * b.dxx +
              cbar.dxy * b.dxy + cbar.dyy * b.dyy;
    abar.dx += cbar.dx * b.v + 2.0 * cbar.dxx * b.dx + cbar.dxy * b.dy;
    abar.dy += cbar.dy * b.v + 2.0 * cbar.dyy * b.dy + cbar.dxy * b.dx;
    abar.dxx += cbar.dxx * b.v;
    abar.dxy += cbar.dxy * b.v;
    abar.dyy += cbar.dyy * b.v;
}

// Adjoint of t = tanh(s). Needs tanh derivatives up to third order because
// the forward pass already consumed the second.
inline void jet_tanh_adjoint(const Jet2& tbar, const Jet2& s, const Jet2& t, Jet2& sbar) {
    double g1 = 1.0 - t.v * t.v;
    double g2 = -2.0 * t.v * g1;
    double g3 = -2.0 * g1 * (1.0 - 3.0 * t.v * t.v);
    sbar.v += g1 * tbar.v + g2 * (s.dx * tbar.dx + s.dy * tbar.dy) +
              (g3 * s.dx * s.dx + g2 * s.dxx) * tbar.dxx +
              (g3 * s.dx * s.dy + g2 * s.dxy) * tbar.dxy +
              (g3 * s.dy * s.dy + g2 * s.dyy) * tbar.dyy;
    sbar.dx += g1 * tbar.dx + 2.0 * g2 * s.dx * tbar.dxx + g2 * s.dy * tbar.dxy;
    sbar.dy += g1 * tbar.dy + 2.0 * g2 * s.dy * tbar.dyy + g2 * s.dx * tbar.dxy;
    sbar.dxx += g1 * tbar.dxx;
    sbar.dxy += g1 * tbar.dxy;
    sbar.dyy += g1 * tbar.dyy;
}

inline double jet_dot(const Jet2& a, const Jet2& b) {
    return a.v * b.v + a.dx * b.dx + a.dy * b.dy + a.dxx * b.dxx + a.dxy * b.dxy +
           a.dyy * b.dyy;
}

}  // namespace hypino
