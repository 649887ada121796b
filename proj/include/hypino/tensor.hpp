#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypino/rng.hpp"

namespace hypino {

// Row-major matrix of doubles; spatial tensors travel as (H*W) x C token
// matrices.
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
    double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline void gelu_forward(const Mat& x, Mat& y) {
    y = x;
    for (auto& v : y.a) v = 0.5 * v * (1.0 + std::erf(v / M_SQRT2));
}

inline double gelu_grad(double x) {
    double cdf = 0.5 * (1.0 + std::erf(x / M_SQRT2));
    double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

// Registry callback: (name, params, grads).
using TensorVisitor =
    std::function<void(const std::string&, std::vector<double>&, std::vector<double>&)>;

// Fully connected layer with cached input for the backward pass.
struct Linear {
    std::string name;
    Mat W;   // in x out
    Mat b;   // 1 x out
    Mat gW, gb;
    Mat x_cache;

    void init(const std::string& n, int in, int out, Rng& rng, double scale = 1.0) {
        name = n;
        W = Mat(in, out);
        b = Mat(1, out);
        gW = Mat(in, out);
        gb = Mat(1, out);
        double limit = scale * std::sqrt(6.0 / (in + out));
        for (auto& v : W.a) v = rng.uniform(-limit, limit);
    }

    void forward(const Mat& x, Mat& y) {
        x_cache = x;
        y = Mat(x.rows, W.cols);
        for (int t = 0; t < x.rows; ++t) {
            const double* xr = x.row(t);
            double* yr = y.row(t);
            for (int o = 0; o < W.cols; ++o) yr[o] = b.a[static_cast<std::size_t>(o)];
            for (int i = 0; i < W.rows; ++i) {
                double xv = xr[i];
                if (xv == 0.0) continue;
                const double* wr = W.row(i);
                for (int o = 0; o < W.cols; ++o) yr[o] += xv * wr[o];
            }
        }
    }

    // Accumulates weight grads; writes input grad when dx != nullptr.
    void backward(const Mat& dy, Mat* dx) {
        for (int t = 0; t < dy.rows; ++t) {
            const double* dyr = dy.row(t);
            const double* xr = x_cache.row(t);
            for (int o = 0; o < W.cols; ++o) gb.a[static_cast<std::size_t>(o)] += dyr[o];
            for (int i = 0; i < W.rows; ++i) {
                double xv = xr[i];
                double* gr = gW.row(i);
                for (int o = 0; o < W.cols; ++o) gr[o] += xv * dyr[o];
            }
        }
        if (dx) {
            *dx = Mat(dy.rows, W.rows);
            for (int t = 0; t < dy.rows; ++t) {
                const double* dyr = dy.row(t);
                double* dxr = dx->row(t);
                for (int i = 0; i < W.rows; ++i) {
                    const double* wr = W.row(i);
                    double s = 0;
                    for (int o = 0; o < W.cols; ++o) s += wr[o] * dyr[o];
                    dxr[i] = s;
                }
            }
        }
    }

    void visit(const TensorVisitor& fn) {
        fn(name + ".W", W.a, gW.a);
        fn(name + ".b", b.a, gb.a);
    }
};

// Token-wise layer normalization over channels.
struct LayerNorm {
    std::string name;
    Mat gamma, beta, ggamma, gbeta;
    Mat x_hat;            // cache
    std::vector<double> inv_std;
    static constexpr double kEps = 1e-5;

    void init(const std::string& n, int c) {
        name = n;
        gamma = Mat(1, c);
        beta = Mat(1, c);
        ggamma = Mat(1, c);
        gbeta = Mat(1, c);
        for (auto& v : gamma.a) v = 1.0;
    }

    void forward(const Mat& x, Mat& y) {
        int c = gamma.cols;
        x_hat = Mat(x.rows, c);
        inv_std.assign(static_cast<std::size_t>(x.rows), 0.0);
        y = Mat(x.rows, c);
        for (int t = 0; t < x.rows; ++t) {
            const double* xr = x.row(t);
            double mu = 0;
            for (int i = 0; i < c; ++i) mu += xr[i];
            mu /= c;
            double var = 0;
            for (int i = 0; i < c; ++i) var += (xr[i] - mu) * (xr[i] - mu);
            var /= c;
            double is = 1.0 / std::sqrt(var + kEps);
            inv_std[static_cast<std::size_t>(t)] = is;
            double* hr = x_hat.row(t);
            double* yr = y.row(t);
            for (int i = 0; i < c; ++i) {
                hr[i] = (xr[i] - mu) * is;
                yr[i] = gamma.a[static_cast<std::size_t>(i)] * hr[i] +
                        beta.a[static_cast<std::size_t>(i)];
            }
        }
    }

    void backward(const Mat& dy, Mat& dx) {
        int c = gamma.cols;
        dx = Mat(dy.rows, c);
        for (int t = 0; t < dy.rows; ++t) {
            const double* dyr = dy.row(t);
            const double* hr = x_hat.row(t);
            double m1 = 0, m2 = 0;
            for (int i = 0; i < c; ++i) {
                double dh = dyr[i] * gamma.a[static_cast<std::size_t>(i)];
                m1 += dh;
                m2 += dh * hr[i];
                ggamma.a[static_cast<std::size_t>(i)] += dyr[i] * hr[i];
                gbeta.a[static_cast<std::size_t>(i)] += dyr[i];
            }
            m1 /= c;
            m2 /= c;
            double is = inv_std[static_cast<std::size_t>(t)];
            double* dxr = dx.row(t);
            for (int i = 0; i < c; ++i) {
                double dh = dyr[i] * gamma.a[static_cast<std::size_t>(i)];
                dxr[i] = is * (dh - m1 - hr[i] * m2);
            }
        }
    }

    void visit(const TensorVisitor& fn) {
        fn(name + ".gamma", gamma.a, ggamma.a);
        fn(name + ".beta", beta.a, gbeta.a);
    }
};

// 3x3 stride-2 convolution, zero padding 1. Input and output as
// (H*W) x C token matrices plus explicit spatial dims.
struct Conv3x3s2 {
    std::string name;
    int cin = 0, cout = 0;
    Mat W;  // (9*cin) x cout
    Mat b;  // 1 x cout
    Mat gW, gb;
    Mat x_cache;
    int h_in = 0, w_in = 0;

    void init(const std::string& n, int cin_, int cout_, Rng& rng) {
        name = n;
        cin = cin_;
        cout = cout_;
        W = Mat(9 * cin, cout);
        b = Mat(1, cout);
        gW = Mat(9 * cin, cout);
        gb = Mat(1, cout);
        double limit = std::sqrt(6.0 / (9.0 * cin + cout));
        for (auto& v : W.a) v = rng.uniform(-limit, limit);
    }

    static int out_size(int in) { return in / 2; }

    void forward(const Mat& x, int h, int w, Mat& y) {
        x_cache = x;
        h_in = h;
        w_in = w;
        int ho = out_size(h), wo = out_size(w);
        y = Mat(ho * wo, cout);
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                double* yr = y.row(oy * wo + ox);
                for (int o = 0; o < cout; ++o) yr[o] = b.a[static_cast<std::size_t>(o)];
                for (int ky = 0; ky < 3; ++ky) {
                    int iy = 2 * oy - 1 + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        int ix = 2 * ox - 1 + kx;
                        if (ix < 0 || ix >= w) continue;
                        const double* xr = x.row(iy * w + ix);
                        const double* wr = W.row((ky * 3 + kx) * cin);
                        for (int ci = 0; ci < cin; ++ci) {
                            double xv = xr[ci];
                            const double* wc = wr + static_cast<std::size_t>(ci) * cout;
                            for (int o = 0; o < cout; ++o) yr[o] += xv * wc[o];
                        }
                    }
                }
            }
        }
    }

    void backward(const Mat& dy, Mat* dx) {
        int ho = out_size(h_in), wo = out_size(w_in);
        if (dx) *dx = Mat(h_in * w_in, cin);
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                const double* dyr = dy.row(oy * wo + ox);
                for (int o = 0; o < cout; ++o) gb.a[static_cast<std::size_t>(o)] += dyr[o];
                for (int ky = 0; ky < 3; ++ky) {
                    int iy = 2 * oy - 1 + ky;
                    if (iy < 0 || iy >= h_in) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        int ix = 2 * ox - 1 + kx;
                        if (ix < 0 || ix >= w_in) continue;
                        const double* xr = x_cache.row(iy * w_in + ix);
                        double* gr = gW.row((ky * 3 + kx) * cin);
                        double* dxr = dx ? dx->row(iy * w_in + ix) : nullptr;
                        for (int ci = 0; ci < cin; ++ci) {
                            double* gc = gr + static_cast<std::size_t>(ci) * cout;
                            const double* wc =
                                W.row((ky * 3 + kx) * cin) + static_cast<std::size_t>(ci) * cout;
                            double xv = xr[ci];
                            double acc = 0;
                            for (int o = 0; o < cout; ++o) {
                                gc[o] += xv * dyr[o];
                                acc += wc[o] * dyr[o];
                            }
                            if (dxr) dxr[ci] += acc;
                        }
                    }
                }
            }
        }
    }

    void visit(const TensorVisitor& fn) {
        fn(name + ".W", W.a, gW.a);
        fn(name + ".b", b.a, gb.a);
    }
};

}  // namespace hypino
