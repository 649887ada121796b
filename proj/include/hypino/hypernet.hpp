#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypino/io.hpp"
#include "hypino/pde.hpp"
#include "hypino/pinn.hpp"
#include "hypino/tensor.hpp"

namespace hypino {

struct HypernetConfig {
    int resolution = 64;      // input grid side; latent side is resolution/4
    int embed_channels = 8;   // per-path conv channels; first stage has 3x this
    int blocks = 4;           // K
    int window = 4;
    int attn_heads = 4;
    int coeff_dim = 64;       // d_C
    int film_hidden = 64;
    int head_hidden = 128;
    int pool_heads = 4;
    int grid_bands = 5;
    double grid_base_freq = 0.1;
    int coeff_bands = 6;
    double coeff_base_freq = 0.25;
    PinnArchitecture target;
    std::uint64_t init_seed = 1;

    int grid_lift_channels() const { return 1 + 2 * grid_bands; }
    int coeff_feature_dim() const { return 2 * coeff_bands * 5; }

    std::string echo() const {
        std::string s;
        auto kv = [&](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
        kv("resolution", std::to_string(resolution));
        kv("embed_channels", std::to_string(embed_channels));
        kv("blocks", std::to_string(blocks));
        kv("window", std::to_string(window));
        kv("attn_heads", std::to_string(attn_heads));
        kv("coeff_dim", std::to_string(coeff_dim));
        kv("film_hidden", std::to_string(film_hidden));
        kv("head_hidden", std::to_string(head_hidden));
        kv("pool_heads", std::to_string(pool_heads));
        kv("grid_bands", std::to_string(grid_bands));
        kv("grid_base_freq", format_double(grid_base_freq));
        kv("coeff_bands", std::to_string(coeff_bands));
        kv("coeff_base_freq", format_double(coeff_base_freq));
        kv("target_width", std::to_string(target.width));
        kv("target_hidden_layers", std::to_string(target.hidden_layers));
        kv("target_fourier_n", std::to_string(target.fourier.n_frequencies));
        kv("target_fourier_base", format_double(target.fourier.base_frequency));
        kv("init_seed", std::to_string(init_seed));
        return s;
    }
};

namespace hn {

inline void softmax_rows(Mat& m) {
    for (int r = 0; r < m.rows; ++r) {
        double* row = m.row(r);
        double mx = row[0];
        for (int c = 1; c < m.cols; ++c) mx = std::max(mx, row[c]);
        double sum = 0;
        for (int c = 0; c < m.cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        for (int c = 0; c < m.cols; ++c) row[c] /= sum;
    }
}

// ds = s .* (da - sum(da .* s)) rowwise, in place over da.
inline void softmax_backward_rows(const Mat& s, Mat& da) {
    for (int r = 0; r < s.rows; ++r) {
        const double* sr = s.row(r);
        double* dr = da.row(r);
        double dot = 0;
        for (int c = 0; c < s.cols; ++c) dot += dr[c] * sr[c];
        for (int c = 0; c < s.cols; ++c) dr[c] = sr[c] * (dr[c] - dot);
    }
}

// Self-attention within non-overlapping square windows.
struct WindowAttention {
    std::string name;
    int channels = 0, heads = 0, window = 0;
    Linear qkv, proj;
    int h_ = 0, w_ = 0, win_ = 0;
    Mat qkv_out;
    std::vector<Mat> attn_;  // per (window, head)

    void init(const std::string& n, int c, int nheads, int win, Rng& rng) {
        name = n;
        channels = c;
        heads = nheads;
        window = win;
        if (c % nheads != 0) throw std::invalid_argument("channels not divisible by heads");
        qkv.init(name + ".qkv", c, 3 * c, rng);
        proj.init(name + ".proj", c, c, rng);
    }

    void forward(const Mat& x, int h, int w, Mat& y) {
        h_ = h;
        w_ = w;
        win_ = std::min(window, h);
        Mat q3;
        qkv.forward(x, q3);
        qkv_out = q3;
        int dh = channels / heads;
        int nwy = h / win_, nwx = w / win_;
        int n = win_ * win_;
        double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        Mat attn_out(x.rows, channels);
        attn_.assign(static_cast<std::size_t>(nwy * nwx * heads), Mat());
        for (int wy = 0; wy < nwy; ++wy) {
            for (int wx = 0; wx < nwx; ++wx) {
                std::vector<int> tok(static_cast<std::size_t>(n));
                for (int iy = 0; iy < win_; ++iy)
                    for (int ix = 0; ix < win_; ++ix)
                        tok[static_cast<std::size_t>(iy * win_ + ix)] =
                            (wy * win_ + iy) * w + wx * win_ + ix;
                for (int hd = 0; hd < heads; ++hd) {
                    Mat s(n, n);
                    for (int a = 0; a < n; ++a) {
                        const double* qa = q3.row(tok[static_cast<std::size_t>(a)]) + hd * dh;
                        for (int bidx = 0; bidx < n; ++bidx) {
                            const double* kb =
                                q3.row(tok[static_cast<std::size_t>(bidx)]) + channels + hd * dh;
                            double dot = 0;
                            for (int c = 0; c < dh; ++c) dot += qa[c] * kb[c];
                            s.at(a, bidx) = dot * scale;
                        }
                    }
                    softmax_rows(s);
                    attn_[static_cast<std::size_t>((wy * nwx + wx) * heads + hd)] = s;
                    for (int a = 0; a < n; ++a) {
                        double* out = attn_out.row(tok[static_cast<std::size_t>(a)]) + hd * dh;
                        for (int c = 0; c < dh; ++c) out[c] = 0;
                        for (int bidx = 0; bidx < n; ++bidx) {
                            const double* vb = q3.row(tok[static_cast<std::size_t>(bidx)]) +
                                               2 * channels + hd * dh;
                            double w_ab = s.at(a, bidx);
                            for (int c = 0; c < dh; ++c) out[c] += w_ab * vb[c];
                        }
                    }
                }
            }
        }
        proj.forward(attn_out, y);
    }

    void backward(const Mat& dy, Mat& dx) {
        Mat d_attn_out;
        proj.backward(dy, &d_attn_out);
        int dh = channels / heads;
        int nwy = h_ / win_, nwx = w_ / win_;
        int n = win_ * win_;
        double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        Mat d_qkv(qkv_out.rows, 3 * channels);
        for (int wy = 0; wy < nwy; ++wy) {
            for (int wx = 0; wx < nwx; ++wx) {
                std::vector<int> tok(static_cast<std::size_t>(n));
                for (int iy = 0; iy < win_; ++iy)
                    for (int ix = 0; ix < win_; ++ix)
                        tok[static_cast<std::size_t>(iy * win_ + ix)] =
                            (wy * win_ + iy) * w_ + wx * win_ + ix;
                for (int hd = 0; hd < heads; ++hd) {
                    const Mat& s = attn_[static_cast<std::size_t>((wy * nwx + wx) * heads + hd)];
                    Mat da(n, n);
                    for (int a = 0; a < n; ++a) {
                        const double* dOa =
                            d_attn_out.row(tok[static_cast<std::size_t>(a)]) + hd * dh;
                        for (int bidx = 0; bidx < n; ++bidx) {
                            const double* vb = qkv_out.row(tok[static_cast<std::size_t>(bidx)]) +
                                               2 * channels + hd * dh;
                            double dot = 0;
                            for (int c = 0; c < dh; ++c) dot += dOa[c] * vb[c];
                            da.at(a, bidx) = dot;
                            // dV_b += A[a,b] * dO_a
                            double* dvb = d_qkv.row(tok[static_cast<std::size_t>(bidx)]) +
                                          2 * channels + hd * dh;
                            double w_ab = s.at(a, bidx);
                            for (int c = 0; c < dh; ++c) dvb[c] += w_ab * dOa[c];
                        }
                    }
                    softmax_backward_rows(s, da);
                    for (int a = 0; a < n; ++a) {
                        const double* qa = qkv_out.row(tok[static_cast<std::size_t>(a)]) + hd * dh;
                        double* dqa = d_qkv.row(tok[static_cast<std::size_t>(a)]) + hd * dh;
                        for (int bidx = 0; bidx < n; ++bidx) {
                            double g = da.at(a, bidx) * scale;
                            const double* kb = qkv_out.row(tok[static_cast<std::size_t>(bidx)]) +
                                               channels + hd * dh;
                            double* dkb = d_qkv.row(tok[static_cast<std::size_t>(bidx)]) +
                                          channels + hd * dh;
                            for (int c = 0; c < dh; ++c) {
                                dqa[c] += g * kb[c];
                                dkb[c] += g * qa[c];
                            }
                        }
                    }
                }
            }
        }
        qkv.backward(d_qkv, &dx);
    }

    void visit(const TensorVisitor& fn) {
        qkv.visit(fn);
        proj.visit(fn);
    }
};

// Pre-norm transformer block with windowed attention and a 2x MLP.
struct WindowBlock {
    LayerNorm ln1, ln2;
    WindowAttention attn;
    Linear mlp1, mlp2;
    Mat mlp_pre_;  // pre-GELU cache

    void init(const std::string& n, int c, int nheads, int win, Rng& rng) {
        ln1.init(n + ".ln1", c);
        ln2.init(n + ".ln2", c);
        attn.init(n + ".attn", c, nheads, win, rng);
        mlp1.init(n + ".mlp1", c, 2 * c, rng);
        mlp2.init(n + ".mlp2", 2 * c, c, rng);
    }

    void forward(const Mat& x, int h, int w, Mat& y) {
        Mat a, b;
        ln1.forward(x, a);
        attn.forward(a, h, w, b);
        Mat r1 = x;
        for (std::size_t i = 0; i < r1.a.size(); ++i) r1.a[i] += b.a[i];
        Mat c, m1, g, m2;
        ln2.forward(r1, c);
        mlp1.forward(c, m1);
        mlp_pre_ = m1;
        gelu_forward(m1, g);
        mlp2.forward(g, m2);
        y = r1;
        for (std::size_t i = 0; i < y.a.size(); ++i) y.a[i] += m2.a[i];
    }

    void backward(const Mat& dy, Mat& dx) {
        // y = r1 + mlp2(gelu(mlp1(ln2(r1))))
        Mat dg;
        mlp2.backward(dy, &dg);
        for (std::size_t i = 0; i < dg.a.size(); ++i) dg.a[i] *= gelu_grad(mlp_pre_.a[i]);
        Mat dc;
        mlp1.backward(dg, &dc);
        Mat dr1;
        ln2.backward(dc, dr1);
        for (std::size_t i = 0; i < dr1.a.size(); ++i) dr1.a[i] += dy.a[i];
        // r1 = x + attn(ln1(x))
        Mat da;
        attn.backward(dr1, da);
        Mat dx0;
        ln1.backward(da, dx0);
        dx = dr1;
        for (std::size_t i = 0; i < dx.a.size(); ++i) dx.a[i] += dx0.a[i];
    }

    void visit(const TensorVisitor& fn) {
        ln1.visit(fn);
        ln2.visit(fn);
        attn.visit(fn);
        mlp1.visit(fn);
        mlp2.visit(fn);
    }
};

// Channel-wise modulation of a latent grid by the coefficient embedding.
// Initialized to the exact identity (gamma = 1, beta = 0).
struct Film {
    Linear fc1, fc2;
    int channels = 0;
    Mat pre_, gamma_, beta_, z_cache_;

    void init(const std::string& n, int coeff_dim, int hidden, int c, Rng& rng) {
        channels = c;
        fc1.init(n + ".fc1", coeff_dim, hidden, rng);
        fc2.init(n + ".fc2", hidden, 2 * c, rng, 0.0);  // zero weights
        for (int i = 0; i < c; ++i) fc2.b.a[static_cast<std::size_t>(i)] = 1.0;  // gamma = 1
    }

    void forward(const Mat& z, const Mat& zc, Mat& y) {
        z_cache_ = z;
        Mat h, g;
        fc1.forward(zc, h);
        pre_ = h;
        gelu_forward(h, g);
        Mat gb;
        fc2.forward(g, gb);
        gamma_ = Mat(1, channels);
        beta_ = Mat(1, channels);
        for (int c = 0; c < channels; ++c) {
            gamma_.a[static_cast<std::size_t>(c)] = gb.a[static_cast<std::size_t>(c)];
            beta_.a[static_cast<std::size_t>(c)] = gb.a[static_cast<std::size_t>(channels + c)];
        }
        y = Mat(z.rows, channels);
        for (int t = 0; t < z.rows; ++t)
            for (int c = 0; c < channels; ++c)
                y.at(t, c) = gamma_.a[static_cast<std::size_t>(c)] * z.at(t, c) +
                             beta_.a[static_cast<std::size_t>(c)];
    }

    void backward(const Mat& dy, Mat& dz, Mat& dzc_accum) {
        dz = Mat(dy.rows, channels);
        Mat dgb(1, 2 * channels);
        for (int t = 0; t < dy.rows; ++t) {
            for (int c = 0; c < channels; ++c) {
                double d = dy.at(t, c);
                dz.at(t, c) = d * gamma_.a[static_cast<std::size_t>(c)];
                dgb.a[static_cast<std::size_t>(c)] += d * z_cache_.at(t, c);
                dgb.a[static_cast<std::size_t>(channels + c)] += d;
            }
        }
        Mat dg;
        fc2.backward(dgb, &dg);
        for (std::size_t i = 0; i < dg.a.size(); ++i) dg.a[i] *= gelu_grad(pre_.a[i]);
        Mat dzc;
        fc1.backward(dg, &dzc);
        for (std::size_t i = 0; i < dzc.a.size(); ++i) dzc_accum.a[i] += dzc.a[i];
    }

    void visit(const TensorVisitor& fn) {
        fc1.visit(fn);
        fc2.visit(fn);
    }
};

// 2x2 neighborhood concatenation followed by a linear halving of channels.
struct PatchMerge {
    Linear lin;
    int h_ = 0, w_ = 0, c_ = 0;

    void init(const std::string& n, int c, Rng& rng) {
        c_ = c;
        lin.init(n + ".lin", 4 * c, 2 * c, rng);
    }

    void forward(const Mat& x, int h, int w, Mat& y) {
        h_ = h;
        w_ = w;
        int ho = h / 2, wo = w / 2;
        Mat cat(ho * wo, 4 * c_);
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double* dst = cat.row(oy * wo + ox);
                int quad = 0;
                for (int dy = 0; dy <= 1; ++dy)
                    for (int dx = 0; dx <= 1; ++dx, ++quad) {
                        const double* src = x.row((2 * oy + dy) * w + 2 * ox + dx);
                        for (int c = 0; c < c_; ++c) dst[quad * c_ + c] = src[c];
                    }
            }
        lin.forward(cat, y);
    }

    void backward(const Mat& dy, Mat& dx) {
        Mat dcat;
        lin.backward(dy, &dcat);
        int ho = h_ / 2, wo = w_ / 2;
        dx = Mat(h_ * w_, c_);
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                const double* src = dcat.row(oy * wo + ox);
                int quad = 0;
                for (int dy2 = 0; dy2 <= 1; ++dy2)
                    for (int dx2 = 0; dx2 <= 1; ++dx2, ++quad) {
                        double* dst = dx.row((2 * oy + dy2) * w_ + 2 * ox + dx2);
                        for (int c = 0; c < c_; ++c) dst[c] += src[quad * c_ + c];
                    }
            }
    }

    void visit(const TensorVisitor& fn) { lin.visit(fn); }
};

// Multi-head attention pooling with learned per-tensor queries.
struct AttentionPool {
    std::string name;
    int channels = 0, heads = 0, queries_n = 0;
    Mat queries, gqueries;
    Linear wq, wk, wv, wo;
    Mat q_, k_, v_;
    std::vector<Mat> attn_;

    void init(const std::string& n, int c, int nheads, int t, Rng& rng) {
        name = n;
        channels = c;
        heads = nheads;
        queries_n = t;
        if (c % nheads != 0) throw std::invalid_argument("pool channels not divisible by heads");
        queries = Mat(t, c);
        gqueries = Mat(t, c);
        for (auto& v : queries.a) v = rng.uniform(-0.1, 0.1);
        wq.init(n + ".wq", c, c, rng);
        wk.init(n + ".wk", c, c, rng);
        wv.init(n + ".wv", c, c, rng);
        wo.init(n + ".wo", c, c, rng);
    }

    void forward(const Mat& kv, Mat& p) {
        wq.forward(queries, q_);
        wk.forward(kv, k_);
        wv.forward(kv, v_);
        int dh = channels / heads;
        double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        int n = kv.rows;
        Mat mixed(queries_n, channels);
        attn_.assign(static_cast<std::size_t>(heads), Mat());
        for (int hd = 0; hd < heads; ++hd) {
            Mat s(queries_n, n);
            for (int t = 0; t < queries_n; ++t) {
                const double* qt = q_.row(t) + hd * dh;
                for (int j = 0; j < n; ++j) {
                    const double* kj = k_.row(j) + hd * dh;
                    double dot = 0;
                    for (int c = 0; c < dh; ++c) dot += qt[c] * kj[c];
                    s.at(t, j) = dot * scale;
                }
            }
            softmax_rows(s);
            attn_[static_cast<std::size_t>(hd)] = s;
            for (int t = 0; t < queries_n; ++t) {
                double* out = mixed.row(t) + hd * dh;
                for (int c = 0; c < dh; ++c) out[c] = 0;
                for (int j = 0; j < n; ++j) {
                    const double* vj = v_.row(j) + hd * dh;
                    double w_tj = s.at(t, j);
                    for (int c = 0; c < dh; ++c) out[c] += w_tj * vj[c];
                }
            }
        }
        wo.forward(mixed, p);
    }

    void backward(const Mat& dp, Mat& dkv) {
        Mat dmixed;
        wo.backward(dp, &dmixed);
        int dh = channels / heads;
        double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        int n = k_.rows;
        Mat dq(queries_n, channels), dk(n, channels), dv(n, channels);
        for (int hd = 0; hd < heads; ++hd) {
            const Mat& s = attn_[static_cast<std::size_t>(hd)];
            Mat da(queries_n, n);
            for (int t = 0; t < queries_n; ++t) {
                const double* dmt = dmixed.row(t) + hd * dh;
                for (int j = 0; j < n; ++j) {
                    const double* vj = v_.row(j) + hd * dh;
                    double dot = 0;
                    for (int c = 0; c < dh; ++c) dot += dmt[c] * vj[c];
                    da.at(t, j) = dot;
                    double* dvj = dv.row(j) + hd * dh;
                    double w_tj = s.at(t, j);
                    for (int c = 0; c < dh; ++c) dvj[c] += w_tj * dmt[c];
                }
            }
            softmax_backward_rows(s, da);
            for (int t = 0; t < queries_n; ++t) {
                const double* qt = q_.row(t) + hd * dh;
                double* dqt = dq.row(t) + hd * dh;
                for (int j = 0; j < n; ++j) {
                    double g = da.at(t, j) * scale;
                    const double* kj = k_.row(j) + hd * dh;
                    double* dkj = dk.row(j) + hd * dh;
                    for (int c = 0; c < dh; ++c) {
                        dqt[c] += g * kj[c];
                        dkj[c] += g * qt[c];
                    }
                }
            }
        }
        Mat dqueries;
        wq.backward(dq, &dqueries);
        for (std::size_t i = 0; i < dqueries.a.size(); ++i) gqueries.a[i] += dqueries.a[i];
        Mat dkv1, dkv2;
        wk.backward(dk, &dkv1);
        wv.backward(dv, &dkv2);
        dkv = dkv1;
        for (std::size_t i = 0; i < dkv.a.size(); ++i) dkv.a[i] += dkv2.a[i];
    }

    void visit(const TensorVisitor& fn) {
        fn(name + ".queries", queries.a, gqueries.a);
        wq.visit(fn);
        wk.visit(fn);
        wv.visit(fn);
        wo.visit(fn);
    }
};

struct HeadMlp {
    Linear fc1, fc2;
    Mat pre_;

    void init(const std::string& n, int in, int hidden, int out, Rng& rng) {
        fc1.init(n + ".fc1", in, hidden, rng);
        fc2.init(n + ".fc2", hidden, out, rng, 1e-3);
    }

    void forward(const Mat& x, Mat& y) {
        Mat h, g;
        fc1.forward(x, h);
        pre_ = h;
        gelu_forward(h, g);
        fc2.forward(g, y);
    }

    void backward(const Mat& dy, Mat& dx) {
        Mat dg;
        fc2.backward(dy, &dg);
        for (std::size_t i = 0; i < dg.a.size(); ++i) dg.a[i] *= gelu_grad(pre_.a[i]);
        fc1.backward(dg, &dx);
    }

    void visit(const TensorVisitor& fn) {
        fc1.visit(fn);
        fc2.visit(fn);
    }
};

}  // namespace hn

// Intermediate latents exposed for inspection and tests.
struct LatentBundle {
    Mat z_c;                 // 1 x d_C
    Mat z_g;                 // tokens x 3*embed_channels
    std::vector<Mat> z;      // per block, FiLM output
    std::vector<Mat> pooled; // per block, T x C_i
    Mat p;                   // T x sum(C_i)
};

// Phi: (c, F, M_g, M_h, V_g, V_h) -> theta. Reduced-scale but structurally
// complete: Fourier grid embeddings with masked value composition, K
// windowed-attention blocks modulated by FiLM, attention pooling with
// per-tensor queries over all retained latents, per-tensor head MLPs.
class Hypernet {
public:
    explicit Hypernet(const HypernetConfig& cfg) : cfg_(cfg) {
        if (cfg.resolution % 4 != 0) throw std::invalid_argument("resolution must be divisible by 4");
        if (cfg.blocks < 2) throw std::invalid_argument("the encoder needs at least two blocks");
        Rng rng(cfg.init_seed);
        int lift = cfg.grid_lift_channels();
        for (int p = 0; p < 7; ++p) {
            conv1_[p].init("embed.path" + std::to_string(p) + ".conv1", lift, cfg.embed_channels,
                           rng);
            conv2_[p].init("embed.path" + std::to_string(p) + ".conv2", cfg.embed_channels,
                           cfg.embed_channels, rng);
        }
        coeff_fc_.init("coeff.fc", cfg.coeff_feature_dim(), cfg.coeff_dim, rng);

        // stage plan
        int h = cfg.resolution / 4;
        int c = 3 * cfg.embed_channels;
        int t_count = cfg.target.tensor_count();
        for (int i = 0; i < cfg.blocks; ++i) {
            Stage st;
            st.h = h;
            st.c = c;
            st.merge_after = (i + 1 < cfg.blocks) && h >= 2;
            stages_.push_back(st);
            if (st.merge_after) {
                h /= 2;
                c *= 2;
            }
        }
        blocks_.resize(static_cast<std::size_t>(cfg.blocks));
        films_.resize(static_cast<std::size_t>(cfg.blocks));
        pools_.resize(static_cast<std::size_t>(cfg.blocks));
        merges_.resize(static_cast<std::size_t>(cfg.blocks));
        for (int i = 0; i < cfg.blocks; ++i) {
            const Stage& st = stages_[static_cast<std::size_t>(i)];
            std::string base = "block" + std::to_string(i);
            blocks_[static_cast<std::size_t>(i)].init(base, st.c, cfg.attn_heads,
                                                      std::min(cfg.window, st.h), rng);
            films_[static_cast<std::size_t>(i)].init(base + ".film", cfg.coeff_dim,
                                                     cfg.film_hidden, st.c, rng);
            pools_[static_cast<std::size_t>(i)].init(base + ".pool", st.c, cfg.pool_heads,
                                                     t_count, rng);
            if (st.merge_after)
                merges_[static_cast<std::size_t>(i)].init(base + ".merge", st.c, rng);
        }
        int latent_total = 0;
        for (const auto& st : stages_) latent_total += st.c;
        latent_total_ = latent_total;
        auto tensors = cfg.target.tensors();
        heads_.resize(tensors.size());
        for (std::size_t i = 0; i < tensors.size(); ++i)
            heads_[i].init("head." + tensors[i].name, latent_total, cfg.head_hidden,
                           static_cast<int>(tensors[i].size()), rng);
    }

    const HypernetConfig& config() const { return cfg_; }

    // Fourier feature embedding of the coefficient vector, then one trained
    // affine map.
    Mat embed_coeffs(const OperatorCoeffs& op) {
        Mat f = coeff_features(op);
        Mat zc;
        coeff_fc_.forward(f, zc);
        return zc;
    }

    Mat coeff_features(const OperatorCoeffs& op) const {
        Mat f(1, cfg_.coeff_feature_dim());
        int idx = 0;
        for (int i = 0; i < 5; ++i) {
            for (int k = 0; k < cfg_.coeff_bands; ++k) {
                double freq = cfg_.coeff_base_freq * std::pow(2.0, k);
                double arg = 2.0 * M_PI * freq * op.c[static_cast<std::size_t>(i)];
                f.a[static_cast<std::size_t>(idx++)] = std::sin(arg);
                f.a[static_cast<std::size_t>(idx++)] = std::cos(arg);
            }
        }
        return f;
    }

    // Per-grid Fourier lift, two stride-2 convolutions per path, masked
    // composition z_G = [zD1 .* zg + zD2 || zN1 .* zh + zN2 || zf].
    Mat embed_grids(const PdeGrids& grids) {
        if (grids.resolution != cfg_.resolution)
            throw std::invalid_argument("grid resolution does not match the hypernet");
        if (grids.resolution % 4 != 0)
            throw std::invalid_argument("resolution must be divisible by 4");
        const std::vector<float>* sources[7] = {&grids.mask_g, &grids.mask_g, &grids.mask_h,
                                                &grids.mask_h, &grids.value_g, &grids.value_h,
                                                &grids.source};
        int r = grids.resolution;
        int half = r / 2, quarter = r / 4;
        for (int p = 0; p < 7; ++p) {
            Mat lift = fourier_lift(*sources[p], r);
            Mat c1;
            conv1_[p].forward(lift, r, r, c1);
            conv1_out_[p] = c1;
            Mat g;
            gelu_forward(c1, g);
            conv2_[p].forward(g, half, half, path_out_[p]);
        }
        int ce = cfg_.embed_channels;
        Mat zg(quarter * quarter, 3 * ce);
        for (int t = 0; t < zg.rows; ++t) {
            for (int c = 0; c < ce; ++c) {
                zg.at(t, c) = path_out_[0].at(t, c) * path_out_[4].at(t, c) +
                              path_out_[1].at(t, c);
                zg.at(t, ce + c) = path_out_[2].at(t, c) * path_out_[5].at(t, c) +
                                   path_out_[3].at(t, c);
                zg.at(t, 2 * ce + c) = path_out_[6].at(t, c);
            }
        }
        return zg;
    }

    // K windowed-attention blocks, each followed by FiLM; intermediate
    // latents are all retained. film_enabled=false exposes the raw stack
    // (used by the identity test).
    std::vector<Mat> encode(const Mat& z_g, const Mat& z_c, bool film_enabled = true) {
        std::vector<Mat> latents;
        Mat x = z_g;
        for (int i = 0; i < cfg_.blocks; ++i) {
            const Stage& st = stages_[static_cast<std::size_t>(i)];
            Mat bout;
            blocks_[static_cast<std::size_t>(i)].forward(x, st.h, st.h, bout);
            Mat zi;
            if (film_enabled) {
                films_[static_cast<std::size_t>(i)].forward(bout, z_c, zi);
            } else {
                zi = bout;
            }
            latents.push_back(zi);
            if (st.merge_after) {
                Mat merged;
                merges_[static_cast<std::size_t>(i)].forward(zi, st.h, st.h, merged);
                x = merged;
            } else {
                x = zi;
            }
        }
        return latents;
    }

    // Flatten each latent to tokens and pool with the learned queries;
    // concatenation along channels gives one row per target tensor.
    Mat attention_pool(const std::vector<Mat>& latents, std::vector<Mat>* pooled_out = nullptr) {
        int t_count = cfg_.target.tensor_count();
        Mat p(t_count, latent_total_);
        int col = 0;
        for (std::size_t i = 0; i < latents.size(); ++i) {
            Mat pi;
            pools_[i].forward(latents[i], pi);
            if (pooled_out) pooled_out->push_back(pi);
            for (int t = 0; t < t_count; ++t)
                for (int c = 0; c < pi.cols; ++c) p.at(t, col + c) = pi.at(t, c);
            col += pi.cols;
        }
        return p;
    }

    PinnParams generate(const PdeGrids& grids, const OperatorCoeffs& op,
                        LatentBundle* bundle = nullptr) {
        Mat zc = embed_coeffs(op);
        Mat zg = embed_grids(grids);
        auto latents = encode(zg, zc);
        std::vector<Mat> pooled;
        Mat p = attention_pool(latents, &pooled);
        PinnParams out = PinnParams::zeros(cfg_.target);
        auto tensors = cfg_.target.tensors();
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            Mat row(1, latent_total_);
            for (int c = 0; c < latent_total_; ++c) row.a[static_cast<std::size_t>(c)] =
                p.at(static_cast<int>(i), c);
            Mat y;
            heads_[i].forward(row, y);
            for (std::size_t k = 0; k < tensors[i].size(); ++k)
                out.values[tensors[i].offset + k] = y.a[k];
        }
        if (bundle) {
            bundle->z_c = zc;
            bundle->z_g = zg;
            bundle->z = latents;
            bundle->p = p;
            bundle->pooled = std::move(pooled);
        }
        if (!out.finite()) throw std::runtime_error("hypernet produced non-finite parameters");
        return out;
    }

    // Reverse pass for d(loss)/d(theta); call immediately after generate()
    // for the same instance. Accumulates into the layer gradients.
    void backward(const std::vector<double>& dtheta) {
        auto tensors = cfg_.target.tensors();
        int t_count = cfg_.target.tensor_count();
        Mat dp(t_count, latent_total_);
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            Mat dy(1, static_cast<int>(tensors[i].size()));
            for (std::size_t k = 0; k < tensors[i].size(); ++k)
                dy.a[k] = dtheta[tensors[i].offset + k];
            Mat drow;
            heads_[i].backward(dy, drow);
            for (int c = 0; c < latent_total_; ++c)
                dp.at(static_cast<int>(i), c) += drow.a[static_cast<std::size_t>(c)];
        }

        // split dp by block channel ranges and run the pools backward
        std::vector<Mat> dlatent(static_cast<std::size_t>(cfg_.blocks));
        int col = 0;
        for (int i = 0; i < cfg_.blocks; ++i) {
            const Stage& st = stages_[static_cast<std::size_t>(i)];
            Mat dpi(t_count, st.c);
            for (int t = 0; t < t_count; ++t)
                for (int c = 0; c < st.c; ++c) dpi.at(t, c) = dp.at(t, col + c);
            col += st.c;
            pools_[static_cast<std::size_t>(i)].backward(dpi,
                                                         dlatent[static_cast<std::size_t>(i)]);
        }

        // encoder chain, last block to first
        Mat dzc(1, cfg_.coeff_dim);
        Mat dchain;  // gradient flowing into the merged input of the next stage
        for (int i = cfg_.blocks - 1; i >= 0; --i) {
            const Stage& st = stages_[static_cast<std::size_t>(i)];
            Mat dzi = dlatent[static_cast<std::size_t>(i)];
            if (st.merge_after) {
                Mat dz_from_merge;
                merges_[static_cast<std::size_t>(i)].backward(dchain, dz_from_merge);
                for (std::size_t k = 0; k < dzi.a.size(); ++k) dzi.a[k] += dz_from_merge.a[k];
            } else if (i + 1 < cfg_.blocks) {
                for (std::size_t k = 0; k < dzi.a.size(); ++k) dzi.a[k] += dchain.a[k];
            }
            Mat dbout;
            films_[static_cast<std::size_t>(i)].backward(dzi, dbout, dzc);
            Mat dx;
            blocks_[static_cast<std::size_t>(i)].backward(dbout, dx);
            dchain = dx;
        }

        // dchain is now d z_G: split into the seven embedding paths
        int ce = cfg_.embed_channels;
        int tokens = dchain.rows;
        Mat dpath[7];
        for (auto& m : dpath) m = Mat(tokens, ce);
        for (int t = 0; t < tokens; ++t) {
            for (int c = 0; c < ce; ++c) {
                double d0 = dchain.at(t, c);
                dpath[0].at(t, c) = d0 * path_out_[4].at(t, c);  // zD1
                dpath[4].at(t, c) = d0 * path_out_[0].at(t, c);  // zg
                dpath[1].at(t, c) = d0;                          // zD2
                double d1 = dchain.at(t, ce + c);
                dpath[2].at(t, c) = d1 * path_out_[5].at(t, c);  // zN1
                dpath[5].at(t, c) = d1 * path_out_[2].at(t, c);  // zh
                dpath[3].at(t, c) = d1;                          // zN2
                dpath[6].at(t, c) = dchain.at(t, 2 * ce + c);    // zf
            }
        }
        for (int p = 0; p < 7; ++p) {
            Mat dmid;
            conv2_[p].backward(dpath[p], &dmid);
            for (std::size_t k = 0; k < dmid.a.size(); ++k)
                dmid.a[k] *= gelu_grad(conv1_out_[p].a[k]);
            conv1_[p].backward(dmid, nullptr);
        }
        coeff_fc_.backward(dzc, nullptr);
    }

    void visit_tensors(const TensorVisitor& fn) {
        for (int p = 0; p < 7; ++p) {
            conv1_[p].visit(fn);
            conv2_[p].visit(fn);
        }
        coeff_fc_.visit(fn);
        for (int i = 0; i < cfg_.blocks; ++i) {
            blocks_[static_cast<std::size_t>(i)].visit(fn);
            films_[static_cast<std::size_t>(i)].visit(fn);
            pools_[static_cast<std::size_t>(i)].visit(fn);
            if (stages_[static_cast<std::size_t>(i)].merge_after)
                merges_[static_cast<std::size_t>(i)].visit(fn);
        }
        for (auto& h : heads_) h.visit(fn);
    }

    void zero_grads() {
        visit_tensors([](const std::string&, std::vector<double>&, std::vector<double>& g) {
            std::fill(g.begin(), g.end(), 0.0);
        });
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        visit_tensors([&](const std::string&, std::vector<double>& p, std::vector<double>&) {
            n += p.size();
        });
        return n;
    }

private:
    struct Stage {
        int h = 0, c = 0;
        bool merge_after = false;
    };

    Mat fourier_lift(const std::vector<float>& grid, int r) const {
        int lift = cfg_.grid_lift_channels();
        Mat out(r * r, lift);
        for (int t = 0; t < r * r; ++t) {
            double v = static_cast<double>(grid[static_cast<std::size_t>(t)]);
            double* row = out.row(t);
            row[0] = v;
            for (int b = 0; b < cfg_.grid_bands; ++b) {
                double arg = 2.0 * M_PI * cfg_.grid_base_freq * std::pow(2.0, b) * v;
                row[1 + 2 * b] = std::sin(arg);
                row[2 + 2 * b] = std::cos(arg);
            }
        }
        return out;
    }

    HypernetConfig cfg_;
    Conv3x3s2 conv1_[7], conv2_[7];
    Mat conv1_out_[7];
    Mat path_out_[7];
    Linear coeff_fc_;
    std::vector<hn::WindowBlock> blocks_;
    std::vector<hn::Film> films_;
    std::vector<hn::PatchMerge> merges_;
    std::vector<hn::AttentionPool> pools_;
    std::vector<hn::HeadMlp> heads_;
    std::vector<Stage> stages_;
    int latent_total_ = 0;
};

// --- checkpointing ------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'H', 'Y', 'P', 'N', 'C', 'K', 'P', '1'};

inline void save_hypernet(const std::string& path, Hypernet& net) {
    ByteWriter w;
    w.bytes(kCheckpointMagic, 8);
    w.u32(1);
    const HypernetConfig& c = net.config();
    w.str(c.echo());
    w.u32(static_cast<std::uint32_t>(c.resolution));
    w.u32(static_cast<std::uint32_t>(c.embed_channels));
    w.u32(static_cast<std::uint32_t>(c.blocks));
    w.u32(static_cast<std::uint32_t>(c.window));
    w.u32(static_cast<std::uint32_t>(c.attn_heads));
    w.u32(static_cast<std::uint32_t>(c.coeff_dim));
    w.u32(static_cast<std::uint32_t>(c.film_hidden));
    w.u32(static_cast<std::uint32_t>(c.head_hidden));
    w.u32(static_cast<std::uint32_t>(c.pool_heads));
    w.u32(static_cast<std::uint32_t>(c.grid_bands));
    w.f64(c.grid_base_freq);
    w.u32(static_cast<std::uint32_t>(c.coeff_bands));
    w.f64(c.coeff_base_freq);
    w.u32(static_cast<std::uint32_t>(c.target.width));
    w.u32(static_cast<std::uint32_t>(c.target.hidden_layers));
    w.u32(static_cast<std::uint32_t>(c.target.fourier.n_frequencies));
    w.f64(c.target.fourier.base_frequency);
    w.u64(c.init_seed);

    std::vector<std::pair<std::string, std::vector<double>*>> tensors;
    net.visit_tensors([&](const std::string& name, std::vector<double>& p, std::vector<double>&) {
        tensors.emplace_back(name, &p);
    });
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (auto& [name, values] : tensors) {
        w.str(name);
        w.u64(values->size());
        for (double v : *values) w.f32(static_cast<float>(v));
    }
    write_file(path, w.data());
}

inline std::unique_ptr<Hypernet> load_hypernet(const std::string& path) {
    auto bytes = read_file(path);
    ByteReader r(bytes);
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw IoError("not a hypernet checkpoint: " + path);
    if (r.u32() != 1) throw IoError("unsupported checkpoint version");
    r.str();  // human-readable echo
    HypernetConfig c;
    c.resolution = static_cast<int>(r.u32());
    c.embed_channels = static_cast<int>(r.u32());
    c.blocks = static_cast<int>(r.u32());
    c.window = static_cast<int>(r.u32());
    c.attn_heads = static_cast<int>(r.u32());
    c.coeff_dim = static_cast<int>(r.u32());
    c.film_hidden = static_cast<int>(r.u32());
    c.head_hidden = static_cast<int>(r.u32());
    c.pool_heads = static_cast<int>(r.u32());
    c.grid_bands = static_cast<int>(r.u32());
    c.grid_base_freq = r.f64();
    c.coeff_bands = static_cast<int>(r.u32());
    c.coeff_base_freq = r.f64();
    c.target.width = static_cast<int>(r.u32());
    c.target.hidden_layers = static_cast<int>(r.u32());
    c.target.fourier.n_frequencies = static_cast<int>(r.u32());
    c.target.fourier.base_frequency = r.f64();
    c.init_seed = r.u64();

    auto net = std::make_unique<Hypernet>(c);
    std::uint32_t count = r.u32();
    std::vector<std::pair<std::string, std::vector<double>*>> tensors;
    net->visit_tensors([&](const std::string& name, std::vector<double>& p, std::vector<double>&) {
        tensors.emplace_back(name, &p);
    });
    if (count != tensors.size()) throw IoError("checkpoint tensor count mismatch");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        std::uint64_t len = r.u64();
        if (name != tensors[i].first || len != tensors[i].second->size())
            throw IoError("checkpoint tensor table mismatch at " + name);
        for (std::uint64_t k = 0; k < len; ++k)
            (*tensors[i].second)[static_cast<std::size_t>(k)] = static_cast<double>(r.f32());
    }
    return net;
}

}  // namespace hypino
