#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypino/io.hpp"
#include "hypino/jet.hpp"
#include "hypino/rng.hpp"

namespace hypino {

// Fixed (non-trainable) frequency matrix B of the coordinate encoding
// [sin(2 pi B x) || cos(2 pi B x) || x]. Rows alternate between the x and y
// axes; magnitudes double once per axis pair.
struct FourierFeatureConfig {
    int n_frequencies = 8;  // N, number of rows of B
    double base_frequency = 0.5;

    double magnitude(int row) const { return base_frequency * std::pow(2.0, row / 2); }
    int axis(int row) const { return row % 2; }  // 0: x, 1: y
    int encoding_dim() const { return 2 * n_frequencies + 2; }
};

inline std::vector<double> fourier_encode(const FourierFeatureConfig& cfg, double x, double y) {
    std::vector<double> out(static_cast<std::size_t>(cfg.encoding_dim()));
    for (int k = 0; k < cfg.n_frequencies; ++k) {
        double arg = 2.0 * M_PI * cfg.magnitude(k) * (cfg.axis(k) == 0 ? x : y);
        out[static_cast<std::size_t>(k)] = std::sin(arg);
        out[static_cast<std::size_t>(cfg.n_frequencies + k)] = std::cos(arg);
    }
    out[static_cast<std::size_t>(2 * cfg.n_frequencies)] = x;
    out[static_cast<std::size_t>(2 * cfg.n_frequencies) + 1] = y;
    return out;
}

// Same encoding as exact jets (the features are closed-form in x, y).
inline void fourier_encode_jets(const FourierFeatureConfig& cfg, double x, double y,
                                std::vector<Jet2>& out) {
    out.resize(static_cast<std::size_t>(cfg.encoding_dim()));
    for (int k = 0; k < cfg.n_frequencies; ++k) {
        double w = 2.0 * M_PI * cfg.magnitude(k);
        bool on_x = cfg.axis(k) == 0;
        double arg = w * (on_x ? x : y);
        double s = std::sin(arg), c = std::cos(arg);
        Jet2 sj, cj;
        sj.v = s;
        cj.v = c;
        if (on_x) {
            sj.dx = w * c;
            sj.dxx = -w * w * s;
            cj.dx = -w * s;
            cj.dxx = -w * w * c;
        } else {
            sj.dy = w * c;
            sj.dyy = -w * w * s;
            cj.dy = -w * s;
            cj.dyy = -w * w * c;
        }
        out[static_cast<std::size_t>(k)] = sj;
        out[static_cast<std::size_t>(cfg.n_frequencies + k)] = cj;
    }
    out[static_cast<std::size_t>(2 * cfg.n_frequencies)] = Jet2::var_x(x);
    out[static_cast<std::size_t>(2 * cfg.n_frequencies) + 1] = Jet2::var_y(y);
}

// Width-d MLP with three parallel input projections and multiplicative skip
// updates; `hidden_layers` counts the width-d activations z_0..z_{L-1}, so
// there are L-1 square update layers.
struct PinnArchitecture {
    int width = 32;
    int hidden_layers = 3;
    FourierFeatureConfig fourier;

    int update_layers() const { return hidden_layers - 1; }
    int tensor_count() const { return 6 + 2 * update_layers() + 2; }

    struct TensorInfo {
        std::string name;
        int rows = 0, cols = 0;
        std::size_t offset = 0;
        std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
    };

    std::vector<TensorInfo> tensors() const {
        std::vector<TensorInfo> t;
        int e = fourier.encoding_dim();
        std::size_t off = 0;
        auto push = [&](const std::string& name, int rows, int cols) {
            t.push_back({name, rows, cols, off});
            off += static_cast<std::size_t>(rows) * cols;
        };
        push("W0", width, e);
        push("U", width, e);
        push("V", width, e);
        push("b0", width, 1);
        push("bu", width, 1);
        push("bv", width, 1);
        for (int l = 1; l <= update_layers(); ++l) {
            push("W" + std::to_string(l), width, width);
            push("b" + std::to_string(l), width, 1);
        }
        push("Wout", 1, width);
        push("bout", 1, 1);
        return t;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors()) n += t.size();
        return n;
    }

    bool operator==(const PinnArchitecture& o) const {
        return width == o.width && hidden_layers == o.hidden_layers &&
               fourier.n_frequencies == o.fourier.n_frequencies &&
               fourier.base_frequency == o.fourier.base_frequency;
    }
};

struct PinnParams {
    PinnArchitecture arch;
    std::vector<double> values;

    static PinnParams zeros(const PinnArchitecture& a) {
        PinnParams p;
        p.arch = a;
        p.values.assign(a.param_count(), 0.0);
        return p;
    }

    // Xavier-uniform weights, zero biases. Residual-trained nets start from
    // a damped scale: the high-frequency encoding rows otherwise give the
    // initial network second derivatives in the hundreds, and the fixed
    // 1e-4 learning-rate budget goes into shrinking them instead of fitting.
    static PinnParams random_init(const PinnArchitecture& a, Rng& rng, double scale = 1.0) {
        PinnParams p = zeros(a);
        for (const auto& t : a.tensors()) {
            if (t.cols == 1 && t.rows > 1) continue;  // biases stay zero
            if (t.rows == 1 && t.cols == 1) continue;
            double limit = scale * std::sqrt(6.0 / (t.rows + t.cols));
            for (std::size_t i = 0; i < t.size(); ++i)
                p.values[t.offset + i] = rng.uniform(-limit, limit);
        }
        return p;
    }

    std::span<const double> tensor(const PinnArchitecture::TensorInfo& t) const {
        return std::span<const double>(values).subspan(t.offset, t.size());
    }
    bool finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

namespace pinn_layout {
// Offsets are fixed by the tensor order above; computed once per call site.
struct Offsets {
    std::size_t w0, u, v, b0, bu, bv, wout, bout;
    std::vector<std::size_t> wl, bl;
    int d, e, updates;
    explicit Offsets(const PinnArchitecture& a) {
        d = a.width;
        e = a.fourier.encoding_dim();
        updates = a.update_layers();
        std::size_t de = static_cast<std::size_t>(d) * e;
        w0 = 0;
        u = de;
        v = 2 * de;
        b0 = 3 * de;
        bu = b0 + d;
        bv = bu + d;
        std::size_t off = bv + d;
        for (int l = 0; l < updates; ++l) {
            wl.push_back(off);
            off += static_cast<std::size_t>(d) * d;
            bl.push_back(off);
            off += d;
        }
        wout = off;
        bout = wout + d;
    }
};
}  // namespace pinn_layout

// Value-only forward pass (Eqs. of the gated-skip MLP).
inline double pinn_forward(const PinnParams& p, double x, double y) {
    const pinn_layout::Offsets L(p.arch);
    const double* w = p.values.data();
    std::vector<double> xi = fourier_encode(p.arch.fourier, x, y);
    std::vector<double> z(L.d), zu(L.d), zv(L.d), nz(L.d);
    for (int i = 0; i < L.d; ++i) {
        double s0 = w[L.b0 + i], su = w[L.bu + i], sv = w[L.bv + i];
        const double* w0 = w + L.w0 + static_cast<std::size_t>(i) * L.e;
        const double* wu = w + L.u + static_cast<std::size_t>(i) * L.e;
        const double* wv = w + L.v + static_cast<std::size_t>(i) * L.e;
        for (int j = 0; j < L.e; ++j) {
            s0 += w0[j] * xi[j];
            su += wu[j] * xi[j];
            sv += wv[j] * xi[j];
        }
        z[i] = std::tanh(s0);
        zu[i] = std::tanh(su);
        zv[i] = std::tanh(sv);
    }
    for (int l = 0; l < L.updates; ++l) {
        for (int i = 0; i < L.d; ++i) {
            double s = w[L.bl[l] + i];
            const double* wl = w + L.wl[l] + static_cast<std::size_t>(i) * L.d;
            for (int j = 0; j < L.d; ++j) s += wl[j] * z[j];
            double t = std::tanh(s);
            nz[i] = zu[i] * t + zv[i] * (1.0 - t);
        }
        std::swap(z, nz);
    }
    double out = w[L.bout];
    for (int j = 0; j < L.d; ++j) out += w[L.wout + j] * z[j];
    return out;
}

// Per-point caches of the jet forward pass, laid out for the adjoint sweep.
struct PinnWorkspace {
    std::vector<Jet2> xi;
    std::vector<Jet2> z0, zu, zv;          // tanh outputs of the input projections
    std::vector<Jet2> s0, su, sv;          // their pre-activations
    std::vector<std::vector<Jet2>> s, t, z;  // per update layer
    Jet2 out;

    // adjoint buffers (zeroed per backward call)
    std::vector<Jet2> z0b, zub, zvb, tmpb, tmpb2;

    void resize(const PinnArchitecture& a) {
        if (sized_width_ == a.width && sized_updates_ == a.update_layers()) return;
        sized_width_ = a.width;
        sized_updates_ = a.update_layers();
        std::size_t d = static_cast<std::size_t>(a.width);
        auto fit = [&](std::vector<Jet2>& v) { v.assign(d, Jet2{}); };
        fit(z0);
        fit(zu);
        fit(zv);
        fit(s0);
        fit(su);
        fit(sv);
        fit(z0b);
        fit(zub);
        fit(zvb);
        fit(tmpb);
        fit(tmpb2);
        s.assign(static_cast<std::size_t>(a.update_layers()), {});
        t.assign(static_cast<std::size_t>(a.update_layers()), {});
        z.assign(static_cast<std::size_t>(a.update_layers()), {});
        for (int l = 0; l < a.update_layers(); ++l) {
            fit(s[static_cast<std::size_t>(l)]);
            fit(t[static_cast<std::size_t>(l)]);
            fit(z[static_cast<std::size_t>(l)]);
        }
    }

private:
    int sized_width_ = -1;
    int sized_updates_ = -1;
};

// Exact value/gradient/Hessian of the network output w.r.t. (x, y).
inline Jet2 pinn_forward_jet(const PinnParams& p, double x, double y, PinnWorkspace& ws) {
    const pinn_layout::Offsets L(p.arch);
    const double* w = p.values.data();
    ws.resize(p.arch);
    fourier_encode_jets(p.arch.fourier, x, y, ws.xi);

    for (int i = 0; i < L.d; ++i) {
        Jet2 a0 = Jet2::constant(w[L.b0 + i]);
        Jet2 au = Jet2::constant(w[L.bu + i]);
        Jet2 av = Jet2::constant(w[L.bv + i]);
        const double* w0 = w + L.w0 + static_cast<std::size_t>(i) * L.e;
        const double* wu = w + L.u + static_cast<std::size_t>(i) * L.e;
        const double* wv = w + L.v + static_cast<std::size_t>(i) * L.e;
        for (int j = 0; j < L.e; ++j) {
            a0 += w0[j] * ws.xi[static_cast<std::size_t>(j)];
            au += wu[j] * ws.xi[static_cast<std::size_t>(j)];
            av += wv[j] * ws.xi[static_cast<std::size_t>(j)];
        }
        ws.s0[static_cast<std::size_t>(i)] = a0;
        ws.su[static_cast<std::size_t>(i)] = au;
        ws.sv[static_cast<std::size_t>(i)] = av;
        ws.z0[static_cast<std::size_t>(i)] = tanh(a0);
        ws.zu[static_cast<std::size_t>(i)] = tanh(au);
        ws.zv[static_cast<std::size_t>(i)] = tanh(av);
    }

    const std::vector<Jet2>* prev = &ws.z0;
    for (int l = 0; l < L.updates; ++l) {
        auto& sl = ws.s[static_cast<std::size_t>(l)];
        auto& tl = ws.t[static_cast<std::size_t>(l)];
        auto& zl = ws.z[static_cast<std::size_t>(l)];
        for (int i = 0; i < L.d; ++i) {
            Jet2 acc = Jet2::constant(w[L.bl[static_cast<std::size_t>(l)] + i]);
            const double* wl =
                w + L.wl[static_cast<std::size_t>(l)] + static_cast<std::size_t>(i) * L.d;
            for (int j = 0; j < L.d; ++j) acc += wl[j] * (*prev)[static_cast<std::size_t>(j)];
            sl[static_cast<std::size_t>(i)] = acc;
            Jet2 th = tanh(acc);
            tl[static_cast<std::size_t>(i)] = th;
            // z = zu .* t + zv .* (1 - t)
            zl[static_cast<std::size_t>(i)] = ws.zu[static_cast<std::size_t>(i)] * th +
                                              ws.zv[static_cast<std::size_t>(i)] * (1.0 - th);
        }
        prev = &zl;
    }

    Jet2 out = Jet2::constant(w[L.bout]);
    for (int j = 0; j < L.d; ++j) out += w[L.wout + j] * (*prev)[static_cast<std::size_t>(j)];
    ws.out = out;
    return out;
}

// Reverse accumulation over the jet-valued primitives of the forward pass.
// `out_adjoint` carries d(loss)/d(out components); gradients are accumulated
// into `grad` (same layout as the parameter vector).
inline void pinn_backward(const PinnParams& p, PinnWorkspace& ws, const Jet2& out_adjoint,
                          std::vector<double>& grad) {
    const pinn_layout::Offsets L(p.arch);
    const double* w = p.values.data();
    double* g = grad.data();

    auto& zub = ws.zub;
    auto& zvb = ws.zvb;
    auto& zbar = ws.tmpb;
    auto& zbar_next = ws.tmpb2;
    auto& z0b = ws.z0b;
    std::fill(zub.begin(), zub.end(), Jet2{});
    std::fill(zvb.begin(), zvb.end(), Jet2{});
    std::fill(zbar.begin(), zbar.end(), Jet2{});
    std::fill(z0b.begin(), z0b.end(), Jet2{});

    const std::vector<Jet2>& last =
        L.updates > 0 ? ws.z[static_cast<std::size_t>(L.updates - 1)] : ws.z0;

    // output layer
    g[L.bout] += out_adjoint.v;
    for (int j = 0; j < L.d; ++j) {
        g[L.wout + j] += jet_dot(out_adjoint, last[static_cast<std::size_t>(j)]);
        zbar[static_cast<std::size_t>(j)] = w[L.wout + j] * out_adjoint;
    }

    // update layers, last to first
    for (int l = L.updates - 1; l >= 0; --l) {
        const auto& sl = ws.s[static_cast<std::size_t>(l)];
        const auto& tl = ws.t[static_cast<std::size_t>(l)];
        const std::vector<Jet2>& prev =
            l > 0 ? ws.z[static_cast<std::size_t>(l - 1)] : ws.z0;
        std::fill(zbar_next.begin(), zbar_next.end(), Jet2{});
        for (int i = 0; i < L.d; ++i) {
            const Jet2& zb = zbar[static_cast<std::size_t>(i)];
            const Jet2& th = tl[static_cast<std::size_t>(i)];
            const Jet2& zu = ws.zu[static_cast<std::size_t>(i)];
            const Jet2& zv = ws.zv[static_cast<std::size_t>(i)];
            // z = zu*t + zv - zv*t
            jet_mul_adjoint(zb, th, zub[static_cast<std::size_t>(i)]);
            zvb[static_cast<std::size_t>(i)] += zb;
            Jet2 neg = -zb;
            jet_mul_adjoint(neg, th, zvb[static_cast<std::size_t>(i)]);
            Jet2 tbar{};
            jet_mul_adjoint(zb, zu, tbar);
            jet_mul_adjoint(neg, zv, tbar);
            Jet2 sbar{};
            jet_tanh_adjoint(tbar, sl[static_cast<std::size_t>(i)], th, sbar);
            // linear layer: s_i = sum_j W_ij prev_j + b_i
            g[L.bl[static_cast<std::size_t>(l)] + i] += sbar.v;
            const double* wl =
                w + L.wl[static_cast<std::size_t>(l)] + static_cast<std::size_t>(i) * L.d;
            double* gl =
                g + L.wl[static_cast<std::size_t>(l)] + static_cast<std::size_t>(i) * L.d;
            for (int j = 0; j < L.d; ++j) {
                gl[j] += jet_dot(sbar, prev[static_cast<std::size_t>(j)]);
                zbar_next[static_cast<std::size_t>(j)] += wl[j] * sbar;
            }
        }
        std::swap(zbar, zbar_next);
    }
    // zbar now carries the adjoint of z_0
    for (int i = 0; i < L.d; ++i) z0b[static_cast<std::size_t>(i)] = zbar[static_cast<std::size_t>(i)];

    // input projections
    for (int i = 0; i < L.d; ++i) {
        struct Path {
            const Jet2 *bar, *s, *t;
            std::size_t w_off, b_off;
        } paths[3] = {
            {&z0b[static_cast<std::size_t>(i)], &ws.s0[static_cast<std::size_t>(i)],
             &ws.z0[static_cast<std::size_t>(i)], L.w0, L.b0},
            {&zub[static_cast<std::size_t>(i)], &ws.su[static_cast<std::size_t>(i)],
             &ws.zu[static_cast<std::size_t>(i)], L.u, L.bu},
            {&zvb[static_cast<std::size_t>(i)], &ws.sv[static_cast<std::size_t>(i)],
             &ws.zv[static_cast<std::size_t>(i)], L.v, L.bv},
        };
        for (const auto& path : paths) {
            Jet2 sbar{};
            jet_tanh_adjoint(*path.bar, *path.s, *path.t, sbar);
            g[path.b_off + static_cast<std::size_t>(i)] += sbar.v;
            double* gw = g + path.w_off + static_cast<std::size_t>(i) * L.e;
            for (int j = 0; j < L.e; ++j)
                gw[j] += jet_dot(sbar, ws.xi[static_cast<std::size_t>(j)]);
        }
    }
}

// --- serialization -----------------------------------------------------------

inline constexpr char kPinnMagic[8] = {'H', 'Y', 'P', 'N', 'P', 'I', 'N', '1'};

inline void serialize_pinn(ByteWriter& w, const PinnParams& p) {
    w.bytes(kPinnMagic, 8);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(p.arch.width));
    w.u32(static_cast<std::uint32_t>(p.arch.hidden_layers));
    w.u32(static_cast<std::uint32_t>(p.arch.fourier.n_frequencies));
    w.f64(p.arch.fourier.base_frequency);
    auto tensors = p.arch.tensors();
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        w.str(t.name);
        w.u32(static_cast<std::uint32_t>(t.rows));
        w.u32(static_cast<std::uint32_t>(t.cols));
    }
    w.u64(p.values.size());
    for (double v : p.values) w.f32(static_cast<float>(v));
}

inline PinnParams deserialize_pinn(ByteReader& r) {
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kPinnMagic, 8) != 0) throw IoError("not a PINN parameter blob");
    if (r.u32() != 1) throw IoError("unsupported PINN format version");
    PinnParams p;
    p.arch.width = static_cast<int>(r.u32());
    p.arch.hidden_layers = static_cast<int>(r.u32());
    p.arch.fourier.n_frequencies = static_cast<int>(r.u32());
    p.arch.fourier.base_frequency = r.f64();
    std::uint32_t ntensors = r.u32();
    auto expect = p.arch.tensors();
    if (ntensors != expect.size()) throw IoError("tensor table mismatch");
    for (const auto& t : expect) {
        if (r.str() != t.name || static_cast<int>(r.u32()) != t.rows ||
            static_cast<int>(r.u32()) != t.cols)
            throw IoError("tensor table mismatch");
    }
    std::uint64_t n = r.u64();
    if (n != p.arch.param_count()) throw IoError("parameter count mismatch");
    p.values.resize(n);
    for (auto& v : p.values) v = static_cast<double>(r.f32());
    return p;
}

inline void save_pinn(const std::string& path, const PinnParams& p) {
    ByteWriter w;
    serialize_pinn(w, p);
    write_file(path, w.data());
}

inline PinnParams load_pinn(const std::string& path) {
    auto bytes = read_file(path);
    ByteReader r(bytes);
    return deserialize_pinn(r);
}

}  // namespace hypino
