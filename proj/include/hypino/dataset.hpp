#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hypino/io.hpp"
#include "hypino/pde.hpp"

namespace hypino {

struct SamplerConfig {
    int op_terms_min = 1;
    int op_terms_max = 3;
    double coeff_range = 2.0;
    SolutionSamplingConfig mms;
    double unsup_source_sigma = 10.0;
    GeometryConfig geometry;
    int resolution = 64;
    std::uint64_t seed = 0;

    // Restricted-family switches (defaults follow the sampling recipe; any
    // override is recorded in dataset metadata).
    std::optional<OperatorCoeffs> fixed_operator;
    double supervised_source_bound = 0;  // 0 = unbounded; else resample when
                                         // |f| exceeds this on the probe grid
    double mms_amplitude_decades = 0;    // > 0: scale each solution by
                                         // 10^U[-decades, 0] so residual-scale
                                         // problems stay in distribution

    std::string metadata() const {
        std::string m;
        auto kv = [&](const std::string& k, const std::string& v) { m += k + "=" + v + "\n"; };
        kv("op_terms_min", std::to_string(op_terms_min));
        kv("op_terms_max", std::to_string(op_terms_max));
        kv("coeff_range", format_double(coeff_range));
        kv("mms_terms_min", std::to_string(mms.min_terms));
        kv("mms_terms_max", std::to_string(mms.max_terms));
        kv("mms_slope_limit", format_double(mms.slope_limit));
        kv("unsup_source_sigma", format_double(unsup_source_sigma));
        kv("geometry_min_primitives", std::to_string(geometry.min_primitives));
        kv("geometry_max_primitives", std::to_string(geometry.max_primitives));
        kv("resolution", std::to_string(resolution));
        kv("seed", std::to_string(seed));
        if (fixed_operator) {
            std::string c;
            for (double v : fixed_operator->c) c += format_double(v) + " ";
            kv("fixed_operator", c);
        }
        if (supervised_source_bound > 0)
            kv("supervised_source_bound", format_double(supervised_source_bound));
        if (mms.probe_bound != SolutionSamplingConfig{}.probe_bound)
            kv("mms_probe_bound", format_double(mms.probe_bound));
        if (mms_amplitude_decades > 0)
            kv("mms_amplitude_decades", format_double(mms_amplitude_decades));
        return m;
    }
};

// n in {1,2,3} distinct terms of {u, u_x, u_y, u_xx, u_yy}, coefficients
// uniform in [-coeff_range, coeff_range], zeros elsewhere.
inline OperatorCoeffs sample_operator(Rng& rng, const SamplerConfig& cfg) {
    if (cfg.fixed_operator) return *cfg.fixed_operator;
    OperatorCoeffs op;
    int n = rng.range_int(cfg.op_terms_min, cfg.op_terms_max);
    int picked = 0;
    bool used[5] = {false, false, false, false, false};
    while (picked < n) {
        int t = static_cast<int>(rng.below(5));
        if (used[t]) continue;
        used[t] = true;
        op.c[t] = rng.uniform(-cfg.coeff_range, cfg.coeff_range);
        ++picked;
    }
    if (op.all_zero()) op.c[0] = 1.0;  // measure-zero draw of exactly 0.0
    return op;
}

namespace detail {

enum class ValueRule { Zero, Constant, Linear };

inline ValueRule value_rule_for(const OperatorCoeffs& op) {
    if (op.c1() != 0.0) return ValueRule::Zero;
    bool first_order = op.c2() != 0.0 || op.c3() != 0.0;
    bool second_order = op.c4() != 0.0 || op.c5() != 0.0;
    if (first_order && !second_order) return ValueRule::Constant;
    return ValueRule::Linear;
}

inline Expr sample_boundary_value(Rng& rng, ValueRule rule) {
    switch (rule) {
        case ValueRule::Zero: return Expr::constant(0.0);
        case ValueRule::Constant: return Expr::constant(rng.uniform(-1.0, 1.0));
        case ValueRule::Linear: {
            double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1), c = rng.uniform(-1, 1);
            return Expr::add({Expr::constant(a), Expr::mul({Expr::constant(b), Expr::x()}),
                              Expr::mul({Expr::constant(c), Expr::y()})});
        }
    }
    return Expr::constant(0.0);
}

// Outer-side conditions per PDE class (y = -1 is initial time for the
// time-dependent classes; y = 1 stays free). Degenerate operators get the
// elliptic all-sides treatment. Inner components draw Dirichlet / Neumann /
// both at 45/45/10.
inline void assign_conditions(Rng& rng, PdeInstance& inst) {
    PdeClass cls = classify(inst.coeffs);
    ValueRule rule = value_rule_for(inst.coeffs);
    auto value = [&](BcKind kind) {
        BoundaryCondition bc;
        bc.kind = kind;
        if (inst.supervised) {
            bc.from_solution = true;
        } else {
            if (kind == BcKind::Dirichlet || kind == BcKind::Both)
                bc.dirichlet_value = sample_boundary_value(rng, rule);
            if (kind == BcKind::Neumann || kind == BcKind::Both)
                bc.neumann_value = sample_boundary_value(rng, rule);
        }
        return bc;
    };
    auto add = [&](int component, BcKind kind) {
        BoundaryCondition bc = value(kind);
        bc.component = component;
        inst.conditions.push_back(bc);
    };

    switch (cls) {
        case PdeClass::Elliptic:
        case PdeClass::Degenerate:
            for (int side = 0; side < 4; ++side) add(side, BcKind::Dirichlet);
            break;
        case PdeClass::Parabolic:
            add(0, BcKind::Dirichlet);  // initial data at y = -1
            add(1, BcKind::Dirichlet);
            add(3, BcKind::Dirichlet);
            break;
        case PdeClass::Hyperbolic:
            add(0, BcKind::Both);  // initial value and initial normal derivative
            add(1, BcKind::Dirichlet);
            add(3, BcKind::Dirichlet);
            break;
    }
    for (std::size_t i = 0; i < inst.domain.primitives.size(); ++i) {
        double roll = rng.uniform();
        BcKind kind = roll < 0.45 ? BcKind::Dirichlet : roll < 0.9 ? BcKind::Neumann : BcKind::Both;
        add(4 + static_cast<int>(i), kind);
    }
}

}  // namespace detail

// Class I: manufactured solution first, then f = L[u], g = u, h = du/dn.
inline PdeInstance sample_supervised(Rng& rng, const SamplerConfig& cfg) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        PdeInstance inst;
        inst.coeffs = sample_operator(rng, cfg);
        inst.domain = sample_domain(rng, cfg.geometry);
        Expr u = sample_manufactured_solution(rng, cfg.mms);
        if (cfg.mms_amplitude_decades > 0) {
            double scale = std::pow(10.0, rng.uniform(-cfg.mms_amplitude_decades, 0.0));
            u = Expr::mul({Expr::constant(scale), u});
        }
        Expr f = apply_operator(inst.coeffs, u);
        // the solution probe bounds u and its pure second derivatives; the
        // combined source still needs its own finiteness (and, for
        // restricted families, magnitude) sweep
        bool ok = true;
        for (int i = 0; i < 32 && ok; ++i)
            for (int j = 0; j < 32 && ok; ++j) {
                double fv = f.eval_raw(-1.0 + (j + 0.5) / 16.0, -1.0 + (i + 0.5) / 16.0);
                ok = std::isfinite(fv) &&
                     (cfg.supervised_source_bound <= 0 ||
                      std::abs(fv) <= cfg.supervised_source_bound);
            }
        if (!ok) continue;
        inst.source = std::move(f);
        inst.attach_solution(std::move(u));
        detail::assign_conditions(rng, inst);
        return inst;
    }
    throw std::runtime_error("supervised sampling exhausted its attempt budget");
}

// Class II: spatially constant Gaussian source, rule-based boundary values.
inline PdeInstance sample_unsupervised(Rng& rng, const SamplerConfig& cfg) {
    PdeInstance inst;
    inst.coeffs = sample_operator(rng, cfg);
    inst.domain = sample_domain(rng, cfg.geometry);
    inst.source = Expr::constant(rng.normal(0.0, cfg.unsup_source_sigma));
    inst.supervised = false;
    detail::assign_conditions(rng, inst);
    return inst;
}

struct DatasetRecord {
    PdeInstance instance;
    PdeGrids grids;
};

inline DatasetRecord make_record(Rng& rng, const SamplerConfig& cfg, bool supervised,
                                 std::uint64_t seed_tag) {
    DatasetRecord rec;
    rec.instance = supervised ? sample_supervised(rng, cfg) : sample_unsupervised(rng, cfg);
    rec.instance.seed = seed_tag;
    rec.grids = rasterize(rec.instance, cfg.resolution);
    return rec;
}

// --- serialization ---------------------------------------------------------

namespace detail {

inline void write_primitive(ByteWriter& w, const Primitive& p) {
    w.u8(static_cast<std::uint8_t>(p.kind));
    if (p.kind == PrimitiveKind::Disk) {
        w.f64(p.center.x);
        w.f64(p.center.y);
        w.f64(p.radius);
    } else {
        w.u32(static_cast<std::uint32_t>(p.vertices.size()));
        for (const auto& v : p.vertices) {
            w.f64(v.x);
            w.f64(v.y);
        }
    }
}

inline Primitive read_primitive(ByteReader& r) {
    Primitive p;
    p.kind = static_cast<PrimitiveKind>(r.u8());
    if (p.kind == PrimitiveKind::Disk) {
        p.center.x = r.f64();
        p.center.y = r.f64();
        p.radius = r.f64();
    } else {
        std::uint32_t n = r.u32();
        p.vertices.resize(n);
        for (auto& v : p.vertices) {
            v.x = r.f64();
            v.y = r.f64();
        }
    }
    return p;
}

inline void write_grid(ByteWriter& w, const std::vector<float>& g) {
    w.bytes(g.data(), g.size() * sizeof(float));
}

inline void read_grid(ByteReader& r, std::vector<float>& g, std::size_t n) {
    g.resize(n);
    r.bytes(g.data(), n * sizeof(float));
}

}  // namespace detail

inline void serialize_record(ByteWriter& w, const DatasetRecord& rec) {
    const PdeInstance& inst = rec.instance;
    for (double c : inst.coeffs.c) w.f64(c);
    w.u32(static_cast<std::uint32_t>(inst.domain.primitives.size()));
    for (const auto& p : inst.domain.primitives) detail::write_primitive(w, p);
    w.str(inst.source.serialize());
    w.u32(static_cast<std::uint32_t>(inst.conditions.size()));
    for (const auto& bc : inst.conditions) {
        w.u32(static_cast<std::uint32_t>(bc.component));
        w.u8(static_cast<std::uint8_t>(bc.kind));
        w.u8(bc.from_solution ? 1 : 0);
        w.str(bc.dirichlet_value.serialize());
        w.str(bc.neumann_value.serialize());
    }
    w.u8(inst.solution.has_value() ? 1 : 0);
    if (inst.solution) w.str(inst.solution->serialize());
    w.u8(inst.supervised ? 1 : 0);
    w.u64(inst.seed);
    w.str(inst.name);
    w.u32(static_cast<std::uint32_t>(rec.grids.resolution));
    detail::write_grid(w, rec.grids.source);
    detail::write_grid(w, rec.grids.mask_g);
    detail::write_grid(w, rec.grids.value_g);
    detail::write_grid(w, rec.grids.mask_h);
    detail::write_grid(w, rec.grids.value_h);
}

inline DatasetRecord deserialize_record(ByteReader& r) {
    DatasetRecord rec;
    PdeInstance& inst = rec.instance;
    for (double& c : inst.coeffs.c) c = r.f64();
    std::uint32_t nprim = r.u32();
    for (std::uint32_t i = 0; i < nprim; ++i)
        inst.domain.primitives.push_back(detail::read_primitive(r));
    inst.source = Expr::deserialize(r.str());
    std::uint32_t nbc = r.u32();
    for (std::uint32_t i = 0; i < nbc; ++i) {
        BoundaryCondition bc;
        bc.component = static_cast<int>(r.u32());
        bc.kind = static_cast<BcKind>(r.u8());
        bc.from_solution = r.u8() != 0;
        bc.dirichlet_value = Expr::deserialize(r.str());
        bc.neumann_value = Expr::deserialize(r.str());
        inst.conditions.push_back(std::move(bc));
    }
    if (r.u8()) inst.attach_solution(Expr::deserialize(r.str()));
    inst.supervised = r.u8() != 0;
    inst.seed = r.u64();
    inst.name = r.str();
    rec.grids.resolution = static_cast<int>(r.u32());
    std::size_t n = rec.grids.cells();
    detail::read_grid(r, rec.grids.source, n);
    detail::read_grid(r, rec.grids.mask_g, n);
    detail::read_grid(r, rec.grids.value_g, n);
    detail::read_grid(r, rec.grids.mask_h, n);
    detail::read_grid(r, rec.grids.value_h, n);
    return rec;
}

inline constexpr char kDatasetMagic[8] = {'H', 'Y', 'P', 'N', 'D', 'S', '0', '1'};

inline void write_dataset(const std::string& path, const std::vector<DatasetRecord>& records,
                          const std::string& metadata) {
    ByteWriter w;
    w.bytes(kDatasetMagic, 8);
    w.u32(1);  // format version
    w.str(metadata);
    w.u64(records.size());
    for (const auto& rec : records) {
        ByteWriter payload;
        serialize_record(payload, rec);
        w.u64(payload.data().size());
        w.bytes(payload.data().data(), payload.data().size());
        w.u32(crc32(payload.data().data(), payload.data().size()));
    }
    write_file(path, w.data());
}

struct Dataset {
    std::string metadata;
    std::vector<DatasetRecord> records;
};

inline Dataset read_dataset(const std::string& path) {
    auto bytes = read_file(path);
    ByteReader r(bytes);
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kDatasetMagic, 8) != 0) throw IoError("not a dataset file: " + path);
    std::uint32_t version = r.u32();
    if (version != 1) throw IoError("unsupported dataset version " + std::to_string(version));
    Dataset ds;
    ds.metadata = r.str();
    std::uint64_t count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint64_t len = r.u64();
        if (r.remaining() < len + 4) throw IoError("truncated record " + std::to_string(i));
        std::vector<char> payload(len);
        r.bytes(payload.data(), len);
        std::uint32_t want = r.u32();
        if (crc32(payload.data(), payload.size()) != want)
            throw IoError("checksum failure in record " + std::to_string(i));
        ByteReader pr(payload);
        ds.records.push_back(deserialize_record(pr));
    }
    if (!r.at_end()) throw IoError("trailing bytes after last record");
    return ds;
}

// --- curriculum -------------------------------------------------------------

// Per-slot derived seeds make the stream independent of worker layout.
inline std::vector<DatasetRecord> curriculum_batch(const SamplerConfig& cfg, int batch_index,
                                                   int batch_size, int phase) {
    if (phase != 1 && phase != 2) throw std::invalid_argument("phase must be 1 or 2");
    int supervised_count = phase == 1 ? batch_size : (batch_size + 1) / 2;
    std::vector<DatasetRecord> batch;
    batch.reserve(batch_size);
    for (int slot = 0; slot < batch_size; ++slot) {
        Rng rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(batch_index),
                              static_cast<std::uint64_t>(slot));
        std::uint64_t tag = (static_cast<std::uint64_t>(batch_index) << 16) |
                            static_cast<std::uint64_t>(slot);
        batch.push_back(make_record(rng, cfg, slot < supervised_count, tag));
    }
    return batch;
}

// --- audits ------------------------------------------------------------------

// Checks one unsupervised instance against the class and compatibility rules;
// returns human-readable violations (empty = conformant).
inline std::vector<std::string> audit_bc_rules(const PdeInstance& inst) {
    std::vector<std::string> bad;
    PdeClass cls = classify(inst.coeffs);
    auto has = [&](int comp) { return inst.condition_for(comp) != nullptr; };
    auto kind_of = [&](int comp) { return inst.condition_for(comp)->kind; };

    switch (cls) {
        case PdeClass::Elliptic:
        case PdeClass::Degenerate:
            for (int side = 0; side < 4; ++side)
                if (!has(side) || kind_of(side) != BcKind::Dirichlet)
                    bad.push_back("side " + std::to_string(side) + " must be Dirichlet");
            break;
        case PdeClass::Parabolic:
            for (int side : {0, 1, 3})
                if (!has(side) || kind_of(side) != BcKind::Dirichlet)
                    bad.push_back("side " + std::to_string(side) + " must be Dirichlet");
            if (has(2)) bad.push_back("y=1 side must stay free for parabolic problems");
            break;
        case PdeClass::Hyperbolic:
            if (!has(0) || kind_of(0) != BcKind::Both)
                bad.push_back("initial side must carry Dirichlet and Neumann data");
            for (int side : {1, 3})
                if (!has(side) || kind_of(side) != BcKind::Dirichlet)
                    bad.push_back("side " + std::to_string(side) + " must be Dirichlet");
            if (has(2)) bad.push_back("y=1 side must stay free for hyperbolic problems");
            break;
    }
    for (std::size_t i = 0; i < inst.domain.primitives.size(); ++i)
        if (!has(4 + static_cast<int>(i)))
            bad.push_back("inner component " + std::to_string(i) + " lacks a condition");

    if (!inst.supervised) {
        // source must be spatially constant
        double f0 = inst.source.eval(0.1, -0.2);
        for (Vec2 p : {Vec2{-0.9, 0.4}, Vec2{0.7, 0.7}, Vec2{0.0, -0.9}})
            if (inst.source.eval(p.x, p.y) != f0) bad.push_back("unsupervised source varies");

        detail::ValueRule rule = detail::value_rule_for(inst.coeffs);
        for (const auto& bc : inst.conditions) {
            for (const Expr* v : {&bc.dirichlet_value, &bc.neumann_value}) {
                bool used = (v == &bc.dirichlet_value && bc.kind != BcKind::Neumann) ||
                            (v == &bc.neumann_value && bc.kind != BcKind::Dirichlet);
                if (!used) continue;
                double p1 = v->eval(-0.5, 0.25), p2 = v->eval(0.5, -0.75),
                       mid = v->eval(0.0, -0.25);
                switch (rule) {
                    case detail::ValueRule::Zero:
                        if (p1 != 0.0 || p2 != 0.0) bad.push_back("value must be zero");
                        break;
                    case detail::ValueRule::Constant:
                        if (p1 != p2) bad.push_back("value must be constant");
                        break;
                    case detail::ValueRule::Linear:
                        if (std::abs(p1 + p2 - 2 * mid) > 1e-12)
                            bad.push_back("value must be affine");
                        break;
                }
            }
        }
    }
    return bad;
}

}  // namespace hypino
