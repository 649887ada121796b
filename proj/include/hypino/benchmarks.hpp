#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "hypino/losses.hpp"
#include "hypino/metrics.hpp"
#include "hypino/pde.hpp"
#include "hypino/refine.hpp"

namespace hypino {

// --- single-channel grid files (PdeGrids binary format) -----------------------

inline constexpr char kGridMagic[8] = {'H', 'Y', 'P', 'N', 'G', 'R', 'D', '1'};

struct GridFile {
    int side = 0;
    int channels = 1;
    std::vector<float> data;  // channel-major, row-major within a channel
};

inline void save_grid_file(const std::string& path, const GridFile& g) {
    ByteWriter w;
    w.bytes(kGridMagic, 8);
    w.u32(static_cast<std::uint32_t>(g.side));
    w.u32(static_cast<std::uint32_t>(g.channels));
    w.bytes(g.data.data(), g.data.size() * sizeof(float));
    write_file(path, w.data());
}

inline GridFile load_grid_file(const std::string& path) {
    auto bytes = read_file(path);
    ByteReader r(bytes);
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kGridMagic, 8) != 0) throw IoError("not a grid file: " + path);
    GridFile g;
    g.side = static_cast<int>(r.u32());
    g.channels = static_cast<int>(r.u32());
    g.data.resize(static_cast<std::size_t>(g.side) * g.side * g.channels);
    r.bytes(g.data.data(), g.data.size() * sizeof(float));
    return g;
}

// --- benchmark definitions ----------------------------------------------------

struct BenchmarkSpec {
    std::string id;
    PdeInstance instance;          // on the canonical square
    SourceRect original_rect;      // provenance of the affine remap
    bool closed_form = false;      // reference is instance.solution
    bool out_of_training_range = false;
    double hz_wave_number = 1.0;   // HZ only; configurable, default 1
    double ht_mode = 1.0;          // HT only; frequency parameter n
};

inline const std::vector<std::string>& benchmark_ids() {
    static const std::vector<std::string> ids = {"HT", "HZ", "HZ-G", "PS-C",
                                                 "PS-L", "PS-G", "WV"};
    return ids;
}

namespace bench_detail {

inline Expr sin_of(double freq, const Expr& var, double phase = 0.0) {
    return Expr::unary(Basis::Sin, Expr::add({Expr::mul({Expr::constant(freq), var}),
                                              Expr::constant(phase)}));
}
inline Expr cos_of(double freq, const Expr& var) {
    return Expr::unary(Basis::Cos, Expr::mul({Expr::constant(freq), var}));
}

inline void add_dirichlet(PdeInstance& inst, int component, std::optional<double> value) {
    BoundaryCondition bc;
    bc.component = component;
    bc.kind = BcKind::Dirichlet;
    if (value) {
        bc.dirichlet_value = Expr::constant(*value);
    } else {
        bc.from_solution = true;
    }
    inst.conditions.push_back(bc);
}

}  // namespace bench_detail

// Exact problem statements mapped onto the canonical square, with the
// operator coefficients transported by the chain rule.
inline BenchmarkSpec build_benchmark(const std::string& id, double hz_k = 1.0,
                                     double ht_n = 1.0) {
    using namespace bench_detail;
    BenchmarkSpec spec;
    spec.id = id;
    spec.hz_wave_number = hz_k;
    spec.ht_mode = ht_n;
    Expr x = Expr::x(), y = Expr::y();

    if (id == "HT") {
        // du/dt = alpha d2u/dx2, alpha = 0.1, (x,t) in [0,1]^2;
        // u = exp(-n^2 pi^2 alpha t) sin(n pi x)
        const double alpha = 0.1;
        PdeInstance orig;
        orig.coeffs = {{0, 0, 1, -alpha, 0}};
        orig.source = Expr::constant(0.0);
        Expr decay = Expr::unary(
            Basis::Exp, Expr::mul({Expr::constant(-ht_n * ht_n * M_PI * M_PI * alpha), y}));
        orig.attach_solution(decay * sin_of(ht_n * M_PI, x));
        spec.original_rect = {0, 1, 0, 1};
        spec.instance = remap_affine(orig, spec.original_rect);
        add_dirichlet(spec.instance, 0, std::nullopt);  // initial data at y = -1
        add_dirichlet(spec.instance, 1, std::nullopt);
        add_dirichlet(spec.instance, 3, std::nullopt);
        spec.closed_form = true;
    } else if (id == "HZ") {
        // Laplacian u + k^2 u = f on [-1,1]^2
        double k = hz_k;
        spec.instance.coeffs = {{k * k, 0, 0, 1, 1}};
        Expr u = sin_of(M_PI, x) * sin_of(4 * M_PI, y);
        double factor = -M_PI * M_PI - 16.0 * M_PI * M_PI + k * k;
        spec.instance.source = Expr::constant(factor) * sin_of(M_PI, x) * sin_of(4 * M_PI, y);
        spec.instance.attach_solution(u);
        spec.original_rect = {-1, 1, -1, 1};
        for (int side = 0; side < 4; ++side) add_dirichlet(spec.instance, side, std::nullopt);
        spec.closed_form = true;
    } else if (id == "HZ-G") {
        // -Laplacian u + k^2 u = f, k = 8, four circles removed
        const double k = 8, a = 10, mu1 = 1, mu2 = 4;
        spec.instance.coeffs = {{k * k, 0, 0, -1, -1}};
        spec.instance.source =
            Expr::constant(a * mu2) * y * sin_of(mu1 * M_PI, x) * sin_of(mu2 * M_PI, y);
        spec.instance.domain.primitives = {
            Primitive::disk({0.5, 0.5}, 0.2), Primitive::disk({0.4, -0.4}, 0.4),
            Primitive::disk({-0.2, -0.7}, 0.1), Primitive::disk({-0.6, 0.5}, 0.3)};
        spec.original_rect = {-1, 1, -1, 1};
        for (int side = 0; side < 4; ++side) add_dirichlet(spec.instance, side, 0.2);
        for (int i = 0; i < 4; ++i) add_dirichlet(spec.instance, 4 + i, 1.0);
        spec.out_of_training_range = true;
    } else if (id == "PS-C") {
        // -Laplacian u = 0 on [-0.5,0.5]^2 minus four circles, remapped
        PdeInstance orig;
        orig.coeffs = {{0, 0, 0, -1, -1}};
        orig.source = Expr::constant(0.0);
        spec.original_rect = {-0.5, 0.5, -0.5, 0.5};
        spec.instance = remap_affine(orig, spec.original_rect);
        spec.instance.domain.primitives = {
            Primitive::disk({0.6, 0.6}, 0.2), Primitive::disk({-0.6, 0.6}, 0.2),
            Primitive::disk({0.6, -0.6}, 0.2), Primitive::disk({-0.6, -0.6}, 0.2)};
        for (int side = 0; side < 4; ++side) add_dirichlet(spec.instance, side, 1.0);
        for (int i = 0; i < 4; ++i) add_dirichlet(spec.instance, 4 + i, 0.0);
        spec.out_of_training_range = true;
    } else if (id == "PS-L") {
        // -u_xx - u_yy = 1 on the L-shaped region [-1,1]^2 minus [0,1]^2
        spec.instance.coeffs = {{0, 0, 0, -1, -1}};
        spec.instance.source = Expr::constant(1.0);
        spec.instance.domain.primitives = {Primitive::rectangle({0, 0}, {1, 1})};
        spec.original_rect = {-1, 1, -1, 1};
        for (int side = 0; side < 4; ++side) add_dirichlet(spec.instance, side, 0.0);
        add_dirichlet(spec.instance, 4, 0.0);
    } else if (id == "PS-G") {
        // -Laplacian u = sum of Gaussians on (0,1)^2, remapped; the random
        // source is one fixed draw (N ~ Geom(0.4), centers U[0,1]^2,
        // widths U[0.025, 0.1])
        PdeInstance orig;
        orig.coeffs = {{0, 0, 0, -1, -1}};
        Rng rng(20250815);
        int n = rng.geometric(0.4);
        std::vector<Expr> bumps;
        for (int i = 0; i < n; ++i) {
            double mx = rng.uniform(0, 1), my = rng.uniform(0, 1);
            double sigma = rng.uniform(0.025, 0.1);
            double inv = -1.0 / (2.0 * sigma * sigma);
            Expr dx = Expr::add({x, Expr::constant(-mx)});
            Expr dy = Expr::add({y, Expr::constant(-my)});
            Expr quad = Expr::add({dx * dx, dy * dy});
            bumps.push_back(Expr::unary(Basis::Exp, Expr::mul({Expr::constant(inv), quad})));
        }
        orig.source = Expr::add(std::move(bumps));
        spec.original_rect = {0, 1, 0, 1};
        spec.instance = remap_affine(orig, spec.original_rect);
        for (int side = 0; side < 4; ++side) add_dirichlet(spec.instance, side, 0.0);
        spec.out_of_training_range = true;
    } else if (id == "WV") {
        // u_tt - 4 u_xx = 0 on [0,1]^2;
        // u = sin(pi x) cos(2 pi t) + 1/2 sin(4 pi x) cos(8 pi t)
        PdeInstance orig;
        orig.coeffs = {{0, 0, 0, -4, 1}};
        orig.source = Expr::constant(0.0);
        Expr u = sin_of(M_PI, x) * cos_of(2 * M_PI, y) +
                 Expr::constant(0.5) * sin_of(4 * M_PI, x) * cos_of(8 * M_PI, y);
        orig.attach_solution(u);
        spec.original_rect = {0, 1, 0, 1};
        spec.instance = remap_affine(orig, spec.original_rect);
        BoundaryCondition initial;
        initial.component = 0;
        initial.kind = BcKind::Both;  // value and normal derivative at t = 0
        initial.from_solution = true;
        spec.instance.conditions.push_back(initial);
        add_dirichlet(spec.instance, 1, std::nullopt);
        add_dirichlet(spec.instance, 3, std::nullopt);
        spec.closed_form = true;
        spec.out_of_training_range = true;
    } else {
        throw std::invalid_argument("unknown benchmark id: " + id);
    }
    spec.instance.name = id;
    return spec;
}

// --- finite-difference reference solver ---------------------------------------

// Shortley-Weller 5-point discretization of c1 u + c4 u_xx + c5 u_yy = f with
// Dirichlet data projected onto the true boundary; red-black SOR.
struct NodeGrid {
    int nodes = 0;  // per side, inclusive of the square boundary
    std::vector<double> values;
    std::vector<std::uint8_t> inside;

    double coord(int idx) const { return -1.0 + 2.0 * idx / (nodes - 1); }

    // Bilinear interpolation at an arbitrary point.
    double sample(double x, double y) const {
        double fx = (x + 1.0) * 0.5 * (nodes - 1);
        double fy = (y + 1.0) * 0.5 * (nodes - 1);
        int j = std::clamp(static_cast<int>(std::floor(fx)), 0, nodes - 2);
        int i = std::clamp(static_cast<int>(std::floor(fy)), 0, nodes - 2);
        double tx = std::clamp(fx - j, 0.0, 1.0);
        double ty = std::clamp(fy - i, 0.0, 1.0);
        auto v = [&](int ii, int jj) {
            return values[static_cast<std::size_t>(ii) * nodes + jj];
        };
        return (1 - tx) * (1 - ty) * v(i, j) + tx * (1 - ty) * v(i, j + 1) +
               (1 - tx) * ty * v(i + 1, j) + tx * ty * v(i + 1, j + 1);
    }
};

namespace fd_detail {

// Dirichlet value at the domain-boundary point nearest to p.
inline double projected_value(const PdeInstance& inst, Vec2 p) {
    // nearest component by unsigned distance
    int best = 0;
    double best_d = HUGE_VAL;
    for (int comp = 0; comp < inst.domain.component_count(); ++comp) {
        double d = inst.domain.component_distance(p, comp);
        if (d < best_d) {
            best_d = d;
            best = comp;
        }
    }
    Vec2 proj = p;
    switch (best) {
        case 0: proj.y = -1; break;
        case 1: proj.x = 1; break;
        case 2: proj.y = 1; break;
        case 3: proj.x = -1; break;
        default: {
            const Primitive& prim =
                inst.domain.primitives[static_cast<std::size_t>(best - 4)];
            if (prim.kind == PrimitiveKind::Disk) {
                Vec2 dir = p - prim.center;
                double n = dir.norm();
                proj = n > 1e-12 ? prim.center + (prim.radius / n) * dir
                                 : prim.center + Vec2{prim.radius, 0};
            } else {
                double bd = HUGE_VAL;
                for (std::size_t i = 0; i < prim.vertices.size(); ++i) {
                    Vec2 a = prim.vertices[i];
                    Vec2 b = prim.vertices[(i + 1) % prim.vertices.size()];
                    Vec2 ab = b - a;
                    double t = std::clamp((p - a).dot(ab) / ab.dot(ab), 0.0, 1.0);
                    Vec2 cand = a + t * ab;
                    double d = (p - cand).norm();
                    if (d < bd) {
                        bd = d;
                        proj = cand;
                    }
                }
            }
        }
    }
    proj.x = std::clamp(proj.x, -1.0, 1.0);
    proj.y = std::clamp(proj.y, -1.0, 1.0);
    const BoundaryCondition* bc = inst.condition_for(best);
    if (!bc) return 0.0;
    return inst.dirichlet_value_at(*bc, proj);
}

// Fractional arm length from an interior node toward an outside neighbor:
// bisection of the membership predicate along the arm.
inline double arm_fraction(const Domain& dom, Vec2 from, Vec2 dir, double h) {
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 40; ++it) {
        double mid = 0.5 * (lo + hi);
        if (dom.contains(from + (mid * h) * dir))
            lo = mid;
        else
            hi = mid;
    }
    return std::max(hi, 1e-4);
}

}  // namespace fd_detail

inline NodeGrid solve_reference(const PdeInstance& inst, int nodes, double tol = 1e-11,
                                int max_sweeps = 60000) {
    if (inst.coeffs.c2() != 0.0 || inst.coeffs.c3() != 0.0)
        throw std::invalid_argument("reference solver handles c1/c4/c5 operators only");
    NodeGrid g;
    g.nodes = nodes;
    g.values.assign(static_cast<std::size_t>(nodes) * nodes, 0.0);
    g.inside.assign(g.values.size(), 0);
    const double h = 2.0 / (nodes - 1);

    // classification and boundary data
    std::vector<double> f(g.values.size(), 0.0);
    for (int i = 0; i < nodes; ++i) {
        for (int j = 0; j < nodes; ++j) {
            std::size_t idx = static_cast<std::size_t>(i) * nodes + j;
            Vec2 p{g.coord(j), g.coord(i)};
            if (inst.domain.contains(p)) {
                g.inside[idx] = 1;
                f[idx] = inst.source.eval_raw(p.x, p.y);
            } else {
                g.values[idx] = fd_detail::projected_value(inst, p);
            }
        }
    }

    // Shortley-Weller arms (fraction of h toward each neighbor)
    struct Arms {
        float w = 1, e = 1, s = 1, n = 1;
        float bw = 0, be = 0, bs = 0, bn = 0;  // boundary values for cut arms
        std::uint8_t cw = 0, ce = 0, cs = 0, cn = 0;
    };
    std::vector<Arms> arms(g.values.size());
    for (int i = 0; i < nodes; ++i) {
        for (int j = 0; j < nodes; ++j) {
            std::size_t idx = static_cast<std::size_t>(i) * nodes + j;
            if (!g.inside[idx]) continue;
            Vec2 p{g.coord(j), g.coord(i)};
            auto cut = [&](Vec2 dir, float& frac, float& bval, std::uint8_t& flag, int ni,
                           int nj) {
                std::size_t nidx = static_cast<std::size_t>(ni) * nodes + nj;
                bool neighbor_in = ni >= 0 && ni < nodes && nj >= 0 && nj < nodes &&
                                   g.inside[nidx];
                if (neighbor_in) return;
                double a = fd_detail::arm_fraction(inst.domain, p, dir, h);
                Vec2 q = p + (a * h) * dir;
                flag = 1;
                frac = static_cast<float>(a);
                bval = static_cast<float>(fd_detail::projected_value(inst, q));
            };
            Arms& ar = arms[idx];
            cut({-1, 0}, ar.w, ar.bw, ar.cw, i, j - 1);
            cut({1, 0}, ar.e, ar.be, ar.ce, i, j + 1);
            cut({0, -1}, ar.s, ar.bs, ar.cs, i - 1, j);
            cut({0, 1}, ar.n, ar.bn, ar.cn, i + 1, j);
        }
    }

    double c1 = inst.coeffs.c1(), c4 = inst.coeffs.c4(), c5 = inst.coeffs.c5();
    double omega = 2.0 / (1.0 + std::sin(M_PI / (nodes - 1)));
    double worst = 0;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        worst = 0;
        for (int color = 0; color < 2; ++color) {
            for (int i = 1; i < nodes - 1; ++i) {
                for (int j = 1 + ((i + color) % 2); j < nodes - 1; j += 2) {
                    std::size_t idx = static_cast<std::size_t>(i) * nodes + j;
                    if (!g.inside[idx]) continue;
                    const Arms& ar = arms[idx];
                    double hw = ar.w * h, he = ar.e * h, hs = ar.s * h, hn = ar.n * h;
                    double uw = ar.cw ? ar.bw : g.values[idx - 1];
                    double ue = ar.ce ? ar.be : g.values[idx + 1];
                    double us = ar.cs ? ar.bs : g.values[idx - static_cast<std::size_t>(nodes)];
                    double un = ar.cn ? ar.bn : g.values[idx + static_cast<std::size_t>(nodes)];
                    double ax = 2.0 / (hw + he);
                    double ay = 2.0 / (hs + hn);
                    double diag = c1 - c4 * ax * (1.0 / hw + 1.0 / he) -
                                  c5 * ay * (1.0 / hs + 1.0 / hn);
                    double off = c4 * ax * (uw / hw + ue / he) + c5 * ay * (us / hs + un / hn);
                    double unew = (f[idx] - off) / diag;
                    double delta = unew - g.values[idx];
                    g.values[idx] += omega * delta;
                    worst = std::max(worst, std::abs(delta));
                }
            }
        }
        if (worst < tol) break;
    }
    return g;
}

// 257 vs 513 agreement on shared nodes; the references are accepted only
// when the two resolutions differ by less than `tol` in relative L2.
inline double grid_convergence(const NodeGrid& coarse, const NodeGrid& fine) {
    if ((fine.nodes - 1) != 2 * (coarse.nodes - 1))
        throw std::invalid_argument("grids are not nested");
    double num = 0, den = 0;
    for (int i = 0; i < coarse.nodes; ++i) {
        for (int j = 0; j < coarse.nodes; ++j) {
            std::size_t ci = static_cast<std::size_t>(i) * coarse.nodes + j;
            std::size_t fi = static_cast<std::size_t>(2 * i) * fine.nodes + 2 * j;
            if (!coarse.inside[ci] || !fine.inside[fi]) continue;
            double a = coarse.values[ci], b = fine.values[fi];
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    if (den == 0) throw std::runtime_error("empty comparison region");
    return std::sqrt(num / den);
}

// --- reference management -------------------------------------------------------

// Evaluable reference: closed form where one exists, cached
// finite-difference solution otherwise.
class BenchmarkReference {
public:
    BenchmarkReference(const BenchmarkSpec& spec, const std::string& cache_dir,
                       int fine_nodes = 513) {
        if (spec.closed_form) {
            expr_ = *spec.instance.solution;
            return;
        }
        std::string path = cache_dir.empty()
                               ? ""
                               : cache_dir + "/ref_" + spec.id + "_" +
                                     std::to_string(fine_nodes) + ".grid";
        if (!path.empty() && file_exists(path)) {
            GridFile gf = load_grid_file(path);
            grid_.nodes = gf.side;
            grid_.values.assign(gf.data.begin(),
                                gf.data.begin() + static_cast<long>(gf.side) * gf.side);
            grid_.inside.resize(grid_.values.size());
            for (std::size_t i = 0; i < grid_.inside.size(); ++i)
                grid_.inside[i] =
                    gf.data[static_cast<std::size_t>(gf.side) * gf.side + i] != 0.0f;
            return;
        }
        grid_ = solve_reference(spec.instance, fine_nodes);
        if (!path.empty()) {
            GridFile gf;
            gf.side = grid_.nodes;
            gf.channels = 2;
            gf.data.resize(grid_.values.size() * 2);
            for (std::size_t i = 0; i < grid_.values.size(); ++i) {
                gf.data[i] = static_cast<float>(grid_.values[i]);
                gf.data[grid_.values.size() + i] = grid_.inside[i] ? 1.0f : 0.0f;
            }
            save_grid_file(path, gf);
        }
    }

    double value(double x, double y) const {
        if (expr_) return expr_->eval_raw(x, y);
        return grid_.sample(x, y);
    }

    bool closed_form() const { return expr_.has_value(); }

private:
    std::optional<Expr> expr_;
    NodeGrid grid_;
};

// --- evaluation harness ---------------------------------------------------------

struct EvalRow {
    std::string benchmark;
    int rounds = 0;
    double mse = 0;
    double smape = 0;
    double wall_ms = 0;
    double relative_error = 1.0;  // mse at this round / mse at round 0
};

struct EvalGrids {
    std::string benchmark;
    int rounds = 0;
    int resolution = 0;
    std::vector<float> prediction;
};

// MSE/SMAPE of the refinement ensemble per requested round count, computed
// over eval_res x eval_res cell centers restricted to the domain.
inline std::vector<EvalRow> evaluate_model(Hypernet& net, const std::vector<std::string>& ids,
                                           std::vector<int> rounds, int eval_res,
                                           const std::string& cache_dir,
                                           std::vector<EvalGrids>* grids_out = nullptr) {
    std::vector<EvalRow> rows;
    std::sort(rounds.begin(), rounds.end());
    if (rounds.empty()) rounds.push_back(0);
    int max_rounds = rounds.back();
    for (const auto& id : ids) {
        BenchmarkSpec spec = build_benchmark(id);
        BenchmarkReference ref(spec, cache_dir);

        auto t0 = std::chrono::steady_clock::now();
        EnsembleSolution ens = refine(spec.instance, net, max_rounds);
        auto t1 = std::chrono::steady_clock::now();
        double total_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

        std::vector<double> reference(static_cast<std::size_t>(eval_res) * eval_res, 0.0);
        std::vector<std::uint8_t> mask(reference.size(), 0);
        for (int i = 0; i < eval_res; ++i) {
            double py = PdeGrids::center(i, eval_res);
            for (int j = 0; j < eval_res; ++j) {
                double px = PdeGrids::center(j, eval_res);
                std::size_t idx = static_cast<std::size_t>(i) * eval_res + j;
                if (!spec.instance.domain.contains({px, py})) continue;
                mask[idx] = 1;
                reference[idx] = ref.value(px, py);
            }
        }

        double mse0 = -1;
        for (int r : rounds) {
            auto eval = ens.evaluator(r);
            std::vector<double> pred(reference.size(), 0.0);
            for (int i = 0; i < eval_res; ++i) {
                double py = PdeGrids::center(i, eval_res);
                for (int j = 0; j < eval_res; ++j) {
                    std::size_t idx = static_cast<std::size_t>(i) * eval_res + j;
                    if (!mask[idx]) continue;
                    pred[idx] = eval->value(PdeGrids::center(j, eval_res), py);
                }
            }
            EvalRow row;
            row.benchmark = id;
            row.rounds = r;
            row.mse = mse(pred, reference, mask);
            row.smape = smape(pred, reference, mask);
            row.wall_ms = total_ms;
            if (mse0 < 0) mse0 = row.mse;
            row.relative_error = mse0 > 0 ? row.mse / mse0 : 1.0;
            rows.push_back(row);
            if (grids_out) {
                EvalGrids eg;
                eg.benchmark = id;
                eg.rounds = r;
                eg.resolution = eval_res;
                eg.prediction.resize(pred.size());
                for (std::size_t k = 0; k < pred.size(); ++k)
                    eg.prediction[k] = static_cast<float>(pred[k]);
                grids_out->push_back(std::move(eg));
            }
        }
    }
    return rows;
}

}  // namespace hypino
