#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hypino/rng.hpp"

namespace hypino {

struct Vec2 {
    double x = 0, y = 0;
    Vec2 operator-() const { return {-x, -y}; }
    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    Vec2 normalized() const {
        double n = norm();
        return {x / n, y / n};
    }
};

inline double dist_point_segment(Vec2 p, Vec2 a, Vec2 b) {
    Vec2 ab = b - a;
    double len2 = ab.dot(ab);
    double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm();
}

enum class PrimitiveKind : std::uint8_t { Disk, Rectangle, Triangle, Polygon };

// A shape subtracted from the unit square. Rectangles and triangles are kept
// as tagged vertex lists so they serialize with their sampled kind.
struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Disk;
    Vec2 center{};                // disk only
    double radius = 0;            // disk only
    std::vector<Vec2> vertices;   // CCW, polygonal kinds

    static Primitive disk(Vec2 c, double r) {
        Primitive p;
        p.kind = PrimitiveKind::Disk;
        p.center = c;
        p.radius = r;
        return p;
    }
    static Primitive rectangle(Vec2 lo, Vec2 hi) {
        Primitive p;
        p.kind = PrimitiveKind::Rectangle;
        p.vertices = {{lo.x, lo.y}, {hi.x, lo.y}, {hi.x, hi.y}, {lo.x, hi.y}};
        return p;
    }
    static Primitive polygon(std::vector<Vec2> ccw, PrimitiveKind kind = PrimitiveKind::Polygon) {
        Primitive p;
        p.kind = kind;
        p.vertices = std::move(ccw);
        return p;
    }

    // Negative inside the primitive, positive outside, zero on the boundary.
    double signed_distance(Vec2 p) const {
        if (kind == PrimitiveKind::Disk) return (p - center).norm() - radius;
        double d = boundary_distance(p);
        return contains_closed_poly(p) ? -d : d;
    }

    bool contains_open(Vec2 p) const {
        if (kind == PrimitiveKind::Disk) return (p - center).norm() < radius;
        for (std::size_t i = 0; i < vertices.size(); ++i) {
            Vec2 a = vertices[i];
            Vec2 b = vertices[(i + 1) % vertices.size()];
            if ((b - a).cross(p - a) <= 0) return false;
        }
        return true;
    }

    bool contains_closed(Vec2 p) const {
        if (kind == PrimitiveKind::Disk) return (p - center).norm() <= radius;
        return contains_closed_poly(p);
    }

    double perimeter() const {
        if (kind == PrimitiveKind::Disk) return 2.0 * M_PI * radius;
        double s = 0;
        for (std::size_t i = 0; i < vertices.size(); ++i)
            s += (vertices[(i + 1) % vertices.size()] - vertices[i]).norm();
        return s;
    }

    // Loose bound used for the rejection sampler's separation test.
    double bounding_radius() const {
        if (kind == PrimitiveKind::Disk) return radius;
        Vec2 c = centroid();
        double r = 0;
        for (const auto& v : vertices) r = std::max(r, (v - c).norm());
        return r;
    }
    Vec2 centroid() const {
        if (kind == PrimitiveKind::Disk) return center;
        Vec2 c{};
        for (const auto& v : vertices) c = c + v;
        return (1.0 / static_cast<double>(vertices.size())) * c;
    }

private:
    bool contains_closed_poly(Vec2 p) const {
        for (std::size_t i = 0; i < vertices.size(); ++i) {
            Vec2 a = vertices[i];
            Vec2 b = vertices[(i + 1) % vertices.size()];
            if ((b - a).cross(p - a) < 0) return false;
        }
        return true;
    }
    double boundary_distance(Vec2 p) const {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < vertices.size(); ++i)
            d = std::min(d, dist_point_segment(p, vertices[i], vertices[(i + 1) % vertices.size()]));
        return d;
    }
};

// Outer-square sides come first in the component numbering; inner primitive
// i is component 4 + i.
enum class ComponentRole : std::uint8_t { Bottom = 0, Right = 1, Top = 2, Left = 3, Inner = 4 };

struct BoundarySample {
    Vec2 point{};
    Vec2 normal{};  // unit, pointing out of the computational region
    int component = 0;
    ComponentRole role = ComponentRole::Bottom;
};

// Omega = [-1,1]^2 minus the union of the primitives.
struct Domain {
    std::vector<Primitive> primitives;

    bool contains(Vec2 p) const {
        if (!(p.x > -1.0 && p.x < 1.0 && p.y > -1.0 && p.y < 1.0)) return false;
        for (const auto& prim : primitives)
            if (prim.contains_closed(p)) return false;
        return true;
    }

    // Closure membership: closed square minus open primitives.
    bool in_closure(Vec2 p) const {
        if (!(p.x >= -1.0 && p.x <= 1.0 && p.y >= -1.0 && p.y <= 1.0)) return false;
        for (const auto& prim : primitives)
            if (prim.contains_open(p)) return false;
        return true;
    }

    int component_count() const { return 4 + static_cast<int>(primitives.size()); }

    // Unsigned distance from p to the named component.
    double component_distance(Vec2 p, int component) const {
        switch (component) {
            case 0: return std::abs(p.y + 1.0);
            case 1: return std::abs(p.x - 1.0);
            case 2: return std::abs(p.y - 1.0);
            case 3: return std::abs(p.x + 1.0);
            default: return std::abs(primitives[static_cast<std::size_t>(component - 4)]
                                         .signed_distance(p));
        }
    }

    // Fraction of probe-grid cells inside Omega.
    double area_fraction(int res = 64) const {
        int in = 0;
        for (int i = 0; i < res; ++i)
            for (int j = 0; j < res; ++j) {
                Vec2 p{-1.0 + (j + 0.5) * 2.0 / res, -1.0 + (i + 0.5) * 2.0 / res};
                if (contains(p)) ++in;
            }
        return static_cast<double>(in) / (res * res);
    }
};

namespace detail {

inline void emit_segment(const Domain& dom, Vec2 a, Vec2 b, Vec2 normal, int component,
                         ComponentRole role, double spacing, std::vector<BoundarySample>& out) {
    double len = (b - a).norm();
    int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    for (int k = 0; k < n; ++k) {  // half-open: the end vertex starts the next segment
        Vec2 p = a + (static_cast<double>(k) / n) * (b - a);
        // Keep only points that actually lie on the boundary of Omega: step
        // inward must stay in the closure, step outward must leave Omega.
        const double eps = 1e-6;
        if (!dom.in_closure(p - eps * normal)) continue;
        if (dom.contains(p + eps * normal)) continue;
        out.push_back({p, normal, component, role});
    }
}

}  // namespace detail

// Points along every boundary component at arc-length spacing <= spacing,
// each with the outward unit normal (out of Omega; for inner components that
// is into the subtracted primitive).
inline std::vector<BoundarySample> boundary_samples(const Domain& dom, double spacing) {
    if (!(spacing > 0)) throw std::invalid_argument("spacing must be positive");
    std::vector<BoundarySample> out;
    const Vec2 bl{-1, -1}, br{1, -1}, tr{1, 1}, tl{-1, 1};
    detail::emit_segment(dom, bl, br, {0, -1}, 0, ComponentRole::Bottom, spacing, out);
    detail::emit_segment(dom, br, tr, {1, 0}, 1, ComponentRole::Right, spacing, out);
    detail::emit_segment(dom, tr, tl, {0, 1}, 2, ComponentRole::Top, spacing, out);
    detail::emit_segment(dom, tl, bl, {-1, 0}, 3, ComponentRole::Left, spacing, out);

    for (std::size_t pi = 0; pi < dom.primitives.size(); ++pi) {
        const Primitive& prim = dom.primitives[pi];
        int component = 4 + static_cast<int>(pi);
        if (prim.kind == PrimitiveKind::Disk) {
            int n = std::max(3, static_cast<int>(std::ceil(prim.perimeter() / spacing)));
            for (int k = 0; k < n; ++k) {
                double th = 2.0 * M_PI * k / n;
                Vec2 dir{std::cos(th), std::sin(th)};
                Vec2 p = prim.center + prim.radius * dir;
                Vec2 normal = -1.0 * dir;  // into the disk = out of Omega
                const double eps = 1e-6;
                if (!dom.in_closure(p - eps * normal)) continue;
                if (dom.contains(p + eps * normal)) continue;
                out.push_back({p, normal, component, ComponentRole::Inner});
            }
        } else {
            const auto& vs = prim.vertices;
            for (std::size_t i = 0; i < vs.size(); ++i) {
                Vec2 a = vs[i];
                Vec2 b = vs[(i + 1) % vs.size()];
                Vec2 d = (b - a).normalized();
                Vec2 normal{-d.y, d.x};  // CCW edges: interior of the primitive on the left
                detail::emit_segment(dom, a, b, normal, component, ComponentRole::Inner, spacing,
                                     out);
            }
        }
    }
    return out;
}

struct GeometryConfig {
    int min_primitives = 0;
    int max_primitives = 3;
    double min_size = 0.05;   // characteristic radius / half-extent
    double max_size = 0.4;
    double margin = 0.05;     // clearance to the square and between primitives
    double min_area_fraction = 0.05;
    int max_attempts = 100;
};

namespace detail {

// Andrew monotone chain; returns CCW hull.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    auto build = [&](bool lower) {
        std::vector<Vec2> h;
        for (std::size_t idx = 0; idx < pts.size(); ++idx) {
            Vec2 p = lower ? pts[idx] : pts[pts.size() - 1 - idx];
            while (h.size() >= 2 &&
                   (h[h.size() - 1] - h[h.size() - 2]).cross(p - h[h.size() - 1]) <= 0)
                h.pop_back();
            h.push_back(p);
        }
        h.pop_back();
        return h;
    };
    auto lo = build(true);
    auto hi = build(false);
    lo.insert(lo.end(), hi.begin(), hi.end());
    return lo;
}

// Shape sampled around the origin first so its true bounding radius is known
// before a center inside the square (with clearance) is chosen.
inline Primitive sample_primitive(Rng& rng, const GeometryConfig& cfg) {
    double size = rng.uniform(cfg.min_size, cfg.max_size);
    Primitive shape;
    switch (rng.below(4)) {
        case 0: shape = Primitive::disk({0, 0}, size); break;
        case 1: {
            double hx = size;
            double hy = rng.uniform(cfg.min_size, size);
            shape = Primitive::rectangle({-hx, -hy}, {hx, hy});
            break;
        }
        case 2:
        default: {
            bool triangle = rng.below(2) == 0;
            for (int tries = 0; tries < 32 && shape.vertices.empty(); ++tries) {
                std::vector<Vec2> pts;
                int cloud = triangle ? 3 : rng.range_int(6, 8);
                for (int i = 0; i < cloud; ++i) {
                    double th = rng.uniform(0, 2.0 * M_PI);
                    double r = size * std::sqrt(rng.uniform(0.25, 1.0));
                    pts.push_back({r * std::cos(th), r * std::sin(th)});
                }
                auto hull = convex_hull(pts);
                if (static_cast<int>(hull.size()) < 3) continue;
                PrimitiveKind kind = (triangle && hull.size() == 3) ? PrimitiveKind::Triangle
                                                                    : PrimitiveKind::Polygon;
                shape = Primitive::polygon(std::move(hull), kind);
            }
            if (shape.vertices.empty()) shape = Primitive::disk({0, 0}, size);
            break;
        }
    }
    Vec2 origin_centroid = shape.centroid();
    double rb = 0;
    if (shape.kind == PrimitiveKind::Disk) {
        rb = shape.radius;
    } else {
        for (const auto& v : shape.vertices) rb = std::max(rb, (v - origin_centroid).norm());
    }
    double clear = rb + cfg.margin;
    Vec2 c{rng.uniform(-1.0 + clear, 1.0 - clear), rng.uniform(-1.0 + clear, 1.0 - clear)};
    Vec2 shift = c - origin_centroid;
    if (shape.kind == PrimitiveKind::Disk) {
        shape.center = c;
    } else {
        for (auto& v : shape.vertices) v = v + shift;
    }
    return shape;
}

}  // namespace detail

// Randomized CSG domain: the unit square minus 0..3 disjoint primitives.
inline Domain sample_domain(Rng& rng, const GeometryConfig& cfg = {}) {
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        Domain dom;
        int count = rng.range_int(cfg.min_primitives, cfg.max_primitives);
        bool ok = true;
        for (int i = 0; i < count && ok; ++i) {
            bool placed = false;
            for (int tries = 0; tries < 32 && !placed; ++tries) {
                Primitive p = detail::sample_primitive(rng, cfg);
                bool clash = false;
                for (const auto& q : dom.primitives) {
                    double gap = (p.centroid() - q.centroid()).norm() - p.bounding_radius() -
                                 q.bounding_radius();
                    if (gap < cfg.margin) {
                        clash = true;
                        break;
                    }
                }
                if (!clash) {
                    dom.primitives.push_back(std::move(p));
                    placed = true;
                }
            }
            ok = placed;
        }
        if (!ok) continue;
        if (dom.area_fraction() < cfg.min_area_fraction) continue;
        return dom;
    }
    throw std::runtime_error("domain sampling exhausted its attempt budget");
}

}  // namespace hypino
