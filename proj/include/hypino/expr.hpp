#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypino/io.hpp"
#include "hypino/rng.hpp"

namespace hypino {

// Basis functions available to manufactured solutions. `Identity` is the
// plain x |-> x entry of the library; it never survives construction because
// unary(Identity, e) collapses to e. `Exp` is not part of the sampled term
// library; it exists so closed-form benchmark solutions (decaying heat modes)
// are expressible, and differentiation stays closed over it.
enum class Basis : std::uint8_t { Identity, Sin, Cos, Tanh, Sigmoid, InvQuad, Exp };

inline const char* basis_name(Basis b) {
    switch (b) {
        case Basis::Identity: return "id";
        case Basis::Sin: return "sin";
        case Basis::Cos: return "cos";
        case Basis::Tanh: return "tanh";
        case Basis::Sigmoid: return "sig";
        case Basis::InvQuad: return "iq";
        case Basis::Exp: return "exp";
    }
    return "?";
}

struct EvalOverflow : std::runtime_error {
    explicit EvalOverflow(const std::string& subtree)
        : std::runtime_error("non-finite value in subtree " + subtree) {}
};

// Immutable symbolic expression over (x, y). Children are shared, never
// mutated, so copies are cheap and evaluation is thread-safe.
class Expr {
public:
    enum class Kind : std::uint8_t { Const, X, Y, Add, Mul, Unary };

    Expr() : Expr(constant(0.0)) {}

    static Expr constant(double v) {
        auto n = std::make_shared<Node>();
        n->kind = Kind::Const;
        n->value = v;
        return Expr(std::move(n));
    }
    static Expr x() { return leaf(Kind::X); }
    static Expr y() { return leaf(Kind::Y); }

    // n-ary sum with constant folding and zero elimination.
    static Expr add(std::vector<Expr> terms) {
        std::vector<Expr> kept;
        double c = 0.0;
        for (auto& t : terms) {
            if (t.kind() == Kind::Const) {
                c += t.value();
            } else if (t.kind() == Kind::Add) {
                for (const auto& sub : t.children())
                    if (sub.kind() == Kind::Const)
                        c += sub.value();
                    else
                        kept.push_back(sub);
            } else {
                kept.push_back(t);
            }
        }
        if (c != 0.0) kept.push_back(constant(c));
        if (kept.empty()) return constant(0.0);
        if (kept.size() == 1) return kept[0];
        auto n = std::make_shared<Node>();
        n->kind = Kind::Add;
        n->children = std::move(kept);
        return Expr(std::move(n));
    }

    // n-ary product with folding, unit and zero elimination.
    static Expr mul(std::vector<Expr> factors) {
        std::vector<Expr> kept;
        double c = 1.0;
        for (auto& f : factors) {
            if (f.kind() == Kind::Const) {
                c *= f.value();
            } else if (f.kind() == Kind::Mul) {
                for (const auto& sub : f.children())
                    if (sub.kind() == Kind::Const)
                        c *= sub.value();
                    else
                        kept.push_back(sub);
            } else {
                kept.push_back(f);
            }
        }
        if (c == 0.0) return constant(0.0);
        if (c != 1.0) kept.insert(kept.begin(), constant(c));
        if (kept.empty()) return constant(1.0);
        if (kept.size() == 1) return kept[0];
        auto n = std::make_shared<Node>();
        n->kind = Kind::Mul;
        n->children = std::move(kept);
        return Expr(std::move(n));
    }

    static Expr unary(Basis b, Expr inner) {
        if (b == Basis::Identity) return inner;
        if (inner.kind() == Kind::Const) {
            return constant(apply_basis(b, inner.value()));
        }
        auto n = std::make_shared<Node>();
        n->kind = Kind::Unary;
        n->basis = b;
        n->children.push_back(std::move(inner));
        return Expr(std::move(n));
    }

    // Convenience combinators.
    friend Expr operator+(const Expr& a, const Expr& b) { return add({a, b}); }
    friend Expr operator-(const Expr& a, const Expr& b) {
        return add({a, mul({constant(-1.0), b})});
    }
    friend Expr operator*(const Expr& a, const Expr& b) { return mul({a, b}); }
    friend Expr operator*(double a, const Expr& b) { return mul({constant(a), b}); }

    Kind kind() const { return node_->kind; }
    double value() const { return node_->value; }
    Basis basis() const { return node_->basis; }
    const std::vector<Expr>& children() const { return node_->children; }

    bool is_constant() const { return kind() == Kind::Const; }
    bool is_zero() const { return is_constant() && value() == 0.0; }

    // Exact value at (x, y). Throws EvalOverflow naming the first subtree
    // whose value is non-finite.
    double eval(double px, double py) const {
        double v = eval_raw(px, py);
        if (!std::isfinite(v)) throw EvalOverflow(find_overflow(px, py));
        return v;
    }

    // Evaluation without the overflow diagnostics; returns possibly
    // non-finite values. Used by bulk probes that handle overflow themselves.
    double eval_raw(double px, double py) const {
        switch (kind()) {
            case Kind::Const: return node_->value;
            case Kind::X: return px;
            case Kind::Y: return py;
            case Kind::Add: {
                double s = 0.0;
                for (const auto& c : children()) s += c.eval_raw(px, py);
                return s;
            }
            case Kind::Mul: {
                double p = 1.0;
                for (const auto& c : children()) p *= c.eval_raw(px, py);
                return p;
            }
            case Kind::Unary: return apply_basis(basis(), children()[0].eval_raw(px, py));
        }
        return 0.0;
    }

    // Exact partial derivative as a new Expr over the same basis closure.
    Expr derivative(char var) const {
        switch (kind()) {
            case Kind::Const: return constant(0.0);
            case Kind::X: return constant(var == 'x' ? 1.0 : 0.0);
            case Kind::Y: return constant(var == 'y' ? 1.0 : 0.0);
            case Kind::Add: {
                std::vector<Expr> parts;
                parts.reserve(children().size());
                for (const auto& c : children()) parts.push_back(c.derivative(var));
                return add(std::move(parts));
            }
            case Kind::Mul: {
                // product rule over n factors
                std::vector<Expr> terms;
                for (std::size_t i = 0; i < children().size(); ++i) {
                    std::vector<Expr> factors;
                    for (std::size_t j = 0; j < children().size(); ++j)
                        factors.push_back(j == i ? children()[j].derivative(var) : children()[j]);
                    terms.push_back(mul(std::move(factors)));
                }
                return add(std::move(terms));
            }
            case Kind::Unary: {
                const Expr& u = children()[0];
                Expr du = u.derivative(var);
                if (du.is_zero()) return constant(0.0);
                Expr outer;
                switch (basis()) {
                    case Basis::Identity: return du;
                    case Basis::Sin: outer = unary(Basis::Cos, u); break;
                    case Basis::Cos: outer = mul({constant(-1.0), unary(Basis::Sin, u)}); break;
                    case Basis::Tanh: {
                        Expr t = unary(Basis::Tanh, u);
                        outer = add({constant(1.0), mul({constant(-1.0), t, t})});
                        break;
                    }
                    case Basis::Sigmoid: {
                        Expr s = unary(Basis::Sigmoid, u);
                        outer = mul({s, add({constant(1.0), mul({constant(-1.0), s})})});
                        break;
                    }
                    case Basis::InvQuad: {
                        // d/du 1/(1+u^2) = -2u / (1+u^2)^2
                        Expr q = unary(Basis::InvQuad, u);
                        outer = mul({constant(-2.0), u, q, q});
                        break;
                    }
                    case Basis::Exp: outer = unary(Basis::Exp, u); break;
                }
                return mul({outer, du});
            }
        }
        return constant(0.0);
    }

    int depth() const {
        int d = 0;
        for (const auto& c : children()) d = std::max(d, c.depth());
        return d + 1;
    }

    std::size_t node_count() const {
        std::size_t n = 1;
        for (const auto& c : children()) n += c.node_count();
        return n;
    }

    // Replace x and y by arbitrary expressions (used for affine remapping).
    Expr substitute(const Expr& for_x, const Expr& for_y) const {
        switch (kind()) {
            case Kind::Const: return *this;
            case Kind::X: return for_x;
            case Kind::Y: return for_y;
            case Kind::Add:
            case Kind::Mul: {
                std::vector<Expr> subs;
                subs.reserve(children().size());
                for (const auto& c : children()) subs.push_back(c.substitute(for_x, for_y));
                return kind() == Kind::Add ? add(std::move(subs)) : mul(std::move(subs));
            }
            case Kind::Unary:
                return unary(basis(), children()[0].substitute(for_x, for_y));
        }
        return *this;
    }

    // Compact prefix serialization; round-trips exactly.
    std::string serialize() const {
        std::string out;
        serialize_to(out);
        return out;
    }

    static Expr deserialize(std::string_view text) {
        std::size_t pos = 0;
        Expr e = parse(text, pos);
        skip_ws(text, pos);
        if (pos != text.size()) throw IoError("trailing characters in expression");
        return e;
    }

    bool same_as(const Expr& other) const { return serialize() == other.serialize(); }

private:
    struct Node {
        Kind kind = Kind::Const;
        Basis basis = Basis::Identity;
        double value = 0.0;
        std::vector<Expr> children;
    };
    using NodePtr = std::shared_ptr<const Node>;

    explicit Expr(NodePtr n) : node_(std::move(n)) {}

    static Expr leaf(Kind k) {
        auto n = std::make_shared<Node>();
        n->kind = k;
        return Expr(std::move(n));
    }

    static double apply_basis(Basis b, double v) {
        switch (b) {
            case Basis::Identity: return v;
            case Basis::Sin: return std::sin(v);
            case Basis::Cos: return std::cos(v);
            case Basis::Tanh: return std::tanh(v);
            case Basis::Sigmoid: return 1.0 / (1.0 + std::exp(-v));
            case Basis::InvQuad: return 1.0 / (1.0 + v * v);
            case Basis::Exp: return std::exp(v);
        }
        return v;
    }

    // Locates the shallowest subtree evaluating non-finite, for diagnostics.
    std::string find_overflow(double px, double py) const {
        for (const auto& c : children()) {
            if (!std::isfinite(c.eval_raw(px, py))) return c.find_overflow(px, py);
        }
        return serialize();
    }

    void serialize_to(std::string& out) const {
        switch (kind()) {
            case Kind::Const:
                out += format_double(node_->value);
                return;
            case Kind::X: out += 'x'; return;
            case Kind::Y: out += 'y'; return;
            case Kind::Add:
            case Kind::Mul:
                out += '(';
                out += (kind() == Kind::Add ? '+' : '*');
                for (const auto& c : children()) {
                    out += ' ';
                    c.serialize_to(out);
                }
                out += ')';
                return;
            case Kind::Unary:
                out += '(';
                out += basis_name(basis());
                out += ' ';
                children()[0].serialize_to(out);
                out += ')';
                return;
        }
    }

    static void skip_ws(std::string_view s, std::size_t& pos) {
        while (pos < s.size() && s[pos] == ' ') ++pos;
    }

    static Expr parse(std::string_view s, std::size_t& pos) {
        skip_ws(s, pos);
        if (pos >= s.size()) throw IoError("unexpected end of expression");
        char c = s[pos];
        if (c == 'x' || c == 'y') {
            ++pos;
            return c == 'x' ? x() : y();
        }
        if (c != '(') {
            std::size_t start = pos;
            while (pos < s.size() && s[pos] != ' ' && s[pos] != ')') ++pos;
            return constant(parse_double(s.substr(start, pos - start)));
        }
        ++pos;  // '('
        std::size_t start = pos;
        while (pos < s.size() && s[pos] != ' ') ++pos;
        std::string_view op = s.substr(start, pos - start);
        std::vector<Expr> kids;
        for (;;) {
            skip_ws(s, pos);
            if (pos >= s.size()) throw IoError("unterminated expression");
            if (s[pos] == ')') {
                ++pos;
                break;
            }
            kids.push_back(parse(s, pos));
        }
        if (op == "+") return raw_nary(Kind::Add, std::move(kids));
        if (op == "*") return raw_nary(Kind::Mul, std::move(kids));
        for (Basis b :
             {Basis::Sin, Basis::Cos, Basis::Tanh, Basis::Sigmoid, Basis::InvQuad, Basis::Exp}) {
            if (op == basis_name(b)) {
                if (kids.size() != 1) throw IoError("unary node wants one child");
                auto n = std::make_shared<Node>();
                n->kind = Kind::Unary;
                n->basis = b;
                n->children = std::move(kids);
                return Expr(std::move(n));
            }
        }
        throw IoError("unknown expression operator: " + std::string(op));
    }

    // Deserialization must not re-simplify, otherwise round-trips would not
    // be byte-exact for already-serialized trees.
    static Expr raw_nary(Kind k, std::vector<Expr> kids) {
        if (kids.empty()) throw IoError("empty n-ary node");
        if (kids.size() == 1) return kids[0];
        auto n = std::make_shared<Node>();
        n->kind = k;
        n->children = std::move(kids);
        return Expr(std::move(n));
    }

    NodePtr node_;
};

// One sampled update of the manufactured-solution builder:
// term = d * psi(a x + b y + c) + e, merged by `rule`.
struct TermSpec {
    double a = 0, b = 0, c = 0, d = 1, e = 0;
    Basis psi = Basis::Identity;
    enum class Rule : std::uint8_t { Add, Multiply, Compose } rule = Rule::Add;

    bool valid() const {
        const double two_pi = 2.0 * M_PI;
        return std::abs(a) <= 10.0 && std::abs(b) <= 10.0 && std::abs(c) <= two_pi &&
               std::abs(d) <= two_pi && std::abs(e) <= two_pi;
    }

    Expr term() const {
        Expr inner = Expr::add({Expr::mul({Expr::constant(a), Expr::x()}),
                                Expr::mul({Expr::constant(b), Expr::y()}),
                                Expr::constant(c)});
        return Expr::add(
            {Expr::mul({Expr::constant(d), Expr::unary(psi, inner)}), Expr::constant(e)});
    }

    Expr apply(const Expr& u) const {
        switch (rule) {
            case Rule::Add: return u + term();
            case Rule::Multiply: return u * term();
            case Rule::Compose: {
                Expr inner = Expr::add({Expr::mul({Expr::constant(a), u}), Expr::constant(c)});
                return Expr::add({Expr::mul({Expr::constant(d), Expr::unary(psi, inner)}),
                                  Expr::constant(e)});
            }
        }
        return u;
    }
};

struct SolutionSamplingConfig {
    int min_terms = 6;
    int max_terms = 10;
    double slope_limit = 10.0;    // |a|, |b| bound
    double shift_limit = 2.0 * M_PI;  // |c|, |d|, |e| bound
    double probe_bound = 1e6;     // reject solutions exceeding this on the probe grid
    int probe_res = 32;
    int max_depth = 64;           // per-branch cap, incl. first/second derivatives
    int max_attempts = 100;
};

inline TermSpec sample_term(Rng& rng, const SolutionSamplingConfig& cfg) {
    TermSpec t;
    t.a = rng.bernoulli(0.5) ? 0.0 : rng.uniform(-cfg.slope_limit, cfg.slope_limit);
    t.b = rng.bernoulli(0.5) ? 0.0 : rng.uniform(-cfg.slope_limit, cfg.slope_limit);
    t.c = rng.uniform(-cfg.shift_limit, cfg.shift_limit);
    t.d = rng.uniform(-cfg.shift_limit, cfg.shift_limit);
    t.e = rng.uniform(-cfg.shift_limit, cfg.shift_limit);
    static constexpr Basis kBases[6] = {Basis::Identity, Basis::Sin,     Basis::Cos,
                                        Basis::Tanh,     Basis::Sigmoid, Basis::InvQuad};
    t.psi = kBases[rng.below(6)];
    static constexpr TermSpec::Rule kRules[3] = {TermSpec::Rule::Add, TermSpec::Rule::Multiply,
                                                 TermSpec::Rule::Compose};
    t.rule = kRules[rng.below(3)];
    return t;
}

namespace detail {

inline bool solution_acceptable(const Expr& u, const SolutionSamplingConfig& cfg) {
    Expr ux = u.derivative('x');
    Expr uy = u.derivative('y');
    Expr uxx = ux.derivative('x');
    Expr uyy = uy.derivative('y');
    const Expr* branches[] = {&u, &ux, &uy, &uxx, &uyy};
    for (const Expr* e : branches)
        if (e->depth() > cfg.max_depth) return false;
    const int n = cfg.probe_res;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double px = -1.0 + (j + 0.5) * 2.0 / n;
            double py = -1.0 + (i + 0.5) * 2.0 / n;
            double v = u.eval_raw(px, py);
            if (!std::isfinite(v) || std::abs(v) > cfg.probe_bound) return false;
            // derivatives only need to stay finite; magnitude is unbounded
            if (!std::isfinite(uxx.eval_raw(px, py)) || !std::isfinite(uyy.eval_raw(px, py)))
                return false;
        }
    }
    return true;
}

}  // namespace detail

// Iterative construction of a random manufactured solution; resamples the
// whole tree when the result overflows the probe grid or exceeds the depth
// cap in any derivative branch.
inline Expr sample_manufactured_solution(Rng& rng, const SolutionSamplingConfig& cfg = {}) {
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        Expr u = Expr::constant(0.0);
        int n = rng.range_int(cfg.min_terms, cfg.max_terms);
        for (int i = 0; i < n; ++i) u = sample_term(rng, cfg).apply(u);
        if (detail::solution_acceptable(u, cfg)) return u;
    }
    throw std::runtime_error("manufactured-solution sampling exhausted its attempt budget");
}

}  // namespace hypino
