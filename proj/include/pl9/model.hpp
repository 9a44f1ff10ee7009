#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pl9/errors.hpp"
#include "pl9/interval_set.hpp"

namespace pl9 {

using VarId = int32_t;

// Arithmetic expression over decision variables, the backend-neutral form
// every solver compiles from.
struct Expr {
    enum class K : uint8_t {
        Const, Var, Add, Sub, Neg, Mul, Div, Mod, Abs, Min2, Max2, Sum,
    };
    K k = K::Const;
    int64_t c = 0;  // Const
    VarId v = -1;   // Var
    std::vector<Expr> kids;

    static Expr constant(int64_t c) {
        Expr e; e.k = K::Const; e.c = c; return e;
    }
    static Expr var(VarId v) {
        Expr e; e.k = K::Var; e.v = v; return e;
    }
    static Expr node(K k, std::vector<Expr> kids) {
        Expr e; e.k = k; e.kids = std::move(kids); return e;
    }
};

enum class CmpOp : uint8_t { Eq, Ne, Ge, Gt, Le, Lt };

inline const char* cmp_op_name(CmpOp op) {
    switch (op) {
        case CmpOp::Eq: return "#=";
        case CmpOp::Ne: return "#!=";
        case CmpOp::Ge: return "#>=";
        case CmpOp::Gt: return "#>";
        case CmpOp::Le: return "#=<";
        case CmpOp::Lt: return "#<";
    }
    return "?";
}

struct Cmp {
    Expr lhs, rhs;
    CmpOp op = CmpOp::Eq;
};

// Boolean combination of reifiable pieces: 0/1 variables, comparison leaves,
// and the connectives #/\ #\/ #~ #^ #<=> #=>.
struct BoolExpr {
    enum class K : uint8_t {
        ConstTrue, ConstFalse, Lit01, CmpLeaf, Not, And, Or, Xor, Iff, Imp,
    };
    K k = K::ConstTrue;
    VarId v = -1;                    // Lit01
    std::shared_ptr<Cmp> cmp;        // CmpLeaf
    std::vector<BoolExpr> kids;

    static BoolExpr lit(VarId v) {
        BoolExpr b; b.k = K::Lit01; b.v = v; return b;
    }
    static BoolExpr leaf(Cmp c) {
        BoolExpr b; b.k = K::CmpLeaf; b.cmp = std::make_shared<Cmp>(std::move(c));
        return b;
    }
    static BoolExpr node(K k, std::vector<BoolExpr> kids) {
        BoolExpr b; b.k = k; b.kids = std::move(kids); return b;
    }
};

struct Constraint {
    enum class K : uint8_t {
        Arith,       // cmp
        Bool,        // bexpr asserted true
        Reif,        // bvar #<=> cmp
        AllDiff,     // exprs pairwise distinct
        Element,     // exprs[idx] (1-based) = value; idx and value in kids
        TableIn,     // tuple of exprs restricted to tuples
        TableNotIn,
    };
    K k = K::Arith;
    Cmp cmp;                                  // Arith, Reif
    VarId bvar = -1;                          // Reif
    BoolExpr bexpr;                           // Bool
    std::vector<Expr> exprs;                  // AllDiff list, Element list,
                                              // TableIn tuple
    Expr idx, val;                            // Element
    std::vector<std::vector<int64_t>> tuples; // TableIn / TableNotIn
};

// Decision variables with interval-set domains plus posted constraints.
class Model {
public:
    VarId new_var(IntervalSet dom, std::string name = "") {
        domains_.push_back(std::move(dom));
        names_.push_back(std::move(name));
        return static_cast<VarId>(domains_.size() - 1);
    }

    size_t var_count() const { return domains_.size(); }
    const IntervalSet& domain(VarId v) const { return domains_[v]; }
    const std::string& name(VarId v) const { return names_[v]; }

    // Intersects; returns false when the domain becomes empty.
    bool restrict_domain(VarId v, const IntervalSet& with) {
        domains_[v] = domains_[v].intersect(with);
        return !domains_[v].empty();
    }

    void post(Constraint c) { constraints_.push_back(std::move(c)); }
    const std::vector<Constraint>& constraints() const { return constraints_; }

    // --- reference semantics -------------------------------------------------
    // Direct evaluation of the model over a full assignment. This is the
    // meaning every backend must agree with; tests and the exhaustive MIP
    // checker use it as the oracle.

    int64_t eval(const Expr& e, const std::vector<int64_t>& a) const {
        switch (e.k) {
            case Expr::K::Const: return e.c;
            case Expr::K::Var: return a[e.v];
            case Expr::K::Add: return eval(e.kids[0], a) + eval(e.kids[1], a);
            case Expr::K::Sub: return eval(e.kids[0], a) - eval(e.kids[1], a);
            case Expr::K::Neg: return -eval(e.kids[0], a);
            case Expr::K::Mul: return eval(e.kids[0], a) * eval(e.kids[1], a);
            case Expr::K::Div: {
                int64_t x = eval(e.kids[0], a), y = eval(e.kids[1], a);
                if (y == 0) throw Error(ErrorKind::type, "division by zero");
                // floor division
                int64_t q = x / y, r = x % y;
                if (r != 0 && ((r < 0) != (y < 0))) --q;
                return q;
            }
            case Expr::K::Mod: {
                int64_t x = eval(e.kids[0], a), y = eval(e.kids[1], a);
                if (y == 0) throw Error(ErrorKind::type, "mod by zero");
                int64_t r = x % y;
                if (r != 0 && ((r < 0) != (y < 0))) r += y;
                return r;
            }
            case Expr::K::Abs: {
                int64_t x = eval(e.kids[0], a);
                return x < 0 ? -x : x;
            }
            case Expr::K::Min2:
                return std::min(eval(e.kids[0], a), eval(e.kids[1], a));
            case Expr::K::Max2:
                return std::max(eval(e.kids[0], a), eval(e.kids[1], a));
            case Expr::K::Sum: {
                int64_t s = 0;
                for (const Expr& kid : e.kids) s += eval(kid, a);
                return s;
            }
        }
        throw Error(ErrorKind::internal, "eval: bad expr");
    }

    bool holds(const Cmp& c, const std::vector<int64_t>& a) const {
        int64_t l = eval(c.lhs, a), r = eval(c.rhs, a);
        switch (c.op) {
            case CmpOp::Eq: return l == r;
            case CmpOp::Ne: return l != r;
            case CmpOp::Ge: return l >= r;
            case CmpOp::Gt: return l > r;
            case CmpOp::Le: return l <= r;
            case CmpOp::Lt: return l < r;
        }
        return false;
    }

    bool holds(const BoolExpr& b, const std::vector<int64_t>& a) const {
        switch (b.k) {
            case BoolExpr::K::ConstTrue: return true;
            case BoolExpr::K::ConstFalse: return false;
            case BoolExpr::K::Lit01: return a[b.v] != 0;
            case BoolExpr::K::CmpLeaf: return holds(*b.cmp, a);
            case BoolExpr::K::Not: return !holds(b.kids[0], a);
            case BoolExpr::K::And:
                return holds(b.kids[0], a) && holds(b.kids[1], a);
            case BoolExpr::K::Or:
                return holds(b.kids[0], a) || holds(b.kids[1], a);
            case BoolExpr::K::Xor:
                return holds(b.kids[0], a) != holds(b.kids[1], a);
            case BoolExpr::K::Iff:
                return holds(b.kids[0], a) == holds(b.kids[1], a);
            case BoolExpr::K::Imp:
                return !holds(b.kids[0], a) || holds(b.kids[1], a);
        }
        return false;
    }

    bool holds(const Constraint& c, const std::vector<int64_t>& a) const {
        switch (c.k) {
            case Constraint::K::Arith: return holds(c.cmp, a);
            case Constraint::K::Bool: return holds(c.bexpr, a);
            case Constraint::K::Reif:
                return (a[c.bvar] != 0) == holds(c.cmp, a);
            case Constraint::K::AllDiff: {
                for (size_t i = 0; i < c.exprs.size(); ++i)
                    for (size_t j = i + 1; j < c.exprs.size(); ++j)
                        if (eval(c.exprs[i], a) == eval(c.exprs[j], a))
                            return false;
                return true;
            }
            case Constraint::K::Element: {
                int64_t i = eval(c.idx, a);
                if (i < 1 || i > static_cast<int64_t>(c.exprs.size()))
                    return false;
                return eval(c.exprs[i - 1], a) == eval(c.val, a);
            }
            case Constraint::K::TableIn:
            case Constraint::K::TableNotIn: {
                std::vector<int64_t> tup;
                tup.reserve(c.exprs.size());
                for (const Expr& e : c.exprs) tup.push_back(eval(e, a));
                bool found = false;
                for (const auto& t : c.tuples)
                    if (t == tup) { found = true; break; }
                return c.k == Constraint::K::TableIn ? found : !found;
            }
        }
        return false;
    }

    bool solution(const std::vector<int64_t>& a) const {
        for (size_t v = 0; v < domains_.size(); ++v)
            if (!domains_[v].contains(a[v])) return false;
        for (const Constraint& c : constraints_)
            if (!holds(c, a)) return false;
        return true;
    }

    // Enumerates the full assignment box; refuses oversized boxes.
    template <class Fn>
    void enumerate_box(uint64_t limit, Fn&& fn) const {
        uint64_t total = 1;
        for (const IntervalSet& d : domains_) {
            if (d.empty()) return;
            total *= d.size();
            if (total > limit)
                throw Error(ErrorKind::contract,
                            "assignment box exceeds enumeration limit");
        }
        std::vector<int64_t> a(domains_.size());
        enumerate_rec(0, a, fn);
    }

    // Bounds of an expression over the current domains (interval arithmetic).
    std::pair<int64_t, int64_t> bounds(const Expr& e) const {
        switch (e.k) {
            case Expr::K::Const: return {e.c, e.c};
            case Expr::K::Var: {
                const IntervalSet& d = domains_[e.v];
                if (d.empty())
                    throw Error(ErrorKind::domain, "empty domain");
                return {d.min(), d.max()};
            }
            case Expr::K::Add: {
                auto [a, b] = bounds(e.kids[0]);
                auto [c2, d] = bounds(e.kids[1]);
                return {a + c2, b + d};
            }
            case Expr::K::Sub: {
                auto [a, b] = bounds(e.kids[0]);
                auto [c2, d] = bounds(e.kids[1]);
                return {a - d, b - c2};
            }
            case Expr::K::Neg: {
                auto [a, b] = bounds(e.kids[0]);
                return {-b, -a};
            }
            case Expr::K::Mul: {
                auto [a, b] = bounds(e.kids[0]);
                auto [c2, d] = bounds(e.kids[1]);
                int64_t p1 = a * c2, p2 = a * d, p3 = b * c2, p4 = b * d;
                return {std::min(std::min(p1, p2), std::min(p3, p4)),
                        std::max(std::max(p1, p2), std::max(p3, p4))};
            }
            case Expr::K::Sum: {
                int64_t lo = 0, hi = 0;
                for (const Expr& kid : e.kids) {
                    auto [a, b] = bounds(kid);
                    lo += a; hi += b;
                }
                return {lo, hi};
            }
            case Expr::K::Abs: {
                auto [a, b] = bounds(e.kids[0]);
                if (a >= 0) return {a, b};
                if (b <= 0) return {-b, -a};
                return {0, std::max(-a, b)};
            }
            case Expr::K::Min2: {
                auto [a, b] = bounds(e.kids[0]);
                auto [c2, d] = bounds(e.kids[1]);
                return {std::min(a, c2), std::min(b, d)};
            }
            case Expr::K::Max2: {
                auto [a, b] = bounds(e.kids[0]);
                auto [c2, d] = bounds(e.kids[1]);
                return {std::max(a, c2), std::max(b, d)};
            }
            case Expr::K::Div:
            case Expr::K::Mod: {
                // conservative: only constant positive divisors are posted
                auto [a, b] = bounds(e.kids[0]);
                auto [c2, d] = bounds(e.kids[1]);
                if (c2 == d && c2 > 0) {
                    if (e.k == Expr::K::Mod) return {0, c2 - 1};
                    auto fdiv = [](int64_t x, int64_t y) {
                        int64_t q = x / y, r = x % y;
                        if (r != 0 && ((r < 0) != (y < 0))) --q;
                        return q;
                    };
                    return {fdiv(a, c2), fdiv(b, c2)};
                }
                (void)a; (void)b;
                throw Error(ErrorKind::unsupported_constraint,
                            "div/mod requires a positive constant divisor");
            }
        }
        throw Error(ErrorKind::internal, "bounds: bad expr");
    }

private:
    template <class Fn>
    void enumerate_rec(size_t i, std::vector<int64_t>& a, Fn& fn) const {
        if (i == domains_.size()) { fn(a); return; }
        domains_[i].for_each([&](int64_t v) {
            a[i] = v;
            enumerate_rec(i + 1, a, fn);
        });
    }

    std::vector<IntervalSet> domains_;
    std::vector<std::string> names_;
    std::vector<Constraint> constraints_;
};

struct SolveOptions {
    enum class Labeling : uint8_t { Default, FirstFail };
    enum class Objective : uint8_t { None, Min, Max };
    enum class Backend : uint8_t { Cp, Sat, Mip };
    Labeling labeling = Labeling::Default;
    Objective objective = Objective::None;
    Expr objective_expr;
    Backend backend = Backend::Cp;
    uint64_t seed = 0;
    bool sat_learning = true;
};

}  // namespace pl9
