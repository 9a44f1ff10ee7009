#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pl9/model.hpp"

namespace pl9 {

// Integer linear model: bounded integer variables, binaries, and rows of the
// form sum(a_i * x_i) <= b. Solving is delegated to the LP file interface;
// the exhaustive checker below establishes that the linearization preserves
// the model's solution set on desk-scale boxes.
struct LinearModel {
    struct Var {
        int64_t lo = 0, hi = 0;
        bool binary = false;
    };
    struct Row {
        std::vector<std::pair<int, int64_t>> coefs;  // (var index, coefficient)
        int64_t rhs = 0;
    };
    enum class ObjKind : uint8_t { None, Min, Max };

    std::vector<Var> vars;
    std::vector<Row> rows;
    ObjKind obj_kind = ObjKind::None;
    std::vector<std::pair<int, int64_t>> obj;

    std::string var_name(int v) const {
        return (vars[v].binary ? "b" : "x") + std::to_string(v);
    }

    void validate() const {
        for (const Row& r : rows)
            for (auto [v, a] : r.coefs)
                if (v < 0 || v >= static_cast<int>(vars.size()))
                    throw Error(ErrorKind::internal,
                                "row references an undeclared variable");
        for (const Var& v : vars)
            if (v.binary && (v.lo != 0 || v.hi != 1))
                throw Error(ErrorKind::internal,
                            "binary variable must have bounds [0,1]");
    }
};

// Adjustments used by the mutation tests: added to the big-M constants.
struct LinearizeOptions {
    int64_t m1_adjust = 0;
    int64_t m2_adjust = 0;
};

class MipCompiler {
public:
    struct ReifInfo {
        int64_t m1 = 0, m2 = 0;
    };

    explicit MipCompiler(const Model& model, LinearizeOptions opt = {})
        : model_(model), opt_(opt) {
        orig_count_ = model.var_count();
        for (size_t v = 0; v < orig_count_; ++v) {
            const IntervalSet& d = model.domain(v);
            if (d.empty())
                throw Error(ErrorKind::domain, "empty domain in mip model");
            LinearModel::Var lv;
            lv.lo = d.min();
            lv.hi = d.max();
            lv.binary = lv.lo == 0 && lv.hi == 1;
            lm_.vars.push_back(lv);
        }
        // domain holes become disequalities on the hole values
        for (size_t v = 0; v < orig_count_; ++v) {
            const IntervalSet& d = model.domain(v);
            for (int64_t hole = d.min(); hole <= d.max(); ++hole)
                if (!d.contains(hole))
                    post_ne(LinForm{{{static_cast<int>(v), 1}}, -hole});
        }
        for (const Constraint& c : model.constraints()) post(c);
        if (!objective_posted_) lm_.obj_kind = LinearModel::ObjKind::None;
        lm_.validate();
    }

    void set_objective(LinearModel::ObjKind kind, const Expr& e) {
        LinForm f = lin_of(e);
        lm_.obj_kind = kind;
        lm_.obj.assign(f.coefs.begin(), f.coefs.end());
        objective_posted_ = true;
    }

    const LinearModel& linear_model() const { return lm_; }
    const std::vector<ReifInfo>& reif_info() const { return reif_info_; }
    size_t original_var_count() const { return orig_count_; }

private:
    // linear form sum(coefs) + c
    struct LinForm {
        std::map<int, int64_t> coefs;
        int64_t c = 0;
    };

    static LinForm scale(const LinForm& f, int64_t k) {
        LinForm out;
        out.c = f.c * k;
        if (k != 0)
            for (auto [v, a] : f.coefs) out.coefs[v] = a * k;
        return out;
    }
    static LinForm add(const LinForm& a, const LinForm& b, int64_t sb) {
        LinForm out = a;
        out.c += sb * b.c;
        for (auto [v, coef] : b.coefs) {
            out.coefs[v] += sb * coef;
            if (out.coefs[v] == 0) out.coefs.erase(v);
        }
        return out;
    }

    LinForm lin_of(const Expr& e) {
        switch (e.k) {
            case Expr::K::Const: { LinForm f; f.c = e.c; return f; }
            case Expr::K::Var: {
                LinForm f;
                f.coefs[e.v] = 1;
                return f;
            }
            case Expr::K::Add: return add(lin_of(e.kids[0]), lin_of(e.kids[1]), 1);
            case Expr::K::Sub: return add(lin_of(e.kids[0]), lin_of(e.kids[1]), -1);
            case Expr::K::Neg: return scale(lin_of(e.kids[0]), -1);
            case Expr::K::Sum: {
                LinForm out;
                for (const Expr& kid : e.kids) out = add(out, lin_of(kid), 1);
                return out;
            }
            case Expr::K::Mul: {
                LinForm a = lin_of(e.kids[0]);
                LinForm b = lin_of(e.kids[1]);
                if (a.coefs.empty()) return scale(b, a.c);
                if (b.coefs.empty()) return scale(a, b.c);
                throw Error(ErrorKind::unsupported_constraint,
                            "mip backend: variable*variable product");
            }
            default:
                throw Error(ErrorKind::unsupported_constraint,
                            "mip backend: nonlinear arithmetic function");
        }
    }

    int64_t ubd(const LinForm& f) const {
        int64_t u = f.c;
        for (auto [v, a] : f.coefs)
            u += a > 0 ? a * lm_.vars[v].hi : a * lm_.vars[v].lo;
        return u;
    }
    int64_t lbd(const LinForm& f) const {
        int64_t l = f.c;
        for (auto [v, a] : f.coefs)
            l += a > 0 ? a * lm_.vars[v].lo : a * lm_.vars[v].hi;
        return l;
    }

    // row: f <= 0
    void row_le0(const LinForm& f) {
        LinearModel::Row r;
        for (auto [v, a] : f.coefs) r.coefs.emplace_back(v, a);
        r.rhs = -f.c;
        lm_.rows.push_back(std::move(r));
    }

    int new_binary() {
        LinearModel::Var v;
        v.lo = 0; v.hi = 1; v.binary = true;
        lm_.vars.push_back(v);
        return static_cast<int>(lm_.vars.size() - 1);
    }

    // the paper's big-M pair for b <=> (f <= 0):
    //   f - M1*(1-b) <= 0      M1 = ubd(f) + 1
    //   -f + 1 - M2*b <= 0     M2 = -lbd(f) + 2
    void reif_le0(int b, bool bneg, const LinForm& f) {
        int64_t m1 = ubd(f) + 1 + opt_.m1_adjust;
        int64_t m2 = -lbd(f) + 2 + opt_.m2_adjust;
        reif_info_.push_back({m1, m2});
        int64_t cb = bneg ? -1 : 1;       // b literal as coefficient
        int64_t b0 = bneg ? 1 : 0;        // literal value when var == 0
        // f + M1*lit <= M1   where lit = b0 + cb*b
        LinForm r1 = f;
        r1.coefs[b] += m1 * cb;
        r1.c += m1 * b0 - m1;
        if (r1.coefs[b] == 0) r1.coefs.erase(b);
        row_le0(r1);
        // -f + 1 - M2*lit <= 0
        LinForm r2 = scale(f, -1);
        r2.c += 1;
        r2.coefs[b] -= m2 * cb;
        r2.c -= m2 * b0;
        if (r2.coefs[b] == 0) r2.coefs.erase(b);
        row_le0(r2);
    }

    // X != Y translated through the disjunction B1 \/ B2 with
    // B1 <=> (X <= Y-1) and B2 <=> (X >= Y+1)
    void post_ne(const LinForm& f) {
        int b1 = new_binary();
        int b2 = new_binary();
        LinForm le = f;  // f <= -1  i.e.  f + 1 <= 0
        le.c += 1;
        reif_le0(b1, false, le);
        LinForm ge = scale(f, -1);  // -f + 1 <= 0  i.e.  f >= 1
        ge.c += 1;
        reif_le0(b2, false, ge);
        LinForm disj;  // b1 + b2 >= 1
        disj.coefs[b1] = -1;
        disj.coefs[b2] = -1;
        disj.c = 1;
        row_le0(disj);
    }

    void post_cmp(const Cmp& c) {
        LinForm f = add(lin_of(c.lhs), lin_of(c.rhs), -1);
        switch (c.op) {
            case CmpOp::Le: row_le0(f); return;
            case CmpOp::Lt: f.c += 1; row_le0(f); return;
            case CmpOp::Ge: row_le0(scale(f, -1)); return;
            case CmpOp::Gt: {
                LinForm g = scale(f, -1);
                g.c += 1;
                row_le0(g);
                return;
            }
            case CmpOp::Eq:
                row_le0(f);
                row_le0(scale(f, -1));
                return;
            case CmpOp::Ne: post_ne(f); return;
        }
    }

    // literal = (var, negated); value = neg ? 1-v : v
    using Lit = std::pair<int, bool>;

    void require01(int v) {
        if (lm_.vars[v].lo < 0 || lm_.vars[v].hi > 1)
            throw Error(ErrorKind::type,
                        "boolean position requires a 0..1 variable");
    }

    static LinForm lit_form(Lit l, int64_t k) {
        // k * litvalue
        LinForm f;
        if (l.second) { f.c = k; f.coefs[l.first] = -k; }
        else f.coefs[l.first] = k;
        return f;
    }

    void reif_cmp(Lit b, const Cmp& c) {
        LinForm f = add(lin_of(c.lhs), lin_of(c.rhs), -1);
        switch (c.op) {
            case CmpOp::Le: reif_le0(b.first, b.second, f); return;
            case CmpOp::Lt: f.c += 1; reif_le0(b.first, b.second, f); return;
            case CmpOp::Ge:
                reif_le0(b.first, b.second, scale(f, -1));
                return;
            case CmpOp::Gt: {
                LinForm g = scale(f, -1);
                g.c += 1;
                reif_le0(b.first, b.second, g);
                return;
            }
            case CmpOp::Eq: {
                // b <=> (f<=0 and -f<=0)
                int b1 = new_binary(), b2 = new_binary();
                reif_le0(b1, false, f);
                reif_le0(b2, false, scale(f, -1));
                post_and(b, {b1, false}, {b2, false});
                return;
            }
            case CmpOp::Ne: {
                Cmp eq{c.lhs, c.rhs, CmpOp::Eq};
                reif_cmp({b.first, !b.second}, eq);
                return;
            }
        }
    }

    // z <=> x /\ y over binaries: z<=x, z<=y, z>=x+y-1
    void post_and(Lit z, Lit x, Lit y) {
        row_le0(add(lit_form(z, 1), lit_form(x, 1), -1));
        row_le0(add(lit_form(z, 1), lit_form(y, 1), -1));
        LinForm f = add(add(lit_form(x, 1), lit_form(y, 1), 1),
                        lit_form(z, 1), -1);
        f.c -= 1;  // x + y - z <= 1
        row_le0(f);
    }
    void post_or(Lit z, Lit x, Lit y) {
        post_and({z.first, !z.second}, {x.first, !x.second},
                 {y.first, !y.second});
    }

    Lit bool_lit(const BoolExpr& e) {
        using K = BoolExpr::K;
        switch (e.k) {
            case K::ConstTrue: {
                int b = new_binary();
                LinForm f; f.coefs[b] = -1; f.c = 1;  // b >= 1
                row_le0(f);
                return {b, false};
            }
            case K::ConstFalse: {
                Lit t = bool_lit(BoolExpr::node(K::ConstTrue, {}));
                return {t.first, true};
            }
            case K::Lit01: require01(e.v); return {e.v, false};
            case K::CmpLeaf: {
                int b = new_binary();
                reif_cmp({b, false}, *e.cmp);
                return {b, false};
            }
            case K::Not: {
                Lit l = bool_lit(e.kids[0]);
                return {l.first, !l.second};
            }
            case K::And: {
                Lit a = bool_lit(e.kids[0]), b = bool_lit(e.kids[1]);
                int z = new_binary();
                post_and({z, false}, a, b);
                return {z, false};
            }
            case K::Or: {
                Lit a = bool_lit(e.kids[0]), b = bool_lit(e.kids[1]);
                int z = new_binary();
                post_or({z, false}, a, b);
                return {z, false};
            }
            case K::Imp: {
                Lit a = bool_lit(e.kids[0]), b = bool_lit(e.kids[1]);
                int z = new_binary();
                post_or({z, false}, {a.first, !a.second}, b);
                return {z, false};
            }
            case K::Xor:
            case K::Iff: {
                Lit a = bool_lit(e.kids[0]), b = bool_lit(e.kids[1]);
                int z = new_binary();
                // z <=> xor(a,b): z<=a+b, z>=a-b, z>=b-a, z<=2-a-b
                Lit zl{z, e.k == K::Iff};  // iff = not xor
                LinForm r1 = add(lit_form(zl, 1),
                                 add(lit_form(a, 1), lit_form(b, 1), 1), -1);
                row_le0(r1);
                row_le0(add(add(lit_form(a, 1), lit_form(b, 1), -1),
                            lit_form(zl, 1), -1));
                row_le0(add(add(lit_form(b, 1), lit_form(a, 1), -1),
                            lit_form(zl, 1), -1));
                LinForm r4 = add(add(lit_form(zl, 1), lit_form(a, 1), 1),
                                 lit_form(b, 1), 1);
                r4.c -= 2;
                row_le0(r4);
                return {z, false};
            }
        }
        throw Error(ErrorKind::internal, "mip bool_lit");
    }

    void post(const Constraint& c) {
        switch (c.k) {
            case Constraint::K::Arith: post_cmp(c.cmp); return;
            case Constraint::K::Reif:
                require01(c.bvar);
                reif_cmp({c.bvar, false}, c.cmp);
                return;
            case Constraint::K::Bool: {
                Lit l = bool_lit(c.bexpr);
                LinForm f = lit_form(l, -1);
                f.c = 1;  // lit >= 1
                row_le0(f);
                return;
            }
            case Constraint::K::AllDiff:
                for (size_t i = 0; i < c.exprs.size(); ++i)
                    for (size_t j = i + 1; j < c.exprs.size(); ++j)
                        post_cmp(Cmp{c.exprs[i], c.exprs[j], CmpOp::Ne});
                return;
            case Constraint::K::Element:
                throw Error(ErrorKind::unsupported_constraint,
                            "mip backend: element");
            case Constraint::K::TableIn:
            case Constraint::K::TableNotIn:
                throw Error(ErrorKind::unsupported_constraint,
                            "mip backend: table constraint");
        }
    }

    const Model& model_;
    LinearizeOptions opt_;
    LinearModel lm_;
    size_t orig_count_ = 0;
    std::vector<ReifInfo> reif_info_;
    bool objective_posted_ = false;
};

// CPLEX-LP-format emission with deterministic variable naming.
inline std::string emit_lp(const LinearModel& lm) {
    std::string out;
    out += lm.obj_kind == LinearModel::ObjKind::Max ? "Maximize\n" : "Minimize\n";
    out += " obj:";
    if (lm.obj.empty()) {
        out += " 0";
    } else {
        bool first = true;
        for (auto [v, a] : lm.obj) {
            if (first) {
                out += (a < 0 ? " -" : " ") + std::to_string(a < 0 ? -a : a) +
                       " " + lm.var_name(v);
                first = false;
            } else {
                out += (a < 0 ? " - " : " + ") +
                       std::to_string(a < 0 ? -a : a) + " " + lm.var_name(v);
            }
        }
    }
    out += "\nSubject To\n";
    for (size_t i = 0; i < lm.rows.size(); ++i) {
        const auto& r = lm.rows[i];
        out += " c" + std::to_string(i) + ":";
        if (r.coefs.empty()) out += " 0";
        bool first = true;
        for (auto [v, a] : r.coefs) {
            if (first) {
                out += (a < 0 ? " -" : " ") + std::to_string(a < 0 ? -a : a) +
                       " " + lm.var_name(v);
                first = false;
            } else {
                out += (a < 0 ? " - " : " + ") +
                       std::to_string(a < 0 ? -a : a) + " " + lm.var_name(v);
            }
        }
        out += " <= " + std::to_string(r.rhs) + "\n";
    }
    if (!lm.vars.empty()) {
        out += "Bounds\n";
        for (size_t v = 0; v < lm.vars.size(); ++v)
            out += " " + std::to_string(lm.vars[v].lo) + " <= " +
                   lm.var_name(static_cast<int>(v)) + " <= " +
                   std::to_string(lm.vars[v].hi) + "\n";
        std::string generals, binaries;
        for (size_t v = 0; v < lm.vars.size(); ++v) {
            auto& sec = lm.vars[v].binary ? binaries : generals;
            sec += " " + lm.var_name(static_cast<int>(v));
        }
        if (!generals.empty()) out += "Generals\n" + generals + "\n";
        if (!binaries.empty()) out += "Binaries\n" + binaries + "\n";
    }
    out += "End\n";
    return out;
}

// one line per original model variable, mapping it to its LP column
inline std::string emit_lp_varmap(const LinearModel& lm, size_t orig_count) {
    std::string out;
    for (size_t v = 0; v < orig_count && v < lm.vars.size(); ++v)
        out += "x" + std::to_string(v) + " col " + lm.var_name(static_cast<int>(v)) +
               " lo " + std::to_string(lm.vars[v].lo) + " hi " +
               std::to_string(lm.vars[v].hi) + "\n";
    return out;
}

// Compares the projection of the linear model's integer-feasible set onto the
// original variables with the model's own solution set, by full enumeration.
// Refuses boxes with more points than `limit`.
inline bool check_exhaustive(const LinearModel& lm, const Model& model,
                             size_t orig_count, uint64_t limit = 100000) {
    uint64_t total = 1;
    for (const auto& v : lm.vars) {
        if (v.hi < v.lo) return false;
        total *= static_cast<uint64_t>(v.hi - v.lo + 1);
        if (total > limit)
            throw Error(ErrorKind::contract,
                        "check_exhaustive: box exceeds enumeration limit");
    }
    std::set<std::vector<int64_t>> projected;
    std::vector<int64_t> point(lm.vars.size());
    std::function<void(size_t)> rec = [&](size_t i) {
        if (i == lm.vars.size()) {
            for (const auto& r : lm.rows) {
                int64_t s = 0;
                for (auto [v, a] : r.coefs) s += a * point[v];
                if (s > r.rhs) return;
            }
            projected.insert(std::vector<int64_t>(point.begin(),
                                                  point.begin() + orig_count));
            return;
        }
        for (int64_t x = lm.vars[i].lo; x <= lm.vars[i].hi; ++x) {
            point[i] = x;
            rec(i + 1);
        }
    };
    rec(0);

    std::set<std::vector<int64_t>> oracle;
    model.enumerate_box(limit, [&](const std::vector<int64_t>& a) {
        if (model.solution(a)) oracle.insert(a);
    });
    return projected == oracle;
}

}  // namespace pl9
