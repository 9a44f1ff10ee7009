#pragma once

#include <algorithm>
#include <climits>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pl9/dpll.hpp"
#include "pl9/model.hpp"

namespace pl9 {

// Log-encoding SAT backend. Each domain variable gets ceil(log2(n+1))
// magnitude bits (n = max |v| over the domain, LSB first) plus a sign bit
// when the domain contains negatives. Values representable by the bits but
// outside the domain are excluded by clauses, as is the negative-zero code.
// Arithmetic is flattened to x>y comparator and x+y=z adder primitives.
class SatCompiler {
public:
    struct BitVec {
        std::vector<int> mag;  // literals, LSB first; may be constants
        int sign = 0;          // 0 = absent (value is never negative)
        int64_t lo = 0, hi = 0;
    };

    struct Trace {
        uint64_t adders = 0;
        uint64_t comparators = 0;
        uint64_t exclusion_clauses = 0;
    };

    static constexpr int kTrue = INT_MAX;
    static constexpr int kFalse = -INT_MAX;

    explicit SatCompiler(const Model& model) : model_(model) {
        for (size_t v = 0; v < model.var_count(); ++v)
            var_bv_.push_back(encode_domain(static_cast<VarId>(v)));
        for (const Constraint& c : model.constraints()) compile(c);
    }

    const Cnf& cnf() const { return cnf_; }
    const Trace& trace() const { return trace_; }
    const BitVec& bitvec(VarId v) const { return var_bv_[v]; }

    // --- solving over the compiled formula -----------------------------------

    // Enumerates integer solutions via blocking clauses over the original
    // variables' bits; cb returns true to stop.
    bool enumerate(const SolveOptions& opts,
                   const std::function<bool(const std::vector<int64_t>&)>& cb) {
        if (opts.objective != SolveOptions::Objective::None)
            return optimize(opts, cb);
        bool any = false;
        SatSolver solver(cnf_, solver_config(opts));
        for (;;) {
            auto m = solver.solve();
            if (!m) {
                accumulate(solver.stats());
                return any;
            }
            any = true;
            std::vector<int64_t> a = decode(*m);
            if (cb(a)) {
                accumulate(solver.stats());
                return true;
            }
            if (!solver.add_clause_dynamic(blocking_clause(*m))) {
                accumulate(solver.stats());
                return any;
            }
        }
    }

    bool optimize(const SolveOptions& opts,
                  const std::function<bool(const std::vector<int64_t>&)>& cb) {
        BitVec obj = expr_to_vv(opts.objective_expr);
        std::optional<std::vector<bool>> best;
        for (;;) {
            SatSolver solver(cnf_, solver_config(opts));
            auto m = solver.solve();
            accumulate(solver.stats());
            if (!m) break;
            best = m;
            int64_t val = decode_vv(*m, obj);
            // require strict improvement and search again
            BitVec bound = from_const(val);
            int better = opts.objective == SolveOptions::Objective::Min
                             ? gt_lit(bound, obj)
                             : gt_lit(obj, bound);
            assert_lit(better);
            if (unsat_) break;
        }
        if (!best) return false;
        cb(decode(*best));
        return true;
    }

    std::vector<int64_t> decode(const std::vector<bool>& m) const {
        std::vector<int64_t> a;
        a.reserve(var_bv_.size());
        for (size_t v = 0; v < var_bv_.size(); ++v) {
            int64_t val = decode_vv(m, var_bv_[v]);
            if (!model_.domain(static_cast<VarId>(v)).contains(val))
                throw Error(ErrorKind::internal,
                            "decoded value escapes the declared domain");
            a.push_back(val);
        }
        return a;
    }

    int64_t decode_vv(const std::vector<bool>& m, const BitVec& bv) const {
        int64_t mag = 0;
        for (size_t i = 0; i < bv.mag.size(); ++i)
            if (lit_holds(m, bv.mag[i])) mag += int64_t{1} << i;
        if (bv.sign != 0 && lit_holds(m, bv.sign)) mag = -mag;
        return mag;
    }

    void emit_dimacs(std::ostream& os) const {
        os << "p cnf " << cnf_.nvars << " " << cnf_.clauses.size() << "\n";
        for (const auto& c : cnf_.clauses) {
            for (int l : c) os << l << " ";
            os << "0\n";
        }
    }

    // One line per model variable, mapping it to its bit range.
    void emit_varmap(std::ostream& os) const {
        for (size_t v = 0; v < var_bv_.size(); ++v) {
            const BitVec& bv = var_bv_[v];
            os << "x" << v << " mag";
            for (int l : bv.mag) os << " " << l;
            os << " sign " << (bv.sign == 0 ? std::string("-")
                                            : std::to_string(bv.sign));
            os << " lo " << bv.lo << " hi " << bv.hi << "\n";
        }
    }

    const SatSolver::Stats& solver_stats() const { return solver_stats_; }

    // exposed for unit tests of the primitive circuits
    BitVec test_fresh(int bits, bool sign, int64_t lo, int64_t hi) {
        BitVec bv;
        for (int i = 0; i < bits; ++i) bv.mag.push_back(new_lit());
        if (sign) bv.sign = new_lit();
        bv.lo = lo; bv.hi = hi;
        return bv;
    }
    std::vector<int> test_u_add(const std::vector<int>& a,
                                const std::vector<int>& b) {
        return u_add(a, b);
    }
    int test_u_gt(const std::vector<int>& a, const std::vector<int>& b) {
        return u_gt(a, b);
    }
    int test_cmp_lit(const Cmp& c) { return cmp_lit(c); }
    void test_assert(int lit) { assert_lit(lit); }
    Cnf& mutable_cnf() { return cnf_; }

private:
    // --- literal algebra with constant folding --------------------------------

    int new_lit() { return cnf_.new_var(); }

    static int lnot(int a) {
        if (a == kTrue) return kFalse;
        if (a == kFalse) return kTrue;
        return -a;
    }

    void add_clause(std::vector<int> lits) {
        std::vector<int> out;
        for (int l : lits) {
            if (l == kTrue) return;
            if (l == kFalse) continue;
            out.push_back(l);
        }
        if (out.empty()) { unsat_ = true; cnf_.trivially_unsat = true; return; }
        cnf_.add(std::move(out));
    }

    void assert_lit(int a) {
        if (a == kTrue) return;
        if (a == kFalse) { unsat_ = true; cnf_.trivially_unsat = true; return; }
        add_clause({a});
    }

    void assert_iff(int a, int b) {
        add_clause({lnot(a), b});
        add_clause({a, lnot(b)});
    }

    int land(int a, int b) {
        if (a == kFalse || b == kFalse) return kFalse;
        if (a == kTrue) return b;
        if (b == kTrue) return a;
        if (a == b) return a;
        if (a == -b) return kFalse;
        int z = new_lit();
        add_clause({-z, a});
        add_clause({-z, b});
        add_clause({z, -a, -b});
        return z;
    }

    int lor(int a, int b) {
        if (a == kTrue || b == kTrue) return kTrue;
        if (a == kFalse) return b;
        if (b == kFalse) return a;
        if (a == b) return a;
        if (a == -b) return kTrue;
        int z = new_lit();
        add_clause({z, -a});
        add_clause({z, -b});
        add_clause({-z, a, b});
        return z;
    }

    int lxor(int a, int b) {
        if (a == kFalse) return b;
        if (b == kFalse) return a;
        if (a == kTrue) return lnot(b);
        if (b == kTrue) return lnot(a);
        if (a == b) return kFalse;
        if (a == -b) return kTrue;
        int z = new_lit();
        add_clause({-z, a, b});
        add_clause({-z, -a, -b});
        add_clause({z, -a, b});
        add_clause({z, a, -b});
        return z;
    }

    int liff(int a, int b) { return lnot(lxor(a, b)); }

    int or_of(const std::vector<int>& lits) {
        int acc = kFalse;
        for (int l : lits) acc = lor(acc, l);
        return acc;
    }

    static bool lit_holds(const std::vector<bool>& m, int l) {
        if (l == kTrue) return true;
        if (l == kFalse) return false;
        return l > 0 ? m[l] : !m[-l];
    }

    // --- bit-vector circuits ---------------------------------------------------

    static int bits_for(int64_t maxabs) {
        int b = 1;
        while ((int64_t{1} << b) < maxabs + 1) ++b;
        return b;
    }

    // ripple-carry adder; output has one extra bit for the carry out
    std::vector<int> u_add(const std::vector<int>& a,
                           const std::vector<int>& b) {
        ++trace_.adders;
        size_t w = std::max(a.size(), b.size());
        std::vector<int> out;
        int carry = kFalse;
        for (size_t i = 0; i < w; ++i) {
            int x = i < a.size() ? a[i] : kFalse;
            int y = i < b.size() ? b[i] : kFalse;
            int xy = lxor(x, y);
            out.push_back(lxor(xy, carry));
            carry = lor(land(x, y), land(carry, xy));
        }
        out.push_back(carry);
        return out;
    }

    // MSB-first unsigned magnitude comparator
    int u_gt(const std::vector<int>& a, const std::vector<int>& b) {
        ++trace_.comparators;
        size_t w = std::max(a.size(), b.size());
        int g = kFalse;
        int e = kTrue;
        for (size_t i = w; i-- > 0;) {
            int x = i < a.size() ? a[i] : kFalse;
            int y = i < b.size() ? b[i] : kFalse;
            g = lor(g, land(e, land(x, lnot(y))));
            e = land(e, liff(x, y));
        }
        return g;
    }

    std::vector<int> pos_bits(const BitVec& v) {
        if (v.sign == 0) return v.mag;
        std::vector<int> out;
        for (int m : v.mag) out.push_back(land(m, lnot(v.sign)));
        return out;
    }
    std::vector<int> neg_bits(const BitVec& v) {
        if (v.sign == 0) return {};
        std::vector<int> out;
        for (int m : v.mag) out.push_back(land(m, v.sign));
        return out;
    }

    BitVec from_const(int64_t v) {
        BitVec bv;
        int64_t m = v < 0 ? -v : v;
        while (m > 0) { bv.mag.push_back((m & 1) ? kTrue : kFalse); m >>= 1; }
        if (bv.mag.empty()) bv.mag.push_back(kFalse);
        bv.sign = v < 0 ? kTrue : 0;
        bv.lo = bv.hi = v;
        return bv;
    }

    BitVec fresh_vv(int64_t lo, int64_t hi) {
        if (lo == hi) return from_const(lo);
        BitVec bv;
        int64_t maxabs = std::max(lo < 0 ? -lo : lo, hi < 0 ? -hi : hi);
        int nbits = bits_for(maxabs);
        for (int i = 0; i < nbits; ++i) bv.mag.push_back(new_lit());
        if (lo < 0) {
            bv.sign = new_lit();
            std::vector<int> negzero{lnot(bv.sign)};
            for (int m : bv.mag) negzero.push_back(m);
            add_clause(negzero);  // sign-magnitude forbids negative zero
        }
        bv.lo = lo; bv.hi = hi;
        return bv;
    }

    // asserts z = x + y through the sign-split identity
    // x+ + y+ + z- == x- + y- + z+
    void assert_add(const BitVec& x, const BitVec& y, const BitVec& z) {
        std::vector<int> p = u_add(u_add(pos_bits(x), pos_bits(y)), neg_bits(z));
        std::vector<int> q = u_add(u_add(neg_bits(x), neg_bits(y)), pos_bits(z));
        size_t w = std::max(p.size(), q.size());
        for (size_t i = 0; i < w; ++i) {
            int a = i < p.size() ? p[i] : kFalse;
            int b = i < q.size() ? q[i] : kFalse;
            assert_iff(a, b);
        }
    }

    BitVec make_add(const BitVec& x, const BitVec& y) {
        BitVec z = fresh_vv(x.lo + y.lo, x.hi + y.hi);
        assert_add(x, y, z);
        return z;
    }

    BitVec neg_vv(const BitVec& x) {
        BitVec out;
        out.mag = x.mag;
        int nonzero = or_of(x.mag);
        out.sign = x.sign == 0 ? nonzero : land(lnot(x.sign), nonzero);
        out.lo = -x.hi;
        out.hi = -x.lo;
        return out;
    }

    BitVec mul_const(const BitVec& x, int64_t k) {
        if (k == 0) return from_const(0);
        if (k < 0) return neg_vv(mul_const(x, -k));
        if (k == 1) return x;
        // repeated addition by binary decomposition of k
        int top = 63;
        while (((k >> top) & 1) == 0) --top;
        BitVec acc = x;
        for (int i = top - 1; i >= 0; --i) {
            acc = make_add(acc, acc);
            if ((k >> i) & 1) acc = make_add(acc, x);
        }
        return acc;
    }

    BitVec expr_to_vv(const Expr& e) {
        switch (e.k) {
            case Expr::K::Const: return from_const(e.c);
            case Expr::K::Var: return var_bv_[e.v];
            case Expr::K::Add:
                return make_add(expr_to_vv(e.kids[0]), expr_to_vv(e.kids[1]));
            case Expr::K::Sub:
                return make_add(expr_to_vv(e.kids[0]),
                                neg_vv(expr_to_vv(e.kids[1])));
            case Expr::K::Neg: return neg_vv(expr_to_vv(e.kids[0]));
            case Expr::K::Sum: {
                if (e.kids.empty()) return from_const(0);
                BitVec acc = expr_to_vv(e.kids[0]);
                for (size_t i = 1; i < e.kids.size(); ++i)
                    acc = make_add(acc, expr_to_vv(e.kids[i]));
                return acc;
            }
            case Expr::K::Mul: {
                BitVec a = expr_to_vv(e.kids[0]);
                BitVec b = expr_to_vv(e.kids[1]);
                if (a.lo == a.hi) return mul_const(b, a.lo);
                if (b.lo == b.hi) return mul_const(a, b.lo);
                throw Error(ErrorKind::unsupported_constraint,
                            "sat backend: variable*variable product");
            }
            default:
                throw Error(ErrorKind::unsupported_constraint,
                            "sat backend: unsupported arithmetic function");
        }
    }

    int gt_lit(const BitVec& a, const BitVec& b) {
        int sa = a.sign == 0 ? kFalse : a.sign;
        int sb = b.sign == 0 ? kFalse : b.sign;
        int both_pos = land(lnot(sa), lnot(sb));
        int both_neg = land(sa, sb);
        int case1 = land(lnot(sa), sb);  // a >= 0 > b (negative zero excluded)
        int case2 = land(both_pos, u_gt(a.mag, b.mag));
        int case3 = land(both_neg, u_gt(b.mag, a.mag));
        return lor(case1, lor(case2, case3));
    }

    int cmp_lit(const Cmp& c) {
        BitVec a = expr_to_vv(c.lhs);
        BitVec b = expr_to_vv(c.rhs);
        switch (c.op) {
            case CmpOp::Gt: return gt_lit(a, b);
            case CmpOp::Lt: return gt_lit(b, a);
            case CmpOp::Ge: return lnot(gt_lit(b, a));
            case CmpOp::Le: return lnot(gt_lit(a, b));
            case CmpOp::Eq:
                return land(lnot(gt_lit(a, b)), lnot(gt_lit(b, a)));
            case CmpOp::Ne:
                return lor(gt_lit(a, b), gt_lit(b, a));
        }
        throw Error(ErrorKind::internal, "cmp_lit");
    }

    // --- domain encoding -------------------------------------------------------

    BitVec encode_domain(VarId v) {
        const IntervalSet& dom = model_.domain(v);
        if (dom.empty()) {
            unsat_ = true;
            cnf_.trivially_unsat = true;
            return from_const(0);
        }
        int64_t lo = dom.min(), hi = dom.max();
        int64_t maxabs = std::max(lo < 0 ? -lo : lo, hi < 0 ? -hi : hi);
        BitVec bv;
        int nbits = maxabs == 0 ? 1 : bits_for(maxabs);
        for (int i = 0; i < nbits; ++i) bv.mag.push_back(new_lit());
        if (lo < 0) bv.sign = new_lit();
        bv.lo = lo; bv.hi = hi;

        // exclude holes, out-of-range codes and the negative zero
        int64_t codes = int64_t{1} << nbits;
        for (int s = 0; s <= (bv.sign != 0 ? 1 : 0); ++s) {
            for (int64_t mag = 0; mag < codes; ++mag) {
                int64_t val = s ? -mag : mag;
                bool bad = (s == 1 && mag == 0) || !dom.contains(val);
                if (!bad) continue;
                std::vector<int> clause;
                for (int i = 0; i < nbits; ++i)
                    clause.push_back(((mag >> i) & 1) ? -bv.mag[i] : bv.mag[i]);
                if (bv.sign != 0) clause.push_back(s ? -bv.sign : bv.sign);
                add_clause(clause);
                ++trace_.exclusion_clauses;
            }
        }
        return bv;
    }

    // --- constraint compilation -------------------------------------------------

    void compile(const Constraint& c) {
        switch (c.k) {
            case Constraint::K::Arith: assert_cmp(c.cmp); return;
            case Constraint::K::Reif: {
                int b = truth_lit(c.bvar);
                assert_iff(b, cmp_lit(c.cmp));
                return;
            }
            case Constraint::K::Bool: assert_lit(bool_lit(c.bexpr)); return;
            case Constraint::K::AllDiff: {
                // materialize each expression once, then pairwise x>y or y>x
                std::vector<BitVec> vvs;
                vvs.reserve(c.exprs.size());
                for (const Expr& e : c.exprs) vvs.push_back(expr_to_vv(e));
                for (size_t i = 0; i < vvs.size(); ++i)
                    for (size_t j = i + 1; j < vvs.size(); ++j)
                        add_clause({gt_lit(vvs[i], vvs[j]),
                                    gt_lit(vvs[j], vvs[i])});
                return;
            }
            case Constraint::K::TableIn:
            case Constraint::K::TableNotIn: {
                std::vector<BitVec> vvs;
                for (const Expr& e : c.exprs) vvs.push_back(expr_to_vv(e));
                if (c.k == Constraint::K::TableIn) {
                    std::vector<int> rows;
                    for (const auto& row : c.tuples) {
                        int conj = kTrue;
                        for (size_t i = 0; i < vvs.size(); ++i)
                            conj = land(conj, eq_const_lit(vvs[i], row[i]));
                        rows.push_back(conj);
                    }
                    assert_lit(or_of(rows));
                } else {
                    for (const auto& row : c.tuples) {
                        std::vector<int> cl;
                        for (size_t i = 0; i < vvs.size(); ++i)
                            cl.push_back(lnot(eq_const_lit(vvs[i], row[i])));
                        add_clause(cl);
                    }
                }
                return;
            }
            case Constraint::K::Element:
                throw Error(ErrorKind::unsupported_constraint,
                            "sat backend: element");
        }
    }

    void assert_cmp(const Cmp& c) {
        BitVec a = expr_to_vv(c.lhs);
        BitVec b = expr_to_vv(c.rhs);
        switch (c.op) {
            case CmpOp::Gt: assert_lit(gt_lit(a, b)); return;
            case CmpOp::Lt: assert_lit(gt_lit(b, a)); return;
            case CmpOp::Ge: assert_lit(lnot(gt_lit(b, a))); return;
            case CmpOp::Le: assert_lit(lnot(gt_lit(a, b))); return;
            case CmpOp::Eq:
                // x = y compiles to not(x>y) and not(y>x)
                assert_lit(lnot(gt_lit(a, b)));
                assert_lit(lnot(gt_lit(b, a)));
                return;
            case CmpOp::Ne:
                add_clause({gt_lit(a, b), gt_lit(b, a)});
                return;
        }
    }

    int eq_const_lit(const BitVec& v, int64_t c) {
        BitVec cv = from_const(c);
        size_t w = std::max(v.mag.size(), cv.mag.size());
        int acc = kTrue;
        for (size_t i = 0; i < w; ++i) {
            int x = i < v.mag.size() ? v.mag[i] : kFalse;
            int y = i < cv.mag.size() ? cv.mag[i] : kFalse;
            acc = land(acc, liff(x, y));
        }
        int sv = v.sign == 0 ? kFalse : v.sign;
        int sc = cv.sign == 0 ? kFalse : cv.sign;
        return land(acc, liff(sv, sc));
    }

    // the "is one" literal of a 0/1 variable
    int truth_lit(VarId v) {
        const IntervalSet& d = model_.domain(v);
        if (d.min() < 0 || d.max() > 1)
            throw Error(ErrorKind::type,
                        "boolean position requires a 0..1 variable");
        return var_bv_[v].mag[0];
    }

    int bool_lit(const BoolExpr& e) {
        using K = BoolExpr::K;
        switch (e.k) {
            case K::ConstTrue: return kTrue;
            case K::ConstFalse: return kFalse;
            case K::Lit01: return truth_lit(e.v);
            case K::CmpLeaf: return cmp_lit(*e.cmp);
            case K::Not: return lnot(bool_lit(e.kids[0]));
            case K::And: return land(bool_lit(e.kids[0]), bool_lit(e.kids[1]));
            case K::Or: return lor(bool_lit(e.kids[0]), bool_lit(e.kids[1]));
            case K::Xor: return lxor(bool_lit(e.kids[0]), bool_lit(e.kids[1]));
            case K::Iff: return liff(bool_lit(e.kids[0]), bool_lit(e.kids[1]));
            case K::Imp:
                return lor(lnot(bool_lit(e.kids[0])), bool_lit(e.kids[1]));
        }
        throw Error(ErrorKind::internal, "bool_lit");
    }

    std::vector<int> blocking_clause(const std::vector<bool>& m) const {
        std::vector<int> clause;
        for (const BitVec& bv : var_bv_) {
            for (int l : bv.mag) {
                if (l == kTrue || l == kFalse) continue;
                clause.push_back(lit_holds(m, l) ? -l : l);
            }
            if (bv.sign != 0 && bv.sign != kTrue && bv.sign != kFalse)
                clause.push_back(lit_holds(m, bv.sign) ? -bv.sign : bv.sign);
        }
        return clause;
    }

    SatConfig solver_config(const SolveOptions& opts) const {
        SatConfig cfg;
        cfg.learning = opts.sat_learning;
        cfg.seed = opts.seed;
        for (const BitVec& bv : var_bv_) {
            for (int l : bv.mag)
                if (l != kTrue && l != kFalse) cfg.branch_vars.push_back(std::abs(l));
            if (bv.sign != 0 && bv.sign != kTrue && bv.sign != kFalse)
                cfg.branch_vars.push_back(std::abs(bv.sign));
        }
        return cfg;
    }

    void accumulate(const SatSolver::Stats& s) {
        solver_stats_.decisions += s.decisions;
        solver_stats_.propagations += s.propagations;
        solver_stats_.conflicts += s.conflicts;
        solver_stats_.learned += s.learned;
    }

    const Model& model_;
    Cnf cnf_;
    std::vector<BitVec> var_bv_;
    Trace trace_;
    bool unsat_ = false;
    SatSolver::Stats solver_stats_;
};

}  // namespace pl9
