#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "pl9/model.hpp"

namespace pl9 {

// Propagation-based CP backend: decomposes the model into propagators, runs a
// queue to fixpoint, and searches depth-first with optional first-fail
// variable selection and branch-and-bound optimization.
//
// Filtering levels: bounds consistency for linear arithmetic, domain
// consistency for two-variable equality/disequality, pairwise decomposition
// for all_different, support scan for element, row filtering for tables.
class CpSolver {
public:
    struct Stats {
        uint64_t nodes = 0;
        uint64_t solutions = 0;
        uint64_t propagations = 0;
    };

    explicit CpSolver(const Model& model) : model_(model) {
        for (size_t v = 0; v < model.var_count(); ++v)
            dom_.push_back(model.domain(v));
        orig_count_ = dom_.size();
        last_saved_.assign(dom_.size(), -1);
        try {
            for (const Constraint& c : model.constraints()) post(c);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::domain) root_failed_ = true;
            else throw;
        }
    }

    // Runs the propagator queue to fixpoint; false = inconsistent.
    bool propagate_root() {
        if (root_failed_) return false;
        for (size_t p = 0; p < props_.size(); ++p) enqueue(p);
        return run_queue();
    }

    const IntervalSet& domain(VarId v) const { return dom_[v]; }
    const Stats& stats() const { return stats_; }

    // Depth-first labeling. The callback receives values of the original
    // model variables and returns true to stop the search.
    bool enumerate(const std::vector<VarId>& label_vars,
                   const SolveOptions& opts,
                   const std::function<bool(const std::vector<int64_t>&)>& cb) {
        opts_ = opts;
        if (opts.objective != SolveOptions::Objective::None) {
            Lin l = lin_of(opts.objective_expr);
            obj_var_ = var_of(l);
            bound_.reset();
            best_.reset();
        } else {
            obj_var_ = -1;
        }
        if (!propagate_root()) return false;
        label_vars_ = label_vars;
        stopped_ = false;
        dfs(cb);
        if (obj_var_ >= 0 && best_) {
            std::vector<int64_t> a(best_->begin(),
                                   best_->begin() + orig_count_);
            cb(a);
            return true;
        }
        return stats_.solutions > 0;
    }

    std::optional<int64_t> best_objective() const {
        if (!best_ || obj_var_ < 0) return std::nullopt;
        return (*best_)[obj_var_];
    }

private:
    // --- linear forms ---------------------------------------------------------

    struct Lin {
        std::vector<std::pair<VarId, int64_t>> terms;  // (var, coefficient)
        int64_t c = 0;
    };

    static void add_term(Lin& l, VarId v, int64_t a) {
        for (auto& [tv, ta] : l.terms)
            if (tv == v) { ta += a; return; }
        if (a != 0) l.terms.emplace_back(v, a);
    }

    static Lin combine(const Lin& a, const Lin& b, int64_t sb) {
        Lin out = a;
        out.c += sb * b.c;
        for (auto [v, coef] : b.terms) add_term(out, v, sb * coef);
        out.terms.erase(std::remove_if(out.terms.begin(), out.terms.end(),
                                       [](auto& t) { return t.second == 0; }),
                        out.terms.end());
        return out;
    }

    static Lin scale(const Lin& a, int64_t k) {
        Lin out;
        out.c = a.c * k;
        if (k != 0)
            for (auto [v, coef] : a.terms) out.terms.emplace_back(v, coef * k);
        return out;
    }

    VarId aux_var(int64_t lo, int64_t hi) {
        dom_.push_back(IntervalSet::range(lo, hi));
        last_saved_.push_back(-1);
        if (dom_.back().empty())
            throw Error(ErrorKind::domain, "derived domain is empty");
        return static_cast<VarId>(dom_.size() - 1);
    }

    std::pair<int64_t, int64_t> lin_bounds(const Lin& l) const {
        int64_t lo = l.c, hi = l.c;
        for (auto [v, a] : l.terms) {
            const IntervalSet& d = dom_[v];
            if (d.empty()) throw Error(ErrorKind::domain, "empty domain");
            if (a > 0) { lo += a * d.min(); hi += a * d.max(); }
            else { lo += a * d.max(); hi += a * d.min(); }
        }
        return {lo, hi};
    }

    VarId var_of(const Lin& l) {
        if (l.terms.size() == 1 && l.terms[0].second == 1 && l.c == 0)
            return l.terms[0].first;
        auto [lo, hi] = lin_bounds(l);
        VarId z = aux_var(lo, hi);
        Lin def = l;
        add_term(def, z, -1);
        add_prop(Prop::lin_eq(def));
        return z;
    }

    Lin lin_of(const Expr& e) {
        switch (e.k) {
            case Expr::K::Const: { Lin l; l.c = e.c; return l; }
            case Expr::K::Var: { Lin l; add_term(l, e.v, 1); return l; }
            case Expr::K::Add:
                return combine(lin_of(e.kids[0]), lin_of(e.kids[1]), 1);
            case Expr::K::Sub:
                return combine(lin_of(e.kids[0]), lin_of(e.kids[1]), -1);
            case Expr::K::Neg: return scale(lin_of(e.kids[0]), -1);
            case Expr::K::Sum: {
                Lin out;
                for (const Expr& kid : e.kids)
                    out = combine(out, lin_of(kid), 1);
                return out;
            }
            case Expr::K::Mul: {
                Lin a = lin_of(e.kids[0]);
                Lin b = lin_of(e.kids[1]);
                if (a.terms.empty()) return scale(b, a.c);
                if (b.terms.empty()) return scale(a, b.c);
                VarId x = var_of(a), y = var_of(b);
                auto [xl, xh] = lin_bounds(a);
                auto [yl, yh] = lin_bounds(b);
                int64_t p1 = xl * yl, p2 = xl * yh, p3 = xh * yl, p4 = xh * yh;
                VarId z = aux_var(std::min({p1, p2, p3, p4}),
                                  std::max({p1, p2, p3, p4}));
                add_prop(Prop::mul(z, x, y));
                Lin l; add_term(l, z, 1);
                return l;
            }
            case Expr::K::Div:
            case Expr::K::Mod: {
                Lin b = lin_of(e.kids[1]);
                if (!b.terms.empty() || b.c <= 0)
                    throw Error(ErrorKind::unsupported_constraint,
                                "div/mod requires a positive constant divisor");
                int64_t k = b.c;
                Lin a = lin_of(e.kids[0]);
                VarId x = var_of(a);
                auto fdiv = [](int64_t p, int64_t q) {
                    int64_t r = p / q, m = p % q;
                    if (m != 0 && ((m < 0) != (q < 0))) --r;
                    return r;
                };
                if (e.k == Expr::K::Div) {
                    VarId z = aux_var(fdiv(dom_[x].min(), k),
                                      fdiv(dom_[x].max(), k));
                    add_prop(Prop::divk(z, x, k));
                    Lin l; add_term(l, z, 1);
                    return l;
                }
                VarId z = aux_var(0, k - 1);
                add_prop(Prop::modk(z, x, k));
                Lin l; add_term(l, z, 1);
                return l;
            }
            case Expr::K::Abs: {
                VarId x = var_of(lin_of(e.kids[0]));
                int64_t lo = dom_[x].min(), hi = dom_[x].max();
                int64_t zl = (lo <= 0 && hi >= 0) ? 0 : std::min(std::abs(lo), std::abs(hi));
                int64_t zh = std::max(std::abs(lo), std::abs(hi));
                VarId z = aux_var(zl, zh);
                add_prop(Prop::abs2(z, x));
                Lin l; add_term(l, z, 1);
                return l;
            }
            case Expr::K::Min2:
            case Expr::K::Max2: {
                VarId x = var_of(lin_of(e.kids[0]));
                VarId y = var_of(lin_of(e.kids[1]));
                int64_t zl, zh;
                if (e.k == Expr::K::Min2) {
                    zl = std::min(dom_[x].min(), dom_[y].min());
                    zh = std::min(dom_[x].max(), dom_[y].max());
                } else {
                    zl = std::max(dom_[x].min(), dom_[y].min());
                    zh = std::max(dom_[x].max(), dom_[y].max());
                }
                VarId z = aux_var(zl, zh);
                add_prop(e.k == Expr::K::Min2 ? Prop::min3(z, x, y)
                                              : Prop::max3(z, x, y));
                Lin l; add_term(l, z, 1);
                return l;
            }
        }
        throw Error(ErrorKind::internal, "lin_of: bad expr");
    }

    // --- propagators ----------------------------------------------------------

    struct Prop {
        enum class K : uint8_t {
            LinLe, LinEq, LinNe, Eq2, Reif, Clause,
            Mul, DivK, ModK, Abs2, Min3, Max3, Element, Table,
        };
        K k;
        Lin lin;                 // LinLe: lin <= 0; LinEq/LinNe: lin (=|!=) 0
        CmpOp rop = CmpOp::Le;   // Reif inner op: Le, Eq or Ne over lin
        VarId b = -1;
        std::vector<std::pair<VarId, bool>> lits;  // Clause: (var, negated)
        VarId z = -1, x = -1, y = -1;
        int64_t kconst = 0;
        std::vector<VarId> evars;
        VarId idx = -1, val = -1;
        const std::vector<std::vector<int64_t>>* tuples = nullptr;
        bool table_in = true;

        static Prop lin_le(Lin l) { Prop p; p.k = K::LinLe; p.lin = std::move(l); return p; }
        static Prop lin_eq(Lin l) { Prop p; p.k = K::LinEq; p.lin = std::move(l); return p; }
        static Prop lin_ne(Lin l) { Prop p; p.k = K::LinNe; p.lin = std::move(l); return p; }
        static Prop eq2(VarId x, VarId y, int64_t c) {
            Prop p; p.k = K::Eq2; p.x = x; p.y = y; p.kconst = c; return p;
        }
        static Prop mul(VarId z, VarId x, VarId y) {
            Prop p; p.k = K::Mul; p.z = z; p.x = x; p.y = y; return p;
        }
        static Prop divk(VarId z, VarId x, int64_t k) {
            Prop p; p.k = K::DivK; p.z = z; p.x = x; p.kconst = k; return p;
        }
        static Prop modk(VarId z, VarId x, int64_t k) {
            Prop p; p.k = K::ModK; p.z = z; p.x = x; p.kconst = k; return p;
        }
        static Prop abs2(VarId z, VarId x) {
            Prop p; p.k = K::Abs2; p.z = z; p.x = x; return p;
        }
        static Prop min3(VarId z, VarId x, VarId y) {
            Prop p; p.k = K::Min3; p.z = z; p.x = x; p.y = y; return p;
        }
        static Prop max3(VarId z, VarId x, VarId y) {
            Prop p; p.k = K::Max3; p.z = z; p.x = x; p.y = y; return p;
        }

        std::vector<VarId> watched() const {
            std::vector<VarId> w;
            switch (k) {
                case K::LinLe: case K::LinEq: case K::LinNe:
                    for (auto [v, a] : lin.terms) w.push_back(v);
                    break;
                case K::Eq2: w = {x, y}; break;
                case K::Reif:
                    w.push_back(b);
                    for (auto [v, a] : lin.terms) w.push_back(v);
                    break;
                case K::Clause:
                    for (auto [v, n] : lits) w.push_back(v);
                    break;
                case K::Mul: case K::Min3: case K::Max3: w = {z, x, y}; break;
                case K::DivK: case K::ModK: case K::Abs2: w = {z, x}; break;
                case K::Element:
                    w = evars; w.push_back(idx); w.push_back(val); break;
                case K::Table: w = evars; break;
            }
            return w;
        }
    };

    void add_prop(Prop p) {
        size_t id = props_.size();
        for (VarId v : p.watched()) {
            if (static_cast<size_t>(v) >= watchers_.size())
                watchers_.resize(v + 1);
            watchers_[v].push_back(id);
        }
        props_.push_back(std::move(p));
        in_queue_.push_back(false);
        enqueue(id);
    }

    // --- posting --------------------------------------------------------------

    void post(const Constraint& c) {
        switch (c.k) {
            case Constraint::K::Arith: post_cmp(c.cmp); return;
            case Constraint::K::Reif: {
                require01(c.bvar);
                post_reif(c.bvar, false, c.cmp);
                return;
            }
            case Constraint::K::Bool: {
                auto [v, neg] = tseitin(c.bexpr);
                add_prop(clause({{v, neg}}));
                return;
            }
            case Constraint::K::AllDiff: {
                for (size_t i = 0; i < c.exprs.size(); ++i)
                    for (size_t j = i + 1; j < c.exprs.size(); ++j) {
                        Cmp ne{c.exprs[i], c.exprs[j], CmpOp::Ne};
                        post_cmp(ne);
                    }
                return;
            }
            case Constraint::K::Element: {
                Prop p;
                p.k = Prop::K::Element;
                p.idx = var_of(lin_of(c.idx));
                p.val = var_of(lin_of(c.val));
                for (const Expr& e : c.exprs)
                    p.evars.push_back(var_of(lin_of(e)));
                add_prop(std::move(p));
                return;
            }
            case Constraint::K::TableIn:
            case Constraint::K::TableNotIn: {
                Prop p;
                p.k = Prop::K::Table;
                p.table_in = c.k == Constraint::K::TableIn;
                for (const Expr& e : c.exprs)
                    p.evars.push_back(var_of(lin_of(e)));
                p.tuples = &c.tuples;
                for (const auto& t : c.tuples)
                    if (t.size() != p.evars.size())
                        throw Error(ErrorKind::type,
                                    "table tuple arity mismatch");
                add_prop(std::move(p));
                return;
            }
        }
    }

    void post_cmp(const Cmp& c) {
        Lin l = combine(lin_of(c.lhs), lin_of(c.rhs), -1);
        switch (c.op) {
            case CmpOp::Eq:
                if (l.terms.size() == 2 &&
                    ((l.terms[0].second == 1 && l.terms[1].second == -1) ||
                     (l.terms[0].second == -1 && l.terms[1].second == 1))) {
                    // x - y + c = 0, domain-consistent two-variable equality
                    VarId x = l.terms[0].second == 1 ? l.terms[0].first
                                                     : l.terms[1].first;
                    VarId y = l.terms[0].second == 1 ? l.terms[1].first
                                                     : l.terms[0].first;
                    add_prop(Prop::eq2(x, y, -l.c));
                    return;
                }
                add_prop(Prop::lin_eq(std::move(l)));
                return;
            case CmpOp::Ne: add_prop(Prop::lin_ne(std::move(l))); return;
            case CmpOp::Le: add_prop(Prop::lin_le(std::move(l))); return;
            case CmpOp::Lt: l.c += 1; add_prop(Prop::lin_le(std::move(l))); return;
            case CmpOp::Ge: add_prop(Prop::lin_le(scale(l, -1))); return;
            case CmpOp::Gt: {
                Lin neg = scale(l, -1);
                neg.c += 1;
                add_prop(Prop::lin_le(std::move(neg)));
                return;
            }
        }
    }

    // b=1 (or b=0 when negated) is equivalent to cmp
    void post_reif(VarId b, bool negated, const Cmp& c) {
        Lin l = combine(lin_of(c.lhs), lin_of(c.rhs), -1);
        CmpOp op = c.op;
        switch (op) {
            case CmpOp::Lt: l.c += 1; op = CmpOp::Le; break;
            case CmpOp::Ge: l = scale(l, -1); op = CmpOp::Le; break;
            case CmpOp::Gt: l = scale(l, -1); l.c += 1; op = CmpOp::Le; break;
            default: break;
        }
        if (negated) {
            // flip the relation instead of the literal
            if (op == CmpOp::Le) { l = scale(l, -1); l.c += 1; }
            else if (op == CmpOp::Eq) op = CmpOp::Ne;
            else if (op == CmpOp::Ne) op = CmpOp::Eq;
        }
        Prop p;
        p.k = Prop::K::Reif;
        p.b = b;
        p.lin = std::move(l);
        p.rop = op;
        add_prop(std::move(p));
    }

    void require01(VarId v) {
        dom_[v] = dom_[v].intersect(IntervalSet::range(0, 1));
        if (dom_[v].empty())
            throw Error(ErrorKind::domain, "boolean variable domain is empty");
    }

    Prop clause(std::vector<std::pair<VarId, bool>> lits) {
        Prop p;
        p.k = Prop::K::Clause;
        p.lits = std::move(lits);
        return p;
    }

    VarId fresh01() {
        return aux_var(0, 1);
    }

    // Tseitin-style decomposition of Boolean expressions into reified
    // primitives plus clause propagators. Returns (var, negated).
    std::pair<VarId, bool> tseitin(const BoolExpr& e) {
        using K = BoolExpr::K;
        switch (e.k) {
            case K::ConstTrue: {
                VarId v = fresh01();
                dom_[v] = IntervalSet::single(1);
                return {v, false};
            }
            case K::ConstFalse: {
                VarId v = fresh01();
                dom_[v] = IntervalSet::single(0);
                return {v, false};
            }
            case K::Lit01: require01(e.v); return {e.v, false};
            case K::CmpLeaf: {
                VarId b = fresh01();
                post_reif(b, false, *e.cmp);
                return {b, false};
            }
            case K::Not: {
                auto [v, n] = tseitin(e.kids[0]);
                return {v, !n};
            }
            case K::Imp: {
                BoolExpr o = BoolExpr::node(
                    K::Or, {BoolExpr::node(K::Not, {e.kids[0]}), e.kids[1]});
                return tseitin(o);
            }
            case K::And:
            case K::Or: {
                auto a = tseitin(e.kids[0]);
                auto b = tseitin(e.kids[1]);
                VarId z = fresh01();
                auto pos = [](std::pair<VarId, bool> l) { return std::pair(l.first, l.second); };
                auto negl = [](std::pair<VarId, bool> l) { return std::pair(l.first, !l.second); };
                if (e.k == K::And) {
                    add_prop(clause({{z, true}, pos(a)}));
                    add_prop(clause({{z, true}, pos(b)}));
                    add_prop(clause({{z, false}, negl(a), negl(b)}));
                } else {
                    add_prop(clause({{z, false}, negl(a)}));
                    add_prop(clause({{z, false}, negl(b)}));
                    add_prop(clause({{z, true}, pos(a), pos(b)}));
                }
                return {z, false};
            }
            case K::Iff:
            case K::Xor: {
                auto a = tseitin(e.kids[0]);
                auto b = tseitin(e.kids[1]);
                if (e.k == K::Xor) b.second = !b.second;  // xor = iff with b negated
                VarId z = fresh01();
                auto P = [](std::pair<VarId, bool> l) { return l; };
                auto N = [](std::pair<VarId, bool> l) { return std::pair(l.first, !l.second); };
                add_prop(clause({{z, true}, N(a), P(b)}));
                add_prop(clause({{z, true}, P(a), N(b)}));
                add_prop(clause({{z, false}, P(a), P(b)}));
                add_prop(clause({{z, false}, N(a), N(b)}));
                return {z, false};
            }
        }
        throw Error(ErrorKind::internal, "tseitin: bad node");
    }

    // --- propagation ----------------------------------------------------------

    void enqueue(size_t p) {
        if (!in_queue_[p]) { in_queue_[p] = true; queue_.push_back(p); }
    }

    bool narrow(VarId v, const IntervalSet& nd) {
        if (nd == dom_[v]) return true;
        if (nd.empty()) return false;
        if (last_saved_[v] != level_) {
            trail_.emplace_back(v, dom_[v], last_saved_[v]);
            last_saved_[v] = level_;
        }
        dom_[v] = nd;
        if (static_cast<size_t>(v) < watchers_.size())
            for (size_t p : watchers_[v]) enqueue(p);
        return true;
    }

    bool clamp(VarId v, int64_t lo, int64_t hi) {
        IntervalSet nd = dom_[v].clamp_below(lo).clamp_above(hi);
        return narrow(v, nd);
    }

    bool run_queue() {
        while (!queue_.empty()) {
            size_t p = queue_.front();
            queue_.pop_front();
            in_queue_[p] = false;
            ++stats_.propagations;
            if (!run_prop(props_[p])) {
                // drain queue flags for a clean state after failure
                while (!queue_.empty()) {
                    in_queue_[queue_.front()] = false;
                    queue_.pop_front();
                }
                return false;
            }
        }
        if (obj_var_ >= 0 && bound_) {
            bool ok = opts_.objective == SolveOptions::Objective::Min
                          ? clamp(obj_var_, dom_[obj_var_].min(), *bound_ - 1)
                          : clamp(obj_var_, *bound_ + 1, dom_[obj_var_].max());
            if (!ok) return false;
            if (!queue_.empty()) return run_queue();
        }
        return true;
    }

    bool run_prop(const Prop& p) {
        switch (p.k) {
            case Prop::K::LinLe: return prop_lin_le(p.lin);
            case Prop::K::LinEq:
                return prop_lin_le(p.lin) && prop_lin_le(scale(p.lin, -1)) &&
                       prop_eq_fix(p.lin);
            case Prop::K::LinNe: return prop_lin_ne(p.lin);
            case Prop::K::Eq2: {
                IntervalSet shifted = shift(dom_[p.y], p.kconst);
                if (!narrow(p.x, dom_[p.x].intersect(shifted))) return false;
                IntervalSet back = shift(dom_[p.x], -p.kconst);
                return narrow(p.y, dom_[p.y].intersect(back));
            }
            case Prop::K::Reif: return prop_reif(p);
            case Prop::K::Clause: return prop_clause(p);
            case Prop::K::Mul: return prop_mul(p);
            case Prop::K::DivK: return prop_divk(p);
            case Prop::K::ModK: return prop_modk(p);
            case Prop::K::Abs2: return prop_abs(p);
            case Prop::K::Min3: return prop_minmax(p, true);
            case Prop::K::Max3: return prop_minmax(p, false);
            case Prop::K::Element: return prop_element(p);
            case Prop::K::Table: return prop_table(p);
        }
        return true;
    }

    static IntervalSet shift(const IntervalSet& d, int64_t k) {
        IntervalSet out;
        std::vector<int64_t> vals;
        d.for_each([&](int64_t v) { vals.push_back(v + k); });
        return IntervalSet::of_values(std::move(vals));
    }

    bool prop_lin_le(const Lin& l) {
        int64_t total_min = l.c;
        for (auto [v, a] : l.terms)
            total_min += a > 0 ? a * dom_[v].min() : a * dom_[v].max();
        if (total_min > 0) return false;
        int64_t slack = -total_min;
        for (auto [v, a] : l.terms) {
            if (a > 0) {
                int64_t hi = dom_[v].min() + slack / a;
                if (!clamp(v, dom_[v].min(), hi)) return false;
            } else {
                int64_t lo = dom_[v].max() - slack / (-a);
                if (!clamp(v, lo, dom_[v].max())) return false;
            }
        }
        return true;
    }

    bool prop_eq_fix(const Lin& l) {
        // when all but one variable is fixed, the last one is determined
        int unfixed = -1;
        int64_t rest = l.c;
        for (size_t i = 0; i < l.terms.size(); ++i) {
            auto [v, a] = l.terms[i];
            if (dom_[v].fixed()) rest += a * dom_[v].value();
            else if (unfixed < 0) unfixed = static_cast<int>(i);
            else return true;
        }
        if (unfixed < 0) return rest == 0;
        auto [v, a] = l.terms[unfixed];
        if (rest % a != 0) return false;
        int64_t val = -rest / a;
        return narrow(v, dom_[v].intersect(IntervalSet::single(val)));
    }

    bool prop_lin_ne(const Lin& l) {
        int unfixed = -1;
        int64_t rest = l.c;
        for (size_t i = 0; i < l.terms.size(); ++i) {
            auto [v, a] = l.terms[i];
            if (dom_[v].fixed()) rest += a * dom_[v].value();
            else if (unfixed < 0) unfixed = static_cast<int>(i);
            else return true;
        }
        if (unfixed < 0) return rest != 0;
        auto [v, a] = l.terms[unfixed];
        if (rest % a != 0) return true;
        return narrow(v, dom_[v].remove(-rest / a));
    }

    bool entailed_le(const Lin& l) const {
        int64_t hi = l.c;
        for (auto [v, a] : l.terms)
            hi += a > 0 ? a * dom_[v].max() : a * dom_[v].min();
        return hi <= 0;
    }
    bool refuted_le(const Lin& l) const {
        int64_t lo = l.c;
        for (auto [v, a] : l.terms)
            lo += a > 0 ? a * dom_[v].min() : a * dom_[v].max();
        return lo > 0;
    }

    bool prop_reif(const Prop& p) {
        const IntervalSet& bd = dom_[p.b];
        bool can0 = bd.contains(0), can1 = bd.contains(1);
        if (!can0 && !can1) return false;
        if (can1 && !can0) return enforce(p.lin, p.rop);
        if (can0 && !can1) return enforce_neg(p.lin, p.rop);
        // undecided: entailment check
        switch (p.rop) {
            case CmpOp::Le:
                if (entailed_le(p.lin)) return narrow(p.b, IntervalSet::single(1));
                if (refuted_le(p.lin)) return narrow(p.b, IntervalSet::single(0));
                return true;
            case CmpOp::Eq: {
                auto [lo, hi] = lin_bounds(p.lin);
                if (lo == 0 && hi == 0) return narrow(p.b, IntervalSet::single(1));
                if (lo > 0 || hi < 0) return narrow(p.b, IntervalSet::single(0));
                return true;
            }
            case CmpOp::Ne: {
                auto [lo, hi] = lin_bounds(p.lin);
                if (lo > 0 || hi < 0) return narrow(p.b, IntervalSet::single(1));
                if (lo == 0 && hi == 0) return narrow(p.b, IntervalSet::single(0));
                return true;
            }
            default: return true;
        }
    }

    bool enforce(const Lin& l, CmpOp op) {
        switch (op) {
            case CmpOp::Le: return prop_lin_le(l);
            case CmpOp::Eq:
                return prop_lin_le(l) && prop_lin_le(scale(l, -1)) &&
                       prop_eq_fix(l);
            case CmpOp::Ne: return prop_lin_ne(l);
            default: return true;
        }
    }
    bool enforce_neg(const Lin& l, CmpOp op) {
        switch (op) {
            case CmpOp::Le: {  // not (l <= 0)  <=>  -l + 1 <= 0
                Lin neg = scale(l, -1);
                neg.c += 1;
                return prop_lin_le(neg);
            }
            case CmpOp::Eq: return prop_lin_ne(l);
            case CmpOp::Ne:
                return prop_lin_le(l) && prop_lin_le(scale(l, -1)) &&
                       prop_eq_fix(l);
            default: return true;
        }
    }

    bool lit_true(std::pair<VarId, bool> lit) const {
        const IntervalSet& d = dom_[lit.first];
        return d.fixed() && (d.value() == (lit.second ? 0 : 1));
    }
    bool lit_false(std::pair<VarId, bool> lit) const {
        const IntervalSet& d = dom_[lit.first];
        return d.fixed() && (d.value() == (lit.second ? 1 : 0));
    }

    bool prop_clause(const Prop& p) {
        int free_idx = -1;
        int free_count = 0;
        for (size_t i = 0; i < p.lits.size(); ++i) {
            if (lit_true(p.lits[i])) return true;
            if (!lit_false(p.lits[i])) {
                ++free_count;
                free_idx = static_cast<int>(i);
            }
        }
        if (free_count == 0) return false;
        if (free_count == 1) {
            auto [v, neg] = p.lits[free_idx];
            return narrow(v, IntervalSet::single(neg ? 0 : 1));
        }
        return true;
    }

    bool prop_mul(const Prop& p) {
        const IntervalSet& dx = dom_[p.x];
        const IntervalSet& dy = dom_[p.y];
        int64_t p1 = dx.min() * dy.min(), p2 = dx.min() * dy.max();
        int64_t p3 = dx.max() * dy.min(), p4 = dx.max() * dy.max();
        if (!clamp(p.z, std::min({p1, p2, p3, p4}), std::max({p1, p2, p3, p4})))
            return false;
        if (dx.fixed() && dy.fixed())
            return narrow(p.z, dom_[p.z].intersect(IntervalSet::single(
                                   dx.value() * dy.value())));
        // one operand fixed and nonzero: bound the other through division
        auto bound_other = [&](int64_t f, VarId other) {
            if (f == 0) return dom_[p.z].contains(0);
            int64_t zl = dom_[p.z].min(), zh = dom_[p.z].max();
            double a = static_cast<double>(zl) / f;
            double b = static_cast<double>(zh) / f;
            int64_t lo = static_cast<int64_t>(std::ceil(std::min(a, b) - 1e-9));
            int64_t hi = static_cast<int64_t>(std::floor(std::max(a, b) + 1e-9));
            return clamp(other, lo, hi);
        };
        if (dx.fixed()) return bound_other(dx.value(), p.y);
        if (dy.fixed()) return bound_other(dy.value(), p.x);
        return true;
    }

    bool prop_divk(const Prop& p) {
        auto fdiv = [](int64_t a, int64_t b) {
            int64_t q = a / b, r = a % b;
            if (r != 0 && ((r < 0) != (b < 0))) --q;
            return q;
        };
        int64_t k = p.kconst;
        if (!clamp(p.z, fdiv(dom_[p.x].min(), k), fdiv(dom_[p.x].max(), k)))
            return false;
        return clamp(p.x, dom_[p.z].min() * k, dom_[p.z].max() * k + k - 1);
    }

    bool prop_modk(const Prop& p) {
        if (!clamp(p.z, 0, p.kconst - 1)) return false;
        if (dom_[p.x].fixed()) {
            int64_t r = dom_[p.x].value() % p.kconst;
            if (r < 0) r += p.kconst;
            return narrow(p.z, dom_[p.z].intersect(IntervalSet::single(r)));
        }
        return true;
    }

    bool prop_abs(const Prop& p) {
        const IntervalSet& dx = dom_[p.x];
        int64_t lo = dx.min(), hi = dx.max();
        int64_t zl = (lo <= 0 && hi >= 0) ? 0 : std::min(std::abs(lo), std::abs(hi));
        int64_t zh = std::max(std::abs(lo), std::abs(hi));
        if (!clamp(p.z, zl, zh)) return false;
        return clamp(p.x, -dom_[p.z].max(), dom_[p.z].max());
    }

    bool prop_minmax(const Prop& p, bool is_min) {
        const IntervalSet& dx = dom_[p.x];
        const IntervalSet& dy = dom_[p.y];
        if (is_min) {
            if (!clamp(p.z, std::min(dx.min(), dy.min()),
                       std::min(dx.max(), dy.max())))
                return false;
            if (!clamp(p.x, dom_[p.z].min(), dx.max())) return false;
            if (!clamp(p.y, dom_[p.z].min(), dy.max())) return false;
        } else {
            if (!clamp(p.z, std::max(dx.min(), dy.min()),
                       std::max(dx.max(), dy.max())))
                return false;
            if (!clamp(p.x, dx.min(), dom_[p.z].max())) return false;
            if (!clamp(p.y, dy.min(), dom_[p.z].max())) return false;
        }
        return true;
    }

    bool prop_element(const Prop& p) {
        int64_t n = static_cast<int64_t>(p.evars.size());
        if (!clamp(p.idx, 1, n)) return false;
        std::vector<int64_t> idx_keep;
        std::vector<int64_t> val_support;
        dom_[p.idx].for_each([&](int64_t i) {
            VarId ev = p.evars[i - 1];
            IntervalSet inter = dom_[ev].intersect(dom_[p.val]);
            if (!inter.empty()) {
                idx_keep.push_back(i);
                inter.for_each([&](int64_t v) { val_support.push_back(v); });
            }
        });
        if (!narrow(p.idx, dom_[p.idx].intersect(
                               IntervalSet::of_values(idx_keep))))
            return false;
        if (!narrow(p.val, dom_[p.val].intersect(
                               IntervalSet::of_values(val_support))))
            return false;
        if (dom_[p.idx].fixed()) {
            VarId ev = p.evars[dom_[p.idx].value() - 1];
            IntervalSet inter = dom_[ev].intersect(dom_[p.val]);
            if (!narrow(ev, inter)) return false;
            if (!narrow(p.val, inter)) return false;
        }
        return true;
    }

    bool prop_table(const Prop& p) {
        size_t n = p.evars.size();
        if (p.table_in) {
            std::vector<std::vector<int64_t>> support(n);
            bool any = false;
            for (const auto& row : *p.tuples) {
                bool ok = true;
                for (size_t i = 0; i < n; ++i)
                    if (!dom_[p.evars[i]].contains(row[i])) { ok = false; break; }
                if (!ok) continue;
                any = true;
                for (size_t i = 0; i < n; ++i) support[i].push_back(row[i]);
            }
            if (!any) return false;
            for (size_t i = 0; i < n; ++i)
                if (!narrow(p.evars[i],
                            dom_[p.evars[i]].intersect(
                                IntervalSet::of_values(support[i]))))
                    return false;
            return true;
        }
        // table_notin: forward check once a single position is open
        int open = -1, open_count = 0;
        for (size_t i = 0; i < n; ++i) {
            if (!dom_[p.evars[i]].fixed()) {
                ++open_count;
                open = static_cast<int>(i);
            }
        }
        if (open_count > 1) return true;
        for (const auto& row : *p.tuples) {
            bool match = true;
            for (size_t i = 0; i < n; ++i) {
                if (static_cast<int>(i) == open) continue;
                if (dom_[p.evars[i]].value() != row[i]) { match = false; break; }
            }
            if (!match) continue;
            if (open < 0) return false;  // fully fixed forbidden row
            if (!narrow(p.evars[open], dom_[p.evars[open]].remove(row[open])))
                return false;
        }
        return true;
    }

    // --- search ---------------------------------------------------------------

    void push_level() {
        marks_.push_back(trail_.size());
        ++level_;
    }
    void pop_level() {
        size_t mark = marks_.back();
        marks_.pop_back();
        while (trail_.size() > mark) {
            auto& [v, d, prev] = trail_.back();
            dom_[v] = std::move(d);
            last_saved_[v] = prev;
            trail_.pop_back();
        }
        --level_;
    }

    VarId pick_var() const {
        if (opts_.labeling == SolveOptions::Labeling::FirstFail) {
            VarId best = -1;
            uint64_t best_size = 0;
            for (VarId v : label_vars_) {
                uint64_t sz = dom_[v].size();
                if (sz <= 1) continue;
                if (best < 0 || sz < best_size ||
                    (sz == best_size && v < best)) {
                    best = v;
                    best_size = sz;
                }
            }
            if (best >= 0) return best;
        } else {
            for (VarId v : label_vars_)
                if (!dom_[v].fixed()) return v;
        }
        // any remaining unfixed variable (auxiliaries)
        for (size_t v = 0; v < dom_.size(); ++v)
            if (!dom_[v].fixed()) return static_cast<VarId>(v);
        return -1;
    }

    void dfs(const std::function<bool(const std::vector<int64_t>&)>& cb) {
        if (stopped_) return;
        VarId v = pick_var();
        if (v < 0) {
            ++stats_.solutions;
            if (obj_var_ >= 0) {
                int64_t val = dom_[obj_var_].value();
                std::vector<int64_t> full(dom_.size());
                for (size_t i = 0; i < dom_.size(); ++i) full[i] = dom_[i].value();
                best_ = std::move(full);
                bound_ = val;  // strict improvement required from here on
                return;
            }
            std::vector<int64_t> a(orig_count_);
            for (size_t i = 0; i < orig_count_; ++i) a[i] = dom_[i].value();
            if (cb(a)) stopped_ = true;
            return;
        }
        std::vector<int64_t> vals = dom_[v].values();
        for (int64_t val : vals) {
            if (stopped_) return;
            ++stats_.nodes;
            push_level();
            bool ok = narrow(v, IntervalSet::single(val)) && run_queue();
            if (ok) dfs(cb);
            pop_level();
        }
    }

    const Model& model_;
    size_t orig_count_ = 0;
    std::vector<IntervalSet> dom_;
    std::vector<Prop> props_;
    std::vector<std::vector<size_t>> watchers_;
    std::vector<bool> in_queue_;
    std::deque<size_t> queue_;
    std::vector<std::tuple<VarId, IntervalSet, int>> trail_;
    std::vector<size_t> marks_;
    std::vector<int> last_saved_;
    int level_ = 0;
    bool root_failed_ = false;
    bool stopped_ = false;
    SolveOptions opts_;
    std::vector<VarId> label_vars_;
    VarId obj_var_ = -1;
    std::optional<int64_t> bound_;
    std::optional<std::vector<int64_t>> best_;
    Stats stats_;
};

}  // namespace pl9
