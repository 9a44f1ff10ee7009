#pragma once

#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "pl9/cp.hpp"
#include "pl9/errors.hpp"
#include "pl9/mip.hpp"
#include "pl9/model.hpp"
#include "pl9/parser.hpp"
#include "pl9/planner.hpp"
#include "pl9/program.hpp"
#include "pl9/sat.hpp"
#include "pl9/tabling.hpp"
#include "pl9/term.hpp"
#include "pl9/writer.hpp"

namespace pl9 {

struct EngineConfig {
    SolveOptions::Backend backend = SolveOptions::Backend::Cp;
    bool backend_forced = false;  // command line beats the program's import
    uint64_t seed = 0;
    bool sat_learning = true;
    int64_t plan_limit = 1 << 28;  // default budget for best_plan/2
    int64_t plan_step = 1;
    std::string emit_dimacs;
    std::string emit_lp;
    std::ostream* out = &std::cout;
    size_t max_depth = 1000000;
};

// One engine instance executes one lowered program on one thread. Rules are
// selected by one-way pattern matching; explicit non-determinism is driven
// by success continuations, with a trail restoring bindings on failure.
class Engine {
public:
    using Cont = std::function<bool()>;

    Engine(TermStore& store, Program prog, EngineConfig cfg = EngineConfig())
        : store_(store), prog_(std::move(prog)), cfg_(cfg),
          tables_(*this), planner_(*this) {}

    TermStore& store() { return store_; }
    const Program& program() const { return prog_; }
    EngineConfig& config() { return cfg_; }
    TableManager<Engine>& tables() { return tables_; }
    Planner<Engine>& planner() { return planner_; }

    struct Binding {
        std::string name;
        TermRef value;
    };

    // Runs a parsed query. on_solution returns true to stop after this
    // solution; run_query returns true when at least one solution was found.
    bool run_query(const ParsedQuery& q,
                   const std::function<bool(const std::vector<Binding>&)>& cb) {
        trail_.clear();
        bind_.clear();
        bind_floor_ = 0;
        model_.reset();
        var_to_model_.clear();
        model_engine_vars_.clear();
        uint64_t base = alloc_vars(q.var_count);
        TermRef goal = rename(q.goal, base);
        bool any = false;
        solve(goal, [&]() {
            any = true;
            std::vector<Binding> bs;
            for (const auto& [name, serial] : q.named_vars)
                bs.push_back({name, resolve(TermRef::var(base + serial))});
            return cb(bs);
        });
        return any;
    }

    bool run_query_text(const std::string& text,
                        const std::function<bool(const std::vector<Binding>&)>& cb) {
        Parser p(store_, text, "<query>");
        return run_query(p.parse_query(), cb);
    }

    // --- core machinery (also used by the tabling and planner components) ----

    TermRef deref(TermRef t) const {
        while (t.is_var()) {
            TermRef b = bind_[t.var_serial()];
            if (!b.valid()) return t;
            t = b;
        }
        return t;
    }

    size_t trail_mark() const { return trail_.size(); }
    size_t bind_mark() const { return bind_.size(); }

    void undo_to(size_t tmark, size_t bmark) {
        while (trail_.size() > tmark) {
            bind_[trail_.back()] = TermRef();
            trail_.pop_back();
        }
        size_t floor = std::max(bmark, bind_floor_);
        if (bind_.size() > floor) bind_.resize(floor);
    }

    TermRef fresh_var() { return TermRef::var(alloc_vars(1)); }

    bool unify(TermRef a, TermRef b) {
        a = deref(a);
        b = deref(b);
        if (a == b) return true;
        if (a.is_var()) { bind(a.var_serial(), b); return true; }
        if (b.is_var()) { bind(b.var_serial(), a); return true; }
        if (a.tag() != b.tag()) return false;
        if (!a.is_node()) return false;
        const TermNode& na = store_.node(a);
        const TermNode& nb = store_.node(b);
        if (na.kind != nb.kind || na.symbol != nb.symbol ||
            na.args.size() != nb.args.size())
            return false;
        for (size_t i = 0; i < na.args.size(); ++i) {
            TermRef x = store_.node(a).args[i];
            TermRef y = store_.node(b).args[i];
            if (!unify(x, y)) return false;
        }
        return true;
    }

    // structural identity over the current bindings (the == test)
    bool identical(TermRef a, TermRef b) const {
        a = deref(a);
        b = deref(b);
        if (a == b) return true;
        if (a.tag() != b.tag()) return false;
        if (!a.is_node()) return false;
        const TermNode& na = store_.node(a);
        const TermNode& nb = store_.node(b);
        if (na.kind != nb.kind || na.symbol != nb.symbol ||
            na.args.size() != nb.args.size())
            return false;
        for (size_t i = 0; i < na.args.size(); ++i)
            if (!identical(na.args[i], nb.args[i])) return false;
        return true;
    }

    // deep copy with bindings applied
    TermRef resolve(TermRef t) {
        t = deref(t);
        if (!t.is_node()) return t;
        if (store_.is_ground(t)) return t;
        const TermNode n = store_.node(t);
        std::vector<TermRef> kids;
        kids.reserve(n.args.size());
        bool changed = false;
        for (TermRef a : n.args) {
            TermRef b = resolve(a);
            changed |= (b != a);
            kids.push_back(b);
        }
        if (!changed) return t;
        switch (n.kind) {
            case NodeKind::Cons: return store_.cons(kids[0], kids[1]);
            case NodeKind::Struct: return store_.make_struct(n.symbol, std::move(kids));
            case NodeKind::Array: return store_.make_array(std::move(kids));
        }
        return t;
    }

    std::string show(TermRef t) {
        return Writer(store_).term(resolve(t));
    }

    // Central solving entry: on failure the binding state is restored to the
    // state at entry; on a stopped (successful) search bindings are kept.
    bool solve(TermRef goal, const Cont& k) {
        if (depth_ >= cfg_.max_depth)
            throw Error(ErrorKind::contract, "recursion depth limit exceeded");
        ++depth_;
        size_t tmark = trail_.size();
        size_t bmark = bind_.size();
        bool stop;
        try {
            stop = dispatch(goal, k);
        } catch (...) {
            --depth_;
            throw;
        }
        --depth_;
        if (!stop) undo_to(tmark, bmark);
        return stop;
    }

    // Rule application: first applicable rule of a non-backtrackable kind
    // commits the call; backtrackable rules leave the remaining rules as
    // alternatives. `applied` (optional) reports whether any rule applied,
    // which the function-call protocol needs.
    bool solve_rules(const PredicateDef& def, const std::vector<TermRef>& args,
                     bool* applied, const Cont& k) {
        for (const Rule& r : def.rules) {
            size_t tmark = trail_.size();
            size_t bmark = bind_.size();
            uint64_t base = alloc_vars(r.var_count);
            bool matched = true;
            if (r.is_fact) {
                // facts keep clause-style unification in their heads
                for (size_t i = 0; i < args.size() && matched; ++i)
                    matched = unify(rename(r.head_args[i], base), args[i]);
            } else {
                for (size_t i = 0; i < args.size() && matched; ++i)
                    matched = match_pat(r.head_args[i], args[i], base);
            }
            if (matched && !is_true_atom(r.cond)) {
                TermRef cond = rename(r.cond, base);
                // the condition is deterministic: first solution only
                matched = solve(cond, [] { return true; });
            }
            if (!matched) {
                undo_to(tmark, bmark);
                continue;
            }
            if (applied) *applied = true;
            TermRef body = rename(r.body, base);
            if (!r.backtrackable) return solve(body, k);  // commitment
            if (solve(body, k)) return true;
            undo_to(tmark, bmark);
        }
        return false;
    }

    // one-way pattern matching; pattern variables at or above `base` are this
    // application's fresh head variables
    bool match_pat(TermRef pattern, TermRef value, uint64_t base) {
        if (pattern.is_var()) {
            TermRef pv = deref(TermRef::var(base + pattern.var_serial()));
            if (pv.is_var()) {
                if (pv.var_serial() >= base) {  // fresh: bind to the argument
                    bind(pv.var_serial(), deref(value));
                    return true;
                }
                // a call variable exposed through a repeated head variable:
                // the arguments must be identical
                return identical(pv, value);
            }
            return identical(pv, value);
        }
        TermRef v = deref(value);
        switch (pattern.tag()) {
            case Tag::SmallInt:
            case Tag::Atom:
            case Tag::Nil:
                return pattern == v;
            case Tag::Node: {
                const TermNode& pn = store_.node(pattern);
                if (pn.kind == NodeKind::Struct && pn.args.size() == 2 &&
                    store_.symbol_name(pn.symbol) == "@") {
                    // as-pattern: match the pattern part, then name the value
                    TermRef pat_var = pn.args[0];
                    if (!match_pat(pn.args[1], v, base)) return false;
                    return match_pat(pat_var, v, base);
                }
                if (v.is_var()) return false;  // fails rather than freezes
                if (!v.is_node()) return false;
                const TermNode& vn = store_.node(v);
                if (pn.kind != vn.kind || pn.symbol != vn.symbol ||
                    pn.args.size() != vn.args.size())
                    return false;
                for (size_t i = 0; i < pn.args.size(); ++i) {
                    TermRef pa = store_.node(pattern).args[i];
                    TermRef va = store_.node(v).args[i];
                    if (!match_pat(pa, va, base)) return false;
                }
                return true;
            }
            default:
                return false;
        }
    }

    // expression evaluation; empty result means the evaluation failed
    // logically (a function body failed). A variable's binding is a value
    // already, so it is returned without re-evaluation.
    std::optional<TermRef> eval(TermRef t) {
        if (t.is_var()) return deref(t);
        switch (t.tag()) {
            case Tag::SmallInt:
            case Tag::Atom:
            case Tag::Nil:
                return t;
            default: break;
        }
        const TermNode& n0 = store_.node(t);
        if (n0.kind == NodeKind::Cons) {
            auto h = eval(store_.node(t).args[0]);
            if (!h) return std::nullopt;
            auto tl = eval(store_.node(t).args[1]);
            if (!tl) return std::nullopt;
            return store_.cons(*h, *tl);
        }
        if (n0.kind == NodeKind::Array) {
            std::vector<TermRef> kids;
            size_t cnt = n0.args.size();
            for (size_t i = 0; i < cnt; ++i) {
                auto e = eval(store_.node(t).args[i]);
                if (!e) return std::nullopt;
                kids.push_back(*e);
            }
            return store_.make_array(std::move(kids));
        }
        const std::string name = store_.symbol_name(n0.symbol);
        size_t arity = n0.args.size();
        if (name == "$quote" && arity == 1) return store_.node(t).args[0];
        if ((name == "," || name == ";") && arity == 2) {
            // tuple-style structures are data
            auto a = eval(store_.node(t).args[0]);
            if (!a) return std::nullopt;
            auto b = eval(store_.node(t).args[1]);
            if (!b) return std::nullopt;
            return store_.make_struct(name, {*a, *b});
        }
        return eval_call(name, t);
    }

    int64_t eval_int(TermRef t) {
        auto v = eval(t);
        if (!v) throw Error(ErrorKind::type, "arithmetic evaluation failed");
        TermRef r = deref(*v);
        if (r.is_var())
            throw Error(ErrorKind::instantiation,
                        "unbound variable in arithmetic expression");
        if (!r.is_int())
            throw Error(ErrorKind::type,
                        "expected an integer, got " + show(r));
        return r.int_value();
    }

private:
    friend class TableManager<Engine>;
    friend class Planner<Engine>;

    bool is_true_atom(TermRef t) const {
        return t.is_atom() && store_.symbol_name(t.atom_sym()) == "true";
    }

    uint64_t alloc_vars(uint32_t n) {
        uint64_t base = bind_.size();
        bind_.resize(base + n, TermRef());
        return base;
    }

    void bind(uint64_t serial, TermRef val) {
        bind_[serial] = val;
        trail_.push_back(serial);
    }

    TermRef rename(TermRef t, uint64_t base) {
        if (t.is_var()) return TermRef::var(base + t.var_serial());
        if (!t.is_node() || store_.is_ground(t)) return t;
        const TermNode n = store_.node(t);
        std::vector<TermRef> kids;
        kids.reserve(n.args.size());
        for (TermRef a : n.args) kids.push_back(rename(a, base));
        switch (n.kind) {
            case NodeKind::Cons: return store_.cons(kids[0], kids[1]);
            case NodeKind::Struct: return store_.make_struct(n.symbol, std::move(kids));
            case NodeKind::Array: return store_.make_array(std::move(kids));
        }
        return t;
    }

    // --- goal dispatch ---------------------------------------------------------

    bool dispatch(TermRef goal, const Cont& k) {
        goal = deref(goal);
        if (goal.is_atom()) {
            const std::string& name = store_.symbol_name(goal.atom_sym());
            if (name == "true") return k();
            if (name == "fail" || name == "false") return false;
            if (name == "nl") { *cfg_.out << "\n"; return k(); }
            return call_pred(name, {}, k);
        }
        if (goal.is_var())
            throw Error(ErrorKind::instantiation, "call to an unbound variable");
        if (!goal.is_node() || store_.node(goal).kind != NodeKind::Struct)
            throw Error(ErrorKind::type, "goal is not callable: " + show(goal));

        const std::string name = store_.symbol_name(store_.node(goal).symbol);
        const std::vector<TermRef> args = store_.node(goal).args;
        size_t arity = args.size();

        // control
        if (name == "," && arity == 2)
            return solve(args[0], [&] { return solve(args[1], k); });
        if (name == ";" && arity == 2) {
            if (solve(args[0], k)) return true;
            return solve(args[1], k);
        }
        if (name == "not" && arity == 1) {
            size_t tm = trail_.size(), bm = bind_.size();
            bool found = solve(args[0], [] { return true; });
            if (found) undo_to(tm, bm);
            return found ? false : k();
        }

        // unification and comparison (operands are expressions)
        if (name == "=" && arity == 2) {
            auto l = eval(args[0]);
            if (!l) return false;
            auto r = eval(args[1]);
            if (!r) return false;
            return unify(*l, *r) ? k() : false;
        }
        if (name == "==" && arity == 2) return test_identical(args, true, k);
        if (name == "!==" && arity == 2) return test_identical(args, false, k);
        if (name == "!=" && arity == 2) {
            auto l = eval(args[0]);
            if (!l) return false;
            auto r = eval(args[1]);
            if (!r) return false;
            size_t tm = trail_.size(), bm = bind_.size();
            bool u = unify(*l, *r);
            undo_to(tm, bm);
            return u ? false : k();
        }
        if (arity == 2 && (name == "<" || name == ">" || name == "=<" ||
                           name == "<=" || name == ">=")) {
            int64_t l = eval_int(args[0]);
            int64_t r = eval_int(args[1]);
            bool ok = name == "<"    ? l < r
                      : name == ">"  ? l > r
                      : name == ">=" ? l >= r
                                     : l <= r;  // =< and <=
            return ok ? k() : false;
        }
        if (name == ":=")
            throw Error(ErrorKind::internal, ":= survived lowering");

        // constraint interface
        if (name == "::" && arity == 2) return goal_domain(args[0], args[1], k);
        if (arity == 2 && (name == "#=" || name == "#!=" || name == "#>" ||
                           name == "#>=" || name == "#<" || name == "#=<" ||
                           name == "#<=" || name == "#/\\" || name == "#\\/" ||
                           name == "#^" || name == "#<=>" || name == "#=>"))
            return goal_constraint(goal, k);
        if (name == "#~" && arity == 1) return goal_constraint(goal, k);
        if (name == "all_different" && arity == 1) {
            ensure_model();
            Constraint c;
            c.k = Constraint::K::AllDiff;
            for (TermRef e : constraint_list(args[0])) c.exprs.push_back(cexpr(e));
            model_->post(std::move(c));
            return k();
        }
        if (name == "element" && arity == 3) {
            ensure_model();
            Constraint c;
            c.k = Constraint::K::Element;
            c.idx = cexpr(args[0]);
            for (TermRef e : constraint_list(args[1])) c.exprs.push_back(cexpr(e));
            c.val = cexpr(args[2]);
            model_->post(std::move(c));
            return k();
        }
        if ((name == "table_in" || name == "table_notin") && arity == 2) {
            ensure_model();
            Constraint c;
            c.k = name == "table_in" ? Constraint::K::TableIn
                                     : Constraint::K::TableNotIn;
            for (TermRef e : constraint_list(args[0])) c.exprs.push_back(cexpr(e));
            for (TermRef row : constraint_list(args[1])) {
                std::vector<int64_t> tup;
                for (TermRef cell : constraint_list(row)) {
                    TermRef cv = deref(cell);
                    if (!cv.is_int())
                        throw Error(ErrorKind::type,
                                    "table tuples must contain integers");
                    tup.push_back(cv.int_value());
                }
                c.tuples.push_back(std::move(tup));
            }
            model_->post(std::move(c));
            return k();
        }
        if (name == "circuit" || name == "cumulative")
            throw Error(ErrorKind::unsupported_constraint,
                        name + " is recognized but not supported");
        if (name == "solve" && arity == 1)
            return goal_solve(store_.nil(), args[0], k);
        if (name == "solve" && arity == 2) {
            auto opts = eval(args[0]);
            if (!opts) return false;
            return goal_solve(*opts, args[1], k);
        }

        // planner interface
        if (name == "plan" && arity == 4) {
            auto s = eval(args[0]);
            if (!s) return false;
            return planner_.plan(*s, eval_int(args[1]), args[2], args[3], k);
        }
        if (name == "best_plan" && arity == 4) {
            auto s = eval(args[0]);
            if (!s) return false;
            return planner_.best_plan(*s, eval_int(args[1]), args[2], args[3], k);
        }
        if (name == "best_plan" && arity == 2) {
            auto s = eval(args[0]);
            if (!s) return false;
            return planner_.best_plan(*s, cfg_.plan_limit, args[1], fresh_var(), k);
        }

        // remaining goals evaluate their arguments, then dispatch to a
        // builtin or a user predicate
        std::vector<TermRef> evargs;
        evargs.reserve(arity);
        for (TermRef a : args) {
            auto e = eval(a);
            if (!e) return false;
            evargs.push_back(*e);
        }
        if (name == "writeln" && arity == 1) {
            *cfg_.out << show(evargs[0]) << "\n";
            return k();
        }
        if (name == "print" && arity == 1) {
            *cfg_.out << show(evargs[0]);
            return k();
        }
        if (name == "member" && arity == 2) return bi_member(evargs, k);
        if (name == "select" && arity == 3) return bi_select(evargs, k);
        if (name == "between" && arity == 3) return bi_between(evargs, k);
        return call_pred(name, evargs, k);
    }

    bool test_identical(const std::vector<TermRef>& args, bool want,
                        const Cont& k) {
        auto l = eval(args[0]);
        if (!l) return false;
        auto r = eval(args[1]);
        if (!r) return false;
        return identical(*l, *r) == want ? k() : false;
    }

    bool call_pred(const std::string& name, const std::vector<TermRef>& args,
                   const Cont& k) {
        const PredicateDef* def = prog_.find(name, static_cast<uint32_t>(args.size()));
        if (!def)
            throw Error(ErrorKind::unknown_predicate,
                        "unknown predicate " + name + "/" +
                            std::to_string(args.size()));
        if (def->tabled) return tables_.call(*def, args, k);
        if (def->from_function) {
            // calling the compiled form of a function keeps function
            // semantics: no applicable rule raises rather than fails
            bool applied = false;
            bool stop = solve_rules(*def, args, &applied, k);
            if (!stop && !applied)
                throw Error(ErrorKind::unresolved_function_call,
                            "unresolved function call: " + name);
            return stop;
        }
        return solve_rules(*def, args, nullptr, k);
    }

    // --- nondeterministic builtins ----------------------------------------------

    bool bi_member(const std::vector<TermRef>& args, const Cont& k) {
        TermRef x = args[0];
        TermRef l = deref(args[1]);
        while (true) {
            if (l.is_nil()) return false;
            if (!l.is_node() || store_.node(l).kind != NodeKind::Cons)
                return false;
            TermRef head = store_.node(l).args[0];
            TermRef tail = store_.node(l).args[1];
            size_t tm = trail_.size(), bm = bind_.size();
            if (unify(x, head) && k()) return true;
            undo_to(tm, bm);
            l = deref(tail);
        }
    }

    bool bi_select(const std::vector<TermRef>& args, const Cont& k) {
        TermRef x = args[0];
        std::vector<TermRef> elems;
        TermRef l = deref(args[1]);
        while (l.is_node() && store_.node(l).kind == NodeKind::Cons) {
            elems.push_back(store_.node(l).args[0]);
            l = deref(store_.node(l).args[1]);
        }
        if (!l.is_nil()) return false;
        for (size_t i = 0; i < elems.size(); ++i) {
            size_t tm = trail_.size(), bm = bind_.size();
            std::vector<TermRef> rest;
            for (size_t j = 0; j < elems.size(); ++j)
                if (j != i) rest.push_back(elems[j]);
            if (unify(x, elems[i]) &&
                unify(args[2], store_.make_list(rest)) && k())
                return true;
            undo_to(tm, bm);
        }
        return false;
    }

    bool bi_between(const std::vector<TermRef>& args, const Cont& k) {
        int64_t lo = eval_int(args[0]);
        int64_t hi = eval_int(args[1]);
        TermRef x = deref(args[2]);
        if (x.is_int())
            return (x.int_value() >= lo && x.int_value() <= hi) ? k() : false;
        for (int64_t v = lo; v <= hi; ++v) {
            size_t tm = trail_.size(), bm = bind_.size();
            if (unify(x, store_.make_int(v)) && k()) return true;
            undo_to(tm, bm);
        }
        return false;
    }

    // --- function evaluation ------------------------------------------------------

    std::optional<TermRef> eval_call(const std::string& name, TermRef t) {
        const std::vector<TermRef> raw = store_.node(t).args;
        size_t arity = raw.size();

        if (name == "$subscript" && arity == 2) return eval_subscript(raw);
        if (name == "$modref" && arity == 2)
            throw Error(ErrorKind::type,
                        "module symbol is not available: " + show(t));
        if (name == "current_resource" && arity == 0)
            return store_.make_int(planner_.current_resource());

        // arithmetic and list functions evaluate their arguments first
        std::vector<TermRef> a;
        a.reserve(arity);
        for (TermRef r : raw) {
            auto e = eval(r);
            if (!e) return std::nullopt;
            a.push_back(*e);
        }

        if (arity == 2 && (name == "+" || name == "-" || name == "*" ||
                           name == "div" || name == "/" || name == "mod")) {
            int64_t x = need_int(a[0]), y = need_int(a[1]);
            if (name == "+") return store_.make_int(x + y);
            if (name == "-") return store_.make_int(x - y);
            if (name == "*") return store_.make_int(x * y);
            if (name == "mod") {
                if (y == 0) throw Error(ErrorKind::type, "mod by zero");
                int64_t r = x % y;
                if (r != 0 && ((r < 0) != (y < 0))) r += y;
                return store_.make_int(r);
            }
            if (y == 0) throw Error(ErrorKind::type, "division by zero");
            int64_t q = x / y, r = x % y;
            if (r != 0 && ((r < 0) != (y < 0))) --q;
            return store_.make_int(q);  // floor division
        }
        if (name == "-" && arity == 1) return store_.make_int(-need_int(a[0]));
        if (name == "+" && arity == 1) return a[0];
        if (name == "abs" && arity == 1) {
            int64_t v = need_int(a[0]);
            return store_.make_int(v < 0 ? -v : v);
        }
        if (name == "min" && arity == 2)
            return store_.make_int(std::min(need_int(a[0]), need_int(a[1])));
        if (name == "max" && arity == 2)
            return store_.make_int(std::max(need_int(a[0]), need_int(a[1])));
        if (name == ".." && arity == 2) {
            int64_t lo = need_int(a[0]), hi = need_int(a[1]);
            std::vector<TermRef> out;
            for (int64_t v = lo; v <= hi; ++v) out.push_back(store_.make_int(v));
            return store_.make_list(out);
        }
        if (name == "++" && arity == 2) {
            std::vector<TermRef> xs = list_elems(a[0], "++");
            TermRef tail = deref(a[1]);
            return store_.make_list(xs, tail);
        }
        if (name == "length" && arity == 1) return store_.make_int(term_length(a[0]));
        if (name == "sum" && arity == 1) {
            int64_t s = 0;
            for (TermRef e : list_elems(a[0], "sum")) s += need_int(deref(e));
            return store_.make_int(s);
        }
        if (name == "sort" && arity == 1) {
            std::vector<TermRef> xs = list_elems(a[0], "sort");
            for (TermRef& x : xs) x = resolve(x);
            std::stable_sort(xs.begin(), xs.end(), [&](TermRef p, TermRef q) {
                return store_.compare(p, q) < 0;
            });
            return store_.make_list(xs);
        }
        if (name == "reverse" && arity == 1) {
            std::vector<TermRef> xs = list_elems(a[0], "reverse");
            std::reverse(xs.begin(), xs.end());
            return store_.make_list(xs);
        }
        if (name == "delete" && arity == 2) {
            std::vector<TermRef> xs = list_elems(a[0], "delete");
            std::vector<TermRef> out;
            for (TermRef x : xs)
                if (!identical(x, a[1])) out.push_back(x);
            return store_.make_list(out);
        }
        if (name == "insert_ordered" && arity == 2) {
            std::vector<TermRef> xs = list_elems(a[0], "insert_ordered");
            TermRef v = resolve(a[1]);
            std::vector<TermRef> out;
            bool placed = false;
            for (TermRef x : xs) {
                if (!placed && store_.compare(v, resolve(x)) <= 0) {
                    out.push_back(v);
                    placed = true;
                }
                out.push_back(x);
            }
            if (!placed) out.push_back(v);
            return store_.make_list(out);
        }
        if (name == "new_list" && arity == 1) {
            int64_t n = need_int(a[0]);
            std::vector<TermRef> out;
            for (int64_t i = 0; i < n; ++i) out.push_back(fresh_var());
            return store_.make_list(out);
        }
        if (name == "new_array" && (arity == 1 || arity == 2)) {
            int64_t n = need_int(a[0]);
            std::vector<TermRef> out;
            for (int64_t i = 0; i < n; ++i) {
                if (arity == 1) {
                    out.push_back(fresh_var());
                } else {
                    int64_t m = need_int(a[1]);
                    std::vector<TermRef> row;
                    for (int64_t j = 0; j < m; ++j) row.push_back(fresh_var());
                    out.push_back(store_.make_array(std::move(row)));
                }
            }
            return store_.make_array(std::move(out));
        }
        if (name == "get" && arity == 2) return eval_get(a[0], a[1]);
        if (name == "$iter_list" && arity == 1) {
            TermRef v = deref(a[0]);
            if (v.is_nil() ||
                (v.is_node() && store_.node(v).kind == NodeKind::Cons))
                return v;
            if (v.is_node() && store_.node(v).kind == NodeKind::Array) {
                std::vector<TermRef> elems = store_.node(v).args;
                return store_.make_list(elems);
            }
            throw Error(ErrorKind::type,
                        "iterator domain is not a list or array: " + show(v));
        }

        // user-defined function: call the compiled predicate, committing to
        // the first solution
        if (prog_.is_function(name, static_cast<uint32_t>(arity))) {
            const PredicateDef* def =
                prog_.find(name, static_cast<uint32_t>(arity + 1));
            TermRef ret = fresh_var();
            std::vector<TermRef> call_args = a;
            call_args.push_back(ret);
            bool applied = false;
            bool ok;
            if (def->tabled) {
                ok = tables_.call(*def, call_args, [] { return true; });
                applied = true;
            } else {
                ok = solve_rules(*def, call_args, &applied, [] { return true; });
            }
            if (ok) return deref(ret);
            if (!applied)
                throw Error(ErrorKind::unresolved_function_call,
                            "unresolved function call: " + name + "/" +
                                std::to_string(arity));
            return std::nullopt;  // a rule applied but its body failed
        }
        throw Error(ErrorKind::unresolved_function_call,
                    "unresolved function call: " + name + "/" +
                        std::to_string(arity));
    }

    int64_t need_int(TermRef t) {
        t = deref(t);
        if (t.is_var())
            throw Error(ErrorKind::instantiation,
                        "unbound variable in arithmetic expression");
        if (!t.is_int())
            throw Error(ErrorKind::type, "expected an integer, got " + show(t));
        return t.int_value();
    }

    std::vector<TermRef> list_elems(TermRef t, const char* who) {
        t = deref(t);
        std::vector<TermRef> out;
        while (!t.is_nil()) {
            if (!t.is_node() || store_.node(t).kind != NodeKind::Cons)
                throw Error(ErrorKind::type,
                            std::string(who) + " expects a proper list");
            out.push_back(store_.node(t).args[0]);
            t = deref(store_.node(t).args[1]);
        }
        return out;
    }

    int64_t term_length(TermRef t) {
        t = deref(t);
        if (t.is_nil()) return 0;
        if (t.is_node() && store_.node(t).kind == NodeKind::Array)
            return static_cast<int64_t>(store_.node(t).args.size());
        int64_t n = 0;
        while (t.is_node() && store_.node(t).kind == NodeKind::Cons) {
            ++n;
            t = deref(store_.node(t).args[1]);
        }
        if (!t.is_nil())
            throw Error(ErrorKind::type, "length expects a list or array");
        return n;
    }

    std::optional<TermRef> eval_subscript(const std::vector<TermRef>& raw) {
        auto basev = eval(raw[0]);
        if (!basev) return std::nullopt;
        TermRef base = deref(*basev);
        for (TermRef idx_t : list_elems(raw[1], "index")) {
            auto iv = eval(idx_t);
            if (!iv) return std::nullopt;
            int64_t i = need_int(*iv);
            base = deref(base);
            if (base.is_var())
                throw Error(ErrorKind::instantiation,
                            "index access on an unbound variable");
            if (base.is_node() && store_.node(base).kind == NodeKind::Array) {
                const auto& elems = store_.node(base).args;
                if (i < 1 || i > static_cast<int64_t>(elems.size()))
                    throw Error(ErrorKind::index,
                                "array index " + std::to_string(i) +
                                    " out of bounds");
                base = elems[i - 1];
                continue;
            }
            if (base.is_node() && store_.node(base).kind == NodeKind::Struct) {
                const auto& elems = store_.node(base).args;
                if (i < 1 || i > static_cast<int64_t>(elems.size()))
                    throw Error(ErrorKind::index, "structure index out of bounds");
                base = elems[i - 1];
                continue;
            }
            // list: 1-based walk
            int64_t seen = 0;
            TermRef l = base;
            TermRef found;
            while (l.is_node() && store_.node(l).kind == NodeKind::Cons) {
                ++seen;
                if (seen == i) { found = store_.node(l).args[0]; break; }
                l = deref(store_.node(l).args[1]);
            }
            if (!found.valid())
                throw Error(ErrorKind::index,
                            "index " + std::to_string(i) + " out of bounds");
            base = found;
        }
        return deref(base);
    }

    std::optional<TermRef> eval_get(TermRef obj, TermRef attr) {
        TermRef o = deref(obj);
        TermRef at = deref(attr);
        if (!at.is_atom())
            throw Error(ErrorKind::type, "attribute name must be an atom");
        const std::string& name = store_.symbol_name(at.atom_sym());
        if (name == "length") return store_.make_int(term_length(o));
        if (name == "name") {
            if (o.is_node() && store_.node(o).kind == NodeKind::Struct)
                return store_.make_atom(
                    store_.symbol_name(store_.node(o).symbol));
            if (o.is_atom()) return o;
            throw Error(ErrorKind::type, "name attribute of a non-structure");
        }
        throw Error(ErrorKind::type, "unknown attribute " + name);
    }

    // --- constraint interface ----------------------------------------------------

    void ensure_model() {
        if (!model_) model_ = std::make_unique<Model>();
    }

    std::vector<TermRef> constraint_list(TermRef t) {
        t = deref(t);
        if (t.is_node() && store_.node(t).kind == NodeKind::Array)
            return store_.node(t).args;
        return list_elems(t, "constraint argument");
    }

    VarId attach_var(uint64_t serial, const IntervalSet& dom) {
        auto it = var_to_model_.find(serial);
        if (it != var_to_model_.end()) return it->second;
        ensure_model();
        VarId id = model_->new_var(dom);
        var_to_model_.emplace(serial, id);
        model_engine_vars_.push_back(serial);
        bind_floor_ = std::max(bind_floor_, serial + 1);
        return id;
    }

    Expr cexpr(TermRef t) {
        t = deref(t);
        if (t.is_int()) return Expr::constant(t.int_value());
        if (t.is_var()) {
            auto it = var_to_model_.find(t.var_serial());
            if (it == var_to_model_.end())
                throw Error(ErrorKind::instantiation,
                            "constraint variable has no domain; post '::' first");
            return Expr::var(it->second);
        }
        if (t.is_node() && store_.node(t).kind == NodeKind::Struct) {
            const std::string name = store_.symbol_name(store_.node(t).symbol);
            const std::vector<TermRef> args = store_.node(t).args;
            if (name == "$quote" && args.size() == 1) return cexpr(args[0]);
            if (name == "+" && args.size() == 2)
                return Expr::node(Expr::K::Add, {cexpr(args[0]), cexpr(args[1])});
            if (name == "-" && args.size() == 2)
                return Expr::node(Expr::K::Sub, {cexpr(args[0]), cexpr(args[1])});
            if (name == "-" && args.size() == 1)
                return Expr::node(Expr::K::Neg, {cexpr(args[0])});
            if (name == "+" && args.size() == 1) return cexpr(args[0]);
            if (name == "*" && args.size() == 2)
                return Expr::node(Expr::K::Mul, {cexpr(args[0]), cexpr(args[1])});
            if ((name == "div" || name == "/") && args.size() == 2)
                return Expr::node(Expr::K::Div, {cexpr(args[0]), cexpr(args[1])});
            if (name == "mod" && args.size() == 2)
                return Expr::node(Expr::K::Mod, {cexpr(args[0]), cexpr(args[1])});
            if (name == "abs" && args.size() == 1)
                return Expr::node(Expr::K::Abs, {cexpr(args[0])});
            if (name == "min" && args.size() == 2)
                return Expr::node(Expr::K::Min2, {cexpr(args[0]), cexpr(args[1])});
            if (name == "max" && args.size() == 2)
                return Expr::node(Expr::K::Max2, {cexpr(args[0]), cexpr(args[1])});
            if (name == "sum" && args.size() == 1) {
                std::vector<Expr> kids;
                for (TermRef e : constraint_list(args[0])) kids.push_back(cexpr(e));
                return Expr::node(Expr::K::Sum, std::move(kids));
            }
            if (name == "$subscript" && args.size() == 2) {
                auto v = eval_subscript(args);
                if (!v)
                    throw Error(ErrorKind::type, "index access failed");
                return cexpr(*v);
            }
        }
        // last resort: the engine evaluator may reduce it to an integer
        auto v = eval(t);
        if (v) {
            TermRef r = deref(*v);
            if (r.is_int()) return Expr::constant(r.int_value());
            if (r.is_var()) return cexpr(r);
        }
        throw Error(ErrorKind::unsupported_constraint,
                    "unsupported constraint expression: " + show(t));
    }

    bool is_cmp_name(const std::string& n) const {
        return n == "#=" || n == "#!=" || n == "#>" || n == "#>=" ||
               n == "#<" || n == "#=<" || n == "#<=";
    }

    CmpOp cmp_op(const std::string& n) const {
        if (n == "#=") return CmpOp::Eq;
        if (n == "#!=") return CmpOp::Ne;
        if (n == "#>") return CmpOp::Gt;
        if (n == "#>=") return CmpOp::Ge;
        if (n == "#<") return CmpOp::Lt;
        return CmpOp::Le;  // #=< and #<=
    }

    BoolExpr cbool(TermRef t) {
        t = deref(t);
        if (t.is_int()) {
            if (t.int_value() == 0)
                return BoolExpr::node(BoolExpr::K::ConstFalse, {});
            if (t.int_value() == 1)
                return BoolExpr::node(BoolExpr::K::ConstTrue, {});
            throw Error(ErrorKind::type, "boolean constant must be 0 or 1");
        }
        if (t.is_var()) {
            VarId id = attach_var(t.var_serial(), IntervalSet::range(0, 1));
            return BoolExpr::lit(id);
        }
        if (t.is_node() && store_.node(t).kind == NodeKind::Struct) {
            const std::string name = store_.symbol_name(store_.node(t).symbol);
            const std::vector<TermRef> args = store_.node(t).args;
            if (name == "$quote" && args.size() == 1) return cbool(args[0]);
            if (is_cmp_name(name) && args.size() == 2)
                return BoolExpr::leaf(
                    Cmp{cexpr(args[0]), cexpr(args[1]), cmp_op(name)});
            if (name == "#~" && args.size() == 1)
                return BoolExpr::node(BoolExpr::K::Not, {cbool(args[0])});
            if (args.size() == 2) {
                BoolExpr::K k;
                if (name == "#/\\") k = BoolExpr::K::And;
                else if (name == "#\\/") k = BoolExpr::K::Or;
                else if (name == "#^") k = BoolExpr::K::Xor;
                else if (name == "#<=>") k = BoolExpr::K::Iff;
                else if (name == "#=>") k = BoolExpr::K::Imp;
                else
                    throw Error(ErrorKind::unsupported_constraint,
                                "unsupported boolean constraint: " + show(t));
                return BoolExpr::node(k, {cbool(args[0]), cbool(args[1])});
            }
        }
        throw Error(ErrorKind::unsupported_constraint,
                    "unsupported boolean constraint: " + show(t));
    }

    bool goal_domain(TermRef vars_t, TermRef dom_t, const Cont& k) {
        auto dv = eval(dom_t);
        if (!dv) return false;
        std::vector<int64_t> values;
        for (TermRef e : constraint_list(*dv)) {
            TermRef v = deref(e);
            if (!v.is_int())
                throw Error(ErrorKind::type, "domain values must be integers");
            values.push_back(v.int_value());
        }
        IntervalSet dom = IntervalSet::of_values(values);
        if (dom.empty()) return false;

        TermRef vs = deref(vars_t);
        std::vector<TermRef> targets;
        if (vs.is_var() || vs.is_int()) targets.push_back(vs);
        else targets = constraint_list(vs);
        for (TermRef tv : targets) {
            TermRef v = deref(tv);
            if (v.is_int()) {
                if (!dom.contains(v.int_value())) return false;
                continue;
            }
            if (!v.is_var())
                throw Error(ErrorKind::type,
                            "'::' expects variables or integers");
            auto it = var_to_model_.find(v.var_serial());
            if (it == var_to_model_.end()) {
                attach_var(v.var_serial(), dom);
            } else {
                if (!model_->restrict_domain(it->second, dom)) return false;
            }
        }
        return k();
    }

    bool goal_constraint(TermRef goal, const Cont& k) {
        ensure_model();
        const std::string name = store_.symbol_name(store_.node(goal).symbol);
        const std::vector<TermRef> args = store_.node(goal).args;
        if (is_cmp_name(name)) {
            Constraint c;
            c.k = Constraint::K::Arith;
            c.cmp = Cmp{cexpr(args[0]), cexpr(args[1]), cmp_op(name)};
            model_->post(std::move(c));
            return k();
        }
        // reification pattern: Var #<=> (comparison)
        if (name == "#<=>") {
            TermRef lhs = deref(args[0]);
            TermRef rhs = deref(args[1]);
            auto as_cmp = [&](TermRef t) -> const TermNode* {
                t = deref(t);
                if (t.is_node() && store_.node(t).kind == NodeKind::Struct &&
                    store_.node(t).args.size() == 2 &&
                    is_cmp_name(store_.symbol_name(store_.node(t).symbol)))
                    return &store_.node(t);
                return nullptr;
            };
            if (lhs.is_var() && as_cmp(rhs)) {
                Constraint c;
                c.k = Constraint::K::Reif;
                c.bvar = attach_var(lhs.var_serial(), IntervalSet::range(0, 1));
                const std::string cn =
                    store_.symbol_name(store_.node(deref(rhs)).symbol);
                const std::vector<TermRef> cargs = store_.node(deref(rhs)).args;
                c.cmp = Cmp{cexpr(cargs[0]), cexpr(cargs[1]), cmp_op(cn)};
                model_->post(std::move(c));
                return k();
            }
        }
        Constraint c;
        c.k = Constraint::K::Bool;
        c.bexpr = cbool(goal);
        model_->post(std::move(c));
        return k();
    }

    SolveOptions::Backend effective_backend() const {
        if (cfg_.backend_forced) return cfg_.backend;
        for (const std::string& m : prog_.imports) {
            if (m == "sat") return SolveOptions::Backend::Sat;
            if (m == "mip") return SolveOptions::Backend::Mip;
            if (m == "cp") return SolveOptions::Backend::Cp;
        }
        return cfg_.backend;
    }

    bool sync_bound_vars() {
        for (size_t i = 0; i < model_engine_vars_.size(); ++i) {
            TermRef t = deref(TermRef::var(model_engine_vars_[i]));
            if (t.is_var()) continue;
            if (!t.is_int())
                throw Error(ErrorKind::type,
                            "decision variable bound to a non-integer");
            if (!model_->restrict_domain(static_cast<VarId>(i),
                                         IntervalSet::single(t.int_value())))
                return false;
        }
        return true;
    }

    bool goal_solve(TermRef opts_t, TermRef vars_t, const Cont& k) {
        ensure_model();
        if (!sync_bound_vars()) return false;

        SolveOptions so;
        so.backend = effective_backend();
        so.seed = cfg_.seed;
        so.sat_learning = cfg_.sat_learning;
        TermRef o = deref(opts_t);
        if (!o.is_nil())
            for (TermRef opt : constraint_list(o)) {
                TermRef ov = deref(opt);
                if (ov.is_atom() &&
                    store_.symbol_name(ov.atom_sym()) == "ff") {
                    so.labeling = SolveOptions::Labeling::FirstFail;
                    continue;
                }
                if (ov.is_node() && store_.node(ov).kind == NodeKind::Struct &&
                    store_.node(ov).args.size() == 1) {
                    const std::string on =
                        store_.symbol_name(store_.node(ov).symbol);
                    if (on == "min" || on == "max") {
                        so.objective = on == "min"
                                           ? SolveOptions::Objective::Min
                                           : SolveOptions::Objective::Max;
                        so.objective_expr = cexpr(store_.node(ov).args[0]);
                        continue;
                    }
                }
                throw Error(ErrorKind::config,
                            "unknown solve option: " + show(ov));
            }

        std::vector<VarId> label_vars;
        TermRef vs = deref(vars_t);
        std::vector<TermRef> targets;
        if (vs.is_var() || vs.is_int()) targets.push_back(vs);
        else targets = constraint_list(vs);
        for (TermRef tv : targets) {
            TermRef v = deref(tv);
            if (v.is_int()) continue;
            if (!v.is_var())
                throw Error(ErrorKind::type, "solve expects variables");
            auto it = var_to_model_.find(v.var_serial());
            if (it == var_to_model_.end())
                throw Error(ErrorKind::instantiation,
                            "variable in solve/2 has no domain");
            label_vars.push_back(it->second);
        }

        auto bind_solution = [&](const std::vector<int64_t>& a) -> bool {
            size_t tm = trail_.size(), bm = bind_.size();
            bool ok = true;
            for (size_t i = 0; i < a.size() && ok; ++i)
                ok = unify(TermRef::var(model_engine_vars_[i]),
                           store_.make_int(a[i]));
            if (ok && k()) return true;
            undo_to(tm, bm);
            return false;
        };

        switch (so.backend) {
            case SolveOptions::Backend::Cp: {
                CpSolver solver(*model_);
                bool stopped = solver.enumerate(label_vars, so, bind_solution);
                cp_nodes_ += solver.stats().nodes;
                cp_solutions_ += solver.stats().solutions;
                return stopped;
            }
            case SolveOptions::Backend::Sat: {
                SatCompiler comp(*model_);
                if (!cfg_.emit_dimacs.empty()) {
                    std::ofstream f(cfg_.emit_dimacs);
                    comp.emit_dimacs(f);
                    std::ofstream m(cfg_.emit_dimacs + ".map");
                    comp.emit_varmap(m);
                }
                return comp.enumerate(so, bind_solution);
            }
            case SolveOptions::Backend::Mip: {
                MipCompiler mc(*model_);
                if (so.objective != SolveOptions::Objective::None)
                    mc.set_objective(so.objective == SolveOptions::Objective::Min
                                         ? LinearModel::ObjKind::Min
                                         : LinearModel::ObjKind::Max,
                                     so.objective_expr);
                if (!cfg_.emit_lp.empty()) {
                    std::ofstream f(cfg_.emit_lp);
                    f << emit_lp(mc.linear_model());
                    std::ofstream m(cfg_.emit_lp + ".map");
                    m << emit_lp_varmap(mc.linear_model(),
                                        mc.original_var_count());
                }
                // solving is delegated to the LP interface; desk-scale models
                // are enumerated directly against the reference semantics
                if (so.objective != SolveOptions::Objective::None) {
                    std::optional<std::vector<int64_t>> best;
                    std::optional<int64_t> best_val;
                    model_->enumerate_box(100000,
                                          [&](const std::vector<int64_t>& a) {
                        if (!model_->solution(a)) return;
                        int64_t v = model_->eval(so.objective_expr, a);
                        bool better = !best_val ||
                            (so.objective == SolveOptions::Objective::Min
                                 ? v < *best_val : v > *best_val);
                        if (better) { best = a; best_val = v; }
                    });
                    if (!best) return false;
                    return bind_solution(*best);
                }
                bool stopped = false;
                model_->enumerate_box(100000, [&](const std::vector<int64_t>& a) {
                    if (stopped || !model_->solution(a)) return;
                    if (bind_solution(a)) stopped = true;
                });
                return stopped;
            }
        }
        return false;
    }

public:
    // machine-parseable `key value` instrumentation lines
    void print_store_stats(std::ostream& os) const {
        StoreStats s = store_.stats();
        os << "store_node_count " << s.node_count << "\n";
        os << "store_intern_hits " << s.intern_hits << "\n";
        os << "store_intern_misses " << s.intern_misses << "\n";
        os << "store_heap_nodes " << s.heap_nodes << "\n";
    }

    void print_table_stats(std::ostream& os) const {
        for (const auto& [pred, st] : tables_.stats()) {
            os << "table_keys " << pred << " " << st.keys << "\n";
            os << "table_hits " << pred << " " << st.hits << "\n";
            os << "producer_iterations " << pred << " "
               << st.producer_iterations << "\n";
        }
    }

    void print_plan_stats(std::ostream& os) const {
        const auto& st = planner_.stats();
        os << "states_interned " << st.states << "\n";
        os << "states_expanded " << st.expansions << "\n";
        os << "states_reexpanded " << st.reexpansions << "\n";
        os << "plan_rounds " << st.rounds << "\n";
        os << "failed_reuse_hits " << st.failed_reuse_hits << "\n";
        os << "success_reuse_hits " << st.success_reuse_hits << "\n";
    }

private:
    TermStore& store_;
    Program prog_;
    EngineConfig cfg_;
    std::vector<TermRef> bind_;
    std::vector<uint64_t> trail_;
    uint64_t bind_floor_ = 0;
    size_t depth_ = 0;
    TableManager<Engine> tables_;
    Planner<Engine> planner_;

    std::unique_ptr<Model> model_;
    std::unordered_map<uint64_t, VarId> var_to_model_;
    std::vector<uint64_t> model_engine_vars_;
    uint64_t cp_nodes_ = 0;
    uint64_t cp_solutions_ = 0;
};

}  // namespace pl9
