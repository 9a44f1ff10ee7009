#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "pl9/program.hpp"
#include "pl9/term.hpp"

namespace pl9 {

namespace lowering_detail {

inline bool is_struct(const TermStore& s, TermRef t, std::string_view name,
                      size_t arity) {
    if (!t.is_node()) return false;
    const TermNode& n = s.node(t);
    return n.kind == NodeKind::Struct && n.args.size() == arity &&
           s.symbol_name(n.symbol) == name;
}

inline bool is_atom(const TermStore& s, TermRef t, std::string_view name) {
    return t.is_atom() && s.symbol_name(t.atom_sym()) == name;
}

inline void collect_vars(const TermStore& s, TermRef t,
                         std::set<uint64_t>& out) {
    if (t.is_var()) { out.insert(t.var_serial()); return; }
    if (t.is_node())
        for (TermRef a : s.node(t).args) collect_vars(s, a, out);
}

inline TermRef substitute(TermStore& s, TermRef t,
                          const std::unordered_map<uint64_t, TermRef>& map) {
    if (t.is_var()) {
        auto it = map.find(t.var_serial());
        return it == map.end() ? t : it->second;
    }
    if (!t.is_node()) return t;
    const TermNode n = s.node(t);  // copy: store may reallocate
    std::vector<TermRef> args;
    args.reserve(n.args.size());
    bool changed = false;
    for (TermRef a : n.args) {
        TermRef b = substitute(s, a, map);
        changed |= (b != a);
        args.push_back(b);
    }
    if (!changed) return t;
    switch (n.kind) {
        case NodeKind::Cons: return s.cons(args[0], args[1]);
        case NodeKind::Struct: return s.make_struct(n.symbol, std::move(args));
        case NodeKind::Array: return s.make_array(std::move(args));
    }
    return t;
}

inline bool is_builtin_module(std::string_view name) {
    return name == "cp" || name == "sat" || name == "mip" || name == "math" ||
           name == "planner" || name == "basic" || name == "io" ||
           name == "util" || name == "os";
}

}  // namespace lowering_detail

// OOP-notation rewrite: A.f(Args) becomes f(A,Args...) unless A is an atom,
// in which case the atom is a module qualifier and is dropped (builtin
// modules) or kept as a qualified reference. A.Attr becomes get(A,Attr).
inline TermRef rewrite_oop(TermStore& store, TermRef t) {
    using namespace lowering_detail;
    if (!t.is_node()) return t;
    const TermNode n = store.node(t);
    std::vector<TermRef> args;
    args.reserve(n.args.size());
    for (TermRef a : n.args) args.push_back(rewrite_oop(store, a));
    TermRef rebuilt;
    switch (n.kind) {
        case NodeKind::Cons: rebuilt = store.cons(args[0], args[1]); break;
        case NodeKind::Struct:
            rebuilt = store.make_struct(n.symbol, args);
            break;
        case NodeKind::Array: rebuilt = store.make_array(args); break;
    }
    if (n.kind != NodeKind::Struct || store.symbol_name(n.symbol) != "$dot" ||
        args.size() != 2)
        return rebuilt;

    TermRef base = args[0];
    TermRef access = args[1];
    if (access.is_atom()) {
        if (base.is_atom())
            return store.make_struct("$modref", {base, access});
        return store.make_struct("get", {base, access});
    }
    if (access.is_node() && store.node(access).kind == NodeKind::Struct) {
        const TermNode an = store.node(access);
        if (base.is_atom()) {
            // module-qualified call: the qualifier is dropped
            (void)is_builtin_module(store.symbol_name(base.atom_sym()));
            return access;
        }
        std::vector<TermRef> call_args;
        call_args.push_back(base);
        for (TermRef a : an.args) call_args.push_back(a);
        return store.make_struct(an.symbol, std::move(call_args));
    }
    throw Error(ErrorKind::type, "malformed '.' access");
}

// Loop / comprehension / assignment lowering. Every foreach and list
// comprehension becomes a generated tail-recursive predicate; X := E
// introduces a renamed variable for subsequent reads. Variables that occur
// only inside a loop and not before it are fresh per iteration.
class Lowerer {
public:
    Lowerer(TermStore& store, Program& prog) : store_(store), prog_(prog) {}

    void run() {
        std::vector<PredKey> work = prog_.def_order;
        next_unprocessed_ = work.size();
        for (size_t wi = 0; wi < work.size(); ++wi) {
            // lowering can insert generated predicates into the map, so the
            // rule being lowered is copied out and written back
            for (size_t ri = 0;; ++ri) {
                PredicateDef* def = prog_.find(work[wi].name, work[wi].arity);
                if (!def || ri >= def->rules.size()) break;
                Rule r = def->rules[ri];
                lower_rule(r);
                prog_.find(work[wi].name, work[wi].arity)->rules[ri] =
                    std::move(r);
            }
            while (next_unprocessed_ < prog_.def_order.size())
                work.push_back(prog_.def_order[next_unprocessed_++]);
        }
    }

private:
    using VarMap = std::unordered_map<uint64_t, TermRef>;

    struct VarCtx {
        Rule* rule;
        TermRef fresh(const std::string& base) {
            uint64_t s = rule->var_count++;
            rule->var_names.push_back(base + std::to_string(s));
            return TermRef::var(s);
        }
    };

    void lower_rule(Rule& r) {
        for (TermRef& a : r.head_args) a = rewrite_oop(store_, a);
        r.cond = rewrite_oop(store_, r.cond);
        r.body = rewrite_oop(store_, r.body);
        validate_head(r);

        VarCtx ctx{&r};
        std::set<uint64_t> seen;
        for (TermRef a : r.head_args)
            lowering_detail::collect_vars(store_, a, seen);

        VarMap subst;
        if (!lowering_detail::is_atom(store_, r.cond, "true")) {
            std::vector<TermRef> cond_goals;
            lower_seq(r.cond, subst, seen, ctx, cond_goals);
            r.cond = conj(cond_goals);
            lowering_detail::collect_vars(store_, r.cond, seen);
        }
        std::vector<TermRef> goals;
        lower_seq(r.body, subst, seen, ctx, goals);
        r.body = conj(goals);
    }

    void validate_head(const Rule& r) {
        for (TermRef a : r.head_args) validate_as_patterns(a);
    }
    void validate_as_patterns(TermRef t) {
        if (!t.is_node()) return;
        const TermNode& n = store_.node(t);
        if (n.kind == NodeKind::Struct &&
            store_.symbol_name(n.symbol) == "@" && n.args.size() == 2) {
            if (!n.args[0].is_var())
                throw Error(ErrorKind::parse,
                            "as-pattern must bind a variable");
            if (n.args[1].is_var())
                throw Error(ErrorKind::parse,
                            "as-pattern requires a non-variable pattern");
        }
        for (TermRef a : n.args) validate_as_patterns(a);
    }

    TermRef conj(const std::vector<TermRef>& goals) {
        if (goals.empty()) return store_.make_atom("true");
        TermRef t = goals.back();
        for (size_t i = goals.size() - 1; i-- > 0;)
            t = store_.make_struct(",", {goals[i], t});
        return t;
    }

    // Sequentially lowers a goal, maintaining the := renaming map and the
    // set of variables seen so far (the loop scoping rule needs it).
    void lower_seq(TermRef goal, VarMap& subst, std::set<uint64_t>& seen,
                   VarCtx& ctx, std::vector<TermRef>& out) {
        using namespace lowering_detail;
        if (is_struct(store_, goal, ",", 2)) {
            const TermNode n = store_.node(goal);
            lower_seq(n.args[0], subst, seen, ctx, out);
            lower_seq(n.args[1], subst, seen, ctx, out);
            return;
        }
        if (is_struct(store_, goal, ";", 2)) {
            const TermNode n = store_.node(goal);
            TermRef lhs = lower_branch(n.args[0], subst, seen, ctx);
            TermRef rhs = lower_branch(n.args[1], subst, seen, ctx);
            TermRef g = store_.make_struct(";", {lhs, rhs});
            collect_vars(store_, g, seen);
            out.push_back(g);
            return;
        }
        if (is_struct(store_, goal, "not", 2 - 1)) {
            const TermNode n = store_.node(goal);
            TermRef inner = lower_branch(n.args[0], subst, seen, ctx);
            TermRef g = store_.make_struct("not", {inner});
            collect_vars(store_, g, seen);
            out.push_back(g);
            return;
        }
        if (is_struct(store_, goal, ":=", 2)) {
            const TermNode n = store_.node(goal);
            TermRef lhs = n.args[0];
            if (!lhs.is_var())
                throw Error(ErrorKind::parse,
                            ":= requires a variable on the left");
            TermRef rhs = substitute(store_, n.args[1], subst);
            rhs = hoist_comprehensions(rhs, subst, seen, ctx, out);
            uint64_t orig = lhs.var_serial();
            std::string base =
                orig < ctx.rule->var_names.size() ? ctx.rule->var_names[orig]
                                                  : "_X";
            TermRef renamed = ctx.fresh(base + "_");
            out.push_back(store_.make_struct("=", {renamed, rhs}));
            subst[orig] = renamed;
            seen.insert(renamed.var_serial());
            collect_vars(store_, rhs, seen);
            return;
        }
        if (is_struct(store_, goal, "foreach", 2)) {
            lower_foreach(goal, subst, seen, ctx, out);
            return;
        }
        TermRef g = substitute(store_, goal, subst);
        g = hoist_comprehensions(g, subst, seen, ctx, out);
        collect_vars(store_, g, seen);
        out.push_back(g);
    }

    TermRef lower_branch(TermRef goal, const VarMap& subst,
                         std::set<uint64_t>& seen, VarCtx& ctx) {
        VarMap branch_subst = subst;
        std::vector<TermRef> goals;
        lower_seq(goal, branch_subst, seen, ctx, goals);
        for (const auto& [k, v] : branch_subst) {
            auto it = subst.find(k);
            if (it == subst.end() || it->second != v)
                throw Error(ErrorKind::parse,
                            ":= inside a disjunction or negation is not supported");
        }
        return conj(goals);
    }

    // Replaces every outermost list comprehension in an expression by a
    // fresh variable, emitting the goals that compute it.
    TermRef hoist_comprehensions(TermRef t, VarMap& subst,
                                 std::set<uint64_t>& seen, VarCtx& ctx,
                                 std::vector<TermRef>& out) {
        using namespace lowering_detail;
        if (!t.is_node()) return t;
        if (is_struct(store_, t, "$quote", 1)) return t;
        if (is_struct(store_, t, "$listcomp", 2)) {
            TermRef v = ctx.fresh("_L");
            build_comprehension(v, t, subst, seen, ctx, out);
            seen.insert(v.var_serial());
            return v;
        }
        const TermNode n = store_.node(t);
        std::vector<TermRef> args;
        args.reserve(n.args.size());
        bool changed = false;
        for (TermRef a : n.args) {
            TermRef b = hoist_comprehensions(a, subst, seen, ctx, out);
            changed |= (b != a);
            args.push_back(b);
        }
        if (!changed) return t;
        switch (n.kind) {
            case NodeKind::Cons: return store_.cons(args[0], args[1]);
            case NodeKind::Struct:
                return store_.make_struct(n.symbol, std::move(args));
            case NodeKind::Array: return store_.make_array(std::move(args));
        }
        return t;
    }

    struct Level {
        TermRef pattern;
        TermRef domain;
        std::vector<TermRef> conds;
    };

    std::vector<Level> split_levels(TermRef specs_list) {
        using namespace lowering_detail;
        std::vector<Level> levels;
        for (TermRef spec : store_.list_elements(specs_list)) {
            if (is_struct(store_, spec, "in", 2)) {
                const TermNode& n = store_.node(spec);
                levels.push_back(Level{n.args[0], n.args[1], {}});
            } else {
                if (levels.empty())
                    throw Error(ErrorKind::parse,
                                "iterator condition precedes any 'in' iterator");
                levels.back().conds.push_back(spec);
            }
        }
        if (levels.empty())
            throw Error(ErrorKind::parse,
                        "loop or comprehension needs at least one iterator");
        return levels;
    }

    // Shared by comprehension and foreach lowering: remaps a term from the
    // enclosing rule's variable space into a generated rule's space.
    struct Remap {
        TermStore& store;
        Rule& rule;
        std::unordered_map<uint64_t, TermRef> map;
        const std::vector<std::string>* outer_names;

        TermRef local_for(uint64_t outer_serial) {
            auto it = map.find(outer_serial);
            if (it != map.end()) return it->second;
            uint64_t s = rule.var_count++;
            std::string name = outer_serial < outer_names->size()
                                   ? (*outer_names)[outer_serial]
                                   : "_V";
            rule.var_names.push_back(name);
            TermRef v = TermRef::var(s);
            map.emplace(outer_serial, v);
            return v;
        }
        TermRef fresh(const std::string& name) {
            uint64_t s = rule.var_count++;
            rule.var_names.push_back(name);
            return TermRef::var(s);
        }
        TermRef remap(TermRef t) {
            if (t.is_var()) return local_for(t.var_serial());
            if (!t.is_node()) return t;
            const TermNode n = store.node(t);
            std::vector<TermRef> args;
            args.reserve(n.args.size());
            for (TermRef a : n.args) args.push_back(remap(a));
            switch (n.kind) {
                case NodeKind::Cons: return store.cons(args[0], args[1]);
                case NodeKind::Struct:
                    return store.make_struct(n.symbol, std::move(args));
                case NodeKind::Array:
                    return store.make_array(std::move(args));
            }
            return t;
        }
    };

    std::string gen_name(const char* prefix) {
        return std::string(prefix) + std::to_string(gen_counter_++);
    }

    TermRef iter_list(TermRef dom) {
        return store_.make_struct("$iter_list", {dom});
    }

    void build_comprehension(TermRef result_var, TermRef comp, VarMap& subst,
                             std::set<uint64_t>& seen, VarCtx& ctx,
                             std::vector<TermRef>& out) {
        const TermNode cn = store_.node(comp);
        TermRef template_expr = cn.args[0];
        std::vector<Level> levels = split_levels(cn.args[1]);

        // first-level domain is evaluated in the enclosing scope
        levels[0].domain =
            hoist_comprehensions(levels[0].domain, subst, seen, ctx, out);

        std::set<uint64_t> comp_vars;
        lowering_detail::collect_vars(store_, template_expr, comp_vars);
        for (const Level& lv : levels) {
            lowering_detail::collect_vars(store_, lv.pattern, comp_vars);
            lowering_detail::collect_vars(store_, lv.domain, comp_vars);
            for (TermRef c : lv.conds)
                lowering_detail::collect_vars(store_, c, comp_vars);
        }
        std::vector<uint64_t> globals;
        for (uint64_t v : comp_vars)
            if (seen.count(v)) globals.push_back(v);

        std::vector<std::string> names;
        for (size_t i = 0; i < levels.size(); ++i)
            names.push_back(gen_name("$lc"));

        for (size_t i = 0; i < levels.size(); ++i)
            emit_comp_level(names, levels, i, globals, template_expr,
                            ctx.rule->var_names);

        std::vector<TermRef> entry_args;
        entry_args.push_back(iter_list(levels[0].domain));
        for (uint64_t g : globals) entry_args.push_back(TermRef::var(g));
        entry_args.push_back(result_var);
        entry_args.push_back(store_.nil());
        out.push_back(store_.make_struct(names[0], entry_args));
        lowering_detail::collect_vars(store_, out.back(), seen);
    }

    // Carried arguments for level i: the globals, then the pattern variables
    // of all enclosing levels (they may occur in inner domains/conditions).
    std::vector<uint64_t> carried_for(const std::vector<Level>& levels,
                                      size_t i,
                                      const std::vector<uint64_t>& globals) {
        std::vector<uint64_t> carried = globals;
        std::set<uint64_t> have(globals.begin(), globals.end());
        for (size_t j = 0; j < i; ++j) {
            std::set<uint64_t> pv;
            lowering_detail::collect_vars(store_, levels[j].pattern, pv);
            for (uint64_t v : pv)
                if (have.insert(v).second) carried.push_back(v);
        }
        return carried;
    }

    void emit_comp_level(const std::vector<std::string>& names,
                         const std::vector<Level>& levels, size_t i,
                         const std::vector<uint64_t>& globals,
                         TermRef template_expr,
                         const std::vector<std::string>& outer_names) {
        std::vector<uint64_t> carried = carried_for(levels, i, globals);
        uint32_t arity = static_cast<uint32_t>(1 + carried.size() + 2);
        PredicateDef& def = prog_.declare(names[i], arity);

        // rule 1: end of list, the open tail closes
        {
            Rule r;
            Remap rm{store_, r, {}, &outer_names};
            std::vector<TermRef> args;
            args.push_back(store_.nil());
            for (uint64_t c : carried) args.push_back(rm.local_for(c));
            TermRef outv = rm.fresh("Out");
            TermRef tailv = rm.fresh("Tail");
            args.push_back(outv);
            args.push_back(tailv);
            r.head_args = std::move(args);
            r.cond = store_.make_atom("true");
            r.body = store_.make_struct("=", {outv, tailv});
            def.rules.push_back(std::move(r));
        }
        // rule 2: element matches the pattern and the conditions hold
        {
            Rule r;
            Remap rm{store_, r, {}, &outer_names};
            TermRef pat = rm.remap(levels[i].pattern);
            TermRef rest = rm.fresh("Rest");
            std::vector<TermRef> args;
            args.push_back(store_.cons(pat, rest));
            for (uint64_t c : carried) args.push_back(rm.local_for(c));
            TermRef outv = rm.fresh("Out");
            TermRef tailv = rm.fresh("Tail");
            args.push_back(outv);
            args.push_back(tailv);
            r.head_args = std::move(args);
            std::vector<TermRef> conds;
            for (TermRef c : levels[i].conds) conds.push_back(rm.remap(c));
            r.cond = conj_of(conds);
            TermRef midv = rm.fresh("Mid");
            std::vector<TermRef> body;
            if (i + 1 < levels.size()) {
                std::vector<TermRef> inner_args;
                inner_args.push_back(iter_list(rm.remap(levels[i + 1].domain)));
                std::vector<uint64_t> inner_carried =
                    carried_for(levels, i + 1, globals);
                for (uint64_t c : inner_carried)
                    inner_args.push_back(rm.local_for(c));
                inner_args.push_back(outv);
                inner_args.push_back(midv);
                body.push_back(store_.make_struct(names[i + 1], inner_args));
            } else {
                TermRef t = rm.remap(template_expr);
                body.push_back(store_.make_struct(
                    "=", {outv, store_.cons(t, midv)}));
            }
            std::vector<TermRef> rec_args;
            rec_args.push_back(rest);
            for (uint64_t c : carried) rec_args.push_back(rm.local_for(c));
            rec_args.push_back(midv);
            rec_args.push_back(tailv);
            body.push_back(store_.make_struct(names[i], rec_args));
            r.body = conj_of(body);
            def.rules.push_back(std::move(r));
        }
        // rule 3: skip elements that do not match or fail the conditions
        {
            Rule r;
            Remap rm{store_, r, {}, &outer_names};
            TermRef rest = rm.fresh("Rest");
            std::vector<TermRef> args;
            args.push_back(store_.cons(rm.fresh("_"), rest));
            for (uint64_t c : carried) args.push_back(rm.local_for(c));
            TermRef outv = rm.fresh("Out");
            TermRef tailv = rm.fresh("Tail");
            args.push_back(outv);
            args.push_back(tailv);
            r.head_args = std::move(args);
            r.cond = store_.make_atom("true");
            std::vector<TermRef> rec_args;
            rec_args.push_back(rest);
            for (uint64_t c : carried) rec_args.push_back(rm.local_for(c));
            rec_args.push_back(outv);
            rec_args.push_back(tailv);
            r.body = store_.make_struct(names[i], rec_args);
            def.rules.push_back(std::move(r));
        }
        finalize_generated(def);
    }

    void lower_foreach(TermRef goal, VarMap& subst, std::set<uint64_t>& seen,
                       VarCtx& ctx, std::vector<TermRef>& out) {
        const TermNode gn = store_.node(goal);
        std::vector<Level> levels = split_levels(gn.args[0]);
        TermRef loop_body = lowering_detail::substitute(store_, gn.args[1], subst);
        for (Level& lv : levels) {
            lv.pattern = lowering_detail::substitute(store_, lv.pattern, subst);
            lv.domain = lowering_detail::substitute(store_, lv.domain, subst);
            for (TermRef& c : lv.conds) c = lowering_detail::substitute(store_, c, subst);
        }
        levels[0].domain =
            hoist_comprehensions(levels[0].domain, subst, seen, ctx, out);

        std::set<uint64_t> comp_vars;
        lowering_detail::collect_vars(store_, loop_body, comp_vars);
        for (const Level& lv : levels) {
            lowering_detail::collect_vars(store_, lv.pattern, comp_vars);
            lowering_detail::collect_vars(store_, lv.domain, comp_vars);
            for (TermRef c : lv.conds)
                lowering_detail::collect_vars(store_, c, comp_vars);
        }
        std::vector<uint64_t> globals;
        for (uint64_t v : comp_vars)
            if (seen.count(v)) globals.push_back(v);

        // accumulators: global variables assigned inside the loop
        std::set<uint64_t> assigned;
        collect_assigned(loop_body, assigned);
        std::vector<uint64_t> accs;
        for (uint64_t v : globals)
            if (assigned.count(v)) accs.push_back(v);
        // accumulators are threaded, not carried read-only
        std::vector<uint64_t> ro_globals;
        for (uint64_t v : globals)
            if (!assigned.count(v)) ro_globals.push_back(v);

        std::vector<std::string> names;
        for (size_t i = 0; i < levels.size(); ++i)
            names.push_back(gen_name("$fe"));

        for (size_t i = 0; i < levels.size(); ++i)
            emit_foreach_level(names, levels, i, ro_globals, accs, loop_body,
                               ctx.rule->var_names);

        std::vector<TermRef> entry_args;
        entry_args.push_back(iter_list(levels[0].domain));
        for (uint64_t g : ro_globals) entry_args.push_back(TermRef::var(g));
        std::vector<TermRef> acc_outs;
        for (uint64_t a : accs) {
            entry_args.push_back(TermRef::var(a));
            std::string base =
                a < ctx.rule->var_names.size() ? ctx.rule->var_names[a] : "_A";
            TermRef outv = ctx.fresh(base + "_");
            acc_outs.push_back(outv);
            entry_args.push_back(outv);
        }
        out.push_back(store_.make_struct(names[0], entry_args));
        lowering_detail::collect_vars(store_, out.back(), seen);
        for (size_t k = 0; k < accs.size(); ++k) {
            subst[accs[k]] = acc_outs[k];
            seen.insert(acc_outs[k].var_serial());
        }
    }

    void collect_assigned(TermRef t, std::set<uint64_t>& out) {
        if (!t.is_node()) return;
        const TermNode& n = store_.node(t);
        if (n.kind == NodeKind::Struct &&
            store_.symbol_name(n.symbol) == ":=" && n.args.size() == 2 &&
            n.args[0].is_var())
            out.insert(n.args[0].var_serial());
        for (TermRef a : n.args) collect_assigned(a, out);
    }

    void emit_foreach_level(const std::vector<std::string>& names,
                            const std::vector<Level>& levels, size_t i,
                            const std::vector<uint64_t>& ro_globals,
                            const std::vector<uint64_t>& accs,
                            TermRef loop_body,
                            const std::vector<std::string>& outer_names) {
        std::vector<uint64_t> carried = carried_for(levels, i, ro_globals);
        uint32_t arity =
            static_cast<uint32_t>(1 + carried.size() + 2 * accs.size());
        PredicateDef& def = prog_.declare(names[i], arity);

        auto acc_name = [&](uint64_t a) {
            return a < outer_names.size() ? outer_names[a] : std::string("_A");
        };

        // rule 1: end of iteration, accumulators close
        {
            Rule r;
            Remap rm{store_, r, {}, &outer_names};
            std::vector<TermRef> args;
            args.push_back(store_.nil());
            for (uint64_t c : carried) args.push_back(rm.local_for(c));
            std::vector<TermRef> body;
            for (uint64_t a : accs) {
                TermRef in = rm.fresh(acc_name(a) + "_in");
                TermRef outv = rm.fresh(acc_name(a) + "_out");
                args.push_back(in);
                args.push_back(outv);
                body.push_back(store_.make_struct("=", {outv, in}));
            }
            r.head_args = std::move(args);
            r.cond = store_.make_atom("true");
            r.body = conj_of(body);
            def.rules.push_back(std::move(r));
        }
        // rule 2: element matches, run the body (or the inner loop)
        {
            Rule r;
            Remap rm{store_, r, {}, &outer_names};
            TermRef pat = rm.remap(levels[i].pattern);
            TermRef rest = rm.fresh("Rest");
            std::vector<TermRef> args;
            args.push_back(store_.cons(pat, rest));
            for (uint64_t c : carried) args.push_back(rm.local_for(c));
            std::vector<TermRef> acc_in, acc_out, acc_mid;
            for (uint64_t a : accs) {
                // the accumulator-in argument IS the loop body's view of a
                acc_in.push_back(rm.local_for(a));
                acc_out.push_back(rm.fresh(acc_name(a) + "_out"));
                acc_mid.push_back(rm.fresh(acc_name(a) + "_mid"));
                args.push_back(acc_in.back());
                args.push_back(acc_out.back());
            }
            r.head_args = std::move(args);
            std::vector<TermRef> conds;
            for (TermRef c : levels[i].conds) conds.push_back(rm.remap(c));
            r.cond = conj_of(conds);

            std::vector<TermRef> body;
            if (i + 1 < levels.size()) {
                std::vector<TermRef> inner_args;
                inner_args.push_back(iter_list(rm.remap(levels[i + 1].domain)));
                std::vector<uint64_t> inner_carried =
                    carried_for(levels, i + 1, ro_globals);
                for (uint64_t c : inner_carried)
                    inner_args.push_back(rm.local_for(c));
                for (size_t k = 0; k < accs.size(); ++k) {
                    inner_args.push_back(acc_in[k]);
                    inner_args.push_back(acc_mid[k]);
                }
                body.push_back(store_.make_struct(names[i + 1], inner_args));
            } else {
                body.push_back(rm.remap(loop_body));
                for (size_t k = 0; k < accs.size(); ++k)
                    body.push_back(
                        store_.make_struct("=", {acc_mid[k], acc_in[k]}));
            }
            std::vector<TermRef> rec_args;
            rec_args.push_back(rest);
            for (uint64_t c : carried) rec_args.push_back(rm.local_for(c));
            for (size_t k = 0; k < accs.size(); ++k) {
                rec_args.push_back(acc_mid[k]);
                rec_args.push_back(acc_out[k]);
            }
            body.push_back(store_.make_struct(names[i], rec_args));
            r.body = conj_of(body);
            def.rules.push_back(std::move(r));
        }
        // rule 3: skip non-matching elements
        {
            Rule r;
            Remap rm{store_, r, {}, &outer_names};
            TermRef rest = rm.fresh("Rest");
            std::vector<TermRef> args;
            args.push_back(store_.cons(rm.fresh("_"), rest));
            for (uint64_t c : carried) args.push_back(rm.local_for(c));
            std::vector<TermRef> acc_in, acc_out;
            for (uint64_t a : accs) {
                acc_in.push_back(rm.fresh(acc_name(a) + "_in"));
                acc_out.push_back(rm.fresh(acc_name(a) + "_out"));
                args.push_back(acc_in.back());
                args.push_back(acc_out.back());
            }
            r.head_args = std::move(args);
            r.cond = store_.make_atom("true");
            std::vector<TermRef> rec_args;
            rec_args.push_back(rest);
            for (uint64_t c : carried) rec_args.push_back(rm.local_for(c));
            for (size_t k = 0; k < accs.size(); ++k) {
                rec_args.push_back(acc_in[k]);
                rec_args.push_back(acc_out[k]);
            }
            r.body = store_.make_struct(names[i], rec_args);
            def.rules.push_back(std::move(r));
        }
        finalize_generated(def);
    }

    TermRef conj_of(const std::vector<TermRef>& goals) { return conj(goals); }

    void finalize_generated(PredicateDef& def) {
        for (Rule& r : def.rules)
            r.var_count = static_cast<uint32_t>(r.var_names.size());
    }

    TermStore& store_;
    Program& prog_;
    int gen_counter_ = 0;
    size_t next_unprocessed_ = 0;
};

inline void lower_program(TermStore& store, Program& prog) {
    Lowerer(store, prog).run();
    // lowered bodies must not contain loop constructs any more
    for (const auto& [key, def] : prog.preds) {
        for (const Rule& r : def.rules) {
            struct Check {
                const TermStore& s;
                void walk(TermRef t) const {
                    if (!t.is_node()) return;
                    const TermNode& n = s.node(t);
                    if (n.kind == NodeKind::Struct) {
                        const std::string& nm = s.symbol_name(n.symbol);
                        if (nm == "$quote") return;
                        if (nm == "foreach" || nm == "$listcomp" || nm == ":=")
                            throw Error(ErrorKind::internal,
                                        "unlowered construct: " + nm);
                    }
                    for (TermRef a : n.args) walk(a);
                }
            } chk{store};
            chk.walk(r.cond);
            chk.walk(r.body);
        }
    }
}

}  // namespace pl9
