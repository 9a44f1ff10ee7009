#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "pl9/program.hpp"
#include "pl9/term.hpp"

namespace pl9 {

// Variant-based tabling with mode-directed min/max optimization, non-tabled
// nt arguments and linear-tabling iteration: looping producers are
// re-evaluated until an iteration adds or improves no answer. Completion
// follows the call-graph SCCs, re-running the top-most looping producer.
template <class Eng>
class TableManager {
public:
    struct PredStats {
        uint64_t keys = 0;
        uint64_t hits = 0;
        uint64_t producer_iterations = 0;
    };

    explicit TableManager(Eng& eng) : eng_(eng) {}

    void clear() {
        entries_.clear();
        stack_.clear();
        scc_pending_.clear();
        update_counter_ = 0;
    }

    const std::map<std::string, PredStats>& stats() const { return stats_; }

    bool call(const PredicateDef& def, const std::vector<TermRef>& args,
              const std::function<bool()>& k) {
        Shape shape = shape_of(def);
        TermRef key = make_key(def, shape, args);
        Entry& e = entry_for(def, key);
        if (e.complete) {
            ++pred_stats(def).hits;
            return consume(def, shape, key, args, k);
        }
        if (e.active) {
            // a variant call loops back into an active producer: record the
            // SCC link and consume the answers known so far
            size_t pos = e.stack_pos;
            for (size_t i = pos; i < stack_.size(); ++i) {
                Frame& f = stack_[i];
                f.lowlink = std::min(f.lowlink, pos);
                f.looped = true;
            }
            return consume(def, shape, key, args, k);
        }
        run_producer(def, shape, key, args);
        return consume(def, shape, key, args, k);
    }

private:
    struct Shape {
        bool moded = false;                 // explicit mode tuple present
        std::vector<size_t> input_pos;      // '+' positions
        std::vector<size_t> output_pos;     // '-', 'min', 'max' positions
        std::optional<size_t> opt_pos;      // position inside args
        bool maximize = false;
        std::optional<size_t> nt_pos;
    };

    struct Entry {
        bool complete = false;
        bool active = false;
        size_t stack_pos = 0;
        std::vector<TermRef> answers;      // canonical answer tuples
        bool has_best = false;
        int64_t best_obj = 0;
        uint64_t seen_keys = 0;
    };

    struct Frame {
        TermRef key;
        size_t pos;
        size_t lowlink;
        bool looped = false;
    };

    Shape shape_of(const PredicateDef& def) {
        Shape s;
        if (!def.table_mode) {
            for (size_t i = 0; i < def.arity; ++i) s.input_pos.push_back(i);
            return s;
        }
        s.moded = true;
        const auto& modes = def.table_mode->modes;
        for (size_t i = 0; i < modes.size(); ++i) {
            switch (modes[i]) {
                case Mode::Plus: s.input_pos.push_back(i); break;
                case Mode::Minus: s.output_pos.push_back(i); break;
                case Mode::Min:
                case Mode::Max:
                    s.opt_pos = i;
                    s.maximize = modes[i] == Mode::Max;
                    s.output_pos.push_back(i);
                    break;
                case Mode::Nt: s.nt_pos = i; break;
            }
        }
        return s;
    }

    PredStats& pred_stats(const PredicateDef& def) {
        return stats_[def.name + "/" + std::to_string(def.arity)];
    }

    // --- keys and canonical answers -------------------------------------------

    TermRef make_key(const PredicateDef& def, const Shape& shape,
                     const std::vector<TermRef>& args) {
        std::vector<TermRef> parts;
        parts.push_back(eng_.store().make_atom(def.name));
        parts.push_back(eng_.store().make_int(def.arity));
        if (shape.moded) {
            for (size_t i : shape.input_pos) {
                TermRef g = eng_.resolve(args[i]);
                if (!eng_.store().is_ground(g))
                    throw Error(ErrorKind::instantiation,
                                "tabled call: '+' argument is not ground in " +
                                    def.name + "/" + std::to_string(def.arity));
                parts.push_back(g);
            }
        } else {
            // full-call variant key: unbound variables are numbered
            std::unordered_map<uint64_t, int64_t> numbering;
            for (size_t i = 0; i < args.size(); ++i)
                parts.push_back(canonicalize(args[i], numbering));
        }
        return eng_.store().make_struct("$key", std::move(parts));
    }

    TermRef canonicalize(TermRef t, std::unordered_map<uint64_t, int64_t>& numbering) {
        TermStore& store = eng_.store();
        t = eng_.deref(t);
        if (t.is_var()) {
            auto it = numbering.find(t.var_serial());
            int64_t n;
            if (it == numbering.end()) {
                n = static_cast<int64_t>(numbering.size());
                numbering.emplace(t.var_serial(), n);
            } else {
                n = it->second;
            }
            return store.make_struct("$VAR", {store.make_int(n)});
        }
        if (!t.is_node()) return t;
        const TermNode n = store.node(t);
        std::vector<TermRef> kids;
        kids.reserve(n.args.size());
        for (TermRef a : n.args) kids.push_back(canonicalize(a, numbering));
        switch (n.kind) {
            case NodeKind::Cons: return store.cons(kids[0], kids[1]);
            case NodeKind::Struct: return store.make_struct(n.symbol, std::move(kids));
            case NodeKind::Array: return store.make_array(std::move(kids));
        }
        return t;
    }

    TermRef instantiate(TermRef t, std::unordered_map<int64_t, TermRef>& fresh) {
        TermStore& store = eng_.store();
        if (!t.is_node()) return t;
        const TermNode n = store.node(t);
        if (n.kind == NodeKind::Struct && n.args.size() == 1 &&
            store.symbol_name(n.symbol) == "$VAR" && n.args[0].is_int()) {
            int64_t id = n.args[0].int_value();
            auto it = fresh.find(id);
            if (it != fresh.end()) return it->second;
            TermRef v = eng_.fresh_var();
            fresh.emplace(id, v);
            return v;
        }
        if (store.is_ground(t)) return t;
        std::vector<TermRef> kids;
        kids.reserve(n.args.size());
        bool changed = false;
        for (TermRef a : n.args) {
            TermRef b = instantiate(a, fresh);
            changed |= (b != a);
            kids.push_back(b);
        }
        if (!changed) return t;
        switch (n.kind) {
            case NodeKind::Cons: return store.cons(kids[0], kids[1]);
            case NodeKind::Struct: return store.make_struct(n.symbol, std::move(kids));
            case NodeKind::Array: return store.make_array(std::move(kids));
        }
        return t;
    }

    Entry& entry_for(const PredicateDef& def, TermRef key) {
        auto [it, inserted] = entries_.try_emplace(key.raw());
        if (inserted) ++pred_stats(def).keys;
        return it->second;
    }

    // --- producer --------------------------------------------------------------

    void run_producer(const PredicateDef& def, const Shape& shape, TermRef key,
                      const std::vector<TermRef>& caller_args) {
        Entry& e = entries_.at(key.raw());
        e.active = true;
        e.stack_pos = stack_.size();
        stack_.push_back(Frame{key, e.stack_pos, e.stack_pos, false});

        run_rules_once(def, shape, key, caller_args);

        Frame frame = stack_.back();
        if (frame.lowlink == frame.pos) {
            if (frame.looped) {
                // leader of a cyclic SCC: iterate to fixpoint
                for (;;) {
                    uint64_t before = update_counter_;
                    run_rules_once(def, shape, key, caller_args);
                    if (update_counter_ == before) break;
                }
            }
            // complete the whole SCC
            stack_.pop_back();
            Entry& self = entries_.at(key.raw());
            self.active = false;
            self.complete = true;
            while (!scc_pending_.empty()) {
                TermRef pk = scc_pending_.back();
                Entry& pe = entries_.at(pk.raw());
                if (pe.stack_pos < frame.pos) break;
                pe.complete = true;
                scc_pending_.pop_back();
            }
        } else {
            // member of a larger SCC: stays incomplete, parent will iterate
            size_t ll = frame.lowlink;
            stack_.pop_back();
            Entry& self = entries_.at(key.raw());
            self.active = false;
            if (!stack_.empty()) {
                stack_.back().lowlink = std::min(stack_.back().lowlink, ll);
                stack_.back().looped = true;
            }
            scc_pending_.push_back(key);
        }
    }

    void run_rules_once(const PredicateDef& def, const Shape& shape,
                        TermRef key, const std::vector<TermRef>& caller_args) {
        ++pred_stats(def).producer_iterations;
        size_t tmark = eng_.trail_mark();
        size_t bmark = eng_.bind_mark();

        // producer call pattern: inputs from the key, outputs fresh,
        // nt straight from the caller
        std::vector<TermRef> pargs(def.arity);
        const std::vector<TermRef> key_args = eng_.store().node(key).args;
        std::unordered_map<int64_t, TermRef> fresh;
        if (shape.moded) {
            size_t ki = 2;
            for (size_t i : shape.input_pos) pargs[i] = key_args[ki++];
            for (size_t i : shape.output_pos) pargs[i] = eng_.fresh_var();
            if (shape.nt_pos) pargs[*shape.nt_pos] = caller_args[*shape.nt_pos];
        } else {
            for (size_t i = 0; i < def.arity; ++i)
                pargs[i] = instantiate(key_args[i + 2], fresh);
        }

        eng_.solve_rules(def, pargs, nullptr, [&]() {
            record_answer(def, shape, key, pargs);
            return false;  // explore every derivation
        });
        eng_.undo_to(tmark, bmark);
    }

    void record_answer(const PredicateDef& def, const Shape& shape, TermRef key,
                       const std::vector<TermRef>& pargs) {
        Entry& e = entries_.at(key.raw());
        std::unordered_map<uint64_t, int64_t> numbering;
        std::vector<TermRef> outs;
        if (shape.moded) {
            for (size_t i : shape.output_pos)
                outs.push_back(canonicalize(pargs[i], numbering));
        } else {
            for (size_t i = 0; i < def.arity; ++i)
                outs.push_back(canonicalize(pargs[i], numbering));
        }
        TermRef tuple = eng_.store().make_struct("$ans", std::move(outs));

        if (shape.moded && shape.opt_pos) {
            // single current-best answer under min/max
            size_t opt_out_index = 0;
            for (size_t j = 0; j < shape.output_pos.size(); ++j)
                if (shape.output_pos[j] == *shape.opt_pos) opt_out_index = j;
            TermRef obj = eng_.store().node(tuple).args[opt_out_index];  // tuple is interned, no allocation until after this read
            if (!obj.is_int())
                throw Error(ErrorKind::type,
                            "optimized table argument must be an integer in " +
                                def.name);
            int64_t val = obj.int_value();
            bool better = !e.has_best ||
                          (shape.maximize ? val > e.best_obj : val < e.best_obj);
            if (better) {
                e.has_best = true;
                e.best_obj = val;
                e.answers.clear();
                e.answers.push_back(tuple);
                ++update_counter_;
            }
            return;
        }
        for (TermRef a : e.answers)
            if (a == tuple) return;  // canonical tuples are interned: handle equality
        e.answers.push_back(tuple);
        ++update_counter_;
    }

    bool consume(const PredicateDef& def, const Shape& shape, TermRef key,
                 const std::vector<TermRef>& args,
                 const std::function<bool()>& k) {
        // answers may grow (and the entry may move) while consuming, so the
        // entry is re-fetched per answer
        for (size_t i = 0; i < entries_.at(key.raw()).answers.size(); ++i) {
            TermRef tuple = entries_.at(key.raw()).answers[i];
            size_t tmark = eng_.trail_mark();
            size_t bmark = eng_.bind_mark();
            std::unordered_map<int64_t, TermRef> fresh;
            const std::vector<TermRef> tuple_args = eng_.store().node(tuple).args;
            bool ok = true;
            if (shape.moded) {
                for (size_t j = 0; j < shape.output_pos.size() && ok; ++j)
                    ok = eng_.unify(args[shape.output_pos[j]],
                                    instantiate(tuple_args[j], fresh));
            } else {
                for (size_t j = 0; j < args.size() && ok; ++j)
                    ok = eng_.unify(args[j], instantiate(tuple_args[j], fresh));
            }
            if (ok && k()) return true;
            eng_.undo_to(tmark, bmark);
        }
        return false;
    }

    Eng& eng_;
    std::unordered_map<uint64_t, Entry> entries_;
    std::vector<Frame> stack_;
    std::vector<TermRef> scc_pending_;
    uint64_t update_counter_ = 0;
    std::map<std::string, PredStats> stats_;
};

}  // namespace pl9
