#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <unordered_map>
#include <vector>

#include "pl9/term.hpp"

namespace pl9 {

// Resource-bounded tabled state-space search over user-supplied final/1 and
// action/4 rules. Every visited state is interned; the table stores, per
// state, the best plan found and the highest budget at which exhaustive
// search below the state failed. A state is expanded only if it is new, or
// if it previously failed and the current budget is strictly higher; a
// stored success whose cost fits the budget is reused without expansion.
template <class Eng>
class Planner {
public:
    struct Stats {
        uint64_t states = 0;
        uint64_t expansions = 0;
        uint64_t reexpansions = 0;
        uint64_t rounds = 0;
        uint64_t failed_reuse_hits = 0;
        uint64_t success_reuse_hits = 0;
    };

    explicit Planner(Eng& eng) : eng_(eng) {}

    void clear() {
        table_.clear();
        stats_ = Stats{};
    }

    const Stats& stats() const { return stats_; }

    int64_t current_resource() const {
        if (resource_stack_.empty())
            throw Error(ErrorKind::context,
                        "current_resource() called outside a plan search");
        return resource_stack_.back();
    }

    // plan(S, Limit, Plan, PlanCost): first plan found depth-first within
    // the budget; deterministic.
    bool plan(TermRef state, int64_t limit, TermRef plan_arg, TermRef cost_arg,
              const std::function<bool()>& k) {
        TermRef s = ground_state(state);
        if (limit < 0) return false;
        auto r = search(s, limit);
        if (!r) return false;
        return yield(*r, plan_arg, cost_arg, k);
    }

    // best_plan(S, Limit, Plan, PlanCost): ascending budgets 0, step, ...
    // reusing the table across rounds; the first success is cost-optimal for
    // positive integer action costs under step 1.
    bool best_plan(TermRef state, int64_t limit, TermRef plan_arg,
                   TermRef cost_arg, const std::function<bool()>& k) {
        TermRef s = ground_state(state);
        int64_t step = eng_.config().plan_step;
        for (int64_t budget = 0; budget <= limit; budget += step) {
            ++stats_.rounds;
            auto r = search(s, budget);
            if (r) return yield(*r, plan_arg, cost_arg, k);
        }
        return false;
    }

private:
    struct Entry {
        std::optional<int64_t> success_cost;
        TermRef success_plan;
        std::optional<int64_t> failed_at;  // highest budget that failed
        bool in_progress = false;
    };

    struct Result {
        TermRef plan;
        int64_t cost;
    };

    TermRef ground_state(TermRef state) {
        TermRef s = eng_.resolve(state);
        if (!eng_.store().is_ground(s))
            throw Error(ErrorKind::instantiation,
                        "plan: the initial state must be ground");
        return s;
    }

    bool yield(const Result& r, TermRef plan_arg, TermRef cost_arg,
               const std::function<bool()>& k) {
        size_t tmark = eng_.trail_mark();
        size_t bmark = eng_.bind_mark();
        if (eng_.unify(plan_arg, r.plan) &&
            eng_.unify(cost_arg, eng_.store().make_int(r.cost)) && k())
            return true;
        eng_.undo_to(tmark, bmark);
        return false;
    }

    std::optional<Result> search(TermRef state, int64_t budget) {
        auto [it, inserted] = table_.try_emplace(state.raw());
        if (inserted) ++stats_.states;
        // decide on reuse before touching the rules
        {
            Entry& e = it->second;
            if (e.success_cost && *e.success_cost <= budget) {
                ++stats_.success_reuse_hits;
                return Result{e.success_plan, *e.success_cost};
            }
            if (e.failed_at && budget <= *e.failed_at) {
                ++stats_.failed_reuse_hits;
                return std::nullopt;
            }
            if (e.in_progress) return std::nullopt;  // cycle on this branch
            if (e.failed_at) ++stats_.reexpansions;
            e.in_progress = true;
        }
        ++stats_.expansions;
        resource_stack_.push_back(budget);

        std::optional<Result> result;
        try {
            result = expand(state, budget);
        } catch (...) {
            resource_stack_.pop_back();
            table_.at(state.raw()).in_progress = false;
            throw;
        }
        resource_stack_.pop_back();

        Entry& e = table_.at(state.raw());
        e.in_progress = false;
        if (result) {
            if (!e.success_cost || result->cost < *e.success_cost) {
                e.success_cost = result->cost;
                e.success_plan = result->plan;
            }
        } else {
            if (!e.failed_at || budget > *e.failed_at) e.failed_at = budget;
        }
        return result;
    }

    std::optional<Result> expand(TermRef state, int64_t budget) {
        TermStore& store = eng_.store();
        // a final state yields the empty plan at zero cost
        {
            size_t tmark = eng_.trail_mark();
            size_t bmark = eng_.bind_mark();
            TermRef goal = store.make_struct("final", {state});
            bool is_final = eng_.solve(goal, [&] { return true; });
            eng_.undo_to(tmark, bmark);
            if (is_final) return Result{store.nil(), 0};
        }

        std::optional<Result> found;
        size_t tmark = eng_.trail_mark();
        size_t bmark = eng_.bind_mark();
        TermRef next = eng_.fresh_var();
        TermRef action = eng_.fresh_var();
        TermRef cost = eng_.fresh_var();
        TermRef goal = store.make_struct("action", {state, next, action, cost});
        eng_.solve(goal, [&]() -> bool {
            TermRef c = eng_.deref(cost);
            if (!c.is_int())
                throw Error(ErrorKind::type,
                            "action cost must bind to an integer");
            int64_t action_cost = c.int_value();
            if (action_cost < 0)
                throw Error(ErrorKind::type, "action cost must be >= 0");
            if (action_cost > budget) return false;  // prune, try next action
            TermRef succ = eng_.resolve(next);
            if (!store.is_ground(succ))
                throw Error(ErrorKind::instantiation,
                            "action produced a non-ground successor state");
            auto sub = search(succ, budget - action_cost);
            if (!sub) return false;
            TermRef step = eng_.resolve(action);
            if (!store.is_ground(step))
                throw Error(ErrorKind::instantiation,
                            "action term must be ground when the plan is built");
            found = Result{store.cons(step, sub->plan),
                           action_cost + sub->cost};
            return true;  // first plan found: stop enumerating actions
        });
        eng_.undo_to(tmark, bmark);
        return found;
    }

    Eng& eng_;
    std::unordered_map<uint64_t, Entry> table_;
    std::vector<int64_t> resource_stack_;
    Stats stats_;
};

}  // namespace pl9
