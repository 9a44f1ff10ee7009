#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "pl9/errors.hpp"

namespace pl9 {

// CNF over propositional variables 1..nvars; literals are signed ints.
struct Cnf {
    int nvars = 0;
    std::vector<std::vector<int>> clauses;
    bool trivially_unsat = false;

    int new_var() { return ++nvars; }

    void add(std::vector<int> lits) {
        std::sort(lits.begin(), lits.end(),
                  [](int a, int b) { return std::abs(a) < std::abs(b) ||
                                            (std::abs(a) == std::abs(b) && a < b); });
        lits.erase(std::unique(lits.begin(), lits.end()), lits.end());
        for (size_t i = 0; i + 1 < lits.size(); ++i)
            if (lits[i] == -lits[i + 1]) return;  // tautology
        for (int l : lits)
            if (l == 0 || std::abs(l) > nvars)
                throw Error(ErrorKind::internal,
                            "clause references an unallocated variable");
        if (lits.empty()) { trivially_unsat = true; return; }
        clauses.push_back(std::move(lits));
    }
};

// DPLL search with unit propagation over two watched literals.
// Conflict-driven clause learning (first-UIP) sits behind a flag; with
// learning off the solver backtracks chronologically.
struct SatConfig {
    bool learning = true;
    uint64_t seed = 0;  // reserved for branching randomization
    // preferred decision variables (e.g. the bits of the encoded domain
    // variables); auxiliary gate variables follow by unit propagation
    std::vector<int> branch_vars;
};

class SatSolver {
public:
    using Config = SatConfig;

    struct Stats {
        uint64_t decisions = 0;
        uint64_t propagations = 0;
        uint64_t conflicts = 0;
        uint64_t learned = 0;
    };

    SatSolver(const Cnf& cnf, Config cfg = Config()) : cfg_(cfg), nvars_(cnf.nvars) {
        assigns_.assign(nvars_ + 1, -1);
        level_of_.assign(nvars_ + 1, 0);
        reason_.assign(nvars_ + 1, -1);
        seen_.assign(nvars_ + 1, false);
        watches_.assign(2 * (nvars_ + 1), {});
        ok_ = !cnf.trivially_unsat;
        for (const auto& c : cnf.clauses)
            if (!attach_clause(c)) { ok_ = false; break; }
    }

    const Stats& stats() const { return stats_; }

    // Adds a clause between solve() calls; false when the formula became
    // trivially unsatisfiable.
    bool add_clause_dynamic(std::vector<int> lits) {
        if (!ok_) return false;
        cancel_until(0);
        std::vector<int> keep;
        for (int l : lits) {
            int v = value(l);
            if (v == 1) return true;   // already satisfied at level 0
            if (v == 0) continue;      // false at level 0: drop
            keep.push_back(l);
        }
        if (keep.empty()) { ok_ = false; return false; }
        if (keep.size() == 1) {
            enqueue(keep[0], -1);
            return true;
        }
        clauses_.push_back(keep);
        int ci = static_cast<int>(clauses_.size() - 1);
        watches_[lit_idx(-keep[0])].push_back(ci);
        watches_[lit_idx(-keep[1])].push_back(ci);
        return true;
    }

    // Resumable: after a model, add_clause_dynamic() retracts to level 0 and
    // solve() continues with everything learned so far.
    std::optional<std::vector<bool>> solve() {
        if (!ok_) return std::nullopt;
        if (propagate() >= 0) return std::nullopt;  // conflict at level 0
        for (;;) {
            int confl = propagate();
            if (confl >= 0) {
                ++stats_.conflicts;
                if (!resolve_conflict(confl)) return std::nullopt;
                continue;
            }
            int v = pick_var();
            if (v == 0) {
                std::vector<bool> model(nvars_ + 1, false);
                for (int i = 1; i <= nvars_; ++i) model[i] = assigns_[i] == 1;
                return model;
            }
            ++stats_.decisions;
            new_level(-v, false);  // branch false first
        }
    }

private:
    static size_t lit_idx(int l) {
        return 2 * static_cast<size_t>(std::abs(l)) + (l < 0 ? 1 : 0);
    }

    int value(int l) const {
        int8_t a = assigns_[std::abs(l)];
        if (a < 0) return -1;
        return (l > 0) == (a == 1) ? 1 : 0;
    }

    bool attach_clause(const std::vector<int>& lits) {
        if (lits.size() == 1) {
            int v = value(lits[0]);
            if (v == 0) return false;
            if (v < 0) enqueue(lits[0], -1);
            return true;
        }
        clauses_.push_back(lits);
        int ci = static_cast<int>(clauses_.size() - 1);
        watches_[lit_idx(-lits[0])].push_back(ci);
        watches_[lit_idx(-lits[1])].push_back(ci);
        return true;
    }

    void enqueue(int lit, int reason) {
        int v = std::abs(lit);
        assigns_[v] = lit > 0 ? 1 : 0;
        level_of_[v] = current_level();
        reason_[v] = reason;
        trail_.push_back(lit);
    }

    int current_level() const { return static_cast<int>(trail_lim_.size()); }

    void new_level(int decision_lit, bool flipped) {
        trail_lim_.push_back(trail_.size());
        decisions_.push_back({decision_lit, flipped});
        enqueue(decision_lit, -1);
    }

    void cancel_until(int level) {
        while (current_level() > level) {
            size_t mark = trail_lim_.back();
            trail_lim_.pop_back();
            decisions_.pop_back();
            while (trail_.size() > mark) {
                int v = std::abs(trail_.back());
                assigns_[v] = -1;
                reason_[v] = -1;
                trail_.pop_back();
            }
        }
        qhead_ = std::min(qhead_, trail_.size());
    }

    // returns conflicting clause index or -1
    int propagate() {
        while (qhead_ < trail_.size()) {
            int p = trail_[qhead_++];
            ++stats_.propagations;
            auto& wl = watches_[lit_idx(p)];
            size_t i = 0, j = 0;
            while (i < wl.size()) {
                int ci = wl[i++];
                auto& c = clauses_[ci];
                if (c[0] == -p) std::swap(c[0], c[1]);
                if (value(c[0]) == 1) { wl[j++] = ci; continue; }
                bool moved = false;
                for (size_t k = 2; k < c.size(); ++k) {
                    if (value(c[k]) != 0) {
                        std::swap(c[1], c[k]);
                        watches_[lit_idx(-c[1])].push_back(ci);
                        moved = true;
                        break;
                    }
                }
                if (moved) continue;
                wl[j++] = ci;
                if (value(c[0]) == 0) {
                    while (i < wl.size()) wl[j++] = wl[i++];
                    wl.resize(j);
                    return ci;
                }
                enqueue(c[0], ci);
            }
            wl.resize(j);
        }
        return -1;
    }

    bool resolve_conflict(int confl) {
        if (current_level() == 0) return false;
        if (cfg_.learning) return learn_and_backjump(confl);
        // chronological backtracking, flipping the deepest untried decision
        for (;;) {
            if (current_level() == 0) return false;
            Decision d = decisions_.back();
            cancel_until(current_level() - 1);
            if (!d.flipped) {
                new_level(-d.lit, true);
                return true;
            }
        }
    }

    bool learn_and_backjump(int confl) {
        std::vector<int> learnt{0};  // slot for the asserting literal
        int counter = 0;
        int trail_lit = 0;  // implied literal being resolved on; 0 = none yet
        size_t index = trail_.size();
        int cur_level = current_level();

        std::vector<int> clause_lits = clauses_[confl];
        for (;;) {
            for (int q : clause_lits) {
                if (trail_lit != 0 && q == trail_lit) continue;
                int v = std::abs(q);
                if (!seen_[v] && level_of_[v] > 0) {
                    seen_[v] = true;
                    if (level_of_[v] == cur_level) ++counter;
                    else learnt.push_back(q);
                }
            }
            // walk back to the next marked literal on the trail
            for (;;) {
                --index;
                if (seen_[std::abs(trail_[index])]) break;
            }
            trail_lit = trail_[index];
            seen_[std::abs(trail_lit)] = false;
            --counter;
            if (counter == 0) break;
            clause_lits = clauses_[reason_[std::abs(trail_lit)]];
        }
        learnt[0] = -trail_lit;
        for (int q : learnt) seen_[std::abs(q)] = false;

        int bt = 0;
        size_t second = 1;
        for (size_t i = 1; i < learnt.size(); ++i) {
            int lv = level_of_[std::abs(learnt[i])];
            if (lv > bt) { bt = lv; second = i; }
        }
        cancel_until(bt);
        if (learnt.size() == 1) {
            if (value(learnt[0]) == 0) return false;
            if (value(learnt[0]) < 0) enqueue(learnt[0], -1);
        } else {
            std::swap(learnt[1], learnt[second]);
            clauses_.push_back(learnt);
            int ci = static_cast<int>(clauses_.size() - 1);
            watches_[lit_idx(-learnt[0])].push_back(ci);
            watches_[lit_idx(-learnt[1])].push_back(ci);
            ++stats_.learned;
            enqueue(learnt[0], ci);
        }
        return true;
    }

    int pick_var() const {
        for (int v : cfg_.branch_vars)
            if (assigns_[v] < 0) return v;
        for (int v = 1; v <= nvars_; ++v)
            if (assigns_[v] < 0) return v;
        return 0;
    }

    struct Decision {
        int lit;
        bool flipped;
    };

    Config cfg_;
    int nvars_;
    bool ok_ = true;
    std::vector<int8_t> assigns_;
    std::vector<int> level_of_;
    std::vector<int> reason_;
    std::vector<bool> seen_;
    std::vector<std::vector<int>> clauses_;
    std::vector<std::vector<int>> watches_;
    std::vector<int> trail_;
    std::vector<size_t> trail_lim_;
    std::vector<Decision> decisions_;
    size_t qhead_ = 0;
    Stats stats_;
};

inline std::optional<std::vector<bool>> sat_solve(const Cnf& cnf,
                                                  SatSolver::Config cfg = SatSolver::Config()) {
    SatSolver s(cnf, cfg);
    return s.solve();
}

}  // namespace pl9
