#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pl9/term.hpp"

namespace pl9 {

enum class Mode : uint8_t { Plus, Minus, Min, Max, Nt };

struct ModeTuple {
    std::vector<Mode> modes;

    bool has_nt() const {
        return !modes.empty() && modes.back() == Mode::Nt;
    }
    std::optional<size_t> optimized_pos() const {
        for (size_t i = 0; i < modes.size(); ++i)
            if (modes[i] == Mode::Min || modes[i] == Mode::Max) return i;
        return std::nullopt;
    }
};

// One pattern-matching rule after parsing. Variables are numbered 0..var_count-1
// within the rule; var_names keeps the source spelling for diagnostics and
// pretty-printing.
struct Rule {
    std::vector<TermRef> head_args;
    TermRef cond;   // atom true when absent
    TermRef body;
    bool backtrackable = false;
    bool is_fact = false;  // bare `Head.` clause: the head unifies
    uint32_t var_count = 0;
    std::vector<std::string> var_names;
    int line = 0;
    int col = 0;
};

struct PredicateDef {
    std::string name;
    uint32_t arity = 0;
    std::vector<Rule> rules;
    std::optional<ModeTuple> table_mode;
    bool tabled = false;
    bool from_function = false;  // compiled from `Head = Exp` rules
};

struct PredKey {
    std::string name;
    uint32_t arity;
    bool operator==(const PredKey& o) const {
        return arity == o.arity && name == o.name;
    }
};

struct PredKeyHash {
    size_t operator()(const PredKey& k) const {
        return std::hash<std::string>()(k.name) * 31 + k.arity;
    }
};

struct Program {
    std::unordered_map<PredKey, PredicateDef, PredKeyHash> preds;
    std::vector<PredKey> def_order;
    // functions by (name, source arity); the compiled predicate has arity+1
    std::unordered_set<PredKey, PredKeyHash> functions;
    std::vector<std::string> imports;

    PredicateDef* find(const std::string& name, uint32_t arity) {
        auto it = preds.find(PredKey{name, arity});
        return it == preds.end() ? nullptr : &it->second;
    }
    const PredicateDef* find(const std::string& name, uint32_t arity) const {
        auto it = preds.find(PredKey{name, arity});
        return it == preds.end() ? nullptr : &it->second;
    }
    bool is_function(const std::string& name, uint32_t arity) const {
        return functions.count(PredKey{name, arity}) > 0;
    }

    PredicateDef& declare(const std::string& name, uint32_t arity) {
        PredKey key{name, arity};
        auto it = preds.find(key);
        if (it == preds.end()) {
            PredicateDef def;
            def.name = name;
            def.arity = arity;
            it = preds.emplace(key, std::move(def)).first;
            def_order.push_back(key);
        }
        return it->second;
    }
};

}  // namespace pl9
