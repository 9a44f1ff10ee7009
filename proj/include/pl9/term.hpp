#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pl9/errors.hpp"

namespace pl9 {

// A TermRef is a tagged 64-bit handle. Small integers and variables live
// entirely in the handle; atoms reference the symbol table; compound terms
// (cons cells, structures, arrays) reference a node in the TermStore.
//
// Ground compound terms are hash-consed: structurally equal ground terms
// intern to the identical handle, and each node caches its hash code at
// intern time. Non-ground compounds are heap nodes outside the consing
// table; they become internable once resolved to ground form.
enum class Tag : uint8_t {
    SmallInt = 0,
    Var = 1,
    Atom = 2,
    Nil = 3,
    Node = 4,
};

class TermRef {
public:
    constexpr TermRef() : bits_(kInvalid) {}

    static TermRef small_int(int64_t v) {
        return TermRef((static_cast<uint64_t>(v) << 3) |
                       static_cast<uint64_t>(Tag::SmallInt));
    }
    static TermRef var(uint64_t serial) {
        return TermRef((serial << 3) | static_cast<uint64_t>(Tag::Var));
    }
    static TermRef atom(uint32_t sym) {
        return TermRef((static_cast<uint64_t>(sym) << 3) |
                       static_cast<uint64_t>(Tag::Atom));
    }
    static TermRef nil() { return TermRef(static_cast<uint64_t>(Tag::Nil)); }
    static TermRef node(uint32_t index) {
        return TermRef((static_cast<uint64_t>(index) << 3) |
                       static_cast<uint64_t>(Tag::Node));
    }

    Tag tag() const { return static_cast<Tag>(bits_ & 7); }
    int64_t int_value() const { return static_cast<int64_t>(bits_) >> 3; }
    uint64_t var_serial() const { return bits_ >> 3; }
    uint32_t atom_sym() const { return static_cast<uint32_t>(bits_ >> 3); }
    uint32_t node_index() const { return static_cast<uint32_t>(bits_ >> 3); }

    bool valid() const { return bits_ != kInvalid; }
    bool is_int() const { return tag() == Tag::SmallInt; }
    bool is_var() const { return tag() == Tag::Var; }
    bool is_atom() const { return tag() == Tag::Atom; }
    bool is_nil() const { return tag() == Tag::Nil; }
    bool is_node() const { return tag() == Tag::Node; }

    uint64_t raw() const { return bits_; }

    friend bool operator==(TermRef a, TermRef b) { return a.bits_ == b.bits_; }
    friend bool operator!=(TermRef a, TermRef b) { return a.bits_ != b.bits_; }

private:
    explicit constexpr TermRef(uint64_t bits) : bits_(bits) {}
    static constexpr uint64_t kInvalid = ~uint64_t{0};
    uint64_t bits_;
};

enum class NodeKind : uint8_t { Cons = 0, Struct = 1, Array = 2 };

struct TermNode {
    NodeKind kind;
    bool ground;
    uint32_t symbol = 0;  // structure name; unused for Cons/Array
    uint64_t hash = 0;    // cached at intern time; valid iff ground
    std::vector<TermRef> args;
};

struct StoreStats {
    uint64_t node_count = 0;    // ground nodes in the consing table
    uint64_t intern_hits = 0;
    uint64_t intern_misses = 0;
    uint64_t heap_nodes = 0;    // non-ground nodes outside the table
    uint64_t hash_ops = 0;      // hash combine steps performed at intern time
};

namespace detail {
constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr uint64_t kFnvPrime = 0x100000001b3ull;

inline uint64_t fnv_mix(uint64_t h, uint64_t x) {
    return (h ^ x) * kFnvPrime;
}

inline uint64_t fnv_bytes(uint64_t h, std::string_view s) {
    for (unsigned char c : s) h = fnv_mix(h, c);
    return h;
}
}  // namespace detail

class TermStore {
public:
    TermStore() = default;
    TermStore(const TermStore&) = delete;
    TermStore& operator=(const TermStore&) = delete;

    // --- symbols -----------------------------------------------------------

    uint32_t symbol(std::string_view name) {
        auto it = symbol_ids_.find(std::string(name));
        if (it != symbol_ids_.end()) return it->second;
        uint32_t id = static_cast<uint32_t>(symbols_.size());
        symbols_.push_back(std::string(name));
        uint64_t h = detail::fnv_mix(detail::kFnvOffset,
                                     static_cast<uint64_t>(Tag::Atom));
        symbol_hashes_.push_back(detail::fnv_bytes(h, name));
        symbol_ids_.emplace(std::string(name), id);
        return id;
    }

    const std::string& symbol_name(uint32_t id) const { return symbols_[id]; }

    // --- term construction -------------------------------------------------

    TermRef make_int(int64_t v) const { return TermRef::small_int(v); }
    TermRef make_atom(std::string_view name) { return TermRef::atom(symbol(name)); }
    TermRef nil() const { return TermRef::nil(); }

    TermRef cons(TermRef head, TermRef tail) {
        return intern_node(NodeKind::Cons, 0, {head, tail});
    }

    TermRef make_struct(std::string_view name, std::vector<TermRef> args) {
        return intern_node(NodeKind::Struct, symbol(name), std::move(args));
    }
    TermRef make_struct(uint32_t sym, std::vector<TermRef> args) {
        return intern_node(NodeKind::Struct, sym, std::move(args));
    }

    TermRef make_array(std::vector<TermRef> elems) {
        return intern_node(NodeKind::Array, 0, std::move(elems));
    }

    // A double-quoted string is a cons list of single-character atoms.
    TermRef make_string(std::string_view s) {
        TermRef t = nil();
        for (size_t i = s.size(); i-- > 0;) {
            char c = s[i];
            t = cons(make_atom(std::string_view(&c, 1)), t);
        }
        return t;
    }

    TermRef make_list(const std::vector<TermRef>& elems, TermRef tail) {
        TermRef t = tail;
        for (size_t i = elems.size(); i-- > 0;) t = cons(elems[i], t);
        return t;
    }
    TermRef make_list(const std::vector<TermRef>& elems) {
        return make_list(elems, nil());
    }

    const TermNode& node(TermRef t) const { return nodes_[t.node_index()]; }

    // --- predicates over terms ----------------------------------------------

    bool is_ground(TermRef t) const {
        switch (t.tag()) {
            case Tag::Var: return false;
            case Tag::Node: return node(t).ground;
            default: return true;
        }
    }

    // Cached hash of a ground term. No traversal happens here: compound
    // hashes were computed when the node was interned.
    uint64_t hash_of(TermRef t) const {
        switch (t.tag()) {
            case Tag::SmallInt: {
                uint64_t h = detail::fnv_mix(detail::kFnvOffset,
                                             static_cast<uint64_t>(Tag::SmallInt));
                return detail::fnv_mix(h, static_cast<uint64_t>(t.int_value()));
            }
            case Tag::Atom: return symbol_hashes_[t.atom_sym()];
            case Tag::Nil:
                return detail::fnv_mix(detail::kFnvOffset,
                                       static_cast<uint64_t>(Tag::Nil));
            case Tag::Node: {
                const TermNode& n = node(t);
                if (!n.ground)
                    throw Error(ErrorKind::contract,
                                "hash_of: term is not ground");
                return n.hash;
            }
            case Tag::Var:
                throw Error(ErrorKind::contract, "hash_of: unbound variable");
        }
        throw Error(ErrorKind::internal, "hash_of: bad tag");
    }

    // Structural equality. Ground interned terms compare by handle.
    bool equal(TermRef a, TermRef b) const {
        if (a == b) return true;
        if (a.tag() != b.tag()) return false;
        if (!a.is_node()) return false;  // non-node tags compare by handle
        const TermNode& na = node(a);
        const TermNode& nb = node(b);
        if (na.ground && nb.ground) return false;  // both consed: handle decides
        if (na.kind != nb.kind || na.symbol != nb.symbol ||
            na.args.size() != nb.args.size())
            return false;
        for (size_t i = 0; i < na.args.size(); ++i)
            if (!equal(na.args[i], nb.args[i])) return false;
        return true;
    }

    // Deterministic total order used by sort/1 and insert_ordered/2:
    // integers < atoms < nil < cons lists < structures < arrays,
    // variables first, compared by serial.
    int compare(TermRef a, TermRef b) const {
        auto rank = [](Tag t) {
            switch (t) {
                case Tag::Var: return 0;
                case Tag::SmallInt: return 1;
                case Tag::Atom: return 2;
                case Tag::Nil: return 3;
                default: return 4;
            }
        };
        int ra = rank(a.tag()), rb = rank(b.tag());
        if (ra != rb) return ra < rb ? -1 : 1;
        switch (a.tag()) {
            case Tag::Var: {
                auto sa = a.var_serial(), sb = b.var_serial();
                return sa < sb ? -1 : (sa > sb ? 1 : 0);
            }
            case Tag::SmallInt: {
                auto va = a.int_value(), vb = b.int_value();
                return va < vb ? -1 : (va > vb ? 1 : 0);
            }
            case Tag::Atom: {
                int c = symbol_name(a.atom_sym()).compare(symbol_name(b.atom_sym()));
                return c < 0 ? -1 : (c > 0 ? 1 : 0);
            }
            case Tag::Nil: return 0;
            case Tag::Node: {
                const TermNode& na = node(a);
                const TermNode& nb = node(b);
                auto krank = [](NodeKind k) {
                    switch (k) {
                        case NodeKind::Cons: return 0;
                        case NodeKind::Struct: return 1;
                        case NodeKind::Array: return 2;
                    }
                    return 3;
                };
                if (krank(na.kind) != krank(nb.kind))
                    return krank(na.kind) < krank(nb.kind) ? -1 : 1;
                if (na.args.size() != nb.args.size())
                    return na.args.size() < nb.args.size() ? -1 : 1;
                if (na.kind == NodeKind::Struct && na.symbol != nb.symbol) {
                    int c = symbol_name(na.symbol).compare(symbol_name(nb.symbol));
                    if (c != 0) return c < 0 ? -1 : 1;
                }
                for (size_t i = 0; i < na.args.size(); ++i) {
                    int c = compare(na.args[i], nb.args[i]);
                    if (c != 0) return c;
                }
                return 0;
            }
        }
        return 0;
    }

    StoreStats stats() const { return stats_; }

    // --- list helpers --------------------------------------------------------

    bool is_proper_list(TermRef t) const {
        while (true) {
            if (t.is_nil()) return true;
            if (!t.is_node() || node(t).kind != NodeKind::Cons) return false;
            t = node(t).args[1];
        }
    }

    // Collects elements of a proper list; throws on improper lists.
    std::vector<TermRef> list_elements(TermRef t) const {
        std::vector<TermRef> out;
        while (!t.is_nil()) {
            if (!t.is_node() || node(t).kind != NodeKind::Cons)
                throw Error(ErrorKind::type, "expected a proper list");
            out.push_back(node(t).args[0]);
            t = node(t).args[1];
        }
        return out;
    }

private:
    TermRef intern_node(NodeKind kind, uint32_t sym, std::vector<TermRef> args) {
        bool ground = true;
        for (TermRef a : args) {
            if (!is_ground(a)) { ground = false; break; }
        }
        if (!ground) {
            TermNode n;
            n.kind = kind;
            n.ground = false;
            n.symbol = sym;
            n.args = std::move(args);
            nodes_.push_back(std::move(n));
            ++stats_.heap_nodes;
            return TermRef::node(static_cast<uint32_t>(nodes_.size() - 1));
        }
        uint64_t h = hash_node(kind, sym, args);
        auto range = buckets_.equal_range(h);
        for (auto it = range.first; it != range.second; ++it) {
            const TermNode& cand = nodes_[it->second];
            if (cand.kind == kind && cand.symbol == sym && cand.args == args) {
                ++stats_.intern_hits;
                return TermRef::node(it->second);
            }
        }
        TermNode n;
        n.kind = kind;
        n.ground = true;
        n.symbol = sym;
        n.hash = h;
        n.args = std::move(args);
        nodes_.push_back(std::move(n));
        uint32_t idx = static_cast<uint32_t>(nodes_.size() - 1);
        buckets_.emplace(h, idx);
        ++stats_.intern_misses;
        ++stats_.node_count;
        return TermRef::node(idx);
    }

    // 64-bit FNV-style combination over (tag, kind, name, arity, child hashes).
    // Children are already interned, so this is O(arity), never a deep walk.
    uint64_t hash_node(NodeKind kind, uint32_t sym,
                       const std::vector<TermRef>& args) {
        uint64_t h = detail::fnv_mix(detail::kFnvOffset,
                                     static_cast<uint64_t>(Tag::Node));
        h = detail::fnv_mix(h, static_cast<uint64_t>(kind));
        ++stats_.hash_ops;
        if (kind == NodeKind::Struct) {
            h = detail::fnv_mix(h, symbol_hashes_[sym]);
            ++stats_.hash_ops;
        }
        h = detail::fnv_mix(h, args.size());
        for (TermRef a : args) {
            h = detail::fnv_mix(h, hash_of(a));
            ++stats_.hash_ops;
        }
        return h;
    }

    std::vector<std::string> symbols_;
    std::vector<uint64_t> symbol_hashes_;
    std::unordered_map<std::string, uint32_t> symbol_ids_;
    std::vector<TermNode> nodes_;
    std::unordered_multimap<uint64_t, uint32_t> buckets_;
    StoreStats stats_;
};

}  // namespace pl9
