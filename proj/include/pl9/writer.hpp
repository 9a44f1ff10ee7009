#pragma once

#include <string>
#include <vector>

#include "pl9/ops.hpp"
#include "pl9/program.hpp"
#include "pl9/term.hpp"

namespace pl9 {

// Pretty-printer. Inverse of the parser on the fixed operator table:
// parse(print(t)) reproduces t up to variable renumbering.
class Writer {
public:
    explicit Writer(const TermStore& store,
                    const std::vector<std::string>* var_names = nullptr)
        : store_(store), var_names_(var_names) {}

    std::string term(TermRef t) const {
        std::string out;
        write(out, t, 0);
        return out;
    }

    std::string rule(const std::string& pred_name, const Rule& r) const {
        Writer w(store_, &r.var_names);
        std::string out;
        out += w.head(pred_name, r.head_args);
        bool has_cond = !w.is_atom(r.cond, "true");
        if (has_cond) {
            out += ", ";
            w.write(out, r.cond, 210);
        }
        if (w.is_atom(r.body, "true") && r.backtrackable && !has_cond) {
            out += ".";  // plain fact
            return out;
        }
        out += r.backtrackable ? " ?=> " : " => ";
        w.write(out, r.body, 60);
        out += ".";
        return out;
    }

    std::string program(const Program& prog) const {
        std::string out;
        for (const std::string& m : prog.imports)
            out += "import " + m + ".\n";
        for (const PredKey& key : prog.def_order) {
            const PredicateDef& def = prog.preds.at(key);
            if (def.tabled) {
                out += "table";
                if (def.table_mode) {
                    out += " (";
                    for (size_t i = 0; i < def.table_mode->modes.size(); ++i) {
                        if (i) out += ",";
                        switch (def.table_mode->modes[i]) {
                            case Mode::Plus: out += "+"; break;
                            case Mode::Minus: out += "-"; break;
                            case Mode::Min: out += "min"; break;
                            case Mode::Max: out += "max"; break;
                            case Mode::Nt: out += "nt"; break;
                        }
                    }
                    out += ")";
                }
                out += "\n";
            }
            for (const Rule& r : def.rules) out += rule(def.name, r) + "\n";
            out += "\n";
        }
        return out;
    }

private:
    std::string head(const std::string& name, const std::vector<TermRef>& args) const {
        std::string out = atom_text(name);
        if (!args.empty() || true) {
            // arity-0 heads print bare; others with parens
        }
        if (!args.empty()) {
            out += "(";
            for (size_t i = 0; i < args.size(); ++i) {
                if (i) out += ",";
                write(out, args[i], 210);
            }
            out += ")";
        }
        return out;
    }

    bool is_atom(TermRef t, std::string_view name) const {
        return t.is_atom() && store_.symbol_name(t.atom_sym()) == name;
    }

    void write(std::string& out, TermRef t, int min_bp) const {
        switch (t.tag()) {
            case Tag::SmallInt: {
                int64_t v = t.int_value();
                if (v < 0 && min_bp > 600) {
                    out += "(" + std::to_string(v) + ")";
                } else {
                    out += std::to_string(v);
                }
                return;
            }
            case Tag::Var: {
                uint64_t s = t.var_serial();
                if (var_names_ && s < var_names_->size())
                    out += (*var_names_)[s];
                else
                    out += "_S" + std::to_string(s);
                return;
            }
            case Tag::Atom:
                out += atom_text(store_.symbol_name(t.atom_sym()));
                return;
            case Tag::Nil:
                out += "[]";
                return;
            case Tag::Node:
                write_node(out, t, min_bp);
                return;
        }
    }

    void write_node(std::string& out, TermRef t, int min_bp) const {
        const TermNode& n = store_.node(t);
        if (n.kind == NodeKind::Cons) {
            out += "[";
            TermRef cur = t;
            bool first = true;
            for (;;) {
                const TermNode& c = store_.node(cur);
                if (!first) out += ",";
                write(out, c.args[0], 210);
                first = false;
                TermRef tail = c.args[1];
                if (tail.is_nil()) break;
                if (tail.is_node() &&
                    store_.node(tail).kind == NodeKind::Cons) {
                    cur = tail;
                    continue;
                }
                out += "|";
                write(out, tail, 210);
                break;
            }
            out += "]";
            return;
        }
        if (n.kind == NodeKind::Array) {
            out += "{";
            for (size_t i = 0; i < n.args.size(); ++i) {
                if (i) out += ",";
                write(out, n.args[i], 210);
            }
            out += "}";
            return;
        }
        const std::string& name = store_.symbol_name(n.symbol);
        if (name == "$subscript" && n.args.size() == 2 &&
            store_.is_proper_list(n.args[1])) {
            write(out, n.args[0], kPostfixBp);
            out += "[";
            auto idx = store_.list_elements(n.args[1]);
            for (size_t i = 0; i < idx.size(); ++i) {
                if (i) out += ",";
                write(out, idx[i], 210);
            }
            out += "]";
            return;
        }
        if (name == "$quote" && n.args.size() == 1) {
            maybe_paren(out, min_bp, 210, [&](std::string& o) {
                o += "$";
                write(o, n.args[0], 210);
            });
            return;
        }
        if (name == "$dot" && n.args.size() == 2) {
            write(out, n.args[0], kPostfixBp);
            out += ".";
            write(out, n.args[1], kPostfixBp + 1);
            return;
        }
        if (name == "$listcomp" && n.args.size() == 2 &&
            store_.is_proper_list(n.args[1])) {
            out += "[";
            write(out, n.args[0], 210);
            out += " : ";
            auto specs = store_.list_elements(n.args[1]);
            for (size_t i = 0; i < specs.size(); ++i) {
                if (i) out += ", ";
                write(out, specs[i], 210);
            }
            out += "]";
            return;
        }
        if (name == "foreach" && n.args.size() == 2 &&
            store_.is_proper_list(n.args[0])) {
            maybe_paren(out, min_bp, 210, [&](std::string& o) {
                o += "foreach (";
                auto specs = store_.list_elements(n.args[0]);
                for (size_t i = 0; i < specs.size(); ++i) {
                    if (i) o += ", ";
                    write(o, specs[i], 210);
                }
                o += ") ";
                write(o, n.args[1], 61);
                o += " end";
            });
            return;
        }
        if (n.args.size() == 2) {
            if (auto op = infix_op(name)) {
                int lbp = op->assoc == Assoc::Left ? op->bp : op->bp + 1;
                int rbp = op->assoc == Assoc::Right ? op->bp : op->bp + 1;
                maybe_paren(out, min_bp, op->bp, [&](std::string& o) {
                    write(o, n.args[0], lbp);
                    if (name == ",") {
                        o += ", ";
                    } else {
                        o += " " + name + " ";
                    }
                    write(o, n.args[1], rbp);
                });
                return;
            }
        }
        if (n.args.size() == 1) {
            if (auto pre = prefix_op(name); pre && name != "$") {
                maybe_paren(out, min_bp, pre->operand_bp, [&](std::string& o) {
                    o += name;
                    o += (name == "not") ? " " : " ";
                    write(o, n.args[0], pre->operand_bp);
                });
                return;
            }
        }
        out += atom_text(name);
        out += "(";
        for (size_t i = 0; i < n.args.size(); ++i) {
            if (i) out += ",";
            write(out, n.args[i], 210);
        }
        out += ")";
    }

    template <class Fn>
    void maybe_paren(std::string& out, int min_bp, int bp, Fn&& fn) const {
        if (bp < min_bp) {
            out += "(";
            fn(out);
            out += ")";
        } else {
            fn(out);
        }
    }

    std::string atom_text(const std::string& name) const {
        bool plain = !name.empty() &&
                     (std::islower(static_cast<unsigned char>(name[0])));
        if (plain) {
            for (char c : name)
                if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_')
                    { plain = false; break; }
        }
        if (plain) return name;
        std::string out = "'";
        for (char c : name) {
            if (c == '\'' || c == '\\') out += '\\';
            out += c;
        }
        out += "'";
        return out;
    }

    const TermStore& store_;
    const std::vector<std::string>* var_names_;
};

inline std::string write_term(const TermStore& store, TermRef t,
                              const std::vector<std::string>* names = nullptr) {
    return Writer(store, names).term(t);
}

}  // namespace pl9
