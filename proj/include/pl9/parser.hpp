#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pl9/lexer.hpp"
#include "pl9/ops.hpp"
#include "pl9/program.hpp"
#include "pl9/term.hpp"

namespace pl9 {

// Result of parsing a standalone query: a goal term over a private variable
// numbering plus the named variables in source order.
struct ParsedQuery {
    TermRef goal;
    uint32_t var_count = 0;
    std::vector<std::string> var_names;
    std::vector<std::pair<std::string, uint64_t>> named_vars;
};

class Parser {
public:
    Parser(TermStore& store, std::string_view src, std::string file = "<input>")
        : store_(store), file_(std::move(file)) {
        Lexer lex(src, file_);
        toks_ = lex.tokenize();
    }

    Program parse_program() {
        Program prog;
        while (!at(Tok::Eof)) {
            if (at_atom("import")) {
                parse_import(prog);
                continue;
            }
            if (at_atom("table")) {
                parse_table_decl();
                continue;
            }
            parse_rule(prog);
        }
        if (pending_table_)
            fail("table declaration is not followed by a rule");
        return prog;
    }

    ParsedQuery parse_query() {
        reset_vars();
        TermRef goal = parse_expr(0);
        if (at(Tok::ClauseEnd)) advance();
        expect_eof();
        ParsedQuery q;
        q.goal = goal;
        q.var_count = static_cast<uint32_t>(var_names_.size());
        q.var_names = var_names_;
        for (const auto& [name, serial] : var_order_)
            if (name != "_") q.named_vars.emplace_back(name, serial);
        return q;
    }

    // Parses a single term (used by tests and tools).
    TermRef parse_single_term() {
        reset_vars();
        TermRef t = parse_expr(0);
        if (at(Tok::ClauseEnd)) advance();
        expect_eof();
        return t;
    }

    const std::vector<std::string>& last_var_names() const { return var_names_; }

private:
    // --- token plumbing ------------------------------------------------------

    const Token& cur() const { return toks_[pos_]; }
    const Token& peek(size_t n = 1) const {
        size_t i = pos_ + n;
        return i < toks_.size() ? toks_[i] : toks_.back();
    }
    void advance() { if (pos_ + 1 < toks_.size()) ++pos_; }

    bool at(Tok k) const { return cur().kind == k; }
    bool at_punct(std::string_view t) const {
        return cur().kind == Tok::Punct && cur().text == t;
    }
    bool at_atom(std::string_view t) const {
        return cur().kind == Tok::Atom && cur().text == t;
    }

    void expect_punct(std::string_view t) {
        if (!at_punct(t)) fail(std::string("expected '") + std::string(t) + "'");
        advance();
    }
    void expect_eof() {
        if (!at(Tok::Eof)) fail("trailing input after term");
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error::parse_at(file_, cur().line, cur().col, msg);
    }

    // --- variable numbering --------------------------------------------------

    void reset_vars() {
        vars_.clear();
        var_names_.clear();
        var_order_.clear();
    }

    TermRef var_ref(const std::string& name) {
        if (name == "_") {
            uint64_t s = var_names_.size();
            var_names_.push_back("_");
            return TermRef::var(s);
        }
        auto it = vars_.find(name);
        if (it != vars_.end()) return TermRef::var(it->second);
        uint64_t s = var_names_.size();
        var_names_.push_back(name);
        vars_.emplace(name, s);
        var_order_.emplace_back(name, s);
        return TermRef::var(s);
    }

    // --- expression parsing (Pratt) -----------------------------------------

    TermRef parse_expr(int min_bp) {
        TermRef lhs = parse_prefix(min_bp);
        for (;;) {
            if (at(Tok::Eof) || at(Tok::ClauseEnd)) return lhs;
            std::optional<InfixOp> op;
            std::string text;
            if (cur().kind == Tok::Punct) {
                op = infix_op(cur().text);
                text = cur().text;
            } else if (cur().kind == Tok::Atom &&
                       (cur().text == "div" || cur().text == "mod" ||
                        cur().text == "in")) {
                op = infix_op(cur().text);
                text = cur().text;
            }
            if (!op || op->bp < min_bp) return lhs;
            advance();
            int rhs_min = op->assoc == Assoc::Right ? op->bp : op->bp + 1;
            TermRef rhs = parse_expr(rhs_min);
            if (op->assoc == Assoc::None && cur().kind == Tok::Punct) {
                auto nx = infix_op(cur().text);
                if (nx && nx->bp == op->bp && nx->assoc == Assoc::None)
                    fail("operator '" + cur().text + "' is non-associative");
            }
            lhs = store_.make_struct(text, {lhs, rhs});
        }
    }

    TermRef parse_prefix(int min_bp) {
        if (cur().kind == Tok::Punct || at_atom("not")) {
            auto pre = prefix_op(cur().text);
            if (pre) {
                std::string text = cur().text;
                advance();
                if (text == "-" && at(Tok::Int)) {
                    int64_t v = cur().value;
                    advance();
                    return parse_postfix(store_.make_int(-v), min_bp);
                }
                TermRef operand = parse_expr(pre->operand_bp);
                if (text == "$") return store_.make_struct("$quote", {operand});
                if (text == "+") return operand;
                return store_.make_struct(text, {operand});
            }
        }
        TermRef prim = parse_primary();
        return parse_postfix(prim, min_bp);
    }

    TermRef parse_postfix(TermRef t, int /*min_bp*/) {
        for (;;) {
            if (at_punct("[")) {
                advance();
                std::vector<TermRef> idx;
                if (!at_punct("]")) {
                    idx.push_back(parse_expr(210));
                    while (at_punct(",")) { advance(); idx.push_back(parse_expr(210)); }
                }
                expect_punct("]");
                t = store_.make_struct("$subscript", {t, store_.make_list(idx)});
            } else if (at_punct(".")) {
                advance();
                if (cur().kind != Tok::Atom) fail("expected attribute or call after '.'");
                std::string name = cur().text;
                advance();
                TermRef rhs;
                if (at_punct("(")) {
                    rhs = parse_call(name);
                } else {
                    rhs = store_.make_atom(name);
                }
                t = store_.make_struct("$dot", {t, rhs});
            } else {
                return t;
            }
        }
    }

    TermRef parse_primary() {
        switch (cur().kind) {
            case Tok::Int: {
                int64_t v = cur().value;
                advance();
                return store_.make_int(v);
            }
            case Tok::Var: {
                std::string name = cur().text;
                advance();
                return var_ref(name);
            }
            case Tok::Str: {
                std::string s = cur().text;
                advance();
                return store_.make_string(s);
            }
            case Tok::Atom: {
                if (at_atom("foreach") && peek().kind == Tok::Punct &&
                    peek().text == "(")
                    return parse_foreach();
                std::string name = cur().text;
                advance();
                if (at_punct("(")) return parse_call(name);
                return store_.make_atom(name);
            }
            case Tok::Punct:
                if (at_punct("(")) {
                    advance();
                    TermRef t = parse_expr(0);
                    expect_punct(")");
                    return t;
                }
                if (at_punct("[")) return parse_list();
                if (at_punct("{")) return parse_array();
                fail("unexpected token '" + cur().text + "'");
            default:
                fail("unexpected token");
        }
    }

    TermRef parse_call(const std::string& name) {
        expect_punct("(");
        std::vector<TermRef> args;
        if (!at_punct(")")) {
            args.push_back(parse_expr(210));
            while (at_punct(",")) { advance(); args.push_back(parse_expr(210)); }
        }
        expect_punct(")");
        return store_.make_struct(name, std::move(args));
    }

    TermRef parse_list() {
        expect_punct("[");
        if (at_punct("]")) { advance(); return store_.nil(); }
        TermRef first = parse_expr(210);
        if (at_punct(":")) {
            advance();
            std::vector<TermRef> specs;
            specs.push_back(parse_expr(210));
            while (at_punct(",")) { advance(); specs.push_back(parse_expr(210)); }
            expect_punct("]");
            return store_.make_struct("$listcomp", {first, store_.make_list(specs)});
        }
        std::vector<TermRef> elems{first};
        while (at_punct(",")) { advance(); elems.push_back(parse_expr(210)); }
        TermRef tail = store_.nil();
        if (at_punct("|")) { advance(); tail = parse_expr(210); }
        expect_punct("]");
        return store_.make_list(elems, tail);
    }

    TermRef parse_array() {
        expect_punct("{");
        std::vector<TermRef> elems;
        if (!at_punct("}")) {
            elems.push_back(parse_expr(210));
            while (at_punct(",")) { advance(); elems.push_back(parse_expr(210)); }
        }
        expect_punct("}");
        return store_.make_array(std::move(elems));
    }

    TermRef parse_foreach() {
        advance();  // foreach
        expect_punct("(");
        std::vector<TermRef> specs;
        specs.push_back(parse_expr(210));
        while (at_punct(",")) { advance(); specs.push_back(parse_expr(210)); }
        expect_punct(")");
        TermRef body = parse_expr(0);
        if (!at_atom("end")) fail("expected 'end' closing foreach");
        advance();
        return store_.make_struct("foreach", {store_.make_list(specs), body});
    }

    // --- clause-level parsing ------------------------------------------------

    void parse_import(Program& prog) {
        advance();  // import
        for (;;) {
            if (cur().kind != Tok::Atom) fail("expected module name in import");
            prog.imports.push_back(cur().text);
            advance();
            if (at_punct(",")) { advance(); continue; }
            break;
        }
        if (!at(Tok::ClauseEnd)) fail("expected '.' after import");
        advance();
    }

    void parse_table_decl() {
        int line = cur().line, col = cur().col;
        advance();  // table
        ModeTuple mt;
        bool has_modes = false;
        if (at_punct("(")) {
            has_modes = true;
            advance();
            for (;;) {
                if (at_punct("+")) { mt.modes.push_back(Mode::Plus); advance(); }
                else if (at_punct("-")) { mt.modes.push_back(Mode::Minus); advance(); }
                else if (at_atom("min")) { mt.modes.push_back(Mode::Min); advance(); }
                else if (at_atom("max")) { mt.modes.push_back(Mode::Max); advance(); }
                else if (at_atom("nt")) { mt.modes.push_back(Mode::Nt); advance(); }
                else fail("expected one of + - min max nt in table modes");
                if (at_punct(",")) { advance(); continue; }
                break;
            }
            expect_punct(")");
        }
        if (at(Tok::ClauseEnd)) advance();
        // validate modes
        int opt_count = 0;
        for (size_t i = 0; i < mt.modes.size(); ++i) {
            Mode m = mt.modes[i];
            if (m == Mode::Min || m == Mode::Max) ++opt_count;
            if (m == Mode::Nt && i + 1 != mt.modes.size())
                throw Error::parse_at(file_, line, col,
                                      "nt is only allowed in the last mode position");
        }
        if (opt_count > 1)
            throw Error::parse_at(file_, line, col,
                                  "at most one argument may be min or max");
        if (pending_table_)
            throw Error::parse_at(file_, line, col,
                                  "table declaration is not followed by a rule");
        pending_table_ = PendingTable{has_modes ? std::optional<ModeTuple>(mt)
                                                : std::nullopt,
                                      line, col};
    }

    void parse_rule(Program& prog) {
        reset_vars();
        int line = cur().line, col = cur().col;
        TermRef clause = parse_expr(0);
        if (!at(Tok::ClauseEnd)) fail("expected '.' at end of rule");
        advance();

        TermRef lhs = clause;
        TermRef body = store_.make_atom("true");
        bool backtrackable = false;
        bool has_arrow = false;
        if (is_struct(clause, "=>", 2)) {
            lhs = arg(clause, 0);
            body = arg(clause, 1);
            has_arrow = true;
        } else if (is_struct(clause, "?=>", 2)) {
            lhs = arg(clause, 0);
            body = arg(clause, 1);
            backtrackable = true;
            has_arrow = true;
        }

        TermRef head_part = lhs;
        TermRef cond = store_.make_atom("true");
        if (is_struct(lhs, ",", 2)) {
            head_part = arg(lhs, 0);
            cond = arg(lhs, 1);
        }

        bool is_function = is_struct(head_part, "=", 2);
        TermRef head = head_part;
        TermRef ret_expr;
        if (is_function) {
            if (backtrackable)
                throw Error::parse_at(file_, line, col,
                                      "function rules must use =>, not ?=>");
            head = arg(head_part, 0);
            ret_expr = arg(head_part, 1);
        } else if (!has_arrow) {
            backtrackable = true;  // plain facts enumerate like clauses
        }
        bool is_fact = !has_arrow && !is_function;

        std::string name;
        std::vector<TermRef> head_args;
        if (head.is_atom()) {
            name = store_.symbol_name(head.atom_sym());
        } else if (head.is_node() &&
                   store_.node(head).kind == NodeKind::Struct) {
            name = store_.symbol_name(store_.node(head).symbol);
            head_args = store_.node(head).args;
        } else {
            throw Error::parse_at(file_, line, col, "invalid rule head");
        }
        if (name == "$subscript" || name == "$dot" || name == "$quote")
            throw Error::parse_at(file_, line, col, "invalid rule head");

        Rule rule;
        rule.cond = cond;
        rule.backtrackable = backtrackable;
        rule.is_fact = is_fact;
        rule.line = line;
        rule.col = col;

        uint32_t arity = static_cast<uint32_t>(head_args.size());
        if (is_function) {
            uint64_t ret_serial = var_names_.size();
            var_names_.push_back("_Ret");
            TermRef ret_var = TermRef::var(ret_serial);
            head_args.push_back(ret_var);
            TermRef ret_goal = store_.make_struct("=", {ret_var, ret_expr});
            if (is_atom(body, "true")) body = ret_goal;
            else body = store_.make_struct(",", {body, ret_goal});
            prog.functions.insert(PredKey{name, arity});
        }
        rule.head_args = std::move(head_args);
        rule.body = body;
        rule.var_count = static_cast<uint32_t>(var_names_.size());
        rule.var_names = var_names_;

        uint32_t def_arity = arity + (is_function ? 1 : 0);
        PredicateDef& def = prog.declare(name, def_arity);
        if (def.from_function != is_function && !def.rules.empty())
            throw Error::parse_at(file_, line, col,
                                  "predicate and function rules mixed for " +
                                      name + "/" + std::to_string(def_arity));
        def.from_function = is_function;
        if (pending_table_) {
            if (def.tabled)
                throw Error::parse_at(file_, pending_table_->line,
                                      pending_table_->col,
                                      "duplicate table declaration for " + name);
            if (!def.rules.empty())
                throw Error::parse_at(file_, pending_table_->line,
                                      pending_table_->col,
                                      "table declaration must precede the first rule of " +
                                          name);
            if (pending_table_->modes &&
                pending_table_->modes->modes.size() != def_arity)
                throw Error::parse_at(file_, pending_table_->line,
                                      pending_table_->col,
                                      "table mode arity does not match " + name +
                                          "/" + std::to_string(def_arity));
            def.tabled = true;
            def.table_mode = pending_table_->modes;
            pending_table_.reset();
        }
        def.rules.push_back(std::move(rule));
    }

    // --- small term helpers --------------------------------------------------

    bool is_struct(TermRef t, std::string_view name, size_t arity) const {
        if (!t.is_node()) return false;
        const TermNode& n = store_.node(t);
        return n.kind == NodeKind::Struct && n.args.size() == arity &&
               store_.symbol_name(n.symbol) == name;
    }
    bool is_atom(TermRef t, std::string_view name) const {
        return t.is_atom() && store_.symbol_name(t.atom_sym()) == name;
    }
    TermRef arg(TermRef t, size_t i) const { return store_.node(t).args[i]; }

    struct PendingTable {
        std::optional<ModeTuple> modes;
        int line, col;
    };

    TermStore& store_;
    std::string file_;
    std::vector<Token> toks_;
    size_t pos_ = 0;
    std::unordered_map<std::string, uint64_t> vars_;
    std::vector<std::string> var_names_;
    std::vector<std::pair<std::string, uint64_t>> var_order_;
    std::optional<PendingTable> pending_table_;
};

inline Program parse_program_text(TermStore& store, std::string_view src,
                                  const std::string& file = "<input>") {
    Parser p(store, src, file);
    return p.parse_program();
}

}  // namespace pl9
