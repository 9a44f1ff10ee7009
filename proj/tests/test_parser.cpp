#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "pl9/lower.hpp"
#include "pl9/parser.hpp"
#include "pl9/writer.hpp"

using namespace pl9;

namespace {

// structural equality up to a bijection between variable serials
bool term_eq_mod_vars(const TermStore& s, TermRef a, TermRef b,
                      std::map<uint64_t, uint64_t>& fwd,
                      std::map<uint64_t, uint64_t>& bwd) {
    if (a.is_var() || b.is_var()) {
        if (!a.is_var() || !b.is_var()) return false;
        auto f = fwd.find(a.var_serial());
        auto g = bwd.find(b.var_serial());
        if (f == fwd.end() && g == bwd.end()) {
            fwd[a.var_serial()] = b.var_serial();
            bwd[b.var_serial()] = a.var_serial();
            return true;
        }
        return f != fwd.end() && g != bwd.end() &&
               f->second == b.var_serial() && g->second == a.var_serial();
    }
    if (a.tag() != b.tag()) return false;
    if (!a.is_node()) return a == b;
    const TermNode& na = s.node(a);
    const TermNode& nb = s.node(b);
    if (na.kind != nb.kind || na.symbol != nb.symbol ||
        na.args.size() != nb.args.size())
        return false;
    for (size_t i = 0; i < na.args.size(); ++i)
        if (!term_eq_mod_vars(s, na.args[i], nb.args[i], fwd, bwd))
            return false;
    return true;
}

bool rule_eq(const TermStore& s, const Rule& a, const Rule& b) {
    if (a.backtrackable != b.backtrackable) return false;
    if (a.head_args.size() != b.head_args.size()) return false;
    std::map<uint64_t, uint64_t> fwd, bwd;
    for (size_t i = 0; i < a.head_args.size(); ++i)
        if (!term_eq_mod_vars(s, a.head_args[i], b.head_args[i], fwd, bwd))
            return false;
    return term_eq_mod_vars(s, a.cond, b.cond, fwd, bwd) &&
           term_eq_mod_vars(s, a.body, b.body, fwd, bwd);
}

bool program_eq(const TermStore& s, const Program& a, const Program& b) {
    if (a.def_order.size() != b.def_order.size()) return false;
    for (size_t i = 0; i < a.def_order.size(); ++i) {
        if (!(a.def_order[i] == b.def_order[i])) return false;
        const PredicateDef& da = a.preds.at(a.def_order[i]);
        const PredicateDef& db = b.preds.at(b.def_order[i]);
        if (da.rules.size() != db.rules.size()) return false;
        if (da.tabled != db.tabled) return false;
        for (size_t r = 0; r < da.rules.size(); ++r)
            if (!rule_eq(s, da.rules[r], db.rules[r])) return false;
    }
    return true;
}

const char* kQueens =
    "import cp.\n"
    "queens(N, Q) =>\n"
    "    Q = new_list(N),\n"
    "    Q :: 1..N,\n"
    "    all_different(Q),\n"
    "    all_different([$Q[I]-I : I in 1..N]),\n"
    "    all_different([$Q[I]+I : I in 1..N]),\n"
    "    solve([ff],Q).\n";

}  // namespace

TEST_CASE("the N-queens text parses to one nonbacktrackable rule") {
    TermStore s;
    Program p = parse_program_text(s, kQueens);
    REQUIRE(p.find("queens", 2) != nullptr);
    const PredicateDef& def = *p.find("queens", 2);
    REQUIRE(def.rules.size() == 1);
    CHECK(!def.rules[0].backtrackable);
    CHECK(p.imports == std::vector<std::string>{"cp"});
}

TEST_CASE("member parses with a backtrackable first rule") {
    TermStore s;
    Program p = parse_program_text(s,
        "member(X,[Y|_]) ?=> X=Y.\n"
        "member(X,[_|L]) => member(X,L).\n");
    const PredicateDef& def = *p.find("member", 2);
    REQUIRE(def.rules.size() == 2);
    CHECK(def.rules[0].backtrackable);
    CHECK(!def.rules[1].backtrackable);
}

TEST_CASE("degenerate function rule f() = 1") {
    TermStore s;
    Program p = parse_program_text(s, "f() = 1.\n");
    CHECK(p.is_function("f", 0));
    const PredicateDef* def = p.find("f", 1);
    REQUIRE(def != nullptr);
    REQUIRE(def->rules.size() == 1);
    CHECK(!def->rules[0].backtrackable);
    // body is _Ret = 1, cond is true
    const TermNode& body = s.node(def->rules[0].body);
    CHECK(s.symbol_name(body.symbol) == "=");
}

TEST_CASE("dollar marks structures as data; head patterns are exempt") {
    TermStore s;
    Program p = parse_program_text(s,
        "f(point(X,Y)) => writeln($point(X,Y)).\n");
    const Rule& r = p.find("f", 1)->rules[0];
    // head pattern: a plain struct, no quote
    const TermNode& head = s.node(r.head_args[0]);
    CHECK(s.symbol_name(head.symbol) == "point");
    // body argument is quoted
    const TermNode& body = s.node(r.body);
    const TermNode& arg = s.node(body.args[0]);
    CHECK(s.symbol_name(arg.symbol) == "$quote");
}

TEST_CASE("rewrite_oop rewrites calls and attribute access") {
    TermStore s;
    SECTION("Lst.delete(E) becomes delete(Lst,E)") {
        Parser p(s, "Lst.delete(E)");
        TermRef t = rewrite_oop(s, p.parse_single_term());
        const TermNode& n = s.node(t);
        CHECK(s.symbol_name(n.symbol) == "delete");
        CHECK(n.args.size() == 2);
        CHECK(n.args[0].is_var());
    }
    SECTION("A.length becomes a length attribute access") {
        Parser p(s, "1..A.length");
        TermRef t = rewrite_oop(s, p.parse_single_term());
        const TermNode& range = s.node(t);
        CHECK(s.symbol_name(range.symbol) == "..");
        const TermNode& acc = s.node(range.args[1]);
        CHECK(s.symbol_name(acc.symbol) == "get");
        CHECK(s.symbol_name(acc.args[1].atom_sym()) == "length");
    }
    SECTION("math.pi is a qualified module reference") {
        Parser p(s, "math.pi");
        TermRef t = rewrite_oop(s, p.parse_single_term());
        const TermNode& n = s.node(t);
        CHECK(s.symbol_name(n.symbol) == "$modref");
        CHECK(s.symbol_name(n.args[0].atom_sym()) == "math");
        CHECK(s.symbol_name(n.args[1].atom_sym()) == "pi");
    }
    SECTION("module-qualified calls drop the qualifier") {
        Parser p(s, "cp.solve(O,V)");
        TermRef t = rewrite_oop(s, p.parse_single_term());
        const TermNode& n = s.node(t);
        CHECK(s.symbol_name(n.symbol) == "solve");
        CHECK(n.args.size() == 2);
    }
    SECTION("chained access rewrites inside out") {
        Parser p(s, "A.f(B).g(C)");
        TermRef t = rewrite_oop(s, p.parse_single_term());
        const TermNode& g = s.node(t);
        CHECK(s.symbol_name(g.symbol) == "g");
        REQUIRE(g.args.size() == 2);
        const TermNode& f = s.node(g.args[0]);
        CHECK(s.symbol_name(f.symbol) == "f");
    }
}

TEST_CASE("syntax errors carry file, line and column") {
    TermStore s;
    try {
        parse_program_text(s, "p(X) =>\n  q(X,.\n", "prog.pl9");
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::parse);
        CHECK(std::string(e.what()).find("prog.pl9:2:") != std::string::npos);
    }
}

TEST_CASE("table mode validation") {
    TermStore s;
    SECTION("nt only in the last position") {
        CHECK_THROWS_WITH(
            parse_program_text(s, "table (+,nt,max)\np(A,B,C) => true.\n"),
            Catch::Matchers::ContainsSubstring("last mode position"));
    }
    SECTION("at most one of min and max") {
        CHECK_THROWS_WITH(
            parse_program_text(s, "table (min,max)\np(A,B) => true.\n"),
            Catch::Matchers::ContainsSubstring("at most one"));
    }
    SECTION("duplicate table declarations are rejected") {
        CHECK_THROWS_WITH(
            parse_program_text(s,
                "table\nfib(N) = 1.\ntable\nfib(N) = 2.\n"),
            Catch::Matchers::ContainsSubstring("duplicate table declaration"));
    }
    SECTION("mode arity must match the predicate") {
        CHECK_THROWS_WITH(
            parse_program_text(s, "table (+,+)\np(A,B,C) => true.\n"),
            Catch::Matchers::ContainsSubstring("arity"));
    }
    SECTION("well-formed modes parse") {
        Program p = parse_program_text(s,
            "table (+,+,max,nt)\n"
            "path(R,C,S,T) => S = T[R,C].\n");
        const PredicateDef& def = *p.find("path", 4);
        REQUIRE(def.tabled);
        REQUIRE(def.table_mode.has_value());
        CHECK(def.table_mode->modes.size() == 4);
        CHECK(def.table_mode->modes[2] == Mode::Max);
        CHECK(def.table_mode->modes[3] == Mode::Nt);
    }
}

TEST_CASE("parse-print-parse is a fixpoint on the AST") {
    const char* sources[] = {
        kQueens,
        "member(X,[Y|_]) ?=> X=Y.\n"
        "member(X,[_|L]) => member(X,L).\n",
        "power_set([]) = [[]].\n"
        "power_set([H|T]) = P1++P2 =>\n"
        "    P1 = power_set(T),\n"
        "    P2 = [[H|S] : S in P1].\n",
        "table (+,+,max,nt)\n"
        "path(Row,Col,Sum,Tri), Row == Tri.length => Sum = Tri[Row,Col].\n"
        "path(Row,Col,Sum,Tri) ?=> path(Row+1,Col,Sum1,Tri), Sum = Sum1+Tri[Row,Col].\n"
        "path(Row,Col,Sum,Tri) => path(Row+1,Col+1,Sum1,Tri), Sum = Sum1+Tri[Row,Col].\n",
        "final(s([Loc|Loc],_)) => true.\n"
        "action(s(FromTo@[From|_],ORobotLocs),NextState,Action,ActionCost) =>\n"
        "    NextState = $s(FromTo,ORobotLocs2),\n"
        "    Action = [RFrom|RTo],\n"
        "    ActionCost = 1,\n"
        "    select(RFrom, ORobotLocs,ORobotLocs1),\n"
        "    choose_move_dest(RFrom,[From|ORobotLocs1],RTo),\n"
        "    ORobotLocs2 = insert_ordered(ORobotLocs1,RTo).\n",
        "p(A) => q(X), foreach (I in 1 .. A.length) A[I] = (X,Y) end.\n",
        "sum_to(N) = S => S0 = 0, foreach(I in 1..N) S0 := S0 + I end, S = S0.\n",
        "edge(1,2).\nedge(2,3).\n"
        "reach(X,Y) ?=> edge(X,Y).\n"
        "reach(X,Y) => reach(X,Z), edge(Z,Y).\n",
        "f(X) = -X.\ng(X) = abs(X) mod 3.\n"
        "h(L) = [E*2 : E in L, E > 0].\n",
    };
    for (const char* src : sources) {
        TermStore s;
        Program p1 = parse_program_text(s, src);
        std::string printed = Writer(s).program(p1);
        INFO(printed);
        Program p2 = parse_program_text(s, printed);
        CHECK(program_eq(s, p1, p2));
    }
}

TEST_CASE("lowered programs also round-trip through the writer") {
    TermStore s;
    Program p1 = parse_program_text(s, kQueens);
    lower_program(s, p1);
    std::string printed = Writer(s).program(p1);
    Program p2 = parse_program_text(s, printed);
    CHECK(program_eq(s, p1, p2));
}

TEST_CASE("operators are non-associative where declared") {
    TermStore s;
    CHECK_THROWS_AS(parse_program_text(s, "p(X) => X = 1 = 2.\n"), Error);
}

TEST_CASE("floats are rejected") {
    TermStore s;
    CHECK_THROWS_WITH(parse_program_text(s, "p(X) => X = 3.8.\n"),
                      Catch::Matchers::ContainsSubstring("floating point"));
}
