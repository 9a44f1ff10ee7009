#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>
#include <sstream>

#include "pl9/cp.hpp"
#include "pl9/sat.hpp"

using namespace pl9;

namespace {

std::set<std::vector<int64_t>> oracle_solutions(const Model& m) {
    std::set<std::vector<int64_t>> out;
    m.enumerate_box(2000000, [&](const std::vector<int64_t>& a) {
        if (m.solution(a)) out.insert(a);
    });
    return out;
}

std::set<std::vector<int64_t>> sat_solutions(const Model& m) {
    SatCompiler comp(m);
    SolveOptions so;
    std::set<std::vector<int64_t>> out;
    comp.enumerate(so, [&](const std::vector<int64_t>& a) {
        out.insert(a);
        return false;
    });
    return out;
}

std::set<std::vector<int64_t>> cp_sols(const Model& m, const std::vector<VarId>& vars) {
    CpSolver solver(m);
    SolveOptions so;
    std::set<std::vector<int64_t>> out;
    solver.enumerate(vars, so, [&](const std::vector<int64_t>& a) {
        out.insert(a);
        return false;
    });
    return out;
}

}  // namespace

TEST_CASE("encode_domain: 1..8 uses 4 bits and excludes 8 codes") {
    Model m;
    m.new_var(IntervalSet::range(1, 8));
    SatCompiler comp(m);
    const auto& bv = comp.bitvec(0);
    CHECK(bv.mag.size() == 4);  // ceil(log2(8+1))
    CHECK(bv.sign == 0);
    // 16 representable codes, 8 legal values: codes 0 and 9..15 excluded
    CHECK(comp.trace().exclusion_clauses == 8);
}

TEST_CASE("encode_domain: 0..1 uses one bit and no exclusions") {
    Model m;
    m.new_var(IntervalSet::range(0, 1));
    SatCompiler comp(m);
    CHECK(comp.bitvec(0).mag.size() == 1);
    CHECK(comp.bitvec(0).sign == 0);
    CHECK(comp.trace().exclusion_clauses == 0);
}

TEST_CASE("encode_domain: -2..2 uses sign-magnitude with 5 legal codes") {
    Model m;
    m.new_var(IntervalSet::range(-2, 2));
    SatCompiler comp(m);
    const auto& bv = comp.bitvec(0);
    CHECK(bv.mag.size() == 2);
    CHECK(bv.sign != 0);
    // 8 sign-magnitude codes, legal {-2,-1,0,1,2}: +3, -3 and -0 excluded
    CHECK(comp.trace().exclusion_clauses == 3);
    // decode of every solution is the identity on the domain
    auto sols = sat_solutions(m);
    std::set<std::vector<int64_t>> expect;
    for (int64_t v = -2; v <= 2; ++v) expect.insert({v});
    CHECK(sols == expect);
}

TEST_CASE("holes in the domain are excluded by clauses") {
    Model m;
    m.new_var(IntervalSet::of_values({1, 3, 7}));
    auto sols = sat_solutions(m);
    CHECK(sols == std::set<std::vector<int64_t>>{{1}, {3}, {7}});
}

TEST_CASE("one-bit comparator equals x and not y") {
    for (int x = 0; x <= 1; ++x)
        for (int y = 0; y <= 1; ++y) {
            Model m;
            SatCompiler comp(m);
            auto a = comp.test_fresh(1, false, 0, 1);
            auto b = comp.test_fresh(1, false, 0, 1);
            int g = comp.test_u_gt(a.mag, b.mag);
            auto& cnf = comp.mutable_cnf();
            cnf.add({x ? a.mag[0] : -a.mag[0]});
            cnf.add({y ? b.mag[0] : -b.mag[0]});
            cnf.add({g});
            bool sat = sat_solve(cnf).has_value();
            CHECK(sat == (x == 1 && y == 0));
        }
}

TEST_CASE("two-bit adder truth table over all 16 input combinations") {
    for (int x = 0; x < 4; ++x)
        for (int y = 0; y < 4; ++y) {
            Model m;
            SatCompiler comp(m);
            auto a = comp.test_fresh(2, false, 0, 3);
            auto b = comp.test_fresh(2, false, 0, 3);
            auto sum = comp.test_u_add(a.mag, b.mag);
            REQUIRE(sum.size() == 3);  // carry-out becomes the top bit
            for (int target = 0; target < 8; ++target) {
                Cnf cnf = comp.cnf();
                for (int i = 0; i < 2; ++i) {
                    cnf.add({(x >> i) & 1 ? a.mag[i] : -a.mag[i]});
                    cnf.add({(y >> i) & 1 ? b.mag[i] : -b.mag[i]});
                }
                for (int i = 0; i < 3; ++i) {
                    int lit = sum[i];
                    if (lit == SatCompiler::kTrue || lit == SatCompiler::kFalse) {
                        bool bitval = lit == SatCompiler::kTrue;
                        if (bitval != (((target >> i) & 1) != 0)) {
                            cnf.trivially_unsat = true;
                        }
                        continue;
                    }
                    cnf.add({(target >> i) & 1 ? lit : -lit});
                }
                bool sat = sat_solve(cnf).has_value();
                CHECK(sat == (target == x + y));
            }
        }
}

TEST_CASE("reified equality over 0..3 has exactly 16 models") {
    Model m;
    VarId x = m.new_var(IntervalSet::range(0, 3));
    VarId y = m.new_var(IntervalSet::range(0, 3));
    VarId b = m.new_var(IntervalSet::range(0, 1));
    Constraint c;
    c.k = Constraint::K::Reif;
    c.bvar = b;
    c.cmp = Cmp{Expr::var(x), Expr::var(y), CmpOp::Eq};
    m.post(c);
    auto sols = sat_solutions(m);
    CHECK(sols.size() == 16);  // every (x,y) pair with its forced b
    for (const auto& s : sols) CHECK((s[2] == 1) == (s[0] == s[1]));
}

TEST_CASE("unit propagation: (a or b) and (not a)") {
    Cnf cnf;
    int a = cnf.new_var();
    int b = cnf.new_var();
    cnf.add({a, b});
    cnf.add({-a});
    auto model = sat_solve(cnf);
    REQUIRE(model.has_value());
    CHECK(!(*model)[a]);
    CHECK((*model)[b]);
}

TEST_CASE("pigeonhole 3 pigeons in 2 holes is unsatisfiable") {
    Cnf cnf;
    int p[3][2];
    for (int i = 0; i < 3; ++i)
        for (int h = 0; h < 2; ++h) p[i][h] = cnf.new_var();
    for (int i = 0; i < 3; ++i) cnf.add({p[i][0], p[i][1]});
    for (int h = 0; h < 2; ++h)
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j) cnf.add({-p[i][h], -p[j][h]});
    CHECK(!sat_solve(cnf).has_value());
    CHECK(!sat_solve(cnf, {false, 0, {}}).has_value());  // without learning
}

TEST_CASE("flatten produces the primitive forms of the text") {
    SECTION("X+Y #= Z is a single add primitive") {
        Model m;
        VarId x = m.new_var(IntervalSet::range(0, 3));
        VarId y = m.new_var(IntervalSet::range(0, 3));
        VarId z = m.new_var(IntervalSet::range(0, 6));
        Constraint c;
        c.k = Constraint::K::Arith;
        c.cmp = Cmp{Expr::node(Expr::K::Add, {Expr::var(x), Expr::var(y)}),
                    Expr::var(z), CmpOp::Eq};
        m.post(c);
        SatCompiler comp(m);
        CHECK(comp.trace().adders >= 1);
        // x #= y becomes not(x>y) and not(y>x): exactly two comparators
        CHECK(comp.trace().comparators == 2);
    }
    SECTION("2*X #= Y unrolls to X+X through one add") {
        Model m;
        VarId x = m.new_var(IntervalSet::range(0, 3));
        VarId y = m.new_var(IntervalSet::range(0, 6));
        Constraint c;
        c.k = Constraint::K::Arith;
        c.cmp = Cmp{Expr::node(Expr::K::Mul, {Expr::constant(2), Expr::var(x)}),
                    Expr::var(y), CmpOp::Eq};
        m.post(c);
        SatCompiler comp(m);
        CHECK(comp.trace().adders == 3);  // one doubling add, two in the split identity
    }
    SECTION("X #!= Y is a clause over the two comparator indicators") {
        Model m;
        VarId x = m.new_var(IntervalSet::range(0, 3));
        VarId y = m.new_var(IntervalSet::range(0, 3));
        Constraint c;
        c.k = Constraint::K::Arith;
        c.cmp = Cmp{Expr::var(x), Expr::var(y), CmpOp::Ne};
        m.post(c);
        SatCompiler comp(m);
        CHECK(comp.trace().comparators == 2);
        auto sols = sat_solutions(m);
        CHECK(sols.size() == 12);  // 16 pairs minus the 4 equal ones
    }
}

TEST_CASE("variable products are rejected by the sat backend") {
    Model m;
    VarId x = m.new_var(IntervalSet::range(0, 3));
    VarId y = m.new_var(IntervalSet::range(0, 3));
    Constraint c;
    c.k = Constraint::K::Arith;
    c.cmp = Cmp{Expr::node(Expr::K::Mul, {Expr::var(x), Expr::var(y)}),
                Expr::constant(4), CmpOp::Eq};
    m.post(c);
    CHECK_THROWS_AS(SatCompiler{m}, Error);
}

TEST_CASE("encode/solve/decode equals the enumeration oracle on random models") {
    std::mt19937_64 rng(2026);
    int nonempty = 0;
    for (int round = 0; round < 220; ++round) {
        Model m;
        std::vector<VarId> vars;
        int nv = 1 + static_cast<int>(rng() % 3);
        for (int i = 0; i < nv; ++i) {
            std::vector<int64_t> vals;
            for (int64_t v = -8; v <= 8; ++v)
                if (rng() % 3) vals.push_back(v);
            if (vals.empty()) vals.push_back(0);
            vars.push_back(m.new_var(IntervalSet::of_values(vals)));
        }
        auto rand_expr = [&]() {
            Expr e = Expr::var(vars[rng() % vars.size()]);
            int form = static_cast<int>(rng() % 4);
            if (form == 1)
                e = Expr::node(Expr::K::Add,
                               {e, Expr::var(vars[rng() % vars.size()])});
            else if (form == 2)
                e = Expr::node(Expr::K::Sub,
                               {e, Expr::constant(static_cast<int64_t>(rng() % 7) - 3)});
            else if (form == 3)
                e = Expr::node(Expr::K::Mul, {Expr::constant(2), e});
            return e;
        };
        auto rand_cmp = [&]() {
            CmpOp ops[] = {CmpOp::Eq, CmpOp::Ne, CmpOp::Gt,
                           CmpOp::Ge, CmpOp::Lt, CmpOp::Le};
            return Cmp{rand_expr(), rand_expr(), ops[rng() % 6]};
        };
        int nc = 1 + static_cast<int>(rng() % 3);
        for (int i = 0; i < nc; ++i) {
            int kind = static_cast<int>(rng() % 4);
            Constraint c;
            if (kind == 0) {
                c.k = Constraint::K::Arith;
                c.cmp = rand_cmp();
            } else if (kind == 1) {
                c.k = Constraint::K::Reif;
                c.bvar = m.new_var(IntervalSet::range(0, 1));
                Cmp cm = rand_cmp();
                cm.op = CmpOp::Le;  // reified #=<
                c.cmp = cm;
            } else {
                c.k = Constraint::K::Bool;
                c.bexpr = BoolExpr::node(
                    kind == 2 ? BoolExpr::K::And : BoolExpr::K::Or,
                    {BoolExpr::leaf(rand_cmp()), BoolExpr::leaf(rand_cmp())});
            }
            m.post(std::move(c));
        }
        auto oracle = oracle_solutions(m);
        auto got = sat_solutions(m);
        if (!oracle.empty()) ++nonempty;
        REQUIRE(got == oracle);
    }
    CHECK(nonempty > 50);
}

TEST_CASE("cp and sat backends agree on solution counts") {
    std::mt19937_64 rng(555);
    for (int round = 0; round < 30; ++round) {
        Model m;
        std::vector<VarId> vars;
        for (int i = 0; i < 2; ++i)
            vars.push_back(m.new_var(IntervalSet::range(-3, 3)));
        Constraint c;
        c.k = Constraint::K::Arith;
        CmpOp ops[] = {CmpOp::Eq, CmpOp::Ne, CmpOp::Gt, CmpOp::Le};
        c.cmp = Cmp{Expr::node(Expr::K::Add, {Expr::var(vars[0]), Expr::var(vars[1])}),
                    Expr::constant(static_cast<int64_t>(rng() % 5) - 2),
                    ops[rng() % 4]};
        m.post(c);
        CHECK(cp_sols(m, vars) == sat_solutions(m));
    }
}

TEST_CASE("iterative bound strengthening reaches the oracle optimum") {
    std::mt19937_64 rng(77);
    for (int round = 0; round < 20; ++round) {
        Model m;
        std::vector<VarId> vars;
        for (int i = 0; i < 2; ++i)
            vars.push_back(m.new_var(IntervalSet::range(-4, 4)));
        Constraint c;
        c.k = Constraint::K::Arith;
        c.cmp = Cmp{Expr::node(Expr::K::Add, {Expr::var(vars[0]), Expr::var(vars[1])}),
                    Expr::constant(1), CmpOp::Ge};
        m.post(c);
        auto oracle = oracle_solutions(m);
        int64_t best = INT64_MAX;
        for (const auto& a : oracle) best = std::min(best, a[0] + 2 * a[1]);

        SatCompiler comp(m);
        SolveOptions so;
        so.objective = SolveOptions::Objective::Min;
        so.objective_expr = Expr::node(
            Expr::K::Add,
            {Expr::var(vars[0]),
             Expr::node(Expr::K::Mul, {Expr::constant(2), Expr::var(vars[1])})});
        std::optional<std::vector<int64_t>> got;
        comp.enumerate(so, [&](const std::vector<int64_t>& a) {
            got = a;
            return false;
        });
        REQUIRE(got.has_value());
        CHECK((*got)[0] + 2 * (*got)[1] == best);
    }
}

TEST_CASE("DIMACS emission is well-formed and re-solvable") {
    Model m;
    VarId x = m.new_var(IntervalSet::range(0, 3));
    VarId y = m.new_var(IntervalSet::range(0, 3));
    Constraint c;
    c.k = Constraint::K::Arith;
    c.cmp = Cmp{Expr::var(x), Expr::var(y), CmpOp::Gt};
    m.post(c);
    SatCompiler comp(m);
    std::ostringstream os;
    comp.emit_dimacs(os);
    std::istringstream is(os.str());
    std::string p, cnfword;
    int nvars, nclauses;
    is >> p >> cnfword >> nvars >> nclauses;
    REQUIRE(p == "p");
    REQUIRE(cnfword == "cnf");
    Cnf parsed;
    parsed.nvars = nvars;
    std::vector<int> cl;
    int lit;
    while (is >> lit) {
        if (lit == 0) { parsed.add(cl); cl.clear(); }
        else cl.push_back(lit);
    }
    CHECK(parsed.clauses.size() == static_cast<size_t>(nclauses));
    CHECK(sat_solve(parsed).has_value());

    std::ostringstream vm;
    comp.emit_varmap(vm);
    CHECK(vm.str().find("x0 mag") == 0);

    // a clause referencing an unallocated variable is rejected outright
    Cnf bad;
    bad.new_var();
    CHECK_THROWS_AS(bad.add({2}), Error);
}

TEST_CASE("learning and non-learning modes agree on satisfiability") {
    std::mt19937_64 rng(31337);
    for (int round = 0; round < 30; ++round) {
        Cnf cnf;
        int nv = 5 + static_cast<int>(rng() % 6);
        for (int i = 0; i < nv; ++i) cnf.new_var();
        int nc = 10 + static_cast<int>(rng() % 20);
        for (int i = 0; i < nc; ++i) {
            std::vector<int> cl;
            int len = 1 + static_cast<int>(rng() % 3);
            for (int j = 0; j < len; ++j) {
                int v = 1 + static_cast<int>(rng() % nv);
                cl.push_back(rng() % 2 ? v : -v);
            }
            cnf.add(cl);
        }
        auto with = sat_solve(cnf, {true, 0, {}});
        auto without = sat_solve(cnf, {false, 0, {}});
        CHECK(with.has_value() == without.has_value());
        auto check_model = [&](const std::vector<bool>& m2) {
            for (const auto& cl : cnf.clauses) {
                bool sat = false;
                for (int l : cl)
                    if ((l > 0) == m2[std::abs(l)]) { sat = true; break; }
                CHECK(sat);
            }
        };
        if (with) check_model(*with);
        if (without) check_model(*without);
    }
}
