#include <catch2/catch_amalgamated.hpp>

#include <queue>
#include <random>

#include "pl9/engine.hpp"
#include "pl9/lower.hpp"

using namespace pl9;

namespace {

struct Run {
    TermStore store;
    Program prog;
    std::unique_ptr<Engine> engine;
    std::ostringstream out;

    explicit Run(const std::string& src) {
        prog = parse_program_text(store, src);
        lower_program(store, prog);
        EngineConfig cfg;
        cfg.out = &out;
        engine = std::make_unique<Engine>(store, prog, cfg);
    }

    std::vector<std::string> all(const std::string& goal, const std::string& var) {
        std::vector<std::string> got;
        engine->run_query_text(goal, [&](const auto& bs) {
            for (const auto& b : bs)
                if (b.name == var) got.push_back(Writer(store).term(b.value));
            return false;
        });
        return got;
    }

    bool succeeds(const std::string& goal) {
        return engine->run_query_text(goal, [](const auto&) { return true; });
    }
};

const char* kLine =
    "final(c) => true.\n"
    "edge(a,b).\nedge(b,c).\n"
    "action(S,S1,A,C) => edge(S,S1), A = $e(S,S1), C = 1.\n";

struct RandomGraph {
    int n;
    std::vector<std::pair<int, int>> edges;
    int start, goal;

    std::string program() const {
        std::string src = "final(" + std::to_string(goal) + ").\n";
        for (auto [u, v] : edges)
            src += "edge(" + std::to_string(u) + "," + std::to_string(v) + ").\n";
        src += "action(S,S1,A,C) => edge(S,S1), A = $e(S,S1), C = 1.\n";
        return src;
    }

    // -1 when unreachable
    int bfs_cost() const {
        std::vector<std::vector<int>> adj(n + 1);
        for (auto [u, v] : edges) adj[u].push_back(v);
        std::vector<int> dist(n + 1, -1);
        std::queue<int> q;
        dist[start] = 0;
        q.push(start);
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int v : adj[u])
                if (dist[v] < 0) { dist[v] = dist[u] + 1; q.push(v); }
        }
        return dist[goal];
    }
};

RandomGraph make_graph(std::mt19937_64& rng) {
    RandomGraph g;
    g.n = 3 + static_cast<int>(rng() % 6);  // up to 8 states
    for (int u = 1; u <= g.n; ++u)
        for (int v = 1; v <= g.n; ++v)
            if (u != v && rng() % 3 == 0) g.edges.emplace_back(u, v);
    g.start = 1 + static_cast<int>(rng() % g.n);
    g.goal = 1 + static_cast<int>(rng() % g.n);
    return g;
}

}  // namespace

TEST_CASE("a final state yields the empty plan at zero cost for any limit") {
    Run r(kLine);
    for (const char* lim : {"0", "1", "10"}) {
        auto p = r.all(std::string("plan(c,") + lim + ",P,C)", "P");
        auto c = r.all(std::string("plan(c,") + lim + ",P,C)", "C");
        CHECK(p == std::vector<std::string>{"[]"});
        CHECK(c == std::vector<std::string>{"0"});
    }
}

TEST_CASE("line graph: plan within budget 1 fails, budget 2 finds both steps") {
    Run r(kLine);
    CHECK(!r.succeeds("plan(a,1,P,C)"));
    auto p = r.all("plan(a,2,P,C)", "P");
    auto c = r.all("plan(a,2,P,C)", "C");
    CHECK(p == std::vector<std::string>{"[e(a,b),e(b,c)]"});
    CHECK(c == std::vector<std::string>{"2"});
}

TEST_CASE("best_plan on the line graph finds cost 2 under a large limit") {
    Run r(kLine);
    auto c = r.all("best_plan(a,10,P,C)", "C");
    CHECK(c == std::vector<std::string>{"2"});
}

TEST_CASE("best_plan(S,0,...) succeeds exactly for final states") {
    Run r(kLine);
    CHECK(r.succeeds("best_plan(c,0,P,C)"));
    CHECK(!r.succeeds("best_plan(a,0,P,C)"));
}

TEST_CASE("plan rejects non-ground initial states") {
    Run r(kLine);
    CHECK_THROWS_AS(r.succeeds("plan(S,3,P,C)"), Error);
}

TEST_CASE("current_resource reports the budget of the active plan call") {
    Run r(
        "final(t(3)) => true.\n"
        "action(t(N), S1, A, C), N < 3 =>\n"
        "    R = current_resource(),\n"
        "    N1 = N + 1,\n"
        "    S1 = $t(N1),\n"
        "    A = $step(R),\n"
        "    C = 1.\n");
    auto p = r.all("plan($t(0), 7, P, C)", "P");
    // the root search runs at 7; each unit-cost step lowers the budget
    CHECK(p == std::vector<std::string>{"[step(7),step(6),step(5)]"});
}

TEST_CASE("current_resource outside a plan search is a context error") {
    Run r(kLine);
    try {
        r.succeeds("X = current_resource()");
        FAIL("expected a context error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::context);
    }
}

TEST_CASE("failed states are not re-expanded at equal or lower budgets") {
    Run r(kLine);
    CHECK(!r.succeeds("plan(a,1,P,C)"));
    uint64_t expansions = r.engine->planner().stats().expansions;
    // same budget again: everything is answered from the table
    CHECK(!r.succeeds("plan(a,1,P,C)"));
    CHECK(r.engine->planner().stats().expansions == expansions);
    CHECK(r.engine->planner().stats().failed_reuse_hits >= 1);
    // a higher budget does re-expand
    CHECK(r.succeeds("plan(a,2,P,C)"));
    CHECK(r.engine->planner().stats().expansions > expansions);
    CHECK(r.engine->planner().stats().reexpansions >= 1);
}

TEST_CASE("a stored success is reused without expansion when it fits the budget") {
    Run r(kLine);
    CHECK(r.succeeds("plan(a,5,P,C)"));
    uint64_t expansions = r.engine->planner().stats().expansions;
    CHECK(r.succeeds("plan(a,5,P,C)"));
    CHECK(r.engine->planner().stats().expansions == expansions);
    CHECK(r.engine->planner().stats().success_reuse_hits >= 1);
}

TEST_CASE("best_plan equals the breadth-first oracle on random unit graphs") {
    std::mt19937_64 rng(2024);
    int checked = 0;
    for (int round = 0; round < 20; ++round) {
        RandomGraph g = make_graph(rng);
        Run r(g.program());
        int oracle = g.bfs_cost();
        std::string goal = "best_plan(" + std::to_string(g.start) +
                           ", 16, P, C)";
        auto c = r.all(goal, "C");
        if (oracle < 0) {
            CHECK(c.empty());
        } else {
            REQUIRE(c.size() == 1);
            CHECK(c[0] == std::to_string(oracle));
            ++checked;
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("zero-cost cycles do not loop forever") {
    Run r(
        "final(done) => true.\n"
        "action(a, S1, A, C) ?=> S1 = b, A = ab, C = 0.\n"
        "action(b, S1, A, C) ?=> S1 = a, A = ba, C = 0.\n"
        "action(b, S1, A, C) => S1 = done, A = fin, C = 1.\n");
    auto c = r.all("best_plan(a, 4, P, C)", "C");
    CHECK(c == std::vector<std::string>{"1"});
}

TEST_CASE("plans replay to a final state with matching cost") {
    std::mt19937_64 rng(515);
    for (int round = 0; round < 10; ++round) {
        RandomGraph g = make_graph(rng);
        if (g.bfs_cost() < 0) continue;
        Run r(g.program());
        std::vector<std::string> plan_steps;
        int64_t cost = -1;
        r.engine->run_query_text(
            "best_plan(" + std::to_string(g.start) + ", 16, P, C)",
            [&](const auto& bs) {
                for (const auto& b : bs) {
                    if (b.name == "P") {
                        // e(u,v) steps
                        TermRef l = b.value;
                        while (l.is_node() &&
                               r.store.node(l).kind == NodeKind::Cons) {
                            plan_steps.push_back(
                                Writer(r.store).term(r.store.node(l).args[0]));
                            l = r.store.node(l).args[1];
                        }
                    }
                    if (b.name == "C") cost = b.value.int_value();
                }
                return true;
            });
        REQUIRE(cost == g.bfs_cost());
        // replay: each step e(u,v) must be an edge, chained from start
        int cur = g.start;
        for (const std::string& step : plan_steps) {
            int u, v;
            REQUIRE(sscanf(step.c_str(), "e(%d,%d)", &u, &v) == 2);
            CHECK(u == cur);
            bool is_edge = false;
            for (auto [a, b2] : g.edges)
                if (a == u && b2 == v) is_edge = true;
            CHECK(is_edge);
            cur = v;
        }
        CHECK(cur == g.goal);
        CHECK(static_cast<int64_t>(plan_steps.size()) == cost);
    }
}
