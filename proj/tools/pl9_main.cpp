// pl9 command-line interpreter: runs a program, evaluates a goal, selects
// the solver backend, exports DIMACS / LP files and prints instrumentation.
//
// Exit codes: 0 success, 1 goal failure, 2 parse or runtime error.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "pl9/big_stack.hpp"
#include "pl9/pl9.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw pl9::Error(pl9::ErrorKind::config, "cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pl9 - a small logic language with tabling, planning and "
                 "CP/SAT/MIP solving"};

    std::string source_path;
    std::string goal = "main";
    std::string backend;
    std::string emit_dimacs, emit_lp;
    bool all = false;
    bool table_stats = false, plan_stats = false, store_stats = false;
    bool no_sat_learning = false;
    bool assume_unit_costs = false;
    uint64_t seed = 0;
    int64_t limit = 1 << 28;
    int64_t plan_step = 1;

    app.add_option("source", source_path, "program file (.pl9)")->required();
    app.add_option("--goal", goal, "goal to run (default: main)");
    app.add_flag("--all", all, "enumerate all solutions");
    app.add_option("--backend", backend, "solver backend: cp, sat or mip");
    app.add_option("--emit-dimacs", emit_dimacs,
                   "write the CNF in DIMACS format (sat backend)");
    app.add_option("--emit-lp", emit_lp,
                   "write the linearized model in LP format (mip backend)");
    app.add_flag("--table-stats", table_stats, "dump tabling counters");
    app.add_flag("--plan-stats", plan_stats, "dump planner counters");
    app.add_flag("--store-stats", store_stats, "dump term store counters");
    app.add_flag("--no-sat-learning", no_sat_learning,
                 "disable clause learning in the bundled SAT solver");
    app.add_option("--seed", seed, "random seed (runs are deterministic)");
    app.add_option("--limit", limit, "default resource budget for best_plan/2");
    app.add_option("--plan-step", plan_step,
                   "budget increment between best_plan rounds");
    app.add_flag("--assume-unit-costs", assume_unit_costs,
                 "declare unit action costs (required for --plan-step > 1)");

    CLI11_PARSE(app, argc, argv);

    int exit_code = 0;
    try {
        pl9::EngineConfig cfg;
        if (!backend.empty()) {
            cfg.backend_forced = true;
            if (backend == "cp") cfg.backend = pl9::SolveOptions::Backend::Cp;
            else if (backend == "sat") cfg.backend = pl9::SolveOptions::Backend::Sat;
            else if (backend == "mip") cfg.backend = pl9::SolveOptions::Backend::Mip;
            else throw pl9::Error(pl9::ErrorKind::config,
                                  "unknown backend: " + backend);
        }
        if (!emit_dimacs.empty() && backend != "sat")
            throw pl9::Error(pl9::ErrorKind::config,
                             "--emit-dimacs requires --backend sat");
        if (!emit_lp.empty() && backend != "mip")
            throw pl9::Error(pl9::ErrorKind::config,
                             "--emit-lp requires --backend mip");
        if (plan_step != 1 && !assume_unit_costs)
            throw pl9::Error(pl9::ErrorKind::config,
                             "--plan-step > 1 needs --assume-unit-costs "
                             "(larger steps can overshoot the optimum)");
        if (plan_step < 1)
            throw pl9::Error(pl9::ErrorKind::config, "--plan-step must be >= 1");
        cfg.seed = seed;
        cfg.sat_learning = !no_sat_learning;
        cfg.plan_limit = limit;
        cfg.plan_step = plan_step;
        cfg.emit_dimacs = emit_dimacs;
        cfg.emit_lp = emit_lp;

        std::string text = read_file(source_path);
        pl9::TermStore store;
        pl9::Program prog = pl9::parse_program_text(store, text, source_path);
        pl9::lower_program(store, prog);

        pl9::Engine engine(store, std::move(prog), cfg);
        pl9::Parser goal_parser(store, goal, "<goal>");
        pl9::ParsedQuery query = goal_parser.parse_query();

        bool any = false;
        pl9::run_with_big_stack([&] {
            any = engine.run_query(query, [&](const auto& bindings) {
                if (!bindings.empty()) {
                    std::string line;
                    for (size_t i = 0; i < bindings.size(); ++i) {
                        if (i) line += ", ";
                        line += bindings[i].name + " = " +
                                pl9::Writer(store).term(bindings[i].value);
                    }
                    std::cout << line << "\n";
                }
                return !all;
            });
        });

        if (store_stats) engine.print_store_stats(std::cerr);
        if (table_stats) engine.print_table_stats(std::cerr);
        if (plan_stats) engine.print_plan_stats(std::cerr);
        exit_code = any ? 0 : 1;
    } catch (const pl9::Error& e) {
        if (e.kind() == pl9::ErrorKind::parse)
            std::cerr << e.what() << "\n";
        else
            std::cerr << "pl9: " << pl9::error_kind_name(e.kind()) << ": "
                      << e.what() << "\n";
        exit_code = 2;
    } catch (const std::exception& e) {
        std::cerr << "pl9: error: " << e.what() << "\n";
        exit_code = 2;
    }
    return exit_code;
}
