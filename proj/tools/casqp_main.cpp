// casqp - solver and benchmark front end for cascade optimal-control QPs.
//
// Exit codes: 0 success, 1 I/O or parse or invalid problem, 2 non-convergence,
// 3 numeric failure.

#include "casqp/bench.hpp"
#include "casqp/dist_sim.hpp"
#include "casqp/problem_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

using Scalar = double;

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitNoConvergence = 2;
constexpr int kExitNumeric = 3;

struct SolverFlags {
    double sigma_bar = 0.1;
    double tau = 0.995;
    int max_iter = 50;
    int fixed_iter = 0; // 0 = not set
    double tol_gap = 1e-6;
    double tol_res = 1e-8;
    std::string linear_solver = "structured";
    long dense_cap = 5000;

    void attach(CLI::App* cmd) {
        cmd->add_option("--sigma-bar", sigma_bar, "centring parameter in (0,1)");
        cmd->add_option("--tau", tau, "fraction-to-boundary factor in (0,1)");
        cmd->add_option("--max-iter", max_iter, "iteration cap");
        cmd->add_option("--fixed-iter", fixed_iter, "run exactly this many iterations");
        cmd->add_option("--tol-gap", tol_gap, "duality gap tolerance");
        cmd->add_option("--tol-res", tol_res, "residual tolerance");
        cmd->add_option("--linear-solver", linear_solver, "structured|dense")
            ->check(CLI::IsMember({"structured", "dense"}));
        cmd->add_option("--dense-cap", dense_cap, "dimension cap for the dense solver");
    }

    casqp::SolverOptions<Scalar> to_options() const {
        casqp::SolverOptions<Scalar> options;
        options.sigma_bar = sigma_bar;
        options.tau = tau;
        options.max_iterations = max_iter;
        if (fixed_iter > 0) options.fixed_iterations = fixed_iter;
        options.tol_gap = tol_gap;
        options.tol_residual = tol_res;
        options.linear_solver = linear_solver == "dense" ? casqp::LinearSolver::dense_oracle
                                                         : casqp::LinearSolver::structured;
        options.dense_cap = dense_cap;
        return options;
    }
};

std::vector<casqp::Index> parse_list(const std::string& csv) {
    std::vector<casqp::Index> out;
    std::istringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stol(item));
    if (out.empty()) throw casqp::ParseError("empty list: \"" + csv + "\"");
    return out;
}

int status_exit_code(casqp::SolveStatus status) {
    switch (status) {
        case casqp::SolveStatus::Converged: return kExitOk;
        case casqp::SolveStatus::MaxIterations: return kExitNoConvergence;
        case casqp::SolveStatus::FactorizationFailure: return kExitNumeric;
    }
    return kExitNumeric;
}

void print_bench(const casqp::BenchResult& result) {
    for (const auto& notice : result.notices) std::cerr << "notice: " << notice << "\n";
    std::printf("%-6s %6s %6s %-11s %12s %12s %10s\n", "sweep", "N", "T", "case", "wall_s",
                "linsolve_s", "final_mu");
    for (const auto& r : result.rows)
        std::printf("%-6s %6ld %6ld %-11s %12.6f %12.6f %10.2e\n", r.sweep.c_str(), long(r.N),
                    long(r.T), r.case_name.c_str(), r.wall_s, r.linsolve_s, r.final_mu);
    std::vector<std::string> cases;
    for (const auto& r : result.rows)
        if (std::find(cases.begin(), cases.end(), r.case_name) == cases.end())
            cases.push_back(r.case_name);
    for (const auto& c : cases) {
        std::vector<double> xs, ys;
        for (const auto& r : result.rows) {
            if (r.case_name != c) continue;
            xs.push_back(double(r.sweep == "T" ? r.T : r.N));
            ys.push_back(r.wall_s);
        }
        if (xs.size() >= 4)
            std::printf("slope[%s] = %.3f (log-log fit, upper half of %zu points)\n", c.c_str(),
                        casqp::fit_loglog_slope(xs, ys, true), xs.size());
        else if (xs.size() >= 2)
            std::printf("slope[%s] = %.3f (log-log fit, all %zu points)\n", c.c_str(),
                        casqp::fit_loglog_slope(xs, ys, false), xs.size());
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cascade optimal-control QP solver"};
    app.require_subcommand(1);

    // validate
    std::string validate_path;
    auto* cmd_validate = app.add_subcommand("validate", "check a problem file");
    cmd_validate->add_option("file", validate_path, "problem JSON")->required();

    // gen
    std::string gen_mode, gen_out = "problem.json";
    long gen_seed = 1, gen_n_subs = 3, gen_horizon = 5, gen_nx = 2, gen_nu_in = 1, gen_rows = 2;
    auto* cmd_gen = app.add_subcommand("gen", "generate a problem file");
    cmd_gen->add_option("mode", gen_mode, "random|irrigation")
        ->required()
        ->check(CLI::IsMember({"random", "irrigation"}));
    cmd_gen->add_option("--seed", gen_seed, "random seed");
    cmd_gen->add_option("--N", gen_n_subs, "number of sub-systems");
    cmd_gen->add_option("--T", gen_horizon, "horizon");
    cmd_gen->add_option("--n", gen_nx, "state dimension (random mode)");
    cmd_gen->add_option("--m", gen_nu_in, "input dimension (random mode)");
    cmd_gen->add_option("--nu", gen_rows, "constraint rows per stage (random mode)");
    cmd_gen->add_option("--out", gen_out, "output path");

    // solve
    std::string solve_path, solve_out, solve_csv;
    SolverFlags solve_flags;
    auto* cmd_solve = app.add_subcommand("solve", "solve a problem file");
    cmd_solve->add_option("file", solve_path, "problem JSON")->required();
    cmd_solve->add_option("--out", solve_out, "solution JSON path");
    cmd_solve->add_option("--iter-csv", solve_csv, "per-iteration CSV path");
    solve_flags.attach(cmd_solve);

    // bench-n
    std::string bn_list = "4,8,16,32,64", bn_cases = "structured,dense", bn_out = "bench_n.csv";
    long bn_horizon = 5;
    int bn_repeats = 3, bn_iters = 16;
    long bn_cap = 5000;
    auto* cmd_bench_n = app.add_subcommand("bench-n", "wall time against cascade length");
    cmd_bench_n->add_option("--t", bn_horizon, "fixed horizon");
    cmd_bench_n->add_option("--n-list", bn_list, "comma-separated N values");
    cmd_bench_n->add_option("--cases", bn_cases, "structured,dense");
    cmd_bench_n->add_option("--repeats", bn_repeats, "repeats per point (best-of)");
    cmd_bench_n->add_option("--fixed-iter", bn_iters, "iterations per run");
    cmd_bench_n->add_option("--dense-cap", bn_cap, "dense dimension cap");
    cmd_bench_n->add_option("--out", bn_out, "CSV output path");

    // bench-t
    std::string bt_list = "10,20,40,80", bt_cases = "structured", bt_out = "bench_t.csv";
    long bt_subs = 10;
    int bt_repeats = 3, bt_iters = 16;
    long bt_cap = 5000;
    auto* cmd_bench_t = app.add_subcommand("bench-t", "wall time against horizon");
    cmd_bench_t->add_option("--n", bt_subs, "fixed number of sub-systems");
    cmd_bench_t->add_option("--t-list", bt_list, "comma-separated T values");
    cmd_bench_t->add_option("--cases", bt_cases, "structured,dense");
    cmd_bench_t->add_option("--repeats", bt_repeats, "repeats per point (best-of)");
    cmd_bench_t->add_option("--fixed-iter", bt_iters, "iterations per run");
    cmd_bench_t->add_option("--dense-cap", bt_cap, "dense dimension cap");
    cmd_bench_t->add_option("--out", bt_out, "CSV output path");

    // distsim
    std::string ds_path, ds_csv;
    SolverFlags ds_flags;
    auto* cmd_distsim = app.add_subcommand("distsim", "distributed execution simulation");
    cmd_distsim->add_option("file", ds_path, "problem JSON")->required();
    cmd_distsim->add_option("--msg-csv", ds_csv, "message log CSV path");
    ds_flags.attach(cmd_distsim);

    // plot
    std::string plot_csv, plot_out = "bench.gp";
    auto* cmd_plot = app.add_subcommand("plot", "emit a gnuplot script for a benchmark CSV");
    cmd_plot->add_option("csv", plot_csv, "benchmark CSV")->required();
    cmd_plot->add_option("--out", plot_out, "script output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_validate->parsed()) {
            const auto problem = casqp::load_problem<Scalar>(validate_path);
            const auto report = casqp::validate(problem);
            if (report.ok()) {
                std::cout << "valid: " << problem.count() << " subsystems, T=" << problem.T
                          << "\n";
                return kExitOk;
            }
            std::cout << report.to_string();
            return kExitIo;
        }

        if (cmd_gen->parsed()) {
            casqp::CascadeProblem<Scalar> problem;
            if (gen_mode == "random")
                problem = casqp::random_cascade<Scalar>(std::uint64_t(gen_seed), gen_n_subs,
                                                        gen_horizon, gen_nx, gen_nu_in, gen_rows);
            else
                problem = casqp::irrigation_like<Scalar>(gen_n_subs, gen_horizon);
            casqp::save_problem(problem, gen_out);
            std::cout << "wrote " << gen_out << "\n";
            return kExitOk;
        }

        if (cmd_solve->parsed()) {
            const auto problem = casqp::load_problem<Scalar>(solve_path);
            const auto vrep = casqp::validate(problem);
            if (!vrep.ok()) {
                std::cerr << "invalid problem:\n" << vrep.to_string();
                return kExitIo;
            }
            const auto report = casqp::solve(problem, solve_flags.to_options());
            std::cout << "status:     " << casqp::to_string(report.status) << "\n"
                      << "iterations: " << (report.iterations.empty() ? 0 : report.iterations.back().k)
                      << "\n"
                      << "objective:  " << std::setprecision(12) << report.objective << "\n"
                      << "final mu:   " << std::setprecision(4) << std::scientific
                      << report.final_mu << std::defaultfloat << "\n";
            if (!solve_out.empty()) casqp::save_solution<Scalar>(report, solve_out);
            if (!solve_csv.empty()) casqp::write_iteration_csv(report, solve_csv);
            return status_exit_code(report.status);
        }

        if (cmd_bench_n->parsed()) {
            std::vector<std::string> cases;
            std::istringstream ss(bn_cases);
            for (std::string c; std::getline(ss, c, ',');) cases.push_back(c);
            const auto result = casqp::run_scaling_n<Scalar>(bn_horizon, parse_list(bn_list),
                                                             cases, bn_iters, bn_repeats, bn_cap);
            casqp::write_bench_csv(result, bn_out);
            print_bench(result);
            std::cout << "wrote " << bn_out << "\n";
            return kExitOk;
        }

        if (cmd_bench_t->parsed()) {
            std::vector<std::string> cases;
            std::istringstream ss(bt_cases);
            for (std::string c; std::getline(ss, c, ',');) cases.push_back(c);
            const auto result = casqp::run_scaling_t<Scalar>(bt_subs, parse_list(bt_list), cases,
                                                             bt_iters, bt_repeats, bt_cap);
            casqp::write_bench_csv(result, bt_out);
            print_bench(result);
            std::cout << "wrote " << bt_out << "\n";
            return kExitOk;
        }

        if (cmd_distsim->parsed()) {
            const auto problem = casqp::load_problem<Scalar>(ds_path);
            const auto vrep = casqp::validate(problem);
            if (!vrep.ok()) {
                std::cerr << "invalid problem:\n" << vrep.to_string();
                return kExitIo;
            }
            const auto options = ds_flags.to_options();
            if (problem.count() == 1)
                std::cout << "single sub-system: no links, no messages exchanged\n";

            // Equivalence check against the centralized step sequence.
            auto stacked = casqp::stack_all(problem);
            casqp::Iterate<Scalar> reference = casqp::initialize(problem, stacked);
            Scalar worst_diff = 0;
            casqp::IterationObserver<Scalar> observer =
                [&](int k, const casqp::Iterate<Scalar>& dist_it) {
                    casqp::iterate_once(problem, reference, options, k);
                    for (size_t j = 0; j < reference.sub.size(); ++j) {
                        casqp::SubsystemPoint<Scalar> e = dist_it.sub[j];
                        e.axpy(Scalar(-1), reference.sub[j]);
                        worst_diff = std::max(worst_diff, e.inf_norm());
                    }
                };
            auto [report, log] = casqp::run_distributed(problem, options, true, observer);

            std::cout << "status:          " << casqp::to_string(report.status) << "\n"
                      << "iterations:      " << log.iterations << "\n"
                      << "objective:       " << std::setprecision(12) << report.objective << "\n"
                      << "max |dist-central|: " << std::setprecision(3) << std::scientific
                      << worst_diff << std::defaultfloat << "\n";
            const auto stats = casqp::message_stats(log, int(problem.count()) - 1);
            std::cout << "rounds:          " << stats.rounds << "\n"
                      << "messages:        " << stats.total_messages << " (" << stats.total_bytes
                      << " bytes)\n";
            for (int kind = 0; kind < casqp::kMessageKinds; ++kind)
                if (stats.count_by_kind[size_t(kind)])
                    std::cout << "  " << casqp::to_string(casqp::MessageKind(kind)) << ": "
                              << stats.count_by_kind[size_t(kind)] << " msgs, "
                              << stats.bytes_by_kind[size_t(kind)] << " bytes\n";
            if (!ds_csv.empty()) casqp::write_message_csv(log, ds_csv);
            return status_exit_code(report.status);
        }

        if (cmd_plot->parsed()) {
            casqp::emit_plot_script(plot_csv, plot_out);
            std::cout << "wrote " << plot_out << "\n";
            return kExitOk;
        }
    } catch (const casqp::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const casqp::FactorizationFailure& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitOk;
}
