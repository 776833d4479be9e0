#pragma once

#include "casqp/ipm.hpp"

#include <sys/utsname.h>

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace casqp {

struct BenchRow {
    std::string sweep;    ///< "N" or "T": the varied parameter
    Index N = 0;
    Index T = 0;
    std::string case_name; ///< "structured" or "dense"
    double wall_s = 0;     ///< whole fixed-iteration solve
    double linsolve_s = 0; ///< factor + solve portion only
    int iterations = 0;
    double final_mu = 0;
};

struct BenchResult {
    std::vector<BenchRow> rows;
    std::vector<std::string> notices;
    std::string machine;
    int threads = 1;
    std::string timestamp;
};

namespace bench_detail {

inline std::string machine_description() {
    utsname u{};
    if (uname(&u) == 0)
        return std::string(u.sysname) + " " + u.release + " " + u.machine;
    return "unknown";
}

inline std::string iso_timestamp() {
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

} // namespace bench_detail

/// Times a fixed-iteration solve; best wall time over `repeats` runs. The
/// solver and all kernels are single-threaded, matching the recorded
/// thread count of one.
template <typename Scalar>
BenchRow bench_one(const CascadeProblem<Scalar>& problem, const std::string& case_name,
                   int iterations, int repeats, Index dense_cap) {
    SolverOptions<Scalar> options;
    options.fixed_iterations = iterations;
    options.linear_solver =
        case_name == "dense" ? LinearSolver::dense_oracle : LinearSolver::structured;
    options.dense_cap = dense_cap;

    BenchRow row;
    row.N = problem.count();
    row.T = problem.T;
    row.case_name = case_name;
    row.iterations = iterations;
    row.wall_s = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, repeats); ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const SolveReport<Scalar> report = solve(problem, options);
        const double wall = detail::seconds_since(t0);
        if (wall < row.wall_s) {
            row.wall_s = wall;
            row.linsolve_s = report.linear_solve_seconds();
            row.final_mu = double(report.final_mu);
        }
    }
    return row;
}

/// Scaling sweep over the number of sub-systems at fixed horizon, on the
/// synthetic channel instances. The dense case is skipped (with a notice)
/// whenever the assembled dimension would exceed the cap.
template <typename Scalar>
BenchResult run_scaling_n(Index T, const std::vector<Index>& n_list,
                          const std::vector<std::string>& cases, int iterations = 16,
                          int repeats = 3, Index dense_cap = 5000) {
    BenchResult result;
    result.machine = bench_detail::machine_description();
    result.timestamp = bench_detail::iso_timestamp();
    for (const auto& case_name : cases) {
        for (Index n : n_list) {
            const auto problem = irrigation_like<Scalar>(n, T);
            if (case_name == "dense") {
                Index total = 0;
                for (Index j = 1; j <= n; ++j) total += problem.block_dim(j);
                if (total > dense_cap) {
                    result.notices.push_back("dense case skipped for N=" + std::to_string(n) +
                                             " (dimension " + std::to_string(total) +
                                             " exceeds cap " + std::to_string(dense_cap) + ")");
                    continue;
                }
            }
            BenchRow row = bench_one(problem, case_name, iterations,
                                     case_name == "dense" ? 1 : repeats, dense_cap);
            row.sweep = "N";
            result.rows.push_back(row);
        }
    }
    return result;
}

/// Scaling sweep over the horizon at fixed cascade length.
template <typename Scalar>
BenchResult run_scaling_t(Index N, const std::vector<Index>& t_list,
                          const std::vector<std::string>& cases, int iterations = 16,
                          int repeats = 3, Index dense_cap = 5000) {
    BenchResult result;
    result.machine = bench_detail::machine_description();
    result.timestamp = bench_detail::iso_timestamp();
    for (const auto& case_name : cases) {
        for (Index t : t_list) {
            const auto problem = irrigation_like<Scalar>(N, t);
            if (case_name == "dense") {
                Index total = 0;
                for (Index j = 1; j <= N; ++j) total += problem.block_dim(j);
                if (total > dense_cap) {
                    result.notices.push_back("dense case skipped for T=" + std::to_string(t) +
                                             " (dimension " + std::to_string(total) +
                                             " exceeds cap " + std::to_string(dense_cap) + ")");
                    continue;
                }
            }
            BenchRow row = bench_one(problem, case_name, iterations,
                                     case_name == "dense" ? 1 : repeats, dense_cap);
            row.sweep = "T";
            result.rows.push_back(row);
        }
    }
    return result;
}

/// Least-squares slope of log(y) against log(x). With upper_half set, only
/// the upper half of the points (by index) enters the fit, which discards
/// the constant-overhead regime at small sizes.
inline double fit_loglog_slope(std::vector<double> xs, std::vector<double> ys,
                               bool upper_half = true) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("fit_loglog_slope: need at least two points");
    const size_t start = upper_half ? xs.size() / 2 : 0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    size_t count = 0;
    for (size_t i = start; i < xs.size(); ++i) {
        const double lx = std::log(xs[i]);
        const double ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++count;
    }
    if (count < 2) throw std::invalid_argument("fit_loglog_slope: upper half too small");
    const double denom = double(count) * sxx - sx * sx;
    return (double(count) * sxy - sx * sy) / denom;
}

/// Slope of one benchmark case from a result set.
inline double case_slope(const BenchResult& result, const std::string& case_name) {
    std::vector<double> xs, ys;
    for (const auto& row : result.rows) {
        if (row.case_name != case_name) continue;
        xs.push_back(double(row.sweep == "T" ? row.T : row.N));
        ys.push_back(row.wall_s);
    }
    return fit_loglog_slope(std::move(xs), std::move(ys));
}

inline void write_bench_csv(const BenchResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open \"" + path + "\" for writing");
    out << "# machine=" << result.machine << "\n";
    out << "# threads=" << result.threads << "\n";
    out << "# timestamp=" << result.timestamp << "\n";
    out << "sweep,N,T,case,wall_s,linsolve_s,iterations,final_mu\n";
    out.precision(17);
    for (const auto& r : result.rows)
        out << r.sweep << "," << r.N << "," << r.T << "," << r.case_name << "," << r.wall_s
            << "," << r.linsolve_s << "," << r.iterations << "," << r.final_mu << "\n";
}

inline BenchResult read_bench_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open \"" + path + "\"");
    BenchResult result;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("# machine=", 0) == 0) result.machine = line.substr(10);
            continue;
        }
        if (!header_seen) {
            if (line.rfind("sweep,", 0) != 0)
                throw ParseError("\"" + path + "\": malformed benchmark CSV header");
            header_seen = true;
            continue;
        }
        std::istringstream ss(line);
        BenchRow row;
        std::string field;
        auto next = [&](const char* what) {
            if (!std::getline(ss, field, ','))
                throw ParseError("\"" + path + "\": missing column " + what);
            return field;
        };
        row.sweep = next("sweep");
        row.N = std::stol(next("N"));
        row.T = std::stol(next("T"));
        row.case_name = next("case");
        row.wall_s = std::stod(next("wall_s"));
        row.linsolve_s = std::stod(next("linsolve_s"));
        row.iterations = std::stoi(next("iterations"));
        row.final_mu = std::stod(next("final_mu"));
        result.rows.push_back(std::move(row));
    }
    if (!header_seen) throw ParseError("\"" + path + "\": empty benchmark CSV");
    return result;
}

/// Emits a self-contained gnuplot script drawing wall time against the
/// varied parameter on log-log axes, one curve per case present in the CSV.
/// Nothing is plotted in-process.
inline void emit_plot_script(const std::string& csv_path, const std::string& out_path) {
    const BenchResult result = read_bench_csv(csv_path);
    if (result.rows.empty()) throw ParseError("\"" + csv_path + "\": no benchmark rows");

    const std::string sweep = result.rows.front().sweep;
    const int x_col = sweep == "T" ? 3 : 2;
    const int iterations = result.rows.front().iterations;
    std::vector<std::string> cases;
    for (const auto& row : result.rows)
        if (std::find(cases.begin(), cases.end(), row.case_name) == cases.end())
            cases.push_back(row.case_name);

    std::ofstream out(out_path);
    if (!out) throw ParseError("cannot open \"" + out_path + "\" for writing");
    out << "# gnuplot script generated from " << csv_path << "\n";
    out << "set datafile separator ','\n";
    out << "set datafile commentschars '#'\n";
    out << "set logscale xy\n";
    out << "set xlabel '" << sweep << "'\n";
    out << "set ylabel 'wall seconds (" << iterations << " iterations)'\n";
    out << "set key top left\n";
    out << "set grid\n";
    out << "set terminal pngcairo size 900,600\n";
    out << "set output 'bench.png'\n";
    out << "plot \\\n";
    for (size_t i = 0; i < cases.size(); ++i) {
        out << "  '" << csv_path << "' skip 1 using (strcol(4) eq '" << cases[i]
            << "' ? column(" << x_col << ") : NaN):5 with linespoints title '" << cases[i]
            << "'";
        out << (i + 1 < cases.size() ? ", \\\n" : "\n");
    }
}

} // namespace casqp
