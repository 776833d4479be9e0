#pragma once

#include "casqp/cascade_solver.hpp"

#include <chrono>
#include <fstream>
#include <optional>
#include <vector>

namespace casqp {

enum class LinearSolver { structured, dense_oracle };
enum class SolveStatus { Converged, MaxIterations, FactorizationFailure };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "Converged";
        case SolveStatus::MaxIterations: return "MaxIterations";
        case SolveStatus::FactorizationFailure: return "FactorizationFailure";
    }
    return "?";
}

template <typename Scalar>
struct SolverOptions {
    Scalar sigma_bar = Scalar(0.1);   ///< centring parameter in (0,1)
    Scalar tau = Scalar(0.995);       ///< fraction-to-boundary safety factor
    int max_iterations = 50;
    std::optional<int> fixed_iterations; ///< run exactly this many steps (benchmark protocol)
    Scalar tol_gap = Scalar(1e-6);
    Scalar tol_residual = Scalar(1e-8);
    LinearSolver linear_solver = LinearSolver::structured;
    Index dense_cap = 5000; ///< dimension guard for the dense oracle

    void check() const {
        if (!(sigma_bar > Scalar(0) && sigma_bar < Scalar(1)))
            throw std::invalid_argument("sigma_bar must lie in (0,1)");
        if (!(tau > Scalar(0) && tau < Scalar(1)))
            throw std::invalid_argument("tau must lie in (0,1)");
        if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
        if (fixed_iterations && *fixed_iterations < 1)
            throw std::invalid_argument("fixed_iterations must be >= 1");
    }
};

template <typename Scalar>
struct IterationRecord {
    int k = 0;
    Scalar mu = 0;
    Scalar alpha = 0;
    Scalar r_stat = 0;
    Scalar r_dyn = 0;
    Scalar r_ineq = 0;
    Scalar r_comp = 0;
    double t_factor_s = 0;
    double t_solve_s = 0;
};

template <typename Scalar>
struct SolveReport {
    SolveStatus status = SolveStatus::MaxIterations;
    Trajectory<Scalar> trajectory;
    Iterate<Scalar> final_iterate; ///< multipliers p, lambda, theta live here
    Scalar objective = 0;
    Scalar final_mu = 0;
    Scalar final_residual = 0;
    std::vector<IterationRecord<Scalar>> iterations;

    double linear_solve_seconds() const {
        double total = 0;
        for (const auto& r : iterations) total += r.t_factor_s + r.t_solve_s;
        return total;
    }
};

/// Largest absolute entry over all problem data; residual tolerances are
/// scaled by (1 + this value).
template <typename Scalar>
Scalar data_scale(const CascadeProblem<Scalar>& problem) {
    Scalar scale(0);
    auto upd = [&](const MatrixX<Scalar>& mat) {
        if (mat.size()) scale = std::max(scale, mat.template lpNorm<Eigen::Infinity>());
    };
    for (const auto& s : problem.subsystems) {
        for (const auto& st : s.stages) {
            upd(st.A); upd(st.B); upd(st.E); upd(st.Q); upd(st.S); upd(st.R);
            upd(st.M); upd(st.L);
            scale = std::max(scale, st.c.template lpNorm<Eigen::Infinity>());
        }
        upd(s.terminal.P);
        upd(s.terminal.M);
        scale = std::max(scale, s.terminal.c.template lpNorm<Eigen::Infinity>());
        scale = std::max(scale, s.xi.template lpNorm<Eigen::Infinity>());
    }
    return scale;
}

/// Interior starting point: the zero-input trajectory, zero multipliers,
/// unit inequality multipliers, and slacks max(c - M x, 1) so that lambda >= 0
/// and theta > 0 hold strictly.
template <typename Scalar>
Iterate<Scalar> initialize(const CascadeProblem<Scalar>& problem,
                           const std::vector<StackedSubsystem<Scalar>>& stacked) {
    const Trajectory<Scalar> traj = simulate_zero_input(problem);
    Iterate<Scalar> it;
    it.sub.resize(size_t(problem.count()));
    for (Index j = 1; j <= problem.count(); ++j) {
        const auto& s = stacked[size_t(j - 1)];
        auto& pt = it.sub[size_t(j - 1)];
        pt.x = traj.x[size_t(j - 1)];
        pt.u = VectorX<Scalar>::Zero(s.nu_total());
        pt.p = VectorX<Scalar>::Zero(s.nx());
        pt.lambda = VectorX<Scalar>::Ones(s.nc());
        pt.theta = (s.c - apply_M<Scalar>(s, pt.x)).cwiseMax(Scalar(1));
    }
    return it;
}

template <typename Scalar>
Iterate<Scalar> initialize(const CascadeProblem<Scalar>& problem) {
    return initialize(problem, stack_all(problem));
}

template <typename Scalar>
Trajectory<Scalar> extract_trajectory(const Iterate<Scalar>& it) {
    Trajectory<Scalar> traj;
    for (const auto& s : it.sub) {
        traj.x.push_back(s.x);
        traj.u.push_back(s.u);
    }
    return traj;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// One Newton step given the already-evaluated residual and gap. Shared by
/// iterate_once and the solve loop so both produce identical iterates.
template <typename Scalar>
IterationRecord<Scalar> step_once(const std::vector<StackedSubsystem<Scalar>>& stacked,
                                  Iterate<Scalar>& it, const SolverOptions<Scalar>& options,
                                  const KktResidual<Scalar>& res, Scalar mu, int k) {
    IterationRecord<Scalar> rec;
    rec.k = k;
    rec.mu = mu;
    rec.r_stat = res.stat_norm();
    rec.r_dyn = res.dyn_norm();
    rec.r_ineq = res.ineq_norm();
    rec.r_comp = res.comp_norm();

    const Scalar sigma_mu = options.sigma_bar * mu;
    std::vector<SubsystemPoint<Scalar>> rho;
    rho.reserve(res.sub.size());
    for (const auto& r : res.sub) rho.push_back(subsystem_newton_rhs(r, sigma_mu));

    NewtonStep<Scalar> delta;
    if (options.linear_solver == LinearSolver::structured) {
        auto t0 = std::chrono::steady_clock::now();
        const CascadeFactorization<Scalar> fact = factor_cascade(stacked, it);
        rec.t_factor_s = seconds_since(t0);
        t0 = std::chrono::steady_clock::now();
        delta = solve_newton(fact, rho);
        rec.t_solve_s = seconds_since(t0);
    } else {
        const auto t0 = std::chrono::steady_clock::now();
        delta = dense_newton_solve(stacked, it, rho, options.dense_cap);
        rec.t_factor_s = seconds_since(t0);
    }

    rec.alpha = step_length(it, delta, options.tau);
    for (size_t j = 0; j < it.sub.size(); ++j) it.sub[j].axpy(rec.alpha, delta.sub[j]);
    return rec;
}

} // namespace detail

/// A single interior-point step: evaluates the residual and gap at the
/// current iterate, takes one Newton step, and advances the iterate in place.
template <typename Scalar>
IterationRecord<Scalar> iterate_once(const CascadeProblem<Scalar>& problem, Iterate<Scalar>& it,
                                     const SolverOptions<Scalar>& options, int k = 1) {
    options.check();
    const auto stacked = stack_all(problem);
    const KktResidual<Scalar> res = kkt_residual(stacked, it);
    const Scalar mu = duality_gap(it);
    return detail::step_once(stacked, it, options, res, mu, k);
}

/// Full primal-dual interior-point solve. Terminates when the duality gap
/// and all residual norms pass their tolerances, at the iteration caps, or
/// on factorization failure (with the last iterate preserved). With
/// fixed_iterations set, exactly that many steps are taken regardless of
/// convergence, matching the benchmark protocol.
template <typename Scalar>
SolveReport<Scalar> solve(const CascadeProblem<Scalar>& problem,
                          const SolverOptions<Scalar>& options = SolverOptions<Scalar>{}) {
    options.check();
    const ValidationReport vrep = validate(problem);
    if (!vrep.ok())
        throw std::invalid_argument("solve: invalid problem\n" + vrep.to_string());

    const auto stacked = stack_all(problem);
    const Scalar res_tol = options.tol_residual * (Scalar(1) + data_scale(problem));
    const bool fixed = options.fixed_iterations.has_value();
    const int limit = fixed ? *options.fixed_iterations : options.max_iterations;

    SolveReport<Scalar> report;
    Iterate<Scalar> it = initialize(problem, stacked);

    int k = 1;
    while (true) {
        const KktResidual<Scalar> res = kkt_residual(stacked, it);
        const Scalar mu = duality_gap(it);
        const bool converged = mu <= options.tol_gap && res.max_norm() <= res_tol;
        report.final_mu = mu;
        report.final_residual = res.max_norm();

        if ((!fixed && converged) || k > limit) {
            report.status = converged ? SolveStatus::Converged : SolveStatus::MaxIterations;
            if (report.iterations.empty()) {
                IterationRecord<Scalar> rec;
                rec.k = k;
                rec.mu = mu;
                rec.r_stat = res.stat_norm();
                rec.r_dyn = res.dyn_norm();
                rec.r_ineq = res.ineq_norm();
                rec.r_comp = res.comp_norm();
                report.iterations.push_back(rec);
            }
            break;
        }

        try {
            report.iterations.push_back(detail::step_once(stacked, it, options, res, mu, k));
        } catch (const FactorizationFailure&) {
            report.status = SolveStatus::FactorizationFailure;
            break;
        }
        ++k;
    }

    report.final_iterate = std::move(it);
    report.trajectory = extract_trajectory(report.final_iterate);
    report.objective = objective(problem, report.trajectory);
    return report;
}

/// Per-iteration records as CSV.
template <typename Scalar>
void write_iteration_csv(const SolveReport<Scalar>& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open \"" + path + "\" for writing");
    out << "k,mu,alpha,r_stat,r_dyn,r_comp,t_factor_s,t_solve_s\n";
    out.precision(17);
    for (const auto& r : report.iterations)
        out << r.k << "," << r.mu << "," << r.alpha << "," << r.r_stat << "," << r.r_dyn << ","
            << r.r_comp << "," << r.t_factor_s << "," << r.t_solve_s << "\n";
}

} // namespace casqp
