#pragma once

#include "casqp/ipm.hpp"

#include <array>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace casqp {

// ---------------------------------------------------------------------------
// Message fabric. Agents live on a linear network; only neighbour links carry
// messages. Every payload is accounted at 8 bytes per scalar; the coupling
// matrix travels in symmetric storage.

enum class MessageKind : int {
    UpCoupling = 0, ///< PSD correction for the upstream neighbour's x-block
    UpVector,       ///< x-block contribution of the backward solve sweep
    DownVector,     ///< trajectory step of the forward sweep (setup: initial state)
    ReduceGap,      ///< partial sums/maxima flowing up, plus the stationarity coupling
    ReduceAlpha,    ///< partial step-bound minimum flowing up
    Broadcast,      ///< gap or step size flowing down
};

inline const char* to_string(MessageKind k) {
    switch (k) {
        case MessageKind::UpCoupling: return "UpCoupling";
        case MessageKind::UpVector: return "UpVector";
        case MessageKind::DownVector: return "DownVector";
        case MessageKind::ReduceGap: return "ReduceGap";
        case MessageKind::ReduceAlpha: return "ReduceAlpha";
        case MessageKind::Broadcast: return "Broadcast";
    }
    return "?";
}

constexpr int kMessageKinds = 6;

struct MessageRecord {
    int iteration = 0; ///< 0 = setup phase
    int from = 0;
    int to = 0;
    MessageKind kind{};
    std::size_t bytes = 0;
};

struct MessageLog {
    std::vector<MessageRecord> records; ///< per-message detail (optional)
    std::map<int, std::array<long long, kMessageKinds>> count_by_iteration;
    std::map<int, std::array<long long, kMessageKinds>> bytes_by_iteration;
    long long total_rounds = 0;
    int iterations = 0; ///< completed Newton iterations
    bool detail = true;

    long long count(MessageKind k, int iteration = -1) const {
        long long total = 0;
        for (const auto& [it, arr] : count_by_iteration)
            if (iteration < 0 || it == iteration) total += arr[size_t(int(k))];
        return total;
    }
    long long bytes(MessageKind k, int iteration = -1) const {
        long long total = 0;
        for (const auto& [it, arr] : bytes_by_iteration)
            if (iteration < 0 || it == iteration) total += arr[size_t(int(k))];
        return total;
    }
};

/// The only way agents exchange data. Rejects any non-neighbour traffic.
class Channel {
public:
    Channel(int agent_count, MessageLog* log) : n_(agent_count), log_(log) {}

    void record(int iteration, int from, int to, MessageKind kind, std::size_t scalar_count) {
        if (from < 1 || from > n_ || to < 1 || to > n_ || std::abs(from - to) != 1)
            throw std::logic_error("channel: message between non-neighbour agents");
        const std::size_t bytes = 8 * scalar_count;
        if (log_->detail) log_->records.push_back({iteration, from, to, kind, bytes});
        log_->count_by_iteration[iteration][size_t(int(kind))] += 1;
        log_->bytes_by_iteration[iteration][size_t(int(kind))] += (long long)bytes;
    }

private:
    int n_;
    MessageLog* log_;
};

// ---------------------------------------------------------------------------
// Payloads.

template <typename Scalar>
struct GapBundle {
    Scalar dot_sum = 0;        ///< partial sum of lambda . theta (downstream first)
    Scalar r_stat = 0, r_dyn = 0, r_ineq = 0, r_comp = 0; ///< partial maxima
    VectorX<Scalar> stat_coupling; ///< E' p of the sender, sized for the receiver

    std::size_t scalar_count() const { return 5 + std::size_t(stat_coupling.size()); }
};

template <typename Scalar>
struct SetupBundle {
    Scalar data_max = 0;
    long long comp_rows = 0;

    std::size_t scalar_count() const { return 2; }
};

// ---------------------------------------------------------------------------
// Agent: one processing node per sub-system. Holds its own model and stacked
// data, the shared coupling piece of the downstream neighbour's model, its
// slice of the iterate and its factorization - and nothing else. Every
// numeric kernel is the same one the centralized solver calls, so the
// distributed run reproduces the centralized iterates exactly.

template <typename Scalar>
class Agent {
public:
    Agent(const SubsystemModel<Scalar>& model, std::vector<MatrixX<Scalar>> downstream_E)
        : model_(model), ehat_downstream_(std::move(downstream_E)) {
        stacked_ = stack(model_);
        pt_ = SubsystemPoint<Scalar>::Zero(stacked_);
    }

    int index() const { return model_.j; }
    const StackedSubsystem<Scalar>& stacked() const { return stacked_; }
    const SubsystemPoint<Scalar>& point() const { return pt_; }
    const SubsystemModel<Scalar>& model() const { return model_; }
    const std::vector<MatrixX<Scalar>>& downstream_coupling_copy() const {
        return ehat_downstream_;
    }

    // -- setup ---------------------------------------------------------------

    /// Rolls the zero-input trajectory forward from the received upstream
    /// state and initializes the interior point; returns the state to ship
    /// downstream.
    const VectorX<Scalar>& init_state(const VectorX<Scalar>* x_prev0) {
        if (x_prev0) x_prev_ = *x_prev0;
        const VectorX<Scalar> zero_u = VectorX<Scalar>::Zero(stacked_.nu_total());
        pt_.x = roll_forward(model_, zero_u, x_prev0 ? &x_prev_ : nullptr);
        pt_.u = VectorX<Scalar>::Zero(stacked_.nu_total());
        pt_.p = VectorX<Scalar>::Zero(stacked_.nx());
        pt_.lambda = VectorX<Scalar>::Ones(stacked_.nc());
        pt_.theta = (stacked_.c - apply_M<Scalar>(stacked_, pt_.x)).cwiseMax(Scalar(1));
        return pt_.x;
    }

    SetupBundle<Scalar> setup_contribution(const SetupBundle<Scalar>* from_down) const {
        SetupBundle<Scalar> out = from_down ? *from_down : SetupBundle<Scalar>{};
        Scalar local(0);
        auto upd = [&](const MatrixX<Scalar>& mat) {
            if (mat.size()) local = std::max(local, mat.template lpNorm<Eigen::Infinity>());
        };
        for (const auto& st : model_.stages) {
            upd(st.A); upd(st.B); upd(st.E); upd(st.Q); upd(st.S); upd(st.R);
            upd(st.M); upd(st.L);
            local = std::max(local, st.c.template lpNorm<Eigen::Infinity>());
        }
        upd(model_.terminal.P);
        upd(model_.terminal.M);
        local = std::max(local, model_.terminal.c.template lpNorm<Eigen::Infinity>());
        local = std::max(local, model_.xi.template lpNorm<Eigen::Infinity>());
        out.data_max = std::max(out.data_max, local);
        out.comp_rows += stacked_.nc();
        return out;
    }

    // -- gap / residual reduction (flows N -> 1) -------------------------------

    GapBundle<Scalar> gap_contribution(const GapBundle<Scalar>* from_down) {
        const VectorX<Scalar>& coupling =
            from_down ? from_down->stat_coupling : empty_vec_;
        res_ = subsystem_kkt_residual<Scalar>(stacked_, pt_, x_prev_, coupling);

        GapBundle<Scalar> out;
        out.dot_sum = (from_down ? from_down->dot_sum : Scalar(0)) + pt_.lambda.dot(pt_.theta);
        auto fold = [](Scalar acc, Scalar v) { return std::max(acc, v); };
        out.r_stat = fold(from_down ? from_down->r_stat : Scalar(0),
                          std::max(res_.stat_x.template lpNorm<Eigen::Infinity>(),
                                   res_.stat_u.template lpNorm<Eigen::Infinity>()));
        out.r_dyn = fold(from_down ? from_down->r_dyn : Scalar(0),
                         res_.dyn.template lpNorm<Eigen::Infinity>());
        out.r_ineq = fold(from_down ? from_down->r_ineq : Scalar(0),
                          res_.ineq.template lpNorm<Eigen::Infinity>());
        out.r_comp = fold(from_down ? from_down->r_comp : Scalar(0),
                          res_.comp.template lpNorm<Eigen::Infinity>());
        if (index() > 1) out.stat_coupling = apply_ET<Scalar>(stacked_, pt_.p);
        return out;
    }

    void receive_gap(Scalar mu) { mu_ = mu; }

    // -- backward sweep (flows N -> 1) -----------------------------------------

    struct UpOut {
        MatrixX<Scalar> coupling;
        VectorX<Scalar> x_contribution;
    };

    std::optional<UpOut> up_sweep(Scalar sigma_bar, MatrixX<Scalar>* coupling_down,
                                  const VectorX<Scalar>* v_down) {
        rho_ = subsystem_newton_rhs(res_, sigma_bar * mu_);
        if (v_down) rho_.x += *v_down;
        factor_ = build_sigma_factor<Scalar>(
            stacked_, pt_.theta, pt_.lambda,
            coupling_down ? std::move(*coupling_down) : MatrixX<Scalar>());
        if (index() == 1) return std::nullopt;
        const SubsystemPoint<Scalar> sol = sigma_solve(factor_, rho_);
        UpOut out;
        out.x_contribution = apply_coupling_transpose_x(stacked_, sol.p);
        out.coupling = coupling_for_upstream(factor_, stacked_.E);
        return out;
    }

    // -- forward sweep (flows 1 -> N) -------------------------------------------

    const VectorX<Scalar>& down_sweep(const VectorX<Scalar>* delta_x_prev) {
        SubsystemPoint<Scalar> rhs = std::move(rho_);
        if (delta_x_prev) {
            delta_x_prev_ = *delta_x_prev;
            rhs.p -= apply_E<Scalar>(stacked_, delta_x_prev_);
        }
        delta_ = sigma_solve(factor_, rhs);
        return delta_.x;
    }

    Scalar step_bound(Scalar from_down) const {
        return std::min(from_down, max_interior_step(pt_, delta_));
    }

    void apply_update(Scalar alpha) {
        pt_.axpy(alpha, delta_);
        if (index() > 1) x_prev_ += alpha * delta_x_prev_;
    }

private:
    SubsystemModel<Scalar> model_;
    StackedSubsystem<Scalar> stacked_;
    std::vector<MatrixX<Scalar>> ehat_downstream_; ///< the one shared model piece

    SubsystemPoint<Scalar> pt_;
    VectorX<Scalar> x_prev_;       ///< upstream trajectory copy, maintained by messages
    VectorX<Scalar> delta_x_prev_; ///< last received upstream step
    VectorX<Scalar> empty_vec_;
    SubsystemResidual<Scalar> res_;
    SubsystemPoint<Scalar> rho_;
    SigmaFactor<Scalar> factor_;
    SubsystemPoint<Scalar> delta_;
    Scalar mu_ = 0;
};

// ---------------------------------------------------------------------------
// Orchestrated simulation.

template <typename Scalar>
using IterationObserver = std::function<void(int k, const Iterate<Scalar>&)>;

/// Runs the interior-point solve on one logical agent per sub-system over a
/// linear message-passing network with deterministic sequential scheduling.
///
/// Per completed Newton iteration and per link the traffic is: one ReduceGap
/// up, one Broadcast (gap) down, one UpCoupling + one UpVector up, one
/// DownVector down, one ReduceAlpha up and one Broadcast (step size) down -
/// six rounds of N-1 hops. The setup phase (logged as iteration 0) ships the
/// initial states down and the data-scale reduction up. A run that stops on
/// the convergence test spends only the ReduceGap/Broadcast pair in its final
/// partial iteration; fixed-iteration runs exit without extra messages.
template <typename Scalar>
std::pair<SolveReport<Scalar>, MessageLog> run_distributed(
    const CascadeProblem<Scalar>& problem,
    const SolverOptions<Scalar>& options = SolverOptions<Scalar>{}, bool log_detail = true,
    const IterationObserver<Scalar>& observer = {}) {
    options.check();
    const ValidationReport vrep = validate(problem);
    if (!vrep.ok())
        throw std::invalid_argument("run_distributed: invalid problem\n" + vrep.to_string());

    const int N = int(problem.count());
    MessageLog log;
    log.detail = log_detail;
    Channel channel(N, &log);

    // Agents receive exactly their own model plus the downstream coupling
    // piece; no other sub-system data crosses this boundary.
    std::vector<Agent<Scalar>> agents;
    agents.reserve(size_t(N));
    for (int j = 1; j <= N; ++j) {
        std::vector<MatrixX<Scalar>> down_E;
        if (j < N)
            for (const auto& st : problem.sub(j + 1).stages)
                if (st.E.size()) down_E.push_back(st.E);
        agents.emplace_back(problem.sub(j), std::move(down_E));
    }

    auto collect = [&]() {
        Iterate<Scalar> it;
        for (const auto& a : agents) it.sub.push_back(a.point());
        return it;
    };

    // Setup: initial states flow down, scale/row-count reduction flows up.
    {
        VectorX<Scalar> x_down;
        for (int j = 1; j <= N; ++j) {
            x_down = agents[size_t(j - 1)].init_state(j > 1 ? &x_down : nullptr);
            if (j < N)
                channel.record(0, j, j + 1, MessageKind::DownVector,
                               std::size_t(x_down.size()));
        }
    }
    SetupBundle<Scalar> setup;
    for (int j = N; j >= 1; --j) {
        setup = agents[size_t(j - 1)].setup_contribution(j < N ? &setup : nullptr);
        if (j > 1)
            channel.record(0, j, j - 1, MessageKind::ReduceGap, setup.scalar_count());
    }
    log.total_rounds += 2 * (N - 1);

    const Scalar res_tol = options.tol_residual * (Scalar(1) + setup.data_max);
    const bool fixed = options.fixed_iterations.has_value();
    const int limit = fixed ? *options.fixed_iterations : options.max_iterations;

    SolveReport<Scalar> report;
    int k = 1;
    while (true) {
        if (fixed && k > limit) break;

        // Gap/residual reduction up the cascade.
        GapBundle<Scalar> gap;
        for (int j = N; j >= 1; --j) {
            gap = agents[size_t(j - 1)].gap_contribution(j < N ? &gap : nullptr);
            if (j > 1)
                channel.record(k, j, j - 1, MessageKind::ReduceGap, gap.scalar_count());
        }
        const Scalar mu = gap.dot_sum / Scalar(setup.comp_rows);
        const Scalar res_norm = std::max({gap.r_stat, gap.r_dyn, gap.r_ineq, gap.r_comp});
        const bool converged = mu <= options.tol_gap && res_norm <= res_tol;
        // Fixed-count runs never stop early; the loop-top guard ends them.
        const bool stop = (!fixed && converged) || k > limit;
        report.final_mu = mu;
        report.final_residual = res_norm;

        // Gap broadcast down (with the stop decision).
        for (int j = 1; j <= N; ++j) {
            agents[size_t(j - 1)].receive_gap(mu);
            if (j < N) channel.record(k, j, j + 1, MessageKind::Broadcast, 2);
        }
        log.total_rounds += 2 * (N - 1);

        if (stop) {
            report.status = converged ? SolveStatus::Converged : SolveStatus::MaxIterations;
            if (report.iterations.empty()) {
                IterationRecord<Scalar> rec;
                rec.k = k;
                rec.mu = mu;
                rec.r_stat = gap.r_stat;
                rec.r_dyn = gap.r_dyn;
                rec.r_ineq = gap.r_ineq;
                rec.r_comp = gap.r_comp;
                report.iterations.push_back(rec);
            }
            break;
        }

        IterationRecord<Scalar> rec;
        rec.k = k;
        rec.mu = mu;
        rec.r_stat = gap.r_stat;
        rec.r_dyn = gap.r_dyn;
        rec.r_ineq = gap.r_ineq;
        rec.r_comp = gap.r_comp;

        try {
            // Backward sweep: coupling + solve contribution up the cascade.
            auto t0 = std::chrono::steady_clock::now();
            MatrixX<Scalar> k_msg;
            VectorX<Scalar> v_msg;
            for (int j = N; j >= 1; --j) {
                const bool have = j < N;
                auto out = agents[size_t(j - 1)].up_sweep(options.sigma_bar,
                                                          have ? &k_msg : nullptr,
                                                          have ? &v_msg : nullptr);
                if (j > 1) {
                    k_msg = std::move(out->coupling);
                    v_msg = std::move(out->x_contribution);
                    const std::size_t r = std::size_t(k_msg.rows());
                    channel.record(k, j, j - 1, MessageKind::UpCoupling, r * (r + 1) / 2);
                    channel.record(k, j, j - 1, MessageKind::UpVector,
                                   std::size_t(v_msg.size()));
                }
            }
            rec.t_factor_s = detail::seconds_since(t0);

            // Forward sweep down the cascade.
            t0 = std::chrono::steady_clock::now();
            VectorX<Scalar> dx_msg;
            for (int j = 1; j <= N; ++j) {
                dx_msg = agents[size_t(j - 1)].down_sweep(j > 1 ? &dx_msg : nullptr);
                if (j < N)
                    channel.record(k, j, j + 1, MessageKind::DownVector,
                                   std::size_t(dx_msg.size()));
            }
            rec.t_solve_s = detail::seconds_since(t0);
        } catch (const FactorizationFailure&) {
            report.status = SolveStatus::FactorizationFailure;
            report.iterations.push_back(rec);
            break;
        }

        // Step-size reduction up, then broadcast down and update.
        Scalar bound = std::numeric_limits<Scalar>::infinity();
        for (int j = N; j >= 1; --j) {
            bound = agents[size_t(j - 1)].step_bound(bound);
            if (j > 1) channel.record(k, j, j - 1, MessageKind::ReduceAlpha, 1);
        }
        const Scalar alpha = std::min(Scalar(1), options.tau * bound);
        for (int j = 1; j <= N; ++j) {
            agents[size_t(j - 1)].apply_update(alpha);
            if (j < N) channel.record(k, j, j + 1, MessageKind::Broadcast, 1);
        }
        rec.alpha = alpha;
        log.total_rounds += 4 * (N - 1);

        report.iterations.push_back(rec);
        log.iterations = k;
        if (observer) observer(k, collect());
        ++k;
    }

    report.final_iterate = collect();
    report.trajectory = extract_trajectory(report.final_iterate);
    report.objective = objective(problem, report.trajectory);
    if (fixed && report.status != SolveStatus::FactorizationFailure) {
        // Fixed-count protocol: evaluate the exit state centrally, no extra
        // messages are exchanged.
        const auto stacked = stack_all(problem);
        const auto res = kkt_residual(stacked, report.final_iterate);
        report.final_mu = duality_gap(report.final_iterate);
        report.final_residual = res.max_norm();
        const bool converged =
            report.final_mu <= options.tol_gap && report.final_residual <= res_tol;
        report.status = converged ? SolveStatus::Converged : SolveStatus::MaxIterations;
    }
    return {std::move(report), std::move(log)};
}

// ---------------------------------------------------------------------------
// Log post-processing.

struct MessageStats {
    long long total_messages = 0;
    long long total_bytes = 0;
    long long rounds = 0;
    int iterations = 0;
    std::array<long long, kMessageKinds> count_by_kind{};
    std::array<long long, kMessageKinds> bytes_by_kind{};
    double mean_bytes_per_link_iteration = 0;
    long long max_bytes_per_link_iteration = 0;
};

/// Per-message detail as CSV (iteration 0 is the setup phase).
inline void write_message_csv(const MessageLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open \"" + path + "\" for writing");
    out << "iteration,link,kind,bytes\n";
    for (const auto& r : log.records)
        out << r.iteration << "," << r.from << "-" << r.to << "," << to_string(r.kind) << ","
            << r.bytes << "\n";
}

inline MessageStats message_stats(const MessageLog& log, int links) {
    MessageStats st;
    st.rounds = log.total_rounds;
    st.iterations = log.iterations;
    for (const auto& entry : log.count_by_iteration)
        for (int kind = 0; kind < kMessageKinds; ++kind) {
            st.count_by_kind[size_t(kind)] += entry.second[size_t(kind)];
            st.total_messages += entry.second[size_t(kind)];
        }
    for (const auto& entry : log.bytes_by_iteration)
        for (int kind = 0; kind < kMessageKinds; ++kind) {
            st.bytes_by_kind[size_t(kind)] += entry.second[size_t(kind)];
            st.total_bytes += entry.second[size_t(kind)];
        }
    if (links > 0 && log.iterations > 0) {
        long long iter_bytes = 0;
        long long worst = 0;
        for (const auto& entry : log.bytes_by_iteration) {
            if (entry.first == 0) continue;
            long long b = 0;
            for (int kind = 0; kind < kMessageKinds; ++kind) b += entry.second[size_t(kind)];
            iter_bytes += b;
            worst = std::max(worst, b);
        }
        st.mean_bytes_per_link_iteration =
            double(iter_bytes) / double(links) / double(log.iterations);
        st.max_bytes_per_link_iteration = worst / links;
    }
    return st;
}

} // namespace casqp
