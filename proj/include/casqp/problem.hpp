#pragma once

#include "casqp/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace casqp {

/// Per-stage model, cost and constraint data of one sub-system at time t.
///
/// Dynamics   x(t+1) = A x(t) + B u(t) + E x_prev(t)
/// Cost       1/2 [x;u]' [Q S'; S R] [x;u]
/// Constraint M x(t) + L u(t) <= c
///
/// E couples the upstream neighbour's state into this sub-system; it is the
/// empty matrix for the first sub-system (there the spatial boundary state is
/// identically zero, represented by absence rather than a stored zero block).
/// M must be zero at t = 0 (the initial state is fixed, so state rows cannot
/// bind there).
template <typename Scalar>
struct StageData {
    MatrixX<Scalar> A;
    MatrixX<Scalar> B;
    MatrixX<Scalar> E; ///< empty for sub-system 1
    MatrixX<Scalar> Q;
    MatrixX<Scalar> S;
    MatrixX<Scalar> R;
    MatrixX<Scalar> M;
    MatrixX<Scalar> L;
    VectorX<Scalar> c;
};

/// Terminal-stage data: cost weight P, state-only constraint rows M, c.
/// There is no input at the terminal stage, so S and L have no terminal
/// counterpart by construction.
template <typename Scalar>
struct TerminalData {
    MatrixX<Scalar> P;
    MatrixX<Scalar> M;
    VectorX<Scalar> c;
};

/// One sub-system of the cascade: dimensions, per-stage data for
/// t = 0..T-1, terminal data, and the initial state.
template <typename Scalar>
struct SubsystemModel {
    int j = 0; ///< 1-based position along the cascade
    Index n = 0;
    Index m = 0;
    Index nu = 0;
    std::vector<StageData<Scalar>> stages;
    TerminalData<Scalar> terminal;
    VectorX<Scalar> xi;

    Index horizon() const { return Index(stages.size()); }
};

/// A complete cascade optimal-control instance. Immutable after
/// construction; shared read-only across threads.
template <typename Scalar>
struct CascadeProblem {
    Index T = 0;
    std::vector<SubsystemModel<Scalar>> subsystems;

    Index count() const { return Index(subsystems.size()); }

    const SubsystemModel<Scalar>& sub(Index j) const { return subsystems[size_t(j - 1)]; }

    /// Dimension of one sub-system's primal-dual block:
    /// (2n + 2nu)(T+1) + mT.
    Index block_dim(Index j) const {
        const auto& s = sub(j);
        return (2 * s.n + 2 * s.nu) * (T + 1) + s.m * T;
    }
};

struct Violation {
    int subsystem = 0; ///< 1-based, 0 = problem level
    int stage = -1;    ///< -1 = not stage specific (terminal uses T)
    std::string what;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }

    std::string to_string() const {
        std::ostringstream os;
        for (const auto& v : violations) {
            os << "subsystem " << v.subsystem;
            if (v.stage >= 0) os << ", stage " << v.stage;
            os << ": " << v.what << "\n";
        }
        return os.str();
    }
};

namespace detail {

template <typename Scalar>
Scalar min_sym_eigenvalue(const MatrixX<Scalar>& sym) {
    if (sym.size() == 0) return Scalar(0);
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

template <typename Scalar>
bool is_symmetric(const MatrixX<Scalar>& a) {
    if (a.rows() != a.cols()) return false;
    const Scalar slack = Scalar(1e-12) * (Scalar(1) + a.template lpNorm<Eigen::Infinity>());
    return (a - a.transpose()).template lpNorm<Eigen::Infinity>() <= slack;
}

template <typename Scalar>
bool all_finite(const MatrixX<Scalar>& a) {
    return a.allFinite();
}

} // namespace detail

/// Checks every structural and definiteness invariant of a problem instance
/// and reports all violations found (an empty report means valid). Positive
/// definiteness of R is certified by smallest eigenvalue > tol_pd (absolute);
/// semi-definiteness checks use the scale-aware slack tol_psd * (1 + |block|_F).
template <typename Scalar>
ValidationReport validate(const CascadeProblem<Scalar>& problem,
                          Scalar tol_pd = Scalar(1e-10), Scalar tol_psd = Scalar(1e-8)) {
    ValidationReport report;
    auto add = [&](int j, int t, std::string what) {
        report.violations.push_back({j, t, std::move(what)});
    };

    if (problem.T < 1) add(0, -1, "horizon T must be >= 1");
    if (problem.subsystems.empty()) add(0, -1, "no subsystems");

    Index prev_n = 0;
    for (size_t idx = 0; idx < problem.subsystems.size(); ++idx) {
        const auto& s = problem.subsystems[idx];
        const int j = int(idx) + 1;
        if (s.j != j) add(j, -1, "subsystem index out of order");
        if (s.n < 1 || s.m < 1 || s.nu < 1) {
            add(j, -1, "dimensions must be positive");
            continue;
        }
        if (Index(s.stages.size()) != problem.T)
            add(j, -1, "stage count differs from horizon T");
        if (s.xi.size() != s.n) add(j, -1, "xi has wrong dimension");
        if (!s.xi.allFinite()) add(j, -1, "xi has non-finite entries");

        for (size_t ti = 0; ti < s.stages.size(); ++ti) {
            const auto& st = s.stages[ti];
            const int t = int(ti);
            auto dim_ok = [&](const MatrixX<Scalar>& mat, Index r, Index c, const char* name) {
                if (mat.rows() != r || mat.cols() != c) {
                    add(j, t, std::string(name) + " has wrong dimensions");
                    return false;
                }
                if (!detail::all_finite(mat)) {
                    add(j, t, std::string(name) + " has non-finite entries");
                    return false;
                }
                return true;
            };
            bool dims = true;
            dims &= dim_ok(st.A, s.n, s.n, "A");
            dims &= dim_ok(st.B, s.n, s.m, "B");
            dims &= dim_ok(st.Q, s.n, s.n, "Q");
            dims &= dim_ok(st.S, s.m, s.n, "S");
            dims &= dim_ok(st.R, s.m, s.m, "R");
            dims &= dim_ok(st.M, s.nu, s.n, "M");
            dims &= dim_ok(st.L, s.nu, s.m, "L");
            if (st.c.size() != s.nu) {
                add(j, t, "c has wrong dimension");
                dims = false;
            } else if (!st.c.allFinite()) {
                add(j, t, "c has non-finite entries");
                dims = false;
            }
            if (j == 1) {
                if (st.E.size() != 0) add(j, t, "E forbidden at j=1");
            } else {
                dims &= dim_ok(st.E, s.n, prev_n, "E");
            }
            if (!dims) continue;

            if (!detail::is_symmetric(st.R))
                add(j, t, "R not symmetric");
            else if (detail::min_sym_eigenvalue(st.R) <= tol_pd)
                add(j, t, "R not positive definite");
            if (!detail::is_symmetric(st.Q)) add(j, t, "Q not symmetric");

            MatrixX<Scalar> comp(s.n + s.m, s.n + s.m);
            comp.topLeftCorner(s.n, s.n) = st.Q;
            comp.topRightCorner(s.n, s.m) = st.S.transpose();
            comp.bottomLeftCorner(s.m, s.n) = st.S;
            comp.bottomRightCorner(s.m, s.m) = st.R;
            const Scalar comp_slack = tol_psd * (Scalar(1) + comp.norm());
            if (detail::min_sym_eigenvalue(comp) < -comp_slack)
                add(j, t, "[Q S'; S R] not positive semi-definite");

            if (t == 0 && st.M.template lpNorm<Eigen::Infinity>() != Scalar(0))
                add(j, t, "M at t=0 must be zero");
        }

        const auto& term = s.terminal;
        if (term.P.rows() != s.n || term.P.cols() != s.n)
            add(j, int(problem.T), "terminal P has wrong dimensions");
        else if (!detail::is_symmetric(term.P))
            add(j, int(problem.T), "terminal P not symmetric");
        else if (detail::min_sym_eigenvalue(term.P) <
                 -tol_psd * (Scalar(1) + term.P.norm()))
            add(j, int(problem.T), "terminal P not positive semi-definite");
        if (term.M.rows() != s.nu || term.M.cols() != s.n)
            add(j, int(problem.T), "terminal M has wrong dimensions");
        if (term.c.size() != s.nu) add(j, int(problem.T), "terminal c has wrong dimension");

        prev_n = s.n;
    }
    return report;
}

namespace detail {

template <typename Scalar>
Scalar spectral_radius(const MatrixX<Scalar>& a) {
    Eigen::EigenSolver<MatrixX<Scalar>> es(a, /*computeEigenvectors=*/false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Constraint levels that keep the zero-input trajectory strictly feasible:
/// c_i = (M x0)_i + |row_i [M L]|_2 + 1, so the all-zero control always has
/// slack of at least one.
template <typename Scalar>
VectorX<Scalar> feasible_levels(const MatrixX<Scalar>& M, const MatrixX<Scalar>& L,
                                const VectorX<Scalar>& x_nominal) {
    VectorX<Scalar> c = M * x_nominal;
    for (Index i = 0; i < c.size(); ++i) {
        Scalar row_norm = M.row(i).norm();
        if (L.size() != 0) row_norm = std::hypot(row_norm, L.row(i).norm());
        c(i) += row_norm + Scalar(1);
    }
    return c;
}

} // namespace detail

/// Deterministic random instance generator. The cost blocks are built as
/// Q = G'G + S'R^{-1}S with R = FF' + dI, which makes [Q S'; S R] positive
/// semi-definite by construction; A is rescaled to spectral radius <= 1.2;
/// constraint levels leave the zero-input trajectory strictly feasible so an
/// interior point always exists.
template <typename Scalar>
CascadeProblem<Scalar> random_cascade(std::uint64_t seed, Index N, Index T, Index n, Index m,
                                      Index nu) {
    if (N < 1 || T < 1 || n < 1 || m < 1 || nu < 1)
        throw std::invalid_argument("random_cascade: all dimensions must be >= 1");

    SplitMix64 rng(seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
    CascadeProblem<Scalar> problem;
    problem.T = T;
    problem.subsystems.resize(size_t(N));

    for (Index j = 1; j <= N; ++j) {
        auto& s = problem.subsystems[size_t(j - 1)];
        s.j = int(j);
        s.n = n;
        s.m = m;
        s.nu = nu;
        s.xi = rng.vector<Scalar>(n, 0.5);
        s.stages.resize(size_t(T));
        for (Index t = 0; t < T; ++t) {
            auto& st = s.stages[size_t(t)];
            st.A = rng.matrix<Scalar>(n, n);
            const Scalar radius = detail::spectral_radius(st.A);
            if (radius > Scalar(1.2)) st.A *= Scalar(1.2) / radius;
            st.B = rng.matrix<Scalar>(n, m);
            if (j > 1) st.E = rng.matrix<Scalar>(n, n, 0.5);

            MatrixX<Scalar> f = rng.matrix<Scalar>(m, m);
            st.R = f * f.transpose() +
                   MatrixX<Scalar>::Identity(m, m) * Scalar(0.5 + 0.5 * rng.next_unit());
            st.S = (t == 0) ? rng.matrix<Scalar>(m, n, 0.5) : rng.matrix<Scalar>(m, n, 0.5);
            MatrixX<Scalar> g = rng.matrix<Scalar>(n, n);
            st.Q = g.transpose() * g + st.S.transpose() * st.R.ldlt().solve(st.S);
            st.Q = ((st.Q + st.Q.transpose()) / Scalar(2)).eval();

            st.M = (t == 0) ? MatrixX<Scalar>::Zero(nu, n) : rng.matrix<Scalar>(nu, n);
            st.L = rng.matrix<Scalar>(nu, m);
        }
        MatrixX<Scalar> gp = rng.matrix<Scalar>(n, n);
        s.terminal.P = gp.transpose() * gp;
        s.terminal.P = ((s.terminal.P + s.terminal.P.transpose()) / Scalar(2)).eval();
        s.terminal.M = rng.matrix<Scalar>(nu, n);
    }

    // Constraint levels from the zero-input trajectory, sweeping down the
    // cascade so the upstream state is available.
    std::vector<std::vector<VectorX<Scalar>>> x0;
    x0.resize(size_t(N));
    for (Index j = 1; j <= N; ++j) {
        auto& s = problem.subsystems[size_t(j - 1)];
        auto& xs = x0[size_t(j - 1)];
        xs.resize(size_t(T + 1));
        xs[0] = s.xi;
        for (Index t = 0; t < T; ++t) {
            xs[size_t(t + 1)] = s.stages[size_t(t)].A * xs[size_t(t)];
            if (j > 1) xs[size_t(t + 1)] += s.stages[size_t(t)].E * x0[size_t(j - 2)][size_t(t)];
        }
        for (Index t = 0; t < T; ++t) {
            auto& st = s.stages[size_t(t)];
            st.c = detail::feasible_levels(st.M, st.L, xs[size_t(t)]);
        }
        s.terminal.c = detail::feasible_levels(s.terminal.M, MatrixX<Scalar>(),
                                               xs[size_t(T)]);
    }
    return problem;
}

/// Synthetic cascade mimicking a channel of pools under distant-downstream
/// PI control: two water-level states, two controller states, one level
/// reference input, and box constraints on level, controller flow and
/// reference (six rows). Dimensions are n=4, m=1, nu=6 per sub-system;
/// the numeric parameters are artifact-chosen and vary mildly along the
/// channel, with no randomness.
template <typename Scalar>
CascadeProblem<Scalar> irrigation_like(Index N, Index T) {
    if (N < 1 || T < 1) throw std::invalid_argument("irrigation_like: N and T must be >= 1");

    const Index n = 4, m = 1, nu = 6;
    CascadeProblem<Scalar> problem;
    problem.T = T;
    problem.subsystems.resize(size_t(N));

    for (Index j = 1; j <= N; ++j) {
        auto& s = problem.subsystems[size_t(j - 1)];
        s.j = int(j);
        s.n = n;
        s.m = m;
        s.nu = nu;

        // Mild deterministic variation along the channel.
        const Scalar pool = Scalar(1) + Scalar(0.02) * Scalar((j * 13) % 5) - Scalar(0.04);
        const Scalar gain = Scalar(1) + Scalar(0.03) * Scalar((j * 7) % 4) - Scalar(0.045);

        const Scalar leak = Scalar(0.12) * pool;  // level relaxation
        const Scalar in_c = Scalar(0.10) * pool;  // controller flow into level
        const Scalar meas = Scalar(0.40);         // level measurement filter
        const Scalar flt = Scalar(0.50);          // flow actuator filter
        const Scalar kp = Scalar(0.6) * gain;
        const Scalar ki = Scalar(0.12) * gain;
        const Scalar e_in = Scalar(0.05) * pool;  // inflow from the upstream pool

        // States: y (level), yf (filtered level), q (controller flow), w (PI
        // integrator). Input: level reference r.
        MatrixX<Scalar> A(n, n);
        A << Scalar(1) - leak, Scalar(0), in_c, Scalar(0),
             meas, Scalar(1) - meas, Scalar(0), Scalar(0),
             Scalar(0), -flt * kp, Scalar(1) - flt, flt,
             Scalar(0), -ki, Scalar(0), Scalar(1);
        MatrixX<Scalar> B(n, m);
        B << Scalar(0), Scalar(0), flt * kp, ki;
        MatrixX<Scalar> E = MatrixX<Scalar>::Zero(n, n);
        E(0, 2) = e_in; // upstream controller flow feeds this pool's level

        MatrixX<Scalar> Q = VectorX<Scalar>(
            (VectorX<Scalar>(n) << Scalar(1.0), Scalar(0.3), Scalar(0.2), Scalar(0.05))
                .finished() * pool).asDiagonal();
        MatrixX<Scalar> R(m, m);
        R << Scalar(0.4) * pool;

        // The reference bound sits inside the unconstrained optimum's range,
        // so several input rows are active at the solution; the level and
        // flow boxes keep the zero-input trajectory strictly interior.
        const Scalar y_max = Scalar(1.2);
        const Scalar q_max = Scalar(1.0);
        const Scalar r_max = Scalar(0.12);
        MatrixX<Scalar> M = MatrixX<Scalar>::Zero(nu, n);
        M(0, 0) = Scalar(1);
        M(1, 0) = Scalar(-1);
        M(2, 2) = Scalar(1);
        M(3, 2) = Scalar(-1);
        MatrixX<Scalar> L = MatrixX<Scalar>::Zero(nu, m);
        L(4, 0) = Scalar(1);
        L(5, 0) = Scalar(-1);
        VectorX<Scalar> c(nu);
        c << y_max, y_max, q_max, q_max, r_max, r_max;

        s.stages.resize(size_t(T));
        for (Index t = 0; t < T; ++t) {
            auto& st = s.stages[size_t(t)];
            st.A = A;
            st.B = B;
            if (j > 1) st.E = E;
            st.Q = Q;
            st.S = MatrixX<Scalar>::Zero(m, n);
            st.R = R;
            st.M = (t == 0) ? MatrixX<Scalar>::Zero(nu, n) : M;
            st.L = L;
            st.c = c;
        }
        s.terminal.P = Q;
        s.terminal.M = M;
        s.terminal.c = c;

        // Level offsets alternate in sign and size along the channel.
        const Scalar dir = (j % 3 == 0) ? Scalar(-1) : Scalar(1);
        const Scalar mag = Scalar(0.5) + Scalar(0.1) * Scalar(j % 4);
        s.xi = VectorX<Scalar>::Zero(n);
        s.xi(0) = dir * mag;
        s.xi(1) = dir * mag * Scalar(0.6);
    }
    return problem;
}

} // namespace casqp
