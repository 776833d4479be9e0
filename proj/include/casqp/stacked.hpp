#pragma once

#include "casqp/problem.hpp"

#include <vector>

namespace casqp {

/// One sub-system's data stacked over the horizon. Only the nonzero blocks
/// are stored; the big operators are applied block-wise:
///
///  - the transition operator has identity blocks on the diagonal and -A(t)
///    on the sub-diagonal ((T+1) x (T+1) blocks),
///  - the input map has B(t) on the sub-diagonal ((T+1) x T blocks),
///  - the upstream coupling has E(t) on the sub-diagonal with a zero first
///    block row and zero last block column,
///  - cost and constraint blocks are block-diagonal, with the input-side
///    blocks absent at the terminal stage.
template <typename Scalar>
struct StackedSubsystem {
    int j = 0;
    Index n = 0, m = 0, nu = 0, T = 0;
    Index n_prev = 0; ///< upstream state dimension (0 for j=1)

    std::vector<MatrixX<Scalar>> A; ///< T blocks n x n
    std::vector<MatrixX<Scalar>> B; ///< T blocks n x m
    std::vector<MatrixX<Scalar>> E; ///< T blocks n x n_prev; empty for j=1
    std::vector<MatrixX<Scalar>> Q; ///< T+1 blocks n x n (last is the terminal weight)
    std::vector<MatrixX<Scalar>> S; ///< T blocks m x n
    std::vector<MatrixX<Scalar>> R; ///< T blocks m x m
    std::vector<MatrixX<Scalar>> M; ///< T+1 blocks nu x n (first is zero)
    std::vector<MatrixX<Scalar>> L; ///< T blocks nu x m
    VectorX<Scalar> c;              ///< stacked levels, nu (T+1)
    VectorX<Scalar> xi;

    Index nx() const { return n * (T + 1); }
    Index nu_total() const { return m * T; }
    Index nc() const { return nu * (T + 1); }
    bool has_coupling() const { return !E.empty(); }
};

template <typename Scalar>
StackedSubsystem<Scalar> stack(const SubsystemModel<Scalar>& model) {
    StackedSubsystem<Scalar> s;
    s.j = model.j;
    s.n = model.n;
    s.m = model.m;
    s.nu = model.nu;
    s.T = model.horizon();
    s.xi = model.xi;
    s.c.resize(s.nu * (s.T + 1));
    for (Index t = 0; t < s.T; ++t) {
        const auto& st = model.stages[size_t(t)];
        s.A.push_back(st.A);
        s.B.push_back(st.B);
        if (st.E.size() != 0) s.E.push_back(st.E);
        s.Q.push_back(st.Q);
        s.S.push_back(st.S);
        s.R.push_back(st.R);
        s.M.push_back(st.M);
        s.L.push_back(st.L);
        s.c.segment(t * s.nu, s.nu) = st.c;
    }
    s.Q.push_back(model.terminal.P);
    s.M.push_back(model.terminal.M);
    s.c.segment(s.T * s.nu, s.nu) = model.terminal.c;
    s.n_prev = s.E.empty() ? 0 : s.E.front().cols();
    return s;
}

template <typename Scalar>
std::vector<StackedSubsystem<Scalar>> stack_all(const CascadeProblem<Scalar>& problem) {
    std::vector<StackedSubsystem<Scalar>> out;
    out.reserve(size_t(problem.count()));
    for (const auto& sub : problem.subsystems) out.push_back(stack(sub));
    return out;
}

// ---------------------------------------------------------------------------
// Unit-diagonal block-bidiagonal kernels. The operator has identity blocks on
// the diagonal and -C(t) on the sub-diagonal; solves run in T block
// multiply-adds (counted for the cost assertions in tests).

template <typename Scalar>
MatrixX<Scalar> bidiag_apply_lower(const std::vector<MatrixX<Scalar>>& C, Index block,
                                   const MatRef<Scalar>& v) {
    const Index T = Index(C.size());
    MatrixX<Scalar> y = v;
    for (Index t = 0; t < T; ++t)
        y.middleRows((t + 1) * block, block).noalias() -= C[size_t(t)] * v.middleRows(t * block, block);
    return y;
}

template <typename Scalar>
MatrixX<Scalar> bidiag_apply_upper(const std::vector<MatrixX<Scalar>>& C, Index block,
                                   const MatRef<Scalar>& v) {
    const Index T = Index(C.size());
    MatrixX<Scalar> y = v;
    for (Index t = 0; t < T; ++t)
        y.middleRows(t * block, block).noalias() -=
            C[size_t(t)].transpose() * v.middleRows((t + 1) * block, block);
    return y;
}

template <typename Scalar>
MatrixX<Scalar> bidiag_solve_lower(const std::vector<MatrixX<Scalar>>& C, Index block,
                                   const MatRef<Scalar>& b) {
    const Index T = Index(C.size());
    MatrixX<Scalar> x = b;
    for (Index t = 0; t < T; ++t) {
        x.middleRows((t + 1) * block, block).noalias() += C[size_t(t)] * x.middleRows(t * block, block);
        ++op_counts().bidiag_block_mults;
    }
    return x;
}

template <typename Scalar>
MatrixX<Scalar> bidiag_solve_upper(const std::vector<MatrixX<Scalar>>& C, Index block,
                                   const MatRef<Scalar>& b) {
    const Index T = Index(C.size());
    MatrixX<Scalar> x = b;
    for (Index t = T - 1; t >= 0; --t) {
        x.middleRows(t * block, block).noalias() +=
            C[size_t(t)].transpose() * x.middleRows((t + 1) * block, block);
        ++op_counts().bidiag_block_mults;
    }
    return x;
}

// ---------------------------------------------------------------------------
// Stacked operator applications. Naming follows the stored block families:
// apply_A applies the full transition operator, apply_AT its transpose, and
// solve_A / solve_AT the corresponding unit-bidiagonal substitutions.

template <typename Scalar>
MatrixX<Scalar> apply_A(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& v) {
    return bidiag_apply_lower<Scalar>(s.A, s.n, v);
}

template <typename Scalar>
MatrixX<Scalar> apply_AT(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& v) {
    return bidiag_apply_upper<Scalar>(s.A, s.n, v);
}

template <typename Scalar>
MatrixX<Scalar> solve_A(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& b) {
    return bidiag_solve_lower<Scalar>(s.A, s.n, b);
}

template <typename Scalar>
MatrixX<Scalar> solve_AT(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& b) {
    return bidiag_solve_upper<Scalar>(s.A, s.n, b);
}

template <typename Scalar>
MatrixX<Scalar> apply_B(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& u) {
    MatrixX<Scalar> y = MatrixX<Scalar>::Zero(s.nx(), u.cols());
    for (Index t = 0; t < s.T; ++t)
        y.middleRows((t + 1) * s.n, s.n).noalias() = s.B[size_t(t)] * u.middleRows(t * s.m, s.m);
    return y;
}

template <typename Scalar>
MatrixX<Scalar> apply_BT(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& v) {
    MatrixX<Scalar> y(s.nu_total(), v.cols());
    for (Index t = 0; t < s.T; ++t)
        y.middleRows(t * s.m, s.m).noalias() =
            s.B[size_t(t)].transpose() * v.middleRows((t + 1) * s.n, s.n);
    return y;
}

/// Applies the upstream coupling operator to a stacked upstream state.
/// Zero when the sub-system has no upstream neighbour.
template <typename Scalar>
MatrixX<Scalar> apply_E(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& w) {
    MatrixX<Scalar> y = MatrixX<Scalar>::Zero(s.nx(), w.cols());
    for (Index t = 0; t < Index(s.E.size()); ++t)
        y.middleRows((t + 1) * s.n, s.n).noalias() =
            s.E[size_t(t)] * w.middleRows(t * s.n_prev, s.n_prev);
    return y;
}

template <typename Scalar>
MatrixX<Scalar> apply_ET(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& v) {
    MatrixX<Scalar> y = MatrixX<Scalar>::Zero(s.n_prev * (s.T + 1), v.cols());
    for (Index t = 0; t < Index(s.E.size()); ++t)
        y.middleRows(t * s.n_prev, s.n_prev).noalias() =
            s.E[size_t(t)].transpose() * v.middleRows((t + 1) * s.n, s.n);
    return y;
}

template <typename Scalar>
MatrixX<Scalar> apply_Q(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& x) {
    MatrixX<Scalar> y(s.nx(), x.cols());
    for (Index t = 0; t <= s.T; ++t)
        y.middleRows(t * s.n, s.n).noalias() = s.Q[size_t(t)] * x.middleRows(t * s.n, s.n);
    return y;
}

template <typename Scalar>
MatrixX<Scalar> apply_S(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& x) {
    MatrixX<Scalar> y(s.nu_total(), x.cols());
    for (Index t = 0; t < s.T; ++t)
        y.middleRows(t * s.m, s.m).noalias() = s.S[size_t(t)] * x.middleRows(t * s.n, s.n);
    return y;
}

template <typename Scalar>
MatrixX<Scalar> apply_ST(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& u) {
    MatrixX<Scalar> y = MatrixX<Scalar>::Zero(s.nx(), u.cols());
    for (Index t = 0; t < s.T; ++t)
        y.middleRows(t * s.n, s.n).noalias() =
            s.S[size_t(t)].transpose() * u.middleRows(t * s.m, s.m);
    return y;
}

template <typename Scalar>
MatrixX<Scalar> apply_R(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& u) {
    MatrixX<Scalar> y(s.nu_total(), u.cols());
    for (Index t = 0; t < s.T; ++t)
        y.middleRows(t * s.m, s.m).noalias() = s.R[size_t(t)] * u.middleRows(t * s.m, s.m);
    return y;
}

template <typename Scalar>
MatrixX<Scalar> apply_M(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& x) {
    MatrixX<Scalar> y(s.nc(), x.cols());
    for (Index t = 0; t <= s.T; ++t)
        y.middleRows(t * s.nu, s.nu).noalias() = s.M[size_t(t)] * x.middleRows(t * s.n, s.n);
    return y;
}

template <typename Scalar>
MatrixX<Scalar> apply_MT(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& lam) {
    MatrixX<Scalar> y(s.nx(), lam.cols());
    for (Index t = 0; t <= s.T; ++t)
        y.middleRows(t * s.n, s.n).noalias() =
            s.M[size_t(t)].transpose() * lam.middleRows(t * s.nu, s.nu);
    return y;
}

template <typename Scalar>
MatrixX<Scalar> apply_L(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& u) {
    MatrixX<Scalar> y = MatrixX<Scalar>::Zero(s.nc(), u.cols());
    for (Index t = 0; t < s.T; ++t)
        y.middleRows(t * s.nu, s.nu).noalias() = s.L[size_t(t)] * u.middleRows(t * s.m, s.m);
    return y;
}

template <typename Scalar>
MatrixX<Scalar> apply_LT(const StackedSubsystem<Scalar>& s, const MatRef<Scalar>& lam) {
    MatrixX<Scalar> y(s.nu_total(), lam.cols());
    for (Index t = 0; t < s.T; ++t)
        y.middleRows(t * s.m, s.m).noalias() =
            s.L[size_t(t)].transpose() * lam.middleRows(t * s.nu, s.nu);
    return y;
}

/// The initial-state selector: places xi in block row 0. Never materialized
/// as a matrix.
template <typename Scalar>
VectorX<Scalar> inject_initial_state(const StackedSubsystem<Scalar>& s) {
    VectorX<Scalar> y = VectorX<Scalar>::Zero(s.nx());
    y.head(s.n) = s.xi;
    return y;
}

// ---------------------------------------------------------------------------
// Dense views, used by the oracle solver and tests only.

template <typename Scalar>
MatrixX<Scalar> dense_A(const StackedSubsystem<Scalar>& s) {
    MatrixX<Scalar> out = MatrixX<Scalar>::Identity(s.nx(), s.nx());
    for (Index t = 0; t < s.T; ++t)
        out.block((t + 1) * s.n, t * s.n, s.n, s.n) = -s.A[size_t(t)];
    return out;
}

template <typename Scalar>
MatrixX<Scalar> dense_B(const StackedSubsystem<Scalar>& s) {
    MatrixX<Scalar> out = MatrixX<Scalar>::Zero(s.nx(), s.nu_total());
    for (Index t = 0; t < s.T; ++t)
        out.block((t + 1) * s.n, t * s.m, s.n, s.m) = s.B[size_t(t)];
    return out;
}

template <typename Scalar>
MatrixX<Scalar> dense_E(const StackedSubsystem<Scalar>& s) {
    MatrixX<Scalar> out = MatrixX<Scalar>::Zero(s.nx(), s.n_prev * (s.T + 1));
    for (Index t = 0; t < Index(s.E.size()); ++t)
        out.block((t + 1) * s.n, t * s.n_prev, s.n, s.n_prev) = s.E[size_t(t)];
    return out;
}

template <typename Scalar>
MatrixX<Scalar> dense_Q(const StackedSubsystem<Scalar>& s) {
    MatrixX<Scalar> out = MatrixX<Scalar>::Zero(s.nx(), s.nx());
    for (Index t = 0; t <= s.T; ++t) out.block(t * s.n, t * s.n, s.n, s.n) = s.Q[size_t(t)];
    return out;
}

template <typename Scalar>
MatrixX<Scalar> dense_S(const StackedSubsystem<Scalar>& s) {
    MatrixX<Scalar> out = MatrixX<Scalar>::Zero(s.nu_total(), s.nx());
    for (Index t = 0; t < s.T; ++t) out.block(t * s.m, t * s.n, s.m, s.n) = s.S[size_t(t)];
    return out;
}

template <typename Scalar>
MatrixX<Scalar> dense_R(const StackedSubsystem<Scalar>& s) {
    MatrixX<Scalar> out = MatrixX<Scalar>::Zero(s.nu_total(), s.nu_total());
    for (Index t = 0; t < s.T; ++t) out.block(t * s.m, t * s.m, s.m, s.m) = s.R[size_t(t)];
    return out;
}

template <typename Scalar>
MatrixX<Scalar> dense_M(const StackedSubsystem<Scalar>& s) {
    MatrixX<Scalar> out = MatrixX<Scalar>::Zero(s.nc(), s.nx());
    for (Index t = 0; t <= s.T; ++t) out.block(t * s.nu, t * s.n, s.nu, s.n) = s.M[size_t(t)];
    return out;
}

template <typename Scalar>
MatrixX<Scalar> dense_L(const StackedSubsystem<Scalar>& s) {
    MatrixX<Scalar> out = MatrixX<Scalar>::Zero(s.nc(), s.nu_total());
    for (Index t = 0; t < s.T; ++t) out.block(t * s.nu, t * s.m, s.nu, s.m) = s.L[size_t(t)];
    return out;
}

// ---------------------------------------------------------------------------
// Trajectories.

template <typename Scalar>
struct Trajectory {
    std::vector<VectorX<Scalar>> x; ///< per sub-system, n (T+1)
    std::vector<VectorX<Scalar>> u; ///< per sub-system, m T
};

/// Stage-by-stage forward roll of a single sub-system given its controls and
/// (for coupled sub-systems) the complete upstream trajectory.
template <typename Scalar>
VectorX<Scalar> roll_forward(const SubsystemModel<Scalar>& model, const VectorX<Scalar>& u,
                             const VectorX<Scalar>* x_prev) {
    const Index n = model.n, m = model.m, T = model.horizon();
    if (u.size() != m * T) throw std::invalid_argument("roll_forward: control dimension mismatch");
    VectorX<Scalar> x(n * (T + 1));
    x.head(n) = model.xi;
    for (Index t = 0; t < T; ++t) {
        const auto& st = model.stages[size_t(t)];
        VectorX<Scalar> next = st.A * x.segment(t * n, n) + st.B * u.segment(t * m, m);
        if (x_prev) {
            const Index np = st.E.cols();
            next += st.E * x_prev->segment(t * np, np);
        }
        x.segment((t + 1) * n, n) = next;
    }
    return x;
}

/// Rolls the cascade dynamics forward from the initial states under the
/// given controls, sweeping down the cascade so the upstream state is
/// available at each step.
template <typename Scalar>
Trajectory<Scalar> simulate(const CascadeProblem<Scalar>& problem,
                            const std::vector<VectorX<Scalar>>& controls) {
    const Index N = problem.count();
    if (Index(controls.size()) != N)
        throw std::invalid_argument("simulate: one control vector per subsystem required");
    Trajectory<Scalar> traj;
    traj.x.resize(size_t(N));
    traj.u = controls;
    for (Index j = 1; j <= N; ++j) {
        const auto& s = problem.sub(j);
        traj.x[size_t(j - 1)] = roll_forward(s, controls[size_t(j - 1)],
                                             j > 1 ? &traj.x[size_t(j - 2)] : nullptr);
    }
    return traj;
}

template <typename Scalar>
Trajectory<Scalar> simulate_zero_input(const CascadeProblem<Scalar>& problem) {
    std::vector<VectorX<Scalar>> controls;
    for (const auto& s : problem.subsystems)
        controls.push_back(VectorX<Scalar>::Zero(s.m * problem.T));
    return simulate(problem, controls);
}

/// Stacked dynamics defect -A x + E x_prev + B u + (xi in block 0); zero
/// exactly when the trajectory satisfies the recursion stage by stage.
template <typename Scalar>
VectorX<Scalar> dynamics_residual(const StackedSubsystem<Scalar>& s, const VecRef<Scalar>& x,
                                  const VecRef<Scalar>& x_prev, const VecRef<Scalar>& u) {
    if (x.size() != s.nx() || u.size() != s.nu_total())
        throw std::invalid_argument("dynamics_residual: dimension mismatch");
    VectorX<Scalar> r = -apply_A<Scalar>(s, x) + apply_B<Scalar>(s, u) + inject_initial_state(s);
    if (s.has_coupling()) {
        if (x_prev.size() != s.n_prev * (s.T + 1))
            throw std::invalid_argument("dynamics_residual: upstream dimension mismatch");
        r += apply_E<Scalar>(s, x_prev);
    }
    return r;
}

/// Quadratic objective evaluated through the stacked blocks.
template <typename Scalar>
Scalar objective(const CascadeProblem<Scalar>& problem, const Trajectory<Scalar>& traj) {
    Scalar total(0);
    const auto stacked = stack_all(problem);
    for (Index j = 1; j <= problem.count(); ++j) {
        const auto& s = stacked[size_t(j - 1)];
        const auto& x = traj.x[size_t(j - 1)];
        const auto& u = traj.u[size_t(j - 1)];
        total += Scalar(0.5) * (x.dot(apply_Q<Scalar>(s, x).col(0)) +
                                u.dot(apply_R<Scalar>(s, u).col(0))) +
                 u.dot(apply_S<Scalar>(s, x).col(0));
    }
    return total;
}

/// Stacked constraint values M x + L u - c; feasible iff every entry <= 0.
template <typename Scalar>
VectorX<Scalar> inequality_residual(const StackedSubsystem<Scalar>& s, const VecRef<Scalar>& x,
                                    const VecRef<Scalar>& u) {
    if (x.size() != s.nx() || u.size() != s.nu_total())
        throw std::invalid_argument("inequality_residual: dimension mismatch");
    return apply_M<Scalar>(s, x) + apply_L<Scalar>(s, u) - s.c;
}

} // namespace casqp
