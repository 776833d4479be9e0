#pragma once

#include "casqp/sigma_factor.hpp"

#include <Eigen/LU>

#include <vector>

namespace casqp {

/// Ordered factorization of the block-tridiagonal linearized KKT system.
/// Factors are built strictly from the last sub-system upstream, because each
/// coupling correction depends on the downstream factor.
///
/// Factors reference the stacked forms they were built from; when built
/// straight from a problem the factorization owns those forms. Move-only to
/// keep the internal pointers valid.
template <typename Scalar>
struct CascadeFactorization {
    std::vector<SigmaFactor<Scalar>> factors;          ///< index j-1
    std::vector<StackedSubsystem<Scalar>> owned_stacked; ///< optional backing storage

    CascadeFactorization() = default;
    CascadeFactorization(const CascadeFactorization&) = delete;
    CascadeFactorization& operator=(const CascadeFactorization&) = delete;
    CascadeFactorization(CascadeFactorization&&) = default;
    CascadeFactorization& operator=(CascadeFactorization&&) = default;
};

/// Backward Schur sweep: factor sub-system N, push its coupling correction
/// into N-1's x-block, and continue upstream. Total cost is linear in the
/// number of sub-systems and cubic in the horizon.
template <typename Scalar>
CascadeFactorization<Scalar> factor_cascade(const std::vector<StackedSubsystem<Scalar>>& stacked,
                                            const Iterate<Scalar>& it) {
    const Index N = Index(stacked.size());
    CascadeFactorization<Scalar> fact;
    fact.factors.resize(size_t(N));
    MatrixX<Scalar> coupling; // flows from j+1 into j
    for (Index j = N; j >= 1; --j) {
        const auto& s = stacked[size_t(j - 1)];
        const auto& pt = it.sub[size_t(j - 1)];
        fact.factors[size_t(j - 1)] =
            build_sigma_factor<Scalar>(s, pt.theta, pt.lambda, std::move(coupling));
        if (j > 1) coupling = coupling_for_upstream(fact.factors[size_t(j - 1)], s.E);
    }
    return fact;
}

template <typename Scalar>
CascadeFactorization<Scalar> factor_cascade(const CascadeProblem<Scalar>& problem,
                                            const Iterate<Scalar>& it) {
    std::vector<StackedSubsystem<Scalar>> stacked = stack_all(problem);
    CascadeFactorization<Scalar> fact = factor_cascade(stacked, it);
    fact.owned_stacked = std::move(stacked); // vector move keeps element addresses
    return fact;
}

/// Solves the linearized system by the backward/forward recursions: the
/// backward sweep accumulates downstream information into the right-hand
/// sides through the transpose coupling, the forward sweep substitutes the
/// upstream solution back in. Exactly one factored solve per sweep direction
/// per sub-system (the first sub-system needs no backward solve).
template <typename Scalar>
NewtonStep<Scalar> solve_newton(const CascadeFactorization<Scalar>& fact,
                                const std::vector<SubsystemPoint<Scalar>>& rhs) {
    const Index N = Index(fact.factors.size());
    if (Index(rhs.size()) != N)
        throw std::invalid_argument("solve_newton: one right-hand side per subsystem required");

    std::vector<SubsystemPoint<Scalar>> rho_t = rhs;
    for (Index j = N; j >= 2; --j) {
        const auto& f = fact.factors[size_t(j - 1)];
        if (!f.sub->has_coupling()) continue; // structurally decoupled link
        const SubsystemPoint<Scalar> sol = sigma_solve(f, rho_t[size_t(j - 1)]);
        rho_t[size_t(j - 2)].x += apply_coupling_transpose_x(*f.sub, sol.p);
    }

    NewtonStep<Scalar> step;
    step.sub.resize(size_t(N));
    for (Index j = 1; j <= N; ++j) {
        const auto& f = fact.factors[size_t(j - 1)];
        SubsystemPoint<Scalar> rhs_j = std::move(rho_t[size_t(j - 1)]);
        if (j > 1 && f.sub->has_coupling())
            rhs_j.p -= apply_E<Scalar>(*f.sub, step.sub[size_t(j - 2)].x);
        step.sub[size_t(j - 1)] = sigma_solve(f, rhs_j);
    }
    return step;
}

// ---------------------------------------------------------------------------
// Dense oracle: materializes the full block-tridiagonal matrix and solves it
// with a generic LU. Serves as the verification reference and as the
// unstructured baseline in the scaling benchmarks.

struct DensePartition {
    std::vector<Index> sub_offset; ///< start of each sub-system block
    std::vector<Index> block_dim;  ///< size of each sub-system block
    Index total = 0;

    Index x_of(Index j) const { return sub_offset[size_t(j - 1)]; }
};

/// One sub-system's diagonal block as a dense matrix.
template <typename Scalar>
MatrixX<Scalar> dense_subsystem_matrix(const StackedSubsystem<Scalar>& s,
                                       const VectorX<Scalar>& theta, const VectorX<Scalar>& lambda) {
    const Index nx = s.nx(), nu = s.nu_total(), nc = s.nc();
    const Index dim = 2 * nx + nu + 2 * nc;
    MatrixX<Scalar> d = MatrixX<Scalar>::Zero(dim, dim);
    const Index ox = 0, ou = nx, op = nx + nu, ol = 2 * nx + nu, ot = 2 * nx + nu + nc;

    const MatrixX<Scalar> A = dense_A(s), B = dense_B(s), Q = dense_Q(s), S = dense_S(s),
                          R = dense_R(s), M = dense_M(s), L = dense_L(s);
    d.block(ox, ox, nx, nx) = Q;
    d.block(ox, ou, nx, nu) = S.transpose();
    d.block(ox, op, nx, nx) = -A.transpose();
    d.block(ox, ol, nx, nc) = M.transpose();
    d.block(ou, ox, nu, nx) = S;
    d.block(ou, ou, nu, nu) = R;
    d.block(ou, op, nu, nx) = B.transpose();
    d.block(ou, ol, nu, nc) = L.transpose();
    d.block(op, ox, nx, nx) = -A;
    d.block(op, ou, nx, nu) = B;
    d.block(ol, ox, nc, nx) = M;
    d.block(ol, ou, nc, nu) = L;
    d.block(ol, ot, nc, nc).setIdentity();
    d.block(ot, ol, nc, nc) = theta.asDiagonal();
    d.block(ot, ot, nc, nc) = lambda.asDiagonal();
    return d;
}

/// Assembles the full linearized KKT matrix. The memory cap guards against
/// accidentally materializing huge systems; it throws when exceeded.
template <typename Scalar>
std::pair<MatrixX<Scalar>, DensePartition> dense_assemble(
    const std::vector<StackedSubsystem<Scalar>>& stacked, const Iterate<Scalar>& it,
    Index dim_cap = 5000) {
    const Index N = Index(stacked.size());
    DensePartition part;
    for (Index j = 1; j <= N; ++j) {
        const auto& s = stacked[size_t(j - 1)];
        part.sub_offset.push_back(part.total);
        const Index dim = 2 * s.nx() + s.nu_total() + 2 * s.nc();
        part.block_dim.push_back(dim);
        part.total += dim;
    }
    if (part.total > dim_cap)
        throw std::invalid_argument("dense_assemble: dimension cap exceeded (" +
                                    std::to_string(part.total) + " > " +
                                    std::to_string(dim_cap) + ")");

    MatrixX<Scalar> big = MatrixX<Scalar>::Zero(part.total, part.total);
    for (Index j = 1; j <= N; ++j) {
        const auto& s = stacked[size_t(j - 1)];
        const auto& pt = it.sub[size_t(j - 1)];
        const Index o = part.sub_offset[size_t(j - 1)];
        big.block(o, o, part.block_dim[size_t(j - 1)], part.block_dim[size_t(j - 1)]) =
            dense_subsystem_matrix(s, pt.theta, pt.lambda);
        if (j > 1) {
            // Off-diagonal coupling: +E_j maps the upstream x-block into the
            // dynamics rows, and its transpose the downstream p-block into the
            // upstream stationarity rows.
            const auto& sp = stacked[size_t(j - 2)];
            const Index op_row = o + s.nx() + s.nu_total();
            const Index ox_prev = part.sub_offset[size_t(j - 2)];
            const MatrixX<Scalar> E = dense_E(s);
            big.block(op_row, ox_prev, s.nx(), sp.nx()) = E;
            big.block(ox_prev, op_row, sp.nx(), s.nx()) = E.transpose();
        }
    }
    return {std::move(big), std::move(part)};
}

/// Reference solve of the linearized system by dense LU.
template <typename Scalar>
NewtonStep<Scalar> dense_newton_solve(const std::vector<StackedSubsystem<Scalar>>& stacked,
                                      const Iterate<Scalar>& it,
                                      const std::vector<SubsystemPoint<Scalar>>& rhs,
                                      Index dim_cap = 5000) {
    auto [big, part] = dense_assemble(stacked, it, dim_cap);
    const Index N = Index(stacked.size());

    VectorX<Scalar> flat(part.total);
    for (Index j = 1; j <= N; ++j) {
        const auto& s = stacked[size_t(j - 1)];
        const auto& r = rhs[size_t(j - 1)];
        Index o = part.sub_offset[size_t(j - 1)];
        flat.segment(o, s.nx()) = r.x;
        flat.segment(o + s.nx(), s.nu_total()) = r.u;
        flat.segment(o + s.nx() + s.nu_total(), s.nx()) = r.p;
        flat.segment(o + 2 * s.nx() + s.nu_total(), s.nc()) = r.lambda;
        flat.segment(o + 2 * s.nx() + s.nu_total() + s.nc(), s.nc()) = r.theta;
    }

    Eigen::PartialPivLU<MatrixX<Scalar>> lu(big);
    VectorX<Scalar> sol = lu.solve(flat);
    const Scalar resid = (big * sol - flat).template lpNorm<Eigen::Infinity>();
    const Scalar scale = Scalar(1) + flat.template lpNorm<Eigen::Infinity>();
    if (!sol.allFinite() || resid > Scalar(1e-6) * scale)
        throw FactorizationFailure("dense_newton_solve: matrix numerically singular");

    NewtonStep<Scalar> step;
    step.sub.resize(size_t(N));
    for (Index j = 1; j <= N; ++j) {
        const auto& s = stacked[size_t(j - 1)];
        auto& d = step.sub[size_t(j - 1)];
        Index o = part.sub_offset[size_t(j - 1)];
        d.x = sol.segment(o, s.nx());
        d.u = sol.segment(o + s.nx(), s.nu_total());
        d.p = sol.segment(o + s.nx() + s.nu_total(), s.nx());
        d.lambda = sol.segment(o + 2 * s.nx() + s.nu_total(), s.nc());
        d.theta = sol.segment(o + 2 * s.nx() + s.nu_total() + s.nc(), s.nc());
    }
    return step;
}

/// Matrix-free residual of the linearized system, for verification:
/// returns max_j |(tridiagonal operator * delta - rho)_j|_inf.
template <typename Scalar>
Scalar linearized_residual(const std::vector<StackedSubsystem<Scalar>>& stacked,
                           const Iterate<Scalar>& it, const NewtonStep<Scalar>& step,
                           const std::vector<SubsystemPoint<Scalar>>& rhs,
                           const CascadeFactorization<Scalar>* fact = nullptr) {
    const Index N = Index(stacked.size());
    Scalar worst(0);
    for (Index j = 1; j <= N; ++j) {
        const auto& s = stacked[size_t(j - 1)];
        SubsystemPoint<Scalar> y =
            apply_kkt_block<Scalar>(s, it.sub[size_t(j - 1)], step.sub[size_t(j - 1)]);
        // Off-diagonal blocks of the tridiagonal matrix are the negated
        // coupling operators, so the E terms enter with a plus.
        if (j > 1 && s.has_coupling()) y.p += apply_E<Scalar>(s, step.sub[size_t(j - 2)].x);
        if (j < N && stacked[size_t(j)].has_coupling())
            y.x += apply_ET<Scalar>(stacked[size_t(j)], step.sub[size_t(j)].p);
        y.axpy(Scalar(-1), rhs[size_t(j - 1)]);
        worst = std::max(worst, y.inf_norm());
    }
    (void)fact;
    return worst;
}

} // namespace casqp
