#pragma once

#include "casqp/newton_kkt.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <utility>
#include <vector>

namespace casqp {

/// Multi-column right-hand side / solution with the five-block row structure
/// of one sub-system (x, u, p, lambda, theta rows).
template <typename Scalar>
struct BlockColumns {
    MatrixX<Scalar> x;
    MatrixX<Scalar> u;
    MatrixX<Scalar> p;
    MatrixX<Scalar> lam;
    MatrixX<Scalar> th;

    static BlockColumns Zero(const StackedSubsystem<Scalar>& s, Index cols) {
        BlockColumns y;
        y.x = MatrixX<Scalar>::Zero(s.nx(), cols);
        y.u = MatrixX<Scalar>::Zero(s.nu_total(), cols);
        y.p = MatrixX<Scalar>::Zero(s.nx(), cols);
        y.lam = MatrixX<Scalar>::Zero(s.nc(), cols);
        y.th = MatrixX<Scalar>::Zero(s.nc(), cols);
        return y;
    }
};

/// Reusable factorization of one sub-system's reduced saddle block. After an
/// O(T^3) setup it answers arbitrary multi-column solves through a pipeline
/// of diagonal scalings, unit block-bidiagonal substitutions and one dense
/// SPD Gram solve of input-space size. The x-block curvature is kept as
/// block-diagonal data plus an optional dense downstream correction K, so
/// sub-systems without a downstream neighbour stay fully block-structured.
template <typename Scalar>
struct SigmaFactor {
    const StackedSubsystem<Scalar>* sub = nullptr;

    VectorX<Scalar> theta;
    VectorX<Scalar> lambda;
    VectorX<Scalar> dratio; ///< lambda ./ theta, the active-set weighting

    std::vector<MatrixX<Scalar>> Rt;     ///< T blocks: R + L' D L
    std::vector<Eigen::LLT<MatrixX<Scalar>>> Rt_llt;
    std::vector<MatrixX<Scalar>> St;     ///< T blocks: S + L' D M
    std::vector<MatrixX<Scalar>> RinvSt; ///< T blocks: Rt^{-1} St
    std::vector<MatrixX<Scalar>> Asub;   ///< T blocks: A - B Rt^{-1} St
    std::vector<MatrixX<Scalar>> Qbar_diag; ///< T+1 blocks: Q + M' D M
    std::vector<MatrixX<Scalar>> Qt_diag;   ///< Qbar minus the input Schur part
    MatrixX<Scalar> K;                   ///< dense downstream correction (may be empty)

    MatrixX<Scalar> AinvB;   ///< cached substitution of the input map
    MatrixX<Scalar> QtAinvB; ///< curvature times AinvB
    Eigen::LLT<MatrixX<Scalar>> G_llt; ///< Gram factor of Rt + AinvB' Qt AinvB

    bool has_K() const { return K.size() != 0; }

    /// x-space curvature apply: block-diagonal part plus K.
    MatrixX<Scalar> qtilde_apply(const MatRef<Scalar>& v) const {
        const Index n = sub->n;
        MatrixX<Scalar> y(v.rows(), v.cols());
        for (Index t = 0; t <= sub->T; ++t)
            y.middleRows(t * n, n).noalias() = Qt_diag[size_t(t)] * v.middleRows(t * n, n);
        if (has_K()) y.noalias() += K * v;
        return y;
    }

    MatrixX<Scalar> qtilde_dense() const {
        const Index n = sub->n;
        MatrixX<Scalar> out = MatrixX<Scalar>::Zero(sub->nx(), sub->nx());
        for (Index t = 0; t <= sub->T; ++t)
            out.block(t * n, t * n, n, n) = Qt_diag[size_t(t)];
        if (has_K()) out += K;
        return out;
    }

    /// Block-diagonal solve against the regularized input weight.
    MatrixX<Scalar> rtilde_solve(const MatRef<Scalar>& v) const {
        const Index m = sub->m;
        MatrixX<Scalar> y(v.rows(), v.cols());
        for (Index t = 0; t < sub->T; ++t)
            y.middleRows(t * m, m) = Rt_llt[size_t(t)].solve(v.middleRows(t * m, m));
        return y;
    }

    MatrixX<Scalar> g_solve(const MatRef<Scalar>& v) const { return G_llt.solve(v); }

    MatrixX<Scalar> st_apply(const MatRef<Scalar>& x) const {
        const Index n = sub->n, m = sub->m;
        MatrixX<Scalar> y(sub->nu_total(), x.cols());
        for (Index t = 0; t < sub->T; ++t)
            y.middleRows(t * m, m).noalias() = St[size_t(t)] * x.middleRows(t * n, n);
        return y;
    }

    MatrixX<Scalar> st_apply_T(const MatRef<Scalar>& u) const {
        const Index n = sub->n, m = sub->m;
        MatrixX<Scalar> y = MatrixX<Scalar>::Zero(sub->nx(), u.cols());
        for (Index t = 0; t < sub->T; ++t)
            y.middleRows(t * n, n).noalias() = St[size_t(t)].transpose() * u.middleRows(t * m, m);
        return y;
    }
};

/// Builds the reduced-block factorization for one sub-system at the given
/// slack/multiplier state. `coupling` is the downstream PSD correction to
/// the x-block (pass an empty matrix for the last sub-system). Fails with
/// FactorizationFailure when the Gram matrix is numerically indefinite,
/// which signals an iterate on the boundary or invalid problem data; one
/// diagonal-jitter retry absorbs harmless round-off indefiniteness.
template <typename Scalar>
SigmaFactor<Scalar> build_sigma_factor(const StackedSubsystem<Scalar>& s,
                                       const VectorX<Scalar>& theta, const VectorX<Scalar>& lambda,
                                       MatrixX<Scalar> coupling = MatrixX<Scalar>()) {
    if (theta.size() != s.nc() || lambda.size() != s.nc())
        throw std::invalid_argument("build_sigma_factor: multiplier dimension mismatch");
    if ((theta.array() <= Scalar(0)).any())
        throw FactorizationFailure("build_sigma_factor: theta must be strictly positive", s.j);

    SigmaFactor<Scalar> f;
    f.sub = &s;
    f.theta = theta;
    f.lambda = lambda;
    f.dratio = lambda.cwiseQuotient(theta);
    f.K = std::move(coupling);

    const Index n = s.n, m = s.m, nu = s.nu, T = s.T;
    f.Rt.resize(size_t(T));
    f.Rt_llt.resize(size_t(T));
    f.St.resize(size_t(T));
    f.RinvSt.resize(size_t(T));
    f.Asub.resize(size_t(T));
    f.Qbar_diag.resize(size_t(T + 1));
    f.Qt_diag.resize(size_t(T + 1));

    for (Index t = 0; t < T; ++t) {
        const auto d = f.dratio.segment(t * nu, nu);
        const auto& L = s.L[size_t(t)];
        const auto& M = s.M[size_t(t)];
        f.Rt[size_t(t)] = s.R[size_t(t)] + L.transpose() * d.asDiagonal() * L;
        f.Rt_llt[size_t(t)].compute(f.Rt[size_t(t)]);
        if (f.Rt_llt[size_t(t)].info() != Eigen::Success)
            throw FactorizationFailure("regularized input weight not positive definite", s.j);
        f.St[size_t(t)] = s.S[size_t(t)] + L.transpose() * d.asDiagonal() * M;
        f.RinvSt[size_t(t)] = f.Rt_llt[size_t(t)].solve(f.St[size_t(t)]);
        f.Asub[size_t(t)] = s.A[size_t(t)] - s.B[size_t(t)] * f.RinvSt[size_t(t)];
    }
    for (Index t = 0; t <= T; ++t) {
        const auto d = f.dratio.segment(t * nu, nu);
        const auto& M = s.M[size_t(t)];
        f.Qbar_diag[size_t(t)] = s.Q[size_t(t)] + M.transpose() * d.asDiagonal() * M;
        f.Qt_diag[size_t(t)] = f.Qbar_diag[size_t(t)];
        if (t < T) f.Qt_diag[size_t(t)] -= f.St[size_t(t)].transpose() * f.RinvSt[size_t(t)];
    }

    // AinvB column-block at source stage t: the input enters at stage t+1 and
    // propagates through the remaining closed-loop transitions.
    f.AinvB = MatrixX<Scalar>::Zero(s.nx(), s.nu_total());
    for (Index t = 0; t < T; ++t) {
        auto cols = f.AinvB.middleCols(t * m, m);
        cols.middleRows((t + 1) * n, n) = s.B[size_t(t)];
        for (Index r = t + 2; r <= T; ++r)
            cols.middleRows(r * n, n).noalias() =
                f.Asub[size_t(r - 1)] * cols.middleRows((r - 1) * n, n);
    }
    f.QtAinvB = f.qtilde_apply(f.AinvB);

    MatrixX<Scalar> G = MatrixX<Scalar>::Zero(s.nu_total(), s.nu_total());
    for (Index t = 0; t < T; ++t) G.block(t * m, t * m, m, m) = f.Rt[size_t(t)];
    G.noalias() += f.AinvB.transpose() * f.QtAinvB;
    G = ((G + G.transpose()) / Scalar(2)).eval();

    f.G_llt.compute(G);
    if (f.G_llt.info() != Eigen::Success) {
        const Scalar jitter = Scalar(1e-12) * G.trace() / Scalar(G.rows());
        G.diagonal().array() += jitter;
        f.G_llt.compute(G);
        if (f.G_llt.info() != Eigen::Success)
            throw FactorizationFailure("input-space Gram matrix numerically indefinite", s.j);
    }
    return f;
}

/// Solves the reduced saddle block against a five-block multi-column right-
/// hand side. The trajectory blocks are recovered through the substitution
/// pipeline; the multiplier and slack blocks follow from the diagonal last
/// rows.
template <typename Scalar>
BlockColumns<Scalar> sigma_solve(const SigmaFactor<Scalar>& f, const BlockColumns<Scalar>& y) {
    const auto& s = *f.sub;
    const Index cols = y.x.cols();
    if (y.x.rows() != s.nx() || y.u.rows() != s.nu_total() || y.p.rows() != s.nx() ||
        y.lam.rows() != s.nc() || y.th.rows() != s.nc())
        throw std::invalid_argument("sigma_solve: block dimension mismatch");

    op_counts().sigma_solve_columns += cols;
    if (cols == 1) ++op_counts().sigma_vector_solves;

    // Fold the multiplier-side right-hand sides into the trajectory rows.
    MatrixX<Scalar> fold = y.lam.array().colwise() * f.dratio.array();
    fold.array() -= y.th.array().colwise() / f.theta.array();
    MatrixX<Scalar> y1 = y.x + apply_MT<Scalar>(s, fold);
    MatrixX<Scalar> y2 = y.u + apply_LT<Scalar>(s, fold);

    const MatrixX<Scalar> rinv_y2 = f.rtilde_solve(y2);
    MatrixX<Scalar> v1 = y1 - f.st_apply_T(rinv_y2);
    MatrixX<Scalar> v3 =
        bidiag_solve_lower<Scalar>(f.Asub, s.n, y.p - apply_B<Scalar>(s, rinv_y2));

    // Trajectory-space reduction through the input-space Gram solve.
    MatrixX<Scalar> pvec = v1 + f.qtilde_apply(v3);
    MatrixX<Scalar> zp = f.AinvB * f.G_llt.solve(f.AinvB.transpose() * pvec);

    BlockColumns<Scalar> x;
    x.x = zp - v3;
    MatrixX<Scalar> u3 = f.qtilde_apply(zp) - pvec;
    x.p = bidiag_solve_upper<Scalar>(f.Asub, s.n, u3);
    x.u = f.rtilde_solve(y2 - f.st_apply(x.x) - apply_BT<Scalar>(s, x.p));

    x.th = y.lam - apply_M<Scalar>(s, x.x) - apply_L<Scalar>(s, x.u);
    x.lam = (y.th.array().colwise() / f.theta.array() -
             x.th.array().colwise() * f.dratio.array()).matrix();
    return x;
}

/// Single-column convenience overload over the primal-dual point layout.
template <typename Scalar>
SubsystemPoint<Scalar> sigma_solve(const SigmaFactor<Scalar>& f, const SubsystemPoint<Scalar>& rhs) {
    BlockColumns<Scalar> y;
    y.x = rhs.x;
    y.u = rhs.u;
    y.p = rhs.p;
    y.lam = rhs.lambda;
    y.th = rhs.theta;
    const BlockColumns<Scalar> x = sigma_solve(f, y);
    SubsystemPoint<Scalar> out;
    out.x = x.x.col(0);
    out.u = x.u.col(0);
    out.p = x.p.col(0);
    out.lambda = x.lam.col(0);
    out.theta = x.th.col(0);
    return out;
}

/// Matrix-free application of the factored block (for residual checks):
/// the diagonal saddle operator plus the dense x-block correction.
template <typename Scalar>
BlockColumns<Scalar> sigma_apply(const SigmaFactor<Scalar>& f, const BlockColumns<Scalar>& v) {
    const auto& s = *f.sub;
    BlockColumns<Scalar> y;
    y.x = apply_Q<Scalar>(s, v.x) + apply_ST<Scalar>(s, v.u) - apply_AT<Scalar>(s, v.p) +
          apply_MT<Scalar>(s, v.lam);
    if (f.has_K()) y.x.noalias() += f.K * v.x;
    y.u = apply_S<Scalar>(s, v.x) + apply_R<Scalar>(s, v.u) + apply_BT<Scalar>(s, v.p) +
          apply_LT<Scalar>(s, v.lam);
    y.p = -apply_A<Scalar>(s, v.x) + apply_B<Scalar>(s, v.u);
    y.lam = apply_M<Scalar>(s, v.x) + apply_L<Scalar>(s, v.u) + v.th;
    y.th = (v.lam.array().colwise() * f.theta.array() +
            v.th.array().colwise() * f.lambda.array()).matrix();
    return y;
}

/// Downstream-to-upstream coupling correction: -E' (inverse)_pp E, obtained
/// by solving against the coupling columns. Only the T nonzero block columns
/// of E are solved; the result keeps the zero last block row/column pattern
/// and is symmetrized. PSD by construction of the factored block.
template <typename Scalar>
MatrixX<Scalar> coupling_for_upstream(const SigmaFactor<Scalar>& f,
                                      const std::vector<MatrixX<Scalar>>& E_blocks) {
    const auto& s = *f.sub;
    if (E_blocks.empty()) return MatrixX<Scalar>();
    const Index n = s.n;
    const Index n_prev = E_blocks.front().cols();
    const Index T = s.T;
    const Index q = n_prev * T;

    BlockColumns<Scalar> y = BlockColumns<Scalar>::Zero(s, q);
    for (Index t = 0; t < T; ++t)
        y.p.block((t + 1) * n, t * n_prev, n, n_prev) = E_blocks[size_t(t)];
    const BlockColumns<Scalar> x = sigma_solve(f, y);

    MatrixX<Scalar> k = MatrixX<Scalar>::Zero(n_prev * (T + 1), n_prev * (T + 1));
    for (Index t = 0; t < T; ++t)
        k.block(t * n_prev, 0, n_prev, q).noalias() =
            -E_blocks[size_t(t)].transpose() * x.p.middleRows((t + 1) * n, n);
    k = ((k + k.transpose()) / Scalar(2)).eval();
    return k;
}

/// Closed form of the equality-multiplier diagonal block of the factored
/// matrix's inverse, via a symmetric square root of the x-space curvature.
/// Negative semi-definite; used only to cross-check the solve pipeline.
template <typename Scalar>
MatrixX<Scalar> multiplier_block_inverse(const SigmaFactor<Scalar>& f) {
    const auto& s = *f.sub;
    const MatrixX<Scalar> qt = f.qtilde_dense();

    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(qt);
    if (es.info() != Eigen::Success)
        throw FactorizationFailure("curvature eigendecomposition failed", s.j);
    VectorX<Scalar> vals = es.eigenvalues().cwiseMax(Scalar(0));
    const MatrixX<Scalar> qhalf =
        es.eigenvectors() * vals.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();

    const MatrixX<Scalar> jmat = f.AinvB * f.rtilde_solve(f.AinvB.transpose());
    MatrixX<Scalar> core = MatrixX<Scalar>::Identity(s.nx(), s.nx()) + qhalf * jmat * qhalf;
    core = ((core + core.transpose()) / Scalar(2)).eval();
    const MatrixX<Scalar> inner = qhalf * core.llt().solve(qhalf);

    MatrixX<Scalar> right = bidiag_solve_upper<Scalar>(f.Asub, s.n, inner).transpose();
    MatrixX<Scalar> out = -bidiag_solve_upper<Scalar>(f.Asub, s.n, right);
    return ((out + out.transpose()) / Scalar(2)).eval();
}

} // namespace casqp
