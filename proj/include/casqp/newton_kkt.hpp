#pragma once

#include "casqp/stacked.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace casqp {

/// Primal-dual variables of one sub-system: trajectory (x, u), equality
/// multiplier p, inequality multiplier lambda and slack theta. The interior
/// invariant is lambda >= 0 and theta > 0 componentwise.
template <typename Scalar>
struct SubsystemPoint {
    VectorX<Scalar> x;
    VectorX<Scalar> u;
    VectorX<Scalar> p;
    VectorX<Scalar> lambda;
    VectorX<Scalar> theta;

    static SubsystemPoint Zero(const StackedSubsystem<Scalar>& s) {
        SubsystemPoint pt;
        pt.x = VectorX<Scalar>::Zero(s.nx());
        pt.u = VectorX<Scalar>::Zero(s.nu_total());
        pt.p = VectorX<Scalar>::Zero(s.nx());
        pt.lambda = VectorX<Scalar>::Zero(s.nc());
        pt.theta = VectorX<Scalar>::Zero(s.nc());
        return pt;
    }

    void axpy(Scalar a, const SubsystemPoint& d) {
        x += a * d.x;
        u += a * d.u;
        p += a * d.p;
        lambda += a * d.lambda;
        theta += a * d.theta;
    }

    Scalar inf_norm() const {
        Scalar v(0);
        auto upd = [&](const VectorX<Scalar>& w) {
            if (w.size()) v = std::max(v, w.template lpNorm<Eigen::Infinity>());
        };
        upd(x); upd(u); upd(p); upd(lambda); upd(theta);
        return v;
    }
};

template <typename Scalar>
struct Iterate {
    std::vector<SubsystemPoint<Scalar>> sub;

    bool interior() const {
        for (const auto& s : sub)
            if ((s.lambda.array() < Scalar(0)).any() || (s.theta.array() <= Scalar(0)).any())
                return false;
        return true;
    }
};

template <typename Scalar>
struct NewtonStep {
    std::vector<SubsystemPoint<Scalar>> sub;
};

/// Residuals of the five optimality equation groups for one sub-system:
/// stationarity in x and u, dynamics, the slack equation M x + L u - c +
/// theta, and the complementarity products lambda .* theta.
template <typename Scalar>
struct SubsystemResidual {
    VectorX<Scalar> stat_x;
    VectorX<Scalar> stat_u;
    VectorX<Scalar> dyn;
    VectorX<Scalar> ineq;
    VectorX<Scalar> comp;
};

template <typename Scalar>
struct KktResidual {
    std::vector<SubsystemResidual<Scalar>> sub;

    Scalar stat_norm() const {
        Scalar v(0);
        for (const auto& r : sub) {
            v = std::max(v, r.stat_x.template lpNorm<Eigen::Infinity>());
            v = std::max(v, r.stat_u.template lpNorm<Eigen::Infinity>());
        }
        return v;
    }
    Scalar dyn_norm() const {
        Scalar v(0);
        for (const auto& r : sub) v = std::max(v, r.dyn.template lpNorm<Eigen::Infinity>());
        return v;
    }
    Scalar ineq_norm() const {
        Scalar v(0);
        for (const auto& r : sub) v = std::max(v, r.ineq.template lpNorm<Eigen::Infinity>());
        return v;
    }
    Scalar comp_norm() const {
        Scalar v(0);
        for (const auto& r : sub) v = std::max(v, r.comp.template lpNorm<Eigen::Infinity>());
        return v;
    }
    Scalar max_norm() const {
        return std::max({stat_norm(), dyn_norm(), ineq_norm(), comp_norm()});
    }
};

/// Residual of one sub-system given its local point, the upstream trajectory
/// block and the downstream stationarity coupling E_{j+1}' p_{j+1} (empty
/// vectors at the cascade boundaries). Kept as a standalone kernel so the
/// distributed agents evaluate bit-identical arithmetic.
template <typename Scalar>
SubsystemResidual<Scalar> subsystem_kkt_residual(const StackedSubsystem<Scalar>& s,
                                                 const SubsystemPoint<Scalar>& pt,
                                                 const VectorX<Scalar>& x_prev,
                                                 const VectorX<Scalar>& stat_coupling) {
    SubsystemResidual<Scalar> r;
    r.stat_x = apply_Q<Scalar>(s, pt.x);
    r.stat_x += apply_ST<Scalar>(s, pt.u);
    r.stat_x -= apply_AT<Scalar>(s, pt.p);
    r.stat_x += apply_MT<Scalar>(s, pt.lambda);
    if (stat_coupling.size()) r.stat_x += stat_coupling;

    r.stat_u = apply_S<Scalar>(s, pt.x);
    r.stat_u += apply_R<Scalar>(s, pt.u);
    r.stat_u += apply_BT<Scalar>(s, pt.p);
    r.stat_u += apply_LT<Scalar>(s, pt.lambda);

    r.dyn = dynamics_residual<Scalar>(s, pt.x, x_prev, pt.u);
    r.ineq = apply_M<Scalar>(s, pt.x) + apply_L<Scalar>(s, pt.u) - s.c + pt.theta;
    r.comp = pt.lambda.cwiseProduct(pt.theta);
    return r;
}

/// Full-cascade KKT residual; the inter-sub-system stationarity terms use
/// the downstream multiplier, the dynamics terms the upstream trajectory.
template <typename Scalar>
KktResidual<Scalar> kkt_residual(const std::vector<StackedSubsystem<Scalar>>& stacked,
                                 const Iterate<Scalar>& it) {
    const Index N = Index(stacked.size());
    KktResidual<Scalar> res;
    res.sub.resize(size_t(N));
    for (Index j = 1; j <= N; ++j) {
        VectorX<Scalar> coupling;
        if (j < N)
            coupling = apply_ET<Scalar>(stacked[size_t(j)], it.sub[size_t(j)].p);
        VectorX<Scalar> x_prev;
        if (j > 1) x_prev = it.sub[size_t(j - 2)].x;
        res.sub[size_t(j - 1)] = subsystem_kkt_residual<Scalar>(
            stacked[size_t(j - 1)], it.sub[size_t(j - 1)], x_prev, coupling);
    }
    return res;
}

template <typename Scalar>
KktResidual<Scalar> kkt_residual(const CascadeProblem<Scalar>& problem, const Iterate<Scalar>& it) {
    return kkt_residual(stack_all(problem), it);
}

/// Average complementarity product over all stacked inequality rows.
/// Accumulated from the last sub-system down so the distributed reduction
/// chain produces the same floating-point value.
template <typename Scalar>
Scalar duality_gap(const Iterate<Scalar>& it) {
    Scalar sum(0);
    Index rows = 0;
    for (Index j = Index(it.sub.size()); j >= 1; --j) {
        const auto& s = it.sub[size_t(j - 1)];
        sum += s.lambda.dot(s.theta);
        rows += s.lambda.size();
    }
    return rows > 0 ? sum / Scalar(rows) : Scalar(0);
}

/// Newton right-hand side for one sub-system: the negated KKT residual with
/// the complementarity row recentred by sigma_mu, so that the linearized
/// system's solution is a descent direction for s <- s + alpha * delta.
template <typename Scalar>
SubsystemPoint<Scalar> subsystem_newton_rhs(const SubsystemResidual<Scalar>& r, Scalar sigma_mu) {
    SubsystemPoint<Scalar> rho;
    rho.x = -r.stat_x;
    rho.u = -r.stat_u;
    rho.p = -r.dyn;
    rho.lambda = -r.ineq;
    rho.theta = -r.comp;
    rho.theta.array() += sigma_mu;
    return rho;
}

/// Right-hand sides for the full linearized system at the current iterate.
/// sigma_bar in (0,1) biases the step toward the central path.
template <typename Scalar>
std::vector<SubsystemPoint<Scalar>> newton_rhs(const std::vector<StackedSubsystem<Scalar>>& stacked,
                                               const Iterate<Scalar>& it, Scalar sigma_bar) {
    const Scalar sigma_mu = sigma_bar * duality_gap(it);
    const auto res = kkt_residual(stacked, it);
    std::vector<SubsystemPoint<Scalar>> rho;
    rho.reserve(res.sub.size());
    for (const auto& r : res.sub) rho.push_back(subsystem_newton_rhs(r, sigma_mu));
    return rho;
}

template <typename Scalar>
std::vector<SubsystemPoint<Scalar>> newton_rhs(const CascadeProblem<Scalar>& problem,
                                               const Iterate<Scalar>& it, Scalar sigma_bar) {
    return newton_rhs(stack_all(problem), it, sigma_bar);
}

/// Matrix-free application of one diagonal block of the linearized KKT
/// matrix (the five-block saddle operator of sub-system j, with the current
/// slack/multiplier diagonals in the last row).
template <typename Scalar>
SubsystemPoint<Scalar> apply_kkt_block(const StackedSubsystem<Scalar>& s,
                                       const SubsystemPoint<Scalar>& state,
                                       const SubsystemPoint<Scalar>& v) {
    SubsystemPoint<Scalar> y;
    y.x = apply_Q<Scalar>(s, v.x) + apply_ST<Scalar>(s, v.u) - apply_AT<Scalar>(s, v.p) +
          apply_MT<Scalar>(s, v.lambda);
    y.u = apply_S<Scalar>(s, v.x) + apply_R<Scalar>(s, v.u) + apply_BT<Scalar>(s, v.p) +
          apply_LT<Scalar>(s, v.lambda);
    y.p = -apply_A<Scalar>(s, v.x) + apply_B<Scalar>(s, v.u);
    y.lambda = apply_M<Scalar>(s, v.x) + apply_L<Scalar>(s, v.u) + v.theta;
    y.theta = state.theta.cwiseProduct(v.lambda) + state.lambda.cwiseProduct(v.theta);
    return y;
}

/// Matrix-free application of the sub-diagonal coupling operator of
/// sub-system j: the only nonzero block maps the upstream x-block into the
/// dynamics rows through -E_j.
template <typename Scalar>
SubsystemPoint<Scalar> apply_coupling(const StackedSubsystem<Scalar>& s,
                                      const SubsystemPoint<Scalar>& v_prev) {
    SubsystemPoint<Scalar> y = SubsystemPoint<Scalar>::Zero(s);
    if (s.has_coupling()) y.p = -apply_E<Scalar>(s, v_prev.x);
    return y;
}

/// Transpose coupling: maps sub-system j's p-block into the upstream
/// stationarity rows through -E_j'.
template <typename Scalar>
VectorX<Scalar> apply_coupling_transpose_x(const StackedSubsystem<Scalar>& s,
                                           const VectorX<Scalar>& p_block) {
    return -apply_ET<Scalar>(s, p_block);
}

/// Fraction-to-boundary step length: the largest alpha <= 1 with
/// lambda + alpha d_lambda >= 0 and theta + alpha d_theta > 0, shrunk by the
/// safety factor tau. Accumulated by min, so execution order is irrelevant.
template <typename Scalar>
Scalar max_interior_step(const SubsystemPoint<Scalar>& pt, const SubsystemPoint<Scalar>& step) {
    Scalar bound = std::numeric_limits<Scalar>::infinity();
    for (Index i = 0; i < pt.lambda.size(); ++i)
        if (step.lambda(i) < Scalar(0)) bound = std::min(bound, -pt.lambda(i) / step.lambda(i));
    for (Index i = 0; i < pt.theta.size(); ++i)
        if (step.theta(i) < Scalar(0)) bound = std::min(bound, -pt.theta(i) / step.theta(i));
    return bound;
}

template <typename Scalar>
Scalar step_length(const Iterate<Scalar>& it, const NewtonStep<Scalar>& step, Scalar tau) {
    if (!(tau > Scalar(0) && tau < Scalar(1)))
        throw std::invalid_argument("step_length: tau must lie in (0,1)");
    Scalar bound = std::numeric_limits<Scalar>::infinity();
    for (size_t j = 0; j < it.sub.size(); ++j)
        bound = std::min(bound, max_interior_step(it.sub[j], step.sub[j]));
    return std::min(Scalar(1), tau * bound);
}

} // namespace casqp
