#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

using namespace casqp;
using casqp_test::Mat;
using casqp_test::Vec;

namespace {

CascadeProblem<double> decoupled(std::uint64_t seed, Index N, Index T) {
    auto problem = random_cascade<double>(seed, N, T, 2, 1, 2);
    for (auto& s : problem.subsystems)
        for (auto& st : s.stages)
            if (st.E.size()) st.E.setZero();
    return problem;
}

} // namespace

TEST_CASE("decoupled cascade factors like independent blocks") {
    SplitMix64 rng(20);
    const auto problem = decoupled(70, 3, 3);
    const auto stacked = stack_all(problem);
    const auto it = casqp_test::random_iterate(stacked, rng);
    const auto fact = factor_cascade(stacked, it);

    for (const auto& f : fact.factors)
        if (f.has_K()) CHECK(f.K.lpNorm<Eigen::Infinity>() == 0.0);

    const auto rho = newton_rhs(stacked, it, 0.1);
    const auto step = solve_newton(fact, rho);
    for (Index j = 1; j <= 3; ++j) {
        const auto alone = sigma_solve(fact.factors[size_t(j - 1)], rho[size_t(j - 1)]);
        SubsystemPoint<double> diff = alone;
        diff.axpy(-1.0, step.sub[size_t(j - 1)]);
        CHECK(diff.inf_norm() <= 1e-12 * (1.0 + alone.inf_norm()));
    }
}

TEST_CASE("swapping two decoupled sub-systems permutes the solution blocks") {
    SplitMix64 rng(21);
    auto problem = decoupled(71, 2, 3);
    const auto stacked = stack_all(problem);
    const auto it = casqp_test::random_iterate(stacked, rng);
    const auto rho = newton_rhs(stacked, it, 0.1);
    const auto step = solve_newton(factor_cascade(stacked, it), rho);

    auto swapped = problem;
    std::swap(swapped.subsystems[0], swapped.subsystems[1]);
    swapped.subsystems[0].j = 1;
    swapped.subsystems[1].j = 2;
    // keep the cascade structure valid: no coupling at the head, a zero
    // coupling block behind it
    for (auto& st : swapped.subsystems[0].stages) st.E = Mat();
    for (auto& st : swapped.subsystems[1].stages)
        st.E = Mat::Zero(swapped.subsystems[1].n, swapped.subsystems[0].n);
    const auto sstk = stack_all(swapped);
    Iterate<double> sit;
    sit.sub = {it.sub[1], it.sub[0]};
    std::vector<SubsystemPoint<double>> srho = {rho[1], rho[0]};
    const auto sstep = solve_newton(factor_cascade(sstk, sit), srho);

    SubsystemPoint<double> d0 = sstep.sub[0];
    d0.axpy(-1.0, step.sub[1]);
    SubsystemPoint<double> d1 = sstep.sub[1];
    d1.axpy(-1.0, step.sub[0]);
    CHECK(d0.inf_norm() <= 1e-11);
    CHECK(d1.inf_norm() <= 1e-11);
}

TEST_CASE("two-block Schur recursion matches the dense reduction") {
    SplitMix64 rng(22);
    const auto problem = random_cascade<double>(72, 2, 2, 2, 1, 2);
    const auto stacked = stack_all(problem);
    const auto it = casqp_test::random_iterate(stacked, rng);
    const auto fact = factor_cascade(stacked, it);

    // dense Sigma_1 = D_1 - Ups' Sigma_2^{-1} Ups, realized through the
    // coupling correction of the structured path
    const auto& s1 = stacked[0];
    const auto& s2 = stacked[1];
    const Mat d1 = dense_subsystem_matrix(s1, it.sub[0].theta, it.sub[0].lambda);
    const Mat d2 = dense_subsystem_matrix(s2, it.sub[1].theta, it.sub[1].lambda);
    const Mat e = dense_E(s2);
    Mat ups = Mat::Zero(d2.rows(), d1.rows());
    ups.block(s2.nx() + s2.nu_total(), 0, s2.nx(), s1.nx()) = -e;
    const Mat sigma1_dense = d1 - ups.transpose() * d2.partialPivLu().solve(ups);

    // structured factor applied to identity
    const Index dim = d1.rows();
    Mat applied(dim, dim);
    for (Index col = 0; col < dim; ++col) {
        BlockColumns<double> y = BlockColumns<double>::Zero(s1, 1);
        Vec unit = Vec::Zero(dim);
        unit(col) = 1.0;
        y.x = unit.segment(0, s1.nx());
        y.u = unit.segment(s1.nx(), s1.nu_total());
        y.p = unit.segment(s1.nx() + s1.nu_total(), s1.nx());
        y.lam = unit.segment(2 * s1.nx() + s1.nu_total(), s1.nc());
        y.th = unit.segment(2 * s1.nx() + s1.nu_total() + s1.nc(), s1.nc());
        const auto x = sigma_apply(fact.factors[0], y);
        applied.col(col) << x.x, x.u, x.p, x.lam, x.th;
    }
    CHECK((applied - sigma1_dense).lpNorm<Eigen::Infinity>() <=
          1e-8 * (1.0 + sigma1_dense.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("single sub-system needs no sweeps") {
    SplitMix64 rng(23);
    const auto problem = random_cascade<double>(73, 1, 3, 2, 1, 2);
    const auto stacked = stack_all(problem);
    const auto it = casqp_test::random_iterate(stacked, rng);
    const auto rho = newton_rhs(stacked, it, 0.1);
    const auto fact = factor_cascade(stacked, it);
    const auto step = solve_newton(fact, rho);
    const auto direct = sigma_solve(fact.factors[0], rho[0]);
    SubsystemPoint<double> diff = direct;
    diff.axpy(-1.0, step.sub[0]);
    CHECK(diff.inf_norm() == 0.0);
}

TEST_CASE("structured and dense Newton steps agree on random instances") {
    SplitMix64 rng(24);
    for (int trial = 0; trial < 10; ++trial) {
        const Index N = 1 + Index(rng.next_u64() % 5);
        const Index T = 1 + Index(rng.next_u64() % 4);
        const auto problem = random_cascade<double>(600 + std::uint64_t(trial), N, T, 2, 1, 2);
        const auto stacked = stack_all(problem);
        const auto it = casqp_test::random_iterate(stacked, rng);
        const auto rho = newton_rhs(stacked, it, 0.1);
        const auto step_s = solve_newton(factor_cascade(stacked, it), rho);
        const auto step_d = dense_newton_solve(stacked, it, rho);
        double dnorm = 0, diff = 0;
        for (size_t j = 0; j < step_s.sub.size(); ++j) {
            SubsystemPoint<double> e = step_s.sub[j];
            e.axpy(-1.0, step_d.sub[j]);
            diff = std::max(diff, e.inf_norm());
            dnorm = std::max(dnorm, step_d.sub[j].inf_norm());
        }
        CHECK(diff <= 1e-8 * (1.0 + dnorm));

        const double rho_norm = [&] {
            double v = 0;
            for (const auto& r : rho) v = std::max(v, r.inf_norm());
            return v;
        }();
        CHECK(linearized_residual(stacked, it, step_s, rho) <= 1e-7 * (1.0 + rho_norm));
    }
}

TEST_CASE("assembled matrix is block-tridiagonal") {
    SplitMix64 rng(25);
    const auto problem = random_cascade<double>(74, 4, 2, 2, 1, 2);
    const auto stacked = stack_all(problem);
    const auto it = casqp_test::random_iterate(stacked, rng);
    const auto [big, part] = dense_assemble(stacked, it);

    for (Index a = 1; a <= 4; ++a)
        for (Index b = 1; b <= 4; ++b) {
            if (std::abs(a - b) < 2) continue;
            const Mat block = big.block(part.sub_offset[size_t(a - 1)],
                                        part.sub_offset[size_t(b - 1)],
                                        part.block_dim[size_t(a - 1)],
                                        part.block_dim[size_t(b - 1)]);
            CHECK(block.lpNorm<Eigen::Infinity>() == 0.0);
        }

    // diagonal blocks match the per-sub-system assembly
    for (Index j = 1; j <= 4; ++j) {
        const Mat want = dense_subsystem_matrix(stacked[size_t(j - 1)], it.sub[size_t(j - 1)].theta,
                                                it.sub[size_t(j - 1)].lambda);
        const Mat got = big.block(part.sub_offset[size_t(j - 1)], part.sub_offset[size_t(j - 1)],
                                  part.block_dim[size_t(j - 1)], part.block_dim[size_t(j - 1)]);
        CHECK((got - want).lpNorm<Eigen::Infinity>() == 0.0);
    }
}

TEST_CASE("solve budget: one factored solve per sweep direction per sub-system") {
    SplitMix64 rng(26);
    const Index N = 5, T = 3;
    const auto problem = random_cascade<double>(75, N, T, 2, 1, 2);
    const auto stacked = stack_all(problem);
    const auto it = casqp_test::random_iterate(stacked, rng);
    const auto rho = newton_rhs(stacked, it, 0.1);

    op_counts().reset();
    const auto fact = factor_cascade(stacked, it);
    // coupling construction solves exactly n_prev * T columns per link
    long long expect_coupling = 0;
    for (Index j = 2; j <= N; ++j) expect_coupling += stacked[size_t(j - 2)].n * T;
    CHECK(op_counts().sigma_solve_columns == expect_coupling);
    CHECK(op_counts().sigma_vector_solves == 0);

    op_counts().reset();
    (void)solve_newton(fact, rho);
    CHECK(op_counts().sigma_vector_solves == 2 * N - 1);
    CHECK(op_counts().sigma_vector_solves <= 2 * N);
}

TEST_CASE("dense assembly enforces its dimension cap") {
    SplitMix64 rng(27);
    const auto problem = random_cascade<double>(76, 3, 3, 2, 1, 2);
    const auto stacked = stack_all(problem);
    const auto it = casqp_test::random_iterate(stacked, rng);
    CHECK_THROWS_AS((void)dense_assemble(stacked, it, 10), std::invalid_argument);
}
