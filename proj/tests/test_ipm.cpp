#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

using namespace casqp;
using casqp_test::Mat;
using casqp_test::Vec;

TEST_CASE("initialization is interior and consistent with the dynamics") {
    for (std::uint64_t seed : {80u, 81u}) {
        const auto problem = random_cascade<double>(seed, 3, 4, 2, 1, 3);
        const auto stacked = stack_all(problem);
        const auto it = initialize(problem, stacked);
        CHECK(it.interior());
        const auto res = kkt_residual(stacked, it);
        CHECK(res.dyn_norm() <= 1e-12);
    }

    SUBCASE("unit levels at the origin give unit slacks") {
        auto problem = random_cascade<double>(82, 1, 2, 2, 1, 2);
        for (auto& s : problem.subsystems) {
            s.xi.setZero();
            for (auto& st : s.stages) st.c.setOnes();
            s.terminal.c.setOnes();
        }
        const auto it = initialize(problem);
        CHECK((it.sub[0].theta.array() == 1.0).all());
    }
}

TEST_CASE("channel fixture converges within sixteen iterations") {
    SolverOptions<double> options;
    options.fixed_iterations = 16;
    const auto report = solve(irrigation_like<double>(10, 5), options);
    CHECK(report.final_mu < 1e-3);
    CHECK(report.iterations.size() == 16);
    // the gap collapses by far more than three orders of magnitude
    CHECK(report.final_mu < 1e-3 * report.iterations.front().mu);
}

TEST_CASE("unconstrained limit matches the dense equality optimum") {
    auto problem = random_cascade<double>(83, 2, 3, 2, 1, 2);
    for (auto& s : problem.subsystems) {
        for (auto& st : s.stages) st.c.array() += 1000.0;
        s.terminal.c.array() += 1000.0;
    }
    const auto qp = casqp_test::assemble_dense_qp(problem);
    const auto reference = casqp_test::equality_qp_solve(qp.H, qp.Aeq, qp.beq);
    REQUIRE(reference.has_value());

    SolverOptions<double> options;
    options.tol_gap = 1e-10;
    options.tol_residual = 1e-9;
    options.max_iterations = 80;
    const auto report = solve(problem, options);
    CHECK(report.status == SolveStatus::Converged);
    CHECK(std::abs(report.objective - reference->first) <=
          1e-6 * (1.0 + std::abs(reference->first)));
}

TEST_CASE("tiny constrained instances match exhaustive active-set enumeration") {
    int checked = 0;
    for (std::uint64_t seed : {90u, 91u, 92u, 93u}) {
        auto problem = random_cascade<double>(seed, 1, 2, 2, 1, 2); // 6 rows
        REQUIRE(casqp_test::tighten_constraints(problem));
        REQUIRE(validate(problem).ok());
        const auto qp = casqp_test::assemble_dense_qp(problem);
        const auto reference = casqp_test::active_set_optimum(qp);
        REQUIRE(reference.has_value());

        SolverOptions<double> options;
        options.tol_gap = 1e-10;
        options.tol_residual = 1e-9;
        options.max_iterations = 100;
        const auto report = solve(problem, options);
        CHECK(report.status == SolveStatus::Converged);
        CHECK(std::abs(report.objective - reference->first) <=
              1e-6 * (1.0 + std::abs(reference->first)));
        ++checked;
    }
    CHECK(checked == 4);
}

TEST_CASE("smallest instances are solved to the brute-force optimum") {
    // scalar 1x1 instance
    auto tiny = random_cascade<double>(2, 1, 1, 1, 1, 2);
    REQUIRE(casqp_test::tighten_constraints(tiny));
    const auto qp = casqp_test::assemble_dense_qp(tiny);
    const auto reference = casqp_test::active_set_optimum(qp);
    REQUIRE(reference.has_value());
    SolverOptions<double> options;
    options.tol_gap = 1e-10;
    options.tol_residual = 1e-9;
    options.max_iterations = 100;
    const auto report = solve(tiny, options);
    CHECK(report.status == SolveStatus::Converged);
    CHECK(std::abs(report.objective - reference->first) <=
          1e-6 * (1.0 + std::abs(reference->first)));
}

TEST_CASE("factoring succeeds at the standard initialization") {
    const auto problem = irrigation_like<double>(10, 5);
    const auto stacked = stack_all(problem);
    const auto it = initialize(problem, stacked);
    CHECK_NOTHROW((void)factor_cascade(stacked, it));
}

TEST_CASE("iterating once k times equals a fixed k-step solve") {
    const auto problem = irrigation_like<double>(3, 3);
    SolverOptions<double> options;

    auto it = initialize(problem);
    std::vector<double> alphas;
    for (int k = 1; k <= 5; ++k) {
        const auto rec = iterate_once(problem, it, options, k);
        alphas.push_back(rec.alpha);
    }

    SolverOptions<double> fixed = options;
    fixed.fixed_iterations = 5;
    const auto report = solve(problem, fixed);
    CHECK(casqp_test::iterate_diff(it, report.final_iterate) == 0.0);
    REQUIRE(report.iterations.size() == 5);
    for (int k = 0; k < 5; ++k) CHECK(report.iterations[size_t(k)].alpha == alphas[size_t(k)]);
}

TEST_CASE("gap decreases after one step on the fixtures") {
    for (auto problem :
         {irrigation_like<double>(4, 3), random_cascade<double>(84, 2, 3, 2, 1, 2)}) {
        auto it = initialize(problem);
        const double mu0 = duality_gap(it);
        SolverOptions<double> options;
        iterate_once(problem, it, options);
        CHECK(duality_gap(it) < mu0);
    }
}

TEST_CASE("structured and dense solver paths produce the same optimum") {
    const auto problem = random_cascade<double>(85, 3, 3, 2, 1, 2);
    SolverOptions<double> options;
    options.tol_gap = 1e-9;
    options.tol_residual = 1e-8;
    options.max_iterations = 80;
    const auto structured = solve(problem, options);
    options.linear_solver = LinearSolver::dense_oracle;
    const auto dense = solve(problem, options);
    CHECK(structured.status == SolveStatus::Converged);
    CHECK(dense.status == SolveStatus::Converged);
    CHECK(std::abs(structured.objective - dense.objective) <=
          1e-6 * (1.0 + std::abs(dense.objective)));
}

TEST_CASE("converged iterates are feasible") {
    const auto problem = irrigation_like<double>(5, 4);
    SolverOptions<double> options;
    options.tol_gap = 1e-8;
    const auto report = solve(problem, options);
    REQUIRE(report.status == SolveStatus::Converged);
    const auto stacked = stack_all(problem);
    const double scale = 1.0 + data_scale(problem);
    for (Index j = 1; j <= problem.count(); ++j) {
        const Vec viol = inequality_residual<double>(
            stacked[size_t(j - 1)], report.trajectory.x[size_t(j - 1)],
            report.trajectory.u[size_t(j - 1)]);
        CHECK(viol.maxCoeff() <= 1e-7 * scale);
        const Vec dyn = dynamics_residual<double>(
            stacked[size_t(j - 1)], report.trajectory.x[size_t(j - 1)],
            j > 1 ? report.trajectory.x[size_t(j - 2)] : Vec(),
            report.trajectory.u[size_t(j - 1)]);
        CHECK(dyn.lpNorm<Eigen::Infinity>() <=
              1e-8 * (1.0 + report.trajectory.x[size_t(j - 1)].lpNorm<Eigen::Infinity>()));
    }
}

TEST_CASE("iteration cap yields MaxIterations with the last iterate kept") {
    const auto problem = irrigation_like<double>(4, 4);
    SolverOptions<double> options;
    options.max_iterations = 1;
    options.tol_gap = 1e-14; // unreachable in one step
    const auto report = solve(problem, options);
    CHECK(report.status == SolveStatus::MaxIterations);
    CHECK(report.final_iterate.sub.size() == 4);
    CHECK(report.final_iterate.interior());
}

TEST_CASE("invalid problems are refused") {
    auto problem = random_cascade<double>(86, 1, 2, 2, 1, 2);
    problem.subsystems[0].stages[0].R.setZero();
    CHECK_THROWS_AS((void)solve(problem), std::invalid_argument);
}

TEST_CASE("solver options are validated") {
    const auto problem = irrigation_like<double>(1, 1);
    SolverOptions<double> options;
    options.sigma_bar = 1.5;
    CHECK_THROWS_AS((void)solve(problem, options), std::invalid_argument);
    options.sigma_bar = 0.1;
    options.tau = 0.0;
    CHECK_THROWS_AS((void)solve(problem, options), std::invalid_argument);
}
