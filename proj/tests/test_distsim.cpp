#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "casqp/dist_sim.hpp"
#include "test_support.hpp"

#include <cstdio>
#include <filesystem>

using namespace casqp;
using casqp_test::Mat;
using casqp_test::Vec;

TEST_CASE("distributed iterates reproduce the centralized sequence") {
    const auto problem = irrigation_like<double>(6, 4);
    SolverOptions<double> options;
    options.fixed_iterations = 10;

    auto reference = initialize(problem);
    double worst = 0;
    IterationObserver<double> observer = [&](int k, const Iterate<double>& dist_it) {
        iterate_once(problem, reference, options, k);
        worst = std::max(worst, casqp_test::iterate_diff(dist_it, reference));
    };
    auto [report, log] = run_distributed(problem, options, true, observer);
    CHECK(log.iterations == 10);
    CHECK(worst <= 1e-10);

    SolverOptions<double> central = options;
    const auto creport = solve(problem, central);
    CHECK(report.final_mu == creport.final_mu);
    CHECK(report.objective == creport.objective);
    CHECK(report.status == creport.status);
}

TEST_CASE("message counts match the closed-form formulas") {
    const int N = 4;
    const int iters = 16;
    SolverOptions<double> options;
    options.fixed_iterations = iters;
    auto [report, log] = run_distributed(irrigation_like<double>(N, 5), options);

    // setup: initial states down, scale reduction up
    CHECK(log.count(MessageKind::DownVector, 0) == N - 1);
    CHECK(log.count(MessageKind::ReduceGap, 0) == N - 1);

    // per completed iteration and per link: one of each sweep/reduce message
    // and two broadcasts
    for (int k = 1; k <= iters; ++k) {
        CHECK(log.count(MessageKind::UpCoupling, k) == N - 1);
        CHECK(log.count(MessageKind::UpVector, k) == N - 1);
        CHECK(log.count(MessageKind::DownVector, k) == N - 1);
        CHECK(log.count(MessageKind::ReduceGap, k) == N - 1);
        CHECK(log.count(MessageKind::ReduceAlpha, k) == N - 1);
        CHECK(log.count(MessageKind::Broadcast, k) == 2 * (N - 1));
    }
    CHECK(log.count(MessageKind::UpCoupling) == iters * (N - 1));
    CHECK(log.count(MessageKind::DownVector) == iters * (N - 1) + (N - 1));

    // six rounds of N-1 hops per iteration, two for setup
    CHECK(log.total_rounds == 6 * (N - 1) * iters + 2 * (N - 1));
    CHECK(log.total_rounds <= 6 * N * iters + 2 * N);
}

TEST_CASE("message sizes follow the block dimensions") {
    // n=4, T=5: coupling is 24x24 symmetric = 300 scalars = 2400 bytes,
    // sweep vectors are 24 scalars = 192 bytes
    SolverOptions<double> options;
    options.fixed_iterations = 2;
    auto [report, log] = run_distributed(irrigation_like<double>(3, 5), options);
    for (const auto& r : log.records) {
        if (r.kind == MessageKind::UpCoupling) CHECK(r.bytes == 2400);
        if (r.kind == MessageKind::UpVector) CHECK(r.bytes == 192);
        if (r.kind == MessageKind::DownVector) CHECK(r.bytes == 192);
    }
}

TEST_CASE("single sub-system exchanges no messages") {
    SolverOptions<double> options;
    options.fixed_iterations = 4;
    auto [report, log] = run_distributed(irrigation_like<double>(1, 3), options);
    CHECK(log.records.empty());
    CHECK(log.total_rounds == 0);

    const auto creport = solve(irrigation_like<double>(1, 3), options);
    CHECK(report.final_mu == creport.final_mu);
    CHECK(report.objective == creport.objective);
}

TEST_CASE("non-neighbour traffic aborts the simulation") {
    MessageLog log;
    Channel channel(4, &log);
    CHECK_THROWS_AS(channel.record(1, 1, 3, MessageKind::DownVector, 8), std::logic_error);
    CHECK_THROWS_AS(channel.record(1, 2, 2, MessageKind::DownVector, 8), std::logic_error);
    CHECK_THROWS_AS(channel.record(1, 4, 5, MessageKind::UpVector, 8), std::logic_error);
    CHECK_NOTHROW(channel.record(1, 2, 3, MessageKind::DownVector, 8));
}

TEST_CASE("agents hold only their own model plus the downstream coupling piece") {
    const auto problem = irrigation_like<double>(4, 3);
    std::vector<MatrixX<double>> down;
    for (const auto& st : problem.sub(3).stages) down.push_back(st.E);
    Agent<double> agent(problem.sub(2), down);

    CHECK(agent.index() == 2);
    // own model data is a faithful copy of sub-system 2
    const auto& m = agent.model();
    for (size_t t = 0; t < m.stages.size(); ++t) {
        CHECK((m.stages[t].A.array() == problem.sub(2).stages[t].A.array()).all());
        CHECK((m.stages[t].Q.array() == problem.sub(2).stages[t].Q.array()).all());
    }
    // the shared piece is exactly the downstream neighbour's coupling blocks
    REQUIRE(agent.downstream_coupling_copy().size() == size_t(problem.T));
    for (size_t t = 0; t < size_t(problem.T); ++t)
        CHECK((agent.downstream_coupling_copy()[t].array() ==
               problem.sub(3).stages[t].E.array()).all());
}

TEST_CASE("convergence-terminated runs spend only the reduction pair at exit") {
    const auto problem = irrigation_like<double>(3, 3);
    SolverOptions<double> options; // convergence mode
    auto [report, log] = run_distributed(problem, options);
    REQUIRE(report.status == SolveStatus::Converged);
    const int last = log.iterations + 1;
    CHECK(log.count(MessageKind::ReduceGap, last) == 2);
    CHECK(log.count(MessageKind::Broadcast, last) == 2);
    CHECK(log.count(MessageKind::UpCoupling, last) == 0);
    CHECK(log.count(MessageKind::DownVector, last) == 0);

    const auto creport = solve(problem, options);
    CHECK(report.final_mu == creport.final_mu);
    CHECK(report.objective == creport.objective);
    CHECK(int(report.iterations.size()) == int(creport.iterations.size()));
}

TEST_CASE("message statistics and CSV export") {
    SolverOptions<double> options;
    options.fixed_iterations = 3;
    const int N = 3;
    auto [report, log] = run_distributed(irrigation_like<double>(N, 5), options);

    const auto stats = message_stats(log, N - 1);
    CHECK(stats.iterations == 3);
    CHECK(stats.count_by_kind[size_t(int(MessageKind::UpCoupling))] == 3 * (N - 1));
    // the coupling matrix dominates the per-link traffic
    CHECK(stats.bytes_by_kind[size_t(int(MessageKind::UpCoupling))] >
          stats.bytes_by_kind[size_t(int(MessageKind::UpVector))]);

    const std::string path =
        (std::filesystem::temp_directory_path() / "casqp_msgs.csv").string();
    write_message_csv(log, path);
    std::ifstream in(path);
    std::string line;
    long up_rows = 0, lines = 0;
    while (std::getline(in, line)) {
        ++lines;
        if (line.find("UpCoupling") != std::string::npos) ++up_rows;
    }
    CHECK(up_rows == 3 * (N - 1));
    CHECK(lines == long(log.records.size()) + 1);
    std::remove(path.c_str());
}
