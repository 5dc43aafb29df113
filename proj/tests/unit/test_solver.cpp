#include <gtest/gtest.h>

#include <cmath>

#include "gtvseg/datasets.hpp"
#include "gtvseg/eval.hpp"
#include "gtvseg/oracle.hpp"
#include "gtvseg/pipeline.hpp"
#include "gtvseg/solver.hpp"
#include "helpers.hpp"

using namespace gtv;

namespace {

RegionCosts costs_from(std::initializer_list<std::initializer_list<double>> rows) {
    RegionCosts c{MatrixD(rows.size(), rows.begin()->size())};
    std::size_t x = 0;
    for (const auto& r : rows) {
        std::size_t i = 0;
        for (double v : r) c.c(x, i++) = v;
        ++x;
    }
    return c;
}

RegionCosts random_costs(std::size_t N, std::size_t n, Rng& rng, double supervised_fraction = 0.3) {
    RegionCosts c{MatrixD(N, n, 0.0)};
    for (double& v : c.c.data()) v = rng.uniform(0.0, 2.0);
    for (std::size_t x = 0; x < N; ++x)
        if (rng.uniform01() < supervised_fraction) {
            const std::size_t l = rng.below(n);
            for (std::size_t i = 0; i < n; ++i) c.c(x, i) = i == l ? 0.0 : 500.0;
        }
    return c;
}

// K3 with w(1,2)=5, w(1,3)=1, w(2,3)=1; node 1 in class A, node 3 in class B.
Graph k3() { return test::make_graph(3, {{0, 1, 5.0}, {0, 2, 1.0}, {1, 2, 1.0}}); }
RegionCosts k3_costs() {
    const std::vector<SupervisedPoint> sup{{0, 0}, {2, 1}};
    return assemble_costs(3, 2, sup);
}

}  // namespace

TEST(AssembleCosts, Examples) {
    const RegionCosts none = assemble_costs(4, 3, {});
    for (double v : none.c.data()) EXPECT_EQ(v, 0.0);

    const std::vector<SupervisedPoint> sup{{1, 1}};
    const RegionCosts c = assemble_costs(3, 3, sup, SupervisionStrength::finite(500.0));
    EXPECT_EQ(c(1, 0), 500.0);
    EXPECT_EQ(c(1, 1), 0.0);
    EXPECT_EQ(c(1, 2), 500.0);
    EXPECT_EQ(c(0, 0), 0.0);

    MatrixD f(2, 2);
    f(0, 0) = 0.3, f(0, 1) = -1.0, f(1, 0) = 2.0, f(1, 1) = 0.0;
    const RegionCosts r = assemble_costs(2, 2, {}, {}, &f);
    EXPECT_EQ(r.c, f);

    const RegionCosts pinned = assemble_costs(3, 2, sup, SupervisionStrength::pinned());
    EXPECT_TRUE(std::isinf(pinned(1, 0)));

    const std::vector<SupervisedPoint> conflict{{0, 0}, {0, 1}};
    try {
        assemble_costs(3, 2, conflict);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
    }
}

TEST(Solve, TwoNodeSupervised) {
    const Graph g = test::make_graph(2, {{0, 1, 0.01}});
    const std::vector<SupervisedPoint> sup{{0, 0}, {1, 1}};
    const RegionCosts c = assemble_costs(2, 2, sup);
    const SolverResult r = solve(g, c, {}, test::tight_params());
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.labels, (std::vector<std::size_t>{0, 1}));
    EXPECT_NEAR(r.u(0, 0), 1.0, 1e-6);
    EXPECT_NEAR(r.u(1, 1), 1.0, 1e-6);
    EXPECT_NEAR(cut_value(g, r.labels), 0.01, 1e-15);
    EXPECT_NEAR(labeling_energy(g, c, r.labels), 0.02, 1e-15);  // one TV term per class
    const OracleResult o = brute_force_oracle(g, c, {}, 2);
    EXPECT_NEAR(labeling_energy(g, c, r.labels), o.energy, 1e-12);
    EXPECT_EQ(threshold_dual(c, r.state).labels, r.labels);
}

TEST(Solve, TriangleJoinsHeavyEdge) {
    const Graph g = k3();
    const RegionCosts c = k3_costs();
    const SolverResult r = solve(g, c, {}, test::tight_params());
    EXPECT_EQ(r.labels, (std::vector<std::size_t>{0, 0, 1}));
    EXPECT_NEAR(cut_value(g, r.labels), 2.0, 1e-12);
    EXPECT_NEAR(labeling_energy(g, c, r.labels), 4.0, 1e-12);
    const double primal = labeling_energy(g, c, r.labels);
    const double dual = dual_energy(r.state);
    EXPECT_LE(std::abs(primal - dual), 1e-6);
    const OracleResult o = brute_force_oracle(g, c, {}, 2);
    EXPECT_NEAR(o.energy, 4.0, 1e-12);
    EXPECT_EQ(o.labels, r.labels);
}

TEST(ProjectFlow, Examples) {
    EXPECT_EQ(project_flow(0.5), 0.5);
    EXPECT_EQ(project_flow(2.5), 1.0);
    EXPECT_EQ(project_flow(-3.0), -1.0);
}

TEST(PenaltyValue, Examples) {
    const SizeSpec s = SizeSpec::penalty({10, 10}, {20, 20}, 10.0);
    EXPECT_EQ(penalty_value(std::vector<double>{12, 18}, s), 0.0);
    EXPECT_EQ(penalty_value(std::vector<double>{25, 15}, s), 50.0);
    const SizeSpec s2 = SizeSpec::penalty({10, 10}, {20, 20}, 2.0);
    EXPECT_EQ(penalty_value(std::vector<double>{7, 15}, s2), 6.0);
}

TEST(Energies, Examples) {
    Rng rng(31);
    const Graph g = test::random_graph(8, rng);
    const RegionCosts zero{MatrixD(8, 2, 0.0)};
    const std::vector<std::size_t> labels{0, 1, 1, 0, 1, 0, 0, 1};
    EXPECT_NEAR(primal_energy(g, one_hot(labels, 2), zero), 2.0 * cut_value(g, labels), 1e-12);
    EXPECT_NEAR(primal_energy(g, one_hot(labels, 2), zero), tv_energy(g, labels), 1e-12);
    EXPECT_EQ(primal_energy(g, MatrixD(8, 2, 0.5), zero), 0.0);
}

TEST(ThresholdRounding, Examples) {
    MatrixD u(3, 3, 0.0);
    u(0, 0) = 0.2, u(0, 1) = 0.5, u(0, 2) = 0.3;
    u(1, 0) = 0.5, u(1, 1) = 0.5;
    u(2, 2) = 1.0;
    EXPECT_EQ(threshold_rounding(u), (std::vector<std::size_t>{1, 0, 2}));
    const std::vector<std::size_t> l{2, 0, 1, 1};
    EXPECT_EQ(threshold_rounding(one_hot(l, 3)), l);
}

TEST(ThresholdDual, ZeroDualsGiveCostArgmin) {
    const RegionCosts c = costs_from({{3.0, 1.0, 2.0}, {0.5, 0.7, 0.9}, {4.0, 4.0, 1.0}});
    SolverState s;
    s.n_nodes = 3;
    s.n_classes = 3;
    s.div_q.assign(3, VertexFunction(3, 0.0));
    s.rho1.assign(3, 0.0);
    s.rho2.assign(3, 0.0);
    const DualThreshold d = threshold_dual(c, s);
    EXPECT_EQ(d.labels, (std::vector<std::size_t>{1, 0, 2}));
    EXPECT_EQ(d.tied_nodes, 0u);
}

TEST(BinaryDifference, Examples) {
    EXPECT_EQ(binary_difference(one_hot(std::vector<std::size_t>{0, 1, 1}, 2)), 0.0);
    EXPECT_DOUBLE_EQ(binary_difference(MatrixD(1, 2, 0.5)), 0.25);
}

TEST(Oracle, Examples) {
    const Graph single = test::make_graph(1, {});
    const OracleResult o = brute_force_oracle(single, costs_from({{3.0, 1.0}}), {}, 2);
    EXPECT_EQ(o.labels, std::vector<std::size_t>{1});
    EXPECT_EQ(o.energy, 1.0);
    Rng rng(32);
    const Graph big = test::random_graph(24, rng, 0.1);
    try {
        brute_force_oracle(big, RegionCosts{MatrixD(24, 2, 0.0)}, {}, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SizeLimit);
    }
}

TEST(Oracle, ExactSizesEnumerateBalancedLabelings) {
    Rng rng(33);
    const Graph g = test::random_graph(8, rng);
    const RegionCosts c = random_costs(8, 2, rng, 0.0);
    const OracleResult o = brute_force_oracle(g, c, SizeSpec::exact({4, 4}), 2);
    EXPECT_EQ(o.feasible, 70u);
    EXPECT_EQ(class_sizes(o.labels, 2), (std::vector<std::size_t>{4, 4}));
}

TEST(Solve, ExactForTwoClasses) {
    Rng rng(34);
    for (int t = 0; t < 40; ++t) {
        const std::size_t N = 2 + rng.below(11);
        const Graph g = test::random_graph(N, rng);
        const RegionCosts c = random_costs(N, 2, rng);
        const SolverResult r = solve(g, c, {}, test::tight_params());
        const OracleResult o = brute_force_oracle(g, c, {}, 2);
        EXPECT_NEAR(labeling_energy(g, c, r.labels), o.energy, 1e-6 * std::max(1.0, o.energy)) << "trial " << t;
    }
}

TEST(Solve, FeasibilityDualityAndSimplexAtConvergence) {
    Rng rng(35);
    for (int t = 0; t < 25; ++t) {
        const std::size_t N = 4 + rng.below(8), n = 2 + rng.below(3);
        const Graph g = test::random_graph(N, rng);
        const RegionCosts c = random_costs(N, n, rng);
        const SolverResult r = solve(g, c, {}, test::tight_params());
        ASSERT_TRUE(r.converged);
        for (std::size_t i = 0; i < n; ++i) {
            for (double q : r.state.q[i]) EXPECT_LE(std::abs(q), 1.0 + 1e-9);
            for (std::size_t x = 0; x < N; ++x) EXPECT_LE(r.state.p[i][x] - c(x, i), 1e-9);
        }
        for (std::size_t x = 0; x < N; ++x) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                s += r.u(x, i);
                EXPECT_GE(r.u(x, i), -1e-6);
            }
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
        const double primal = labeling_energy(g, c, r.labels);
        const double dual = dual_energy(r.state);
        EXPECT_LE(std::abs(primal - dual) / std::max(1.0, std::abs(dual)), 1e-4) << "trial " << t;
        // relaxed optimum bounds the binary optimum from below
        const OracleResult o = brute_force_oracle(g, c, {}, n);
        EXPECT_LE(primal_energy(g, r.u, c), o.energy + 1e-6);
    }
}

TEST(Solve, RhoStepsAreIdleWithoutSizes) {
    Rng rng(36);
    const Graph g = test::random_graph(10, rng);
    const RegionCosts c = random_costs(10, 3, rng);
    SolverParams a = test::tight_params();
    a.max_iters = 500;
    SolverParams b = a;
    b.force_rho_steps = true;
    const SolverResult ra = solve(g, c, {}, a), rb = solve(g, c, {}, b);
    EXPECT_EQ(ra.u, rb.u);
    EXPECT_EQ(ra.iterations, rb.iterations);
}

TEST(Solve, IntervalSizesRespected) {
    Rng rng(37);
    for (int t = 0; t < 10; ++t) {
        const Graph g = test::random_graph(12, rng);
        const RegionCosts c = random_costs(12, 2, rng, 0.1);
        const SizeSpec s = SizeSpec::interval({5, 5}, {7, 7});
        const SolverResult r = solve(g, c, s, test::tight_params());
        if (!r.converged) continue;
        const auto sizes = class_sizes(threshold_sized(g, c, r.u, s), 2);
        for (std::size_t i = 0; i < 2; ++i) {
            EXPECT_GE(sizes[i] + 1, 5u);
            EXPECT_LE(sizes[i], 8u);
        }
    }
}

TEST(Solve, PenaltyMultipliersStayInRange) {
    Rng rng(38);
    const Graph g = test::random_graph(10, rng);
    const RegionCosts c = random_costs(10, 2, rng, 0.2);
    const SizeSpec s = SizeSpec::penalty({4, 4}, {6, 6}, 2.0);
    const SolverResult r = solve(g, c, s, test::tight_params());
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_GE(r.state.rho1[i], 0.0);
        EXPECT_LE(r.state.rho1[i], 2.0);
        EXPECT_GE(r.state.rho2[i], 0.0);
        EXPECT_LE(r.state.rho2[i], 2.0);
    }
}

TEST(Solve, Errors) {
    const Graph g = test::make_graph(4, {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}});
    const RegionCosts c{MatrixD(4, 2, 0.0)};
    try {
        solve(g, c, SizeSpec::exact({1, 1}), {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InfeasibleSize);
    }
    SolverParams bad;
    bad.c = -1.0;
    EXPECT_THROW(solve(g, c, {}, bad), Error);
    SolverParams huge;
    huge.c = 1e308;
    huge.q_step = 1e-3;
    const RegionCosts big = costs_from({{1e300, 0.0}, {0.0, 1e300}, {1e300, 0.0}, {0.0, 1e300}});
    EXPECT_THROW(solve(g, big, {}, huge), DivergenceError);
}

TEST(Solve, ThreadCountDoesNotChangeIterates) {
    const Dataset ds = three_moons(200, 10, 0.14, 1);
    const Graph g = build_knn_graph(ds.features, 10, WeightSpec::zmp(10));
    std::vector<SupervisedPoint> sup;
    for (std::size_t x : sample_supervision(ds, 0.05, 1)) sup.push_back({x, ds.labels[x]});
    const RegionCosts c = assemble_costs(ds.size(), 3, sup);
    ThreadPool pool(3);
    SolverParams p;
    p.max_iters = 300;
    const SolverResult a = solve(g, c, {}, p);
    p.pool = &pool;
    const SolverResult b = solve(g, c, {}, p);
    EXPECT_EQ(a.u, b.u);
}

TEST(Solve, ThreeMoonsSingleSeed) {
    const Dataset ds = three_moons(1000, 100, 0.14, 0);
    const RunConfig cfg = preset("three-moons");
    const auto sup = draw_supervision(ds, cfg, 0);
    EXPECT_EQ(sup.size(), 150u);
    const SegmentRun run = run_segment(ds.features, 3, sup, cfg);
    EXPECT_TRUE(run.result.converged);
    EXPECT_GE(accuracy(run.labels, ds.labels), 0.97);
    EXPECT_LE(threshold_dual(run.costs, run.result.state).tied_nodes, 3u);
}

TEST(Solve, TraceHasRequestedEntries) {
    const Graph g = k3();
    SolverParams p = test::tight_params();
    p.trace_every = 1;
    const SolverResult r = solve(g, k3_costs(), {}, p);
    ASSERT_EQ(r.trace.size(), r.iterations);
    EXPECT_EQ(r.trace.front().iter, 1u);
}
