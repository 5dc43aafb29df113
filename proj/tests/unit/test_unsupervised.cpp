#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "gtvseg/datasets.hpp"
#include "gtvseg/eval.hpp"
#include "gtvseg/oracle.hpp"
#include "gtvseg/unsupervised.hpp"
#include "helpers.hpp"

using namespace gtv;

namespace {

/// Two cliques of size a and b; optional bridge edge between node 0 and node a.
Graph two_cliques(std::size_t a, std::size_t b, double bridge) {
    std::vector<UndirectedEdge> e;
    auto clique = [&](std::uint32_t lo, std::uint32_t hi) {
        for (std::uint32_t x = lo; x < hi; ++x)
            for (std::uint32_t y = x + 1; y < hi; ++y) e.push_back({x, y, 1.0});
    };
    clique(0, static_cast<std::uint32_t>(a));
    clique(static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a + b));
    if (bridge > 0.0) e.push_back({0, static_cast<std::uint32_t>(a), bridge});
    return test::make_graph(a + b, e);
}

/// Dense random-walk operator (1/d)(D_w - W), d the neighbor count.
Eigen::MatrixXd dense_rw(const Graph& g) {
    const auto N = static_cast<Eigen::Index>(g.n_nodes());
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(N, N);
    for (std::size_t x = 0; x < g.n_nodes(); ++x) {
        const double d = static_cast<double>(g.degree(x));
        for (std::size_t e = g.edge_begin(x); e < g.edge_end(x); ++e) {
            L(x, g.target(e)) -= g.weight(e) / d;
            L(x, x) += g.weight(e) / d;
        }
    }
    return L;
}

/// min over c of the joint energy for a fixed partition: centroids at the class means.
double best_joint(const Graph& g, std::span<const double> phi, std::span<const std::size_t> labels, double alpha) {
    double sum[2] = {0, 0}, cnt[2] = {0, 0};
    for (std::size_t x = 0; x < phi.size(); ++x) {
        sum[labels[x]] += phi[x];
        cnt[labels[x]] += 1;
    }
    const CentroidPair cp{cnt[0] ? sum[0] / cnt[0] : 0.0, cnt[1] ? sum[1] / cnt[1] : 0.0, alpha, 2};
    return joint_energy(g, phi, labels, cp);
}

}  // namespace

TEST(SecondEigenvector, DisconnectedCliques) {
    const Graph g = two_cliques(5, 4, 0.0);
    SpectralParams p;
    p.kind = LaplacianKind::Unnormalized;
    const SpectralField f = second_eigenvector(g, p);
    EXPECT_FALSE(f.connected);
    EXPECT_NEAR(f.eigenvalue, 0.0, 1e-8);
    for (std::size_t x = 1; x < 5; ++x) EXPECT_NEAR(f.phi[x], f.phi[0], 1e-7);
    for (std::size_t x = 6; x < 9; ++x) EXPECT_NEAR(f.phi[x], f.phi[5], 1e-7);
    EXPECT_LT(f.phi[0] * f.phi[5], 0.0);
}

TEST(SecondEigenvector, PathP3) {
    const Graph g = test::make_graph(3, {{0, 1, 1.0}, {1, 2, 1.0}});
    SpectralParams p;
    p.kind = LaplacianKind::Unnormalized;
    const SpectralField f = second_eigenvector(g, p);
    EXPECT_NEAR(f.eigenvalue, 1.0, 1e-9);
    const double s = f.phi[0] > 0 ? 1.0 : -1.0;
    EXPECT_NEAR(s * f.phi[0], 1.0 / std::sqrt(2.0), 1e-8);
    EXPECT_NEAR(f.phi[1], 0.0, 1e-8);
    EXPECT_NEAR(s * f.phi[2], -1.0 / std::sqrt(2.0), 1e-8);
}

TEST(SecondEigenvector, MatchesDenseSolveOnTwoMoons) {
    const Dataset ds = two_moons(300, 2, 0.1, 51);
    const Graph g = build_knn_graph(ds.features, 10, WeightSpec::zmp(10));
    const SpectralField f = second_eigenvector(g);
    ASSERT_TRUE(f.connected);
    const Eigen::MatrixXd L = dense_rw(g);
    Eigen::EigenSolver<Eigen::MatrixXd> es(L);
    std::vector<double> ev;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) ev.push_back(es.eigenvalues()(i).real());
    std::sort(ev.begin(), ev.end());
    EXPECT_NEAR(ev[0], 0.0, 1e-9);
    EXPECT_NEAR(f.eigenvalue, ev[1], 1e-7 * std::max(1.0, ev[1]));
    const Eigen::Map<const Eigen::VectorXd> phi(f.phi.data(), static_cast<Eigen::Index>(f.phi.size()));
    EXPECT_NEAR(phi.norm(), 1.0, 1e-12);
    EXPECT_LE((L * phi - f.eigenvalue * phi).norm(), 1e-6);
}

TEST(SecondEigenvector, MedianSplitSeparatesTwoMoons) {
    // single draws range from about 0.8 to 0.99; the mean over seeds is asserted
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Dataset ds = two_moons(1000, 2, 0.1, seed);
        const Graph g = build_knn_graph(ds.features, 10, WeightSpec::zmp(10));
        const SpectralField f = second_eigenvector(g);
        std::vector<double> sorted = f.phi;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
        const double median = sorted[sorted.size() / 2];
        std::vector<std::size_t> labels(f.phi.size());
        for (std::size_t x = 0; x < labels.size(); ++x) labels[x] = f.phi[x] >= median ? 0 : 1;
        total += accuracy(labels, ds.labels, true);
    }
    EXPECT_GE(total / 10.0, 0.90);
}

TEST(SpectralRegionTerms, Examples) {
    const std::vector<double> phi{0.3, 0.5, -0.1};
    const MatrixD f = spectral_region_terms(phi, {0.5, -0.1, 2.0, 2});
    EXPECT_NEAR(f(0, 0), 0.08, 1e-15);
    EXPECT_EQ(f(1, 0), 0.0);
    EXPECT_EQ(f(2, 1), 0.0);
    const MatrixD z = spectral_region_terms(phi, {0.5, -0.1, 0.0, 2});
    for (double v : z.data()) EXPECT_EQ(v, 0.0);
    const MatrixD l1 = spectral_region_terms(phi, {0.5, -0.1, 1.0, 1});
    EXPECT_NEAR(l1(0, 1), 0.4, 1e-15);
}

TEST(DefaultAlpha, BalancesCostAndDegree) {
    Rng rng(53);
    const Graph g = test::random_graph(12, rng);
    const auto phi = test::random_vector(12, rng);
    const double a = default_alpha(g, phi);
    double mean = 0.0, spread = 0.0, wdeg = 0.0;
    for (double v : phi) mean += v / 12.0;
    for (double v : phi) spread += (v - mean) * (v - mean) / 12.0;
    for (std::size_t x = 0; x < 12; ++x) wdeg += g.weighted_degree(x) / 12.0;
    EXPECT_NEAR(a * spread, wdeg, 1e-12);
}

TEST(Alternating, CliquesConvergeToOptimum) {
    const Graph g = two_cliques(6, 5, 0.05);
    const SpectralField f = second_eigenvector(g);
    AlternatingParams p;
    p.alpha = 2.0 * default_alpha(g, f.phi);
    p.solver = test::tight_params();
    const AlternatingResult r = alternating_segmentation(g, f.phi, p);
    EXPECT_LE(r.outer_iterations, 2u);
    EXPECT_TRUE(r.labels_stable);
    const auto& l = r.result.labels;
    for (std::size_t x = 1; x < 6; ++x) EXPECT_EQ(l[x], l[0]);
    for (std::size_t x = 7; x < 11; ++x) EXPECT_EQ(l[x], l[6]);
    EXPECT_NE(l[0], l[6]);

    // brute force over all partitions with optimal centroids
    double best = kInfinity;
    std::vector<std::size_t> cand(11);
    for (std::uint32_t mask = 0; mask < (1u << 11); ++mask) {
        for (std::size_t x = 0; x < 11; ++x) cand[x] = (mask >> x) & 1u;
        best = std::min(best, best_joint(g, f.phi, cand, p.alpha));
    }
    EXPECT_NEAR(best_joint(g, f.phi, l, p.alpha), best, 1e-9);
}

TEST(Alternating, SingleOuterIterationIsFixedCentroidModel) {
    const Dataset ds = two_moons(100, 2, 0.1, 54);
    const Graph g = build_knn_graph(ds.features, 10, WeightSpec::zmp(10));
    const SpectralField f = second_eigenvector(g);
    AlternatingParams p;
    p.alpha = 0.01 * default_alpha(g, f.phi);
    p.max_outer = 1;
    const AlternatingResult r = alternating_segmentation(g, f.phi, p);
    const auto [mn, mx] = std::minmax_element(f.phi.begin(), f.phi.end());
    const RegionCosts c{spectral_region_terms(f.phi, {*mx, *mn, p.alpha, 2})};
    const SolverResult direct = solve(g, c, {}, p.solver);
    EXPECT_EQ(r.outer_iterations, 1u);
    EXPECT_EQ(r.result.u, direct.u);
    EXPECT_EQ(r.centroids.front().c1, *mx);
    EXPECT_EQ(r.centroids.front().c2, *mn);
}

TEST(Alternating, JointEnergyNonIncreasingWhenStepsExact) {
    Rng rng(55);
    int checked = 0;
    for (int t = 0; t < 30; ++t) {
        const Graph g = test::random_graph(10, rng, 0.3);
        const SpectralField f = second_eigenvector(g);
        AlternatingParams p;
        p.alpha = rng.uniform(0.5, 5.0) * default_alpha(g, f.phi);
        p.max_outer = 6;
        p.solver = test::tight_params();
        const AlternatingResult r = alternating_segmentation(g, f.phi, p);
        bool exact = true;
        for (std::size_t k = 0; k < r.outer_iterations; ++k) {
            const RegionCosts c{spectral_region_terms(f.phi, r.centroids[k])};
            const OracleResult o = brute_force_oracle(g, c, {}, 2);
            exact = exact && std::abs(o.energy - r.joint_energy[k]) <= 1e-7 * std::max(1.0, o.energy);
        }
        if (!exact) continue;
        ++checked;
        for (std::size_t k = 1; k < r.outer_iterations; ++k)
            EXPECT_LE(r.joint_energy[k], r.joint_energy[k - 1] + 1e-9) << "trial " << t << " outer " << k;
    }
    EXPECT_GE(checked, 20);
}

TEST(Alternating, MeanIsOptimalCentroid) {
    Rng rng(56);
    const auto phi = test::random_vector(40, rng);
    double mean = 0.0;
    for (double v : phi) mean += v / 40.0;
    auto cost = [&](double c) {
        double s = 0.0;
        for (double v : phi) s += (v - c) * (v - c);
        return s;
    };
    for (int i = -1000; i <= 1000; ++i) EXPECT_GE(cost(i * 1e-3), cost(mean) - 1e-12);
}

TEST(Alternating, SignFlipSwapsClasses) {
    const Dataset ds = two_moons(150, 2, 0.1, 57);
    const Graph g = build_knn_graph(ds.features, 10, WeightSpec::zmp(10));
    const SpectralField f = second_eigenvector(g);
    std::vector<double> neg(f.phi.size());
    std::transform(f.phi.begin(), f.phi.end(), neg.begin(), [](double v) { return -v; });
    AlternatingParams p;
    p.alpha = 0.01 * default_alpha(g, f.phi);
    p.solver = test::tight_params();
    const AlternatingResult a = alternating_segmentation(g, f.phi, p);
    const AlternatingResult b = alternating_segmentation(g, neg, p);
    std::size_t agree = 0;
    for (std::size_t x = 0; x < f.phi.size(); ++x) agree += a.result.labels[x] != b.result.labels[x];
    EXPECT_EQ(agree, f.phi.size());
}

TEST(Alternating, Errors) {
    const Graph g = two_cliques(3, 3, 0.1);
    const std::vector<double> phi{1, 1, 1, -1, -1, -1};
    AlternatingParams p;
    p.p = 1;
    p.max_outer = 3;
    try {
        alternating_segmentation(g, phi, p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidParameter);
    }
    p.max_outer = 1;
    EXPECT_NO_THROW(alternating_segmentation(g, phi, p));
    p.p = 2;
    EXPECT_THROW(alternating_segmentation(g, std::vector<double>(6, 0.5), p), Error);
}
