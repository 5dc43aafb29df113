#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gtvseg/error.hpp"
#include "gtvseg/graph.hpp"
#include "gtvseg/rng.hpp"
#include "gtvseg/solver.hpp"

namespace gtv {

enum class LaplacianKind { Unnormalized, RandomWalk };

/// Second eigenvector of -Laplacian. For the random walk operator
/// (1/d)(D_w - W), d the neighbor count, the eigenvector is computed for the
/// similar symmetric matrix d^{-1/2}(D_w - W)d^{-1/2} and mapped back.
struct SpectralField {
    std::vector<double> phi;  // unit norm
    double eigenvalue = 0.0;
    double residual = 0.0;    // ||S psi - lambda psi|| of the symmetric problem
    std::size_t matvecs = 0;
    bool connected = true;
};

struct SpectralParams {
    LaplacianKind kind = LaplacianKind::RandomWalk;
    double tol = 1e-8;              // residual relative to max(1, ||S||)
    std::size_t budget = 0;         // matrix applications; 0 selects 10 N
    std::size_t krylov_dim = 120;   // basis size before a restart
    std::uint64_t seed = 0;
};

namespace detail {

struct SymmetricLaplacian {
    const Graph& g;
    std::vector<double> wdeg;
    std::vector<double> scale;  // d^{-1/2} or 1

    SymmetricLaplacian(const Graph& graph, LaplacianKind kind) : g(graph), wdeg(graph.n_nodes()), scale(graph.n_nodes(), 1.0) {
        for (std::size_t x = 0; x < g.n_nodes(); ++x) {
            wdeg[x] = g.weighted_degree(x);
            if (kind == LaplacianKind::RandomWalk)
                scale[x] = g.degree(x) > 0 ? 1.0 / std::sqrt(static_cast<double>(g.degree(x))) : 1.0;
        }
    }

    void apply(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
        for (std::size_t x = 0; x < g.n_nodes(); ++x) {
            double s = wdeg[x] * scale[x] * v[static_cast<Eigen::Index>(x)];
            for (std::size_t e = g.edge_begin(x); e < g.edge_end(x); ++e)
                s -= g.weight(e) * scale[g.target(e)] * v[g.target(e)];
            out[static_cast<Eigen::Index>(x)] = scale[x] * s;
        }
    }

    /// Gershgorin bound on the spectrum.
    double norm_bound() const {
        double b = 0.0;
        for (std::size_t x = 0; x < g.n_nodes(); ++x) {
            double row = wdeg[x] * scale[x] * scale[x];
            for (std::size_t e = g.edge_begin(x); e < g.edge_end(x); ++e) row += g.weight(e) * scale[x] * scale[g.target(e)];
            b = std::max(b, row);
        }
        return b;
    }

    /// Null vector: d^{1/2} 1 (random walk) or 1, normalized.
    Eigen::VectorXd kernel() const {
        Eigen::VectorXd k(static_cast<Eigen::Index>(g.n_nodes()));
        for (std::size_t x = 0; x < g.n_nodes(); ++x) k[static_cast<Eigen::Index>(x)] = 1.0 / scale[x];
        return k.normalized();
    }
};

}  // namespace detail

/// Lanczos with full reorthogonalization, deflated against the known null
/// vector, restarted from the current Ritz vector when the basis is full.
inline SpectralField second_eigenvector(const Graph& g, const SpectralParams& params = {}) {
    const std::size_t N = g.n_nodes();
    require(N >= 2, ErrorKind::InvalidInput, "second eigenvector needs at least two nodes");
    require(params.tol > 0.0, ErrorKind::InvalidParameter, "spectral tolerance must be > 0");
    require(params.krylov_dim >= 2, ErrorKind::InvalidParameter, "krylov dimension must be >= 2");
    const detail::SymmetricLaplacian op(g, params.kind);
    const Eigen::VectorXd k1 = op.kernel();
    const double norm = std::max(1.0, op.norm_bound());
    const std::size_t budget = params.budget ? params.budget : 10 * N;
    const std::size_t m_max = std::min(params.krylov_dim, N - 1);
    const auto n = static_cast<Eigen::Index>(N);

    auto deflate = [&](Eigen::VectorXd& v) { v -= k1.dot(v) * k1; };

    Rng rng(params.seed);
    Eigen::VectorXd start(n);
    for (Eigen::Index i = 0; i < n; ++i) start[i] = rng.normal();
    deflate(start);
    require(start.norm() > 0.0, ErrorKind::InvalidInput, "degenerate start vector");
    start.normalize();

    SpectralField out;
    std::size_t comps = 0;
    connected_components(g, &comps);
    out.connected = comps == 1;

    Eigen::MatrixXd V(n, static_cast<Eigen::Index>(m_max) + 1);
    Eigen::VectorXd w(n);
    Eigen::VectorXd ritz = start;
    double lambda = 0.0, residual = kInfinity;
    while (true) {
        V.col(0) = start;
        std::vector<double> alpha, beta;
        std::size_t m = 0;
        for (; m < m_max && out.matvecs < budget; ++m) {
            op.apply(V.col(static_cast<Eigen::Index>(m)), w);
            ++out.matvecs;
            deflate(w);
            alpha.push_back(V.col(static_cast<Eigen::Index>(m)).dot(w));
            // Two passes of classical Gram-Schmidt against the whole basis.
            for (int pass = 0; pass < 2; ++pass) {
                const auto basis = V.leftCols(static_cast<Eigen::Index>(m) + 1);
                w -= basis * (basis.transpose() * w);
                deflate(w);
            }
            const double b = w.norm();
            if (b <= 1e-14 * norm) {  // invariant subspace found
                ++m;
                break;
            }
            beta.push_back(b);
            V.col(static_cast<Eigen::Index>(m) + 1) = w / b;
        }
        const auto mm = static_cast<Eigen::Index>(alpha.size());
        Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), mm);
        Eigen::VectorXd sub(std::max<Eigen::Index>(mm - 1, 0));
        for (Eigen::Index i = 0; i + 1 < mm; ++i) sub[i] = beta[static_cast<std::size_t>(i)];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
        tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
        lambda = tri.eigenvalues()[0];
        ritz = (V.leftCols(mm) * tri.eigenvectors().col(0)).normalized();
        op.apply(ritz, w);
        ++out.matvecs;
        deflate(w);
        residual = (w - lambda * ritz).norm();
        if (residual <= params.tol * norm) break;
        if (out.matvecs >= budget) throw SpectralConvergenceError(residual, "second eigenvector did not converge");
        start = ritz;
    }

    // Back to the original operator, unit norm, fixed sign (first nonzero entry positive).
    out.phi.resize(N);
    double s2 = 0.0;
    for (std::size_t x = 0; x < N; ++x) {
        out.phi[x] = op.scale[x] * ritz[static_cast<Eigen::Index>(x)];
        s2 += out.phi[x] * out.phi[x];
    }
    const double inv = 1.0 / std::sqrt(s2);
    double sign = 0.0;
    for (double& v : out.phi) {
        v *= inv;
        if (sign == 0.0 && std::abs(v) > 1e-12) sign = v > 0.0 ? 1.0 : -1.0;
    }
    if (sign < 0.0)
        for (double& v : out.phi) v = -v;
    out.eigenvalue = lambda;
    out.residual = residual;
    return out;
}

/// Centroids and shape of the eigenvector region terms.
struct CentroidPair {
    double c1 = 0.0, c2 = 0.0;
    double alpha = 1.0;
    int p = 2;
};

/// f_k(x) = alpha |phi(x) - c_k|^p, N x 2.
inline MatrixD spectral_region_terms(std::span<const double> phi, const CentroidPair& cp) {
    require(cp.p == 1 || cp.p == 2, ErrorKind::InvalidParameter, "p must be 1 or 2");
    require(cp.alpha >= 0.0 && std::isfinite(cp.alpha), ErrorKind::InvalidParameter, "alpha must be >= 0");
    MatrixD f(phi.size(), 2);
    for (std::size_t x = 0; x < phi.size(); ++x) {
        const double d1 = std::abs(phi[x] - cp.c1), d2 = std::abs(phi[x] - cp.c2);
        f(x, 0) = cp.alpha * (cp.p == 2 ? d1 * d1 : d1);
        f(x, 1) = cp.alpha * (cp.p == 2 ? d2 * d2 : d2);
    }
    return f;
}

/// alpha such that the mean region cost at the midpoint centroids equals the
/// mean weighted degree: alpha * mean_x |phi(x) - mean(phi)|^p = mean wdeg.
inline double default_alpha(const Graph& g, std::span<const double> phi, int p = 2) {
    const auto N = static_cast<double>(phi.size());
    double mean = 0.0;
    for (double v : phi) mean += v;
    mean /= N;
    double spread = 0.0;
    for (double v : phi) spread += p == 2 ? (v - mean) * (v - mean) : std::abs(v - mean);
    spread /= N;
    double wdeg = 0.0;
    for (std::size_t x = 0; x < g.n_nodes(); ++x) wdeg += g.weighted_degree(x);
    wdeg /= N;
    return spread > 0.0 ? wdeg / spread : 1.0;
}

struct AlternatingParams {
    double alpha = 1.0;
    int p = 2;
    std::size_t max_outer = 10;
    bool warm_start = false;  // reuse the previous flow state between outer iterations
    SolverParams solver;
};

struct AlternatingResult {
    SolverResult result;
    std::vector<CentroidPair> centroids;  // centroids used by each outer iteration
    std::vector<double> joint_energy;     // energy of each outer iteration's labeling
    std::size_t outer_iterations = 0;
    bool labels_stable = false;
    bool empty_class = false;             // a class emptied; its centroid was kept
};

/// J = sum_x alpha |phi(x) - c_{l(x)}|^p + sum_i TV(1[l = i]).
inline double joint_energy(const Graph& g, std::span<const double> phi, std::span<const std::size_t> labels,
                           const CentroidPair& cp) {
    const RegionCosts costs{spectral_region_terms(phi, cp)};
    return labeling_energy(g, costs, labels);
}

/// Alternate between a two-class solve with costs alpha |phi - c_k|^p and
/// moving each centroid to the mean of phi over its class. Starts from
/// c1 = max phi, c2 = min phi and stops when the labels repeat.
inline AlternatingResult alternating_segmentation(const Graph& g, std::span<const double> phi,
                                                  const AlternatingParams& params) {
    require(phi.size() == g.n_nodes(), ErrorKind::InvalidInput, "one eigenvector entry per node required");
    require(params.max_outer >= 1, ErrorKind::InvalidParameter, "max_outer must be >= 1");
    require(params.p == 2 || (params.p == 1 && params.max_outer == 1), ErrorKind::InvalidParameter,
            "centroid updates need p = 2; p = 1 runs with fixed centroids (max_outer = 1)");
    const auto [mn, mx] = std::minmax_element(phi.begin(), phi.end());
    CentroidPair cp{*mx, *mn, params.alpha, params.p};
    require(cp.c1 != cp.c2, ErrorKind::InvalidInput, "eigenvector is constant");

    AlternatingResult out;
    std::optional<SolverState> warm;
    std::vector<std::size_t> prev;
    for (std::size_t k = 0; k < params.max_outer; ++k) {
        const RegionCosts costs{spectral_region_terms(phi, cp)};
        SolverResult r = solve(g, costs, SizeSpec::none(), params.solver, warm);
        if (params.warm_start) warm = r.state;
        out.centroids.push_back(cp);
        out.joint_energy.push_back(labeling_energy(g, costs, r.labels));
        ++out.outer_iterations;
        const bool stable = r.labels == prev;
        prev = r.labels;
        out.result = std::move(r);
        if (stable) {
            out.labels_stable = true;
            break;
        }
        double sum[2] = {0.0, 0.0};
        std::size_t cnt[2] = {0, 0};
        for (std::size_t x = 0; x < phi.size(); ++x) {
            sum[prev[x]] += phi[x];
            ++cnt[prev[x]];
        }
        if (cnt[0]) cp.c1 = sum[0] / static_cast<double>(cnt[0]);
        if (cnt[1]) cp.c2 = sum[1] / static_cast<double>(cnt[1]);
        out.empty_class = out.empty_class || !cnt[0] || !cnt[1];
    }
    return out;
}

}  // namespace gtv
