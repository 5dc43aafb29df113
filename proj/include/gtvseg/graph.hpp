#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gtvseg/error.hpp"
#include "gtvseg/knn.hpp"
#include "gtvseg/matrix.hpp"
#include "gtvseg/parallel.hpp"

namespace gtv {

struct UndirectedEdge {
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    double weight = 0.0;
};

/// Immutable symmetric weighted graph in CSR form.
///
/// Every undirected edge {x,y} is stored as two directed edges (x,y) and (y,x)
/// with identical weight; reverse(e) gives the index of the opposite edge.
/// Neighbor lists are sorted by target index, so the edge order (and with it
/// every edge-indexed summation) is fixed by the edge set alone.
class Graph {
public:
    Graph() = default;

    /// Build from undirected edges. Duplicate pairs are merged by taking the
    /// larger weight. Self-loops and negative or non-finite weights are rejected.
    static Graph from_undirected(std::size_t n_nodes, std::vector<UndirectedEdge> edges) {
        for (auto& e : edges) {
            require(e.a < n_nodes && e.b < n_nodes, ErrorKind::InvalidInput, "edge endpoint out of range");
            require(e.a != e.b, ErrorKind::InvalidInput, "self-edge " + std::to_string(e.a));
            require(std::isfinite(e.weight) && e.weight >= 0.0, ErrorKind::InvalidInput,
                    "edge weights must be finite and nonnegative");
            if (e.a > e.b) std::swap(e.a, e.b);
        }
        std::sort(edges.begin(), edges.end(), [](const UndirectedEdge& x, const UndirectedEdge& y) {
            return x.a != y.a ? x.a < y.a : x.b < y.b;
        });
        std::vector<UndirectedEdge> merged;
        merged.reserve(edges.size());
        for (const auto& e : edges) {
            if (!merged.empty() && merged.back().a == e.a && merged.back().b == e.b) {
                merged.back().weight = std::max(merged.back().weight, e.weight);
            } else {
                merged.push_back(e);
            }
        }

        Graph g;
        g.n_nodes_ = n_nodes;
        g.offsets_.assign(n_nodes + 1, 0);
        for (const auto& e : merged) {
            ++g.offsets_[e.a + 1];
            ++g.offsets_[e.b + 1];
        }
        for (std::size_t i = 0; i < n_nodes; ++i) g.offsets_[i + 1] += g.offsets_[i];
        const std::size_t m = g.offsets_[n_nodes];
        g.targets_.resize(m);
        g.sources_.resize(m);
        g.weights_.resize(m);
        g.reverse_.resize(m);
        std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
        for (const auto& e : merged) {
            const std::size_t ab = cursor[e.a]++;
            const std::size_t ba = cursor[e.b]++;
            g.targets_[ab] = e.b;
            g.targets_[ba] = e.a;
            g.weights_[ab] = g.weights_[ba] = e.weight;
        }
        for (std::size_t x = 0; x < n_nodes; ++x) {
            const std::size_t lo = g.offsets_[x], hi = g.offsets_[x + 1];
            std::vector<std::pair<std::uint32_t, double>> row;
            row.reserve(hi - lo);
            for (std::size_t e = lo; e < hi; ++e) row.emplace_back(g.targets_[e], g.weights_[e]);
            std::sort(row.begin(), row.end());
            for (std::size_t e = lo; e < hi; ++e) {
                g.targets_[e] = row[e - lo].first;
                g.weights_[e] = row[e - lo].second;
                g.sources_[e] = static_cast<std::uint32_t>(x);
            }
        }
        for (std::size_t e = 0; e < m; ++e) g.reverse_[e] = g.find_edge(g.targets_[e], g.sources_[e]);
        return g;
    }

    std::size_t n_nodes() const noexcept { return n_nodes_; }
    /// Number of directed edges (twice the undirected count).
    std::size_t n_edges() const noexcept { return targets_.size(); }

    /// Number of neighbors of x.
    std::size_t degree(std::size_t x) const noexcept { return offsets_[x + 1] - offsets_[x]; }
    double weighted_degree(std::size_t x) const noexcept {
        double s = 0.0;
        for (std::size_t e = offsets_[x]; e < offsets_[x + 1]; ++e) s += weights_[e];
        return s;
    }

    std::size_t edge_begin(std::size_t x) const noexcept { return offsets_[x]; }
    std::size_t edge_end(std::size_t x) const noexcept { return offsets_[x + 1]; }
    std::uint32_t source(std::size_t e) const noexcept { return sources_[e]; }
    std::uint32_t target(std::size_t e) const noexcept { return targets_[e]; }
    double weight(std::size_t e) const noexcept { return weights_[e]; }
    std::size_t reverse(std::size_t e) const noexcept { return reverse_[e]; }

    std::span<const std::uint32_t> neighbors(std::size_t x) const noexcept {
        return {targets_.data() + offsets_[x], degree(x)};
    }
    std::span<const double> neighbor_weights(std::size_t x) const noexcept {
        return {weights_.data() + offsets_[x], degree(x)};
    }
    std::span<const double> weights() const noexcept { return weights_; }

    /// Index of directed edge (x,y), or n_edges() when absent.
    std::size_t find_edge(std::size_t x, std::size_t y) const noexcept {
        const auto first = targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[x]);
        const auto last = targets_.begin() + static_cast<std::ptrdiff_t>(offsets_[x + 1]);
        const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(y));
        if (it == last || *it != y) return n_edges();
        return static_cast<std::size_t>(it - targets_.begin());
    }

    bool has_edge(std::size_t x, std::size_t y) const noexcept { return find_edge(x, y) != n_edges(); }

    /// Weight of edge (x,y); 0 when absent.
    double weight(std::size_t x, std::size_t y) const noexcept {
        const std::size_t e = find_edge(x, y);
        return e == n_edges() ? 0.0 : weights_[e];
    }

    /// Sum of w over unordered pairs.
    double total_weight() const noexcept {
        double s = 0.0;
        for (double w : weights_) s += w;
        return 0.5 * s;
    }

    std::vector<UndirectedEdge> undirected_edges() const {
        std::vector<UndirectedEdge> out;
        out.reserve(n_edges() / 2);
        for (std::size_t e = 0; e < n_edges(); ++e) {
            if (sources_[e] < targets_[e]) out.push_back({sources_[e], targets_[e], weights_[e]});
        }
        return out;
    }

    /// Same topology, new per-edge weights (must be symmetric).
    Graph with_weights(std::vector<double> weights) const {
        require(weights.size() == n_edges(), ErrorKind::InvalidInput, "weight vector size mismatch");
        for (std::size_t e = 0; e < n_edges(); ++e) {
            require(std::isfinite(weights[e]) && weights[e] >= 0.0, ErrorKind::InvalidInput,
                    "edge weights must be finite and nonnegative");
            require(weights[e] == weights[reverse_[e]], ErrorKind::InvalidInput, "weights not symmetric");
        }
        Graph g = *this;
        g.weights_ = std::move(weights);
        return g;
    }

    /// Structural check of the class invariants.
    bool is_symmetric() const noexcept {
        for (std::size_t e = 0; e < n_edges(); ++e) {
            const std::size_t r = reverse_[e];
            if (r >= n_edges() || sources_[r] != targets_[e] || targets_[r] != sources_[e]) return false;
            if (weights_[r] != weights_[e]) return false;
        }
        return true;
    }

private:
    std::size_t n_nodes_ = 0;
    std::vector<std::size_t> offsets_{0};
    std::vector<std::uint32_t> targets_;
    std::vector<std::uint32_t> sources_;
    std::vector<double> weights_;
    std::vector<std::size_t> reverse_;
};

/// Component id per node (ids ordered by smallest member).
inline std::vector<std::size_t> connected_components(const Graph& g, std::size_t* count = nullptr) {
    constexpr std::size_t unset = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> comp(g.n_nodes(), unset);
    std::size_t next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < g.n_nodes(); ++s) {
        if (comp[s] != unset) continue;
        comp[s] = next;
        stack.push_back(s);
        while (!stack.empty()) {
            const std::size_t x = stack.back();
            stack.pop_back();
            for (std::uint32_t y : g.neighbors(x)) {
                if (comp[y] == unset) {
                    comp[y] = next;
                    stack.push_back(y);
                }
            }
        }
        ++next;
    }
    if (count) *count = next;
    return comp;
}

/// Edge weight function selection.
struct WeightSpec {
    enum class Kind { Gaussian, Zmp, PointCloud };

    Kind kind = Kind::Gaussian;
    double sigma = 1.0;       // gaussian / pointcloud bandwidth
    std::size_t m = 10;       // zmp: local scale from the M-th neighbor
    double gamma_conv = 0.0;  // pointcloud: convexity term strength

    static WeightSpec gaussian(double sigma) { return {Kind::Gaussian, sigma, 10, 0.0}; }
    static WeightSpec zmp(std::size_t m) { return {Kind::Zmp, 1.0, m, 0.0}; }
    static WeightSpec pointcloud(double sigma, double gamma_conv) {
        return {Kind::PointCloud, sigma, 10, gamma_conv};
    }

    void validate() const {
        switch (kind) {
            case Kind::Gaussian:
            case Kind::PointCloud:
                require(sigma > 0.0 && std::isfinite(sigma), ErrorKind::InvalidParameter, "sigma must be > 0");
                require(std::isfinite(gamma_conv), ErrorKind::InvalidParameter, "gamma_conv must be finite");
                break;
            case Kind::Zmp:
                require(m >= 1, ErrorKind::InvalidParameter, "zmp M must be >= 1");
                break;
        }
    }
};

struct KnnOptions {
    /// Nodes whose neighborhood is widened to boost_factor * k before symmetrization.
    std::vector<std::size_t> boosted;
    std::size_t boost_factor = 1;
    ThreadPool* pool = nullptr;
};

namespace detail {

inline void check_points(const MatrixD& points) {
    require(points.cols() >= 1, ErrorKind::InvalidInput, "points need at least one coordinate");
    for (double v : points.data()) require(std::isfinite(v), ErrorKind::InvalidInput, "non-finite coordinate");
}

}  // namespace detail

/// kNN graph with union symmetrization.
///
/// Node x gets directed edges to its k nearest neighbors (distance ties go to
/// the smaller index, self excluded); the union of both directions forms the
/// undirected edge set. Weights:
///   gaussian    w = exp(-d^2 / sigma^2)
///   zmp         w = exp(-d^2 / (s(x) s(y))), s(x) = distance to the M-th neighbor,
///               then w(x,y) = max(w(x,y), w(y,x))
///   pointcloud  gaussian here; apply pointcloud_weights() once normals exist
inline Graph build_knn_graph(const MatrixD& points, std::size_t k, const WeightSpec& weight,
                             const KnnOptions& options = {}) {
    weight.validate();
    detail::check_points(points);
    const std::size_t n = points.rows();
    require(k >= 1, ErrorKind::InvalidParameter, "k must be >= 1");
    require(k < n, ErrorKind::InvalidParameter,
            "k = " + std::to_string(k) + " requires at least k+1 points, got " + std::to_string(n));
    require(options.boost_factor >= 1, ErrorKind::InvalidParameter, "boost factor must be >= 1");

    std::vector<std::size_t> counts(n, k);
    if (options.boost_factor > 1 && !options.boosted.empty()) {
        require(options.boost_factor * k < n, ErrorKind::InvalidParameter,
                "boost factor * k must be smaller than the number of points");
        for (std::size_t x : options.boosted) {
            require(x < n, ErrorKind::InvalidInput, "boosted node out of range");
            counts[x] = options.boost_factor * k;
        }
    }
    std::vector<double> scale;
    if (weight.kind == WeightSpec::Kind::Zmp) {
        require(weight.m < n, ErrorKind::InvalidParameter, "zmp M must be smaller than the number of points");
        for (auto& c : counts) c = std::max(c, weight.m);
    }

    const NeighborLists lists = exact_knn(points, counts, options.pool);

    if (weight.kind == WeightSpec::Kind::Zmp) {
        scale.resize(n);
        for (std::size_t x = 0; x < n; ++x) {
            scale[x] = std::sqrt(lists[x][weight.m - 1].dist2);
            require(scale[x] > 0.0, ErrorKind::DegenerateScale,
                    "node " + std::to_string(x) + " has zero distance to its M-th neighbor");
        }
    }

    auto directed_weight = [&](std::size_t x, std::size_t y, double d2) {
        switch (weight.kind) {
            case WeightSpec::Kind::Zmp: return std::exp(-d2 / (scale[x] * scale[y]));
            default: return std::exp(-d2 / (weight.sigma * weight.sigma));
        }
    };

    // Lists widened for the zmp scale must not add edges.
    std::vector<UndirectedEdge> edges;
    edges.reserve(n * k);
    std::vector<std::size_t> edge_counts(n, k);
    if (options.boost_factor > 1) {
        for (std::size_t x : options.boosted) edge_counts[x] = options.boost_factor * k;
    }
    for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t j = 0; j < edge_counts[x]; ++j) {
            const Neighbor& nb = lists[x][j];
            const double w = std::max(directed_weight(x, nb.index, nb.dist2), directed_weight(nb.index, x, nb.dist2));
            edges.push_back({static_cast<std::uint32_t>(x), nb.index, w});
        }
    }
    return Graph::from_undirected(n, std::move(edges));
}

/// Rebuild with supervised nodes connected to factor * k neighbors.
inline Graph boost_supervised_edges(const MatrixD& points, std::size_t k, const WeightSpec& weight,
                                    std::span<const std::size_t> supervised, std::size_t factor,
                                    ThreadPool* pool = nullptr) {
    require(factor >= 1, ErrorKind::InvalidParameter, "boost factor must be >= 1");
    require(factor * k < points.rows(), ErrorKind::InvalidParameter,
            "boost factor * k must be smaller than the number of points");
    KnnOptions opts;
    opts.boosted.assign(supervised.begin(), supervised.end());
    opts.boost_factor = factor;
    opts.pool = pool;
    return build_knn_graph(points, k, weight, opts);
}

/// Convexity-aware point cloud weights:
///   w(x,y) = exp(-d^2/sigma^2 + gamma * (v3(y) - v3(x)) / d * sign(y1 - x1))
/// with v the per-node normal (first PCA eigenvector), axis 1 pointing away
/// from the viewer and axis 3 up. The result is symmetrized by max.
inline Graph pointcloud_weights(const Graph& g, const MatrixD& points,
                                std::span<const std::array<double, 3>> normals, double sigma,
                                double gamma_conv) {
    require(points.rows() == g.n_nodes() && points.cols() == 3, ErrorKind::InvalidInput,
            "pointcloud weights need an N x 3 point matrix matching the graph");
    require(normals.size() == g.n_nodes(), ErrorKind::InvalidInput, "one normal per node required");
    require(sigma > 0.0, ErrorKind::InvalidParameter, "sigma must be > 0");
    require(std::isfinite(gamma_conv), ErrorKind::InvalidParameter, "gamma_conv must be finite");

    auto sign = [](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); };
    std::vector<double> directed(g.n_edges());
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        const std::size_t x = g.source(e), y = g.target(e);
        const double d2 = squared_distance(points.row(x), points.row(y));
        const double d = std::sqrt(d2);
        require(d > 0.0, ErrorKind::DegenerateDistance,
                "coincident points " + std::to_string(x) + " and " + std::to_string(y) + " share an edge");
        const double convexity = (normals[y][2] - normals[x][2]) / d * sign(points(y, 0) - points(x, 0));
        directed[e] = std::exp(-d2 / (sigma * sigma) + gamma_conv * convexity);
    }
    std::vector<double> sym(g.n_edges());
    for (std::size_t e = 0; e < g.n_edges(); ++e) sym[e] = std::max(directed[e], directed[g.reverse(e)]);
    return g.with_weights(std::move(sym));
}

/// Debug dump: `src,dst,weight` for every directed edge.
inline void write_edge_list(std::ostream& os, const Graph& g) {
    os.precision(17);
    os << "src,dst,weight\n";
    for (std::size_t e = 0; e < g.n_edges(); ++e) os << g.source(e) << ',' << g.target(e) << ',' << g.weight(e) << '\n';
}

}  // namespace gtv
