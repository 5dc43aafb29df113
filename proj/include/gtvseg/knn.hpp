#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "gtvseg/matrix.hpp"
#include "gtvseg/parallel.hpp"

namespace gtv {

struct Neighbor {
    double dist2 = 0.0;
    std::uint32_t index = 0;

    // Ties in distance go to the smaller node index.
    friend bool operator<(const Neighbor& a, const Neighbor& b) {
        return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
    }
    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Per-node neighbor lists, each sorted nearest first.
using NeighborLists = std::vector<std::vector<Neighbor>>;

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

/// Exact O(N^2 D) nearest neighbors. counts[i] neighbors for query i, self excluded.
inline NeighborLists brute_force_knn(const MatrixD& points, std::span<const std::size_t> counts,
                                     ThreadPool* pool = nullptr) {
    const std::size_t n = points.rows();
    NeighborLists out(n);
    auto query = [&](std::size_t i) {
        std::vector<Neighbor> all;
        all.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            all.push_back({squared_distance(points.row(i), points.row(j)), static_cast<std::uint32_t>(j)});
        }
        const std::size_t k = std::min(counts[i], all.size());
        std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
        all.resize(k);
        out[i] = std::move(all);
    };
    if (pool) {
        pool->parallel_for(n, query);
    } else {
        for (std::size_t i = 0; i < n; ++i) query(i);
    }
    return out;
}

/// Static kd-tree over the rows of a point matrix. Queries are exact and use
/// the same distance expression and tie rule as brute_force_knn.
class KdTree {
public:
    explicit KdTree(const MatrixD& points, std::size_t leaf_size = 12)
        : points_(&points), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
        index_.resize(points.rows());
        std::iota(index_.begin(), index_.end(), 0u);
        if (!index_.empty()) build(0, index_.size());
    }

    /// k nearest neighbors of row `query`, excluding the row itself.
    std::vector<Neighbor> knn(std::size_t query, std::size_t k) const {
        std::priority_queue<Neighbor> heap;  // max-heap on (dist2, index)
        if (k > 0 && !nodes_.empty()) search(0, query, k, heap);
        std::vector<Neighbor> out(heap.size());
        for (std::size_t i = out.size(); i-- > 0;) {
            out[i] = heap.top();
            heap.pop();
        }
        return out;
    }

private:
    struct Node {
        std::size_t begin = 0, end = 0;  // range in index_
        std::size_t dim = 0;
        double split = 0.0;
        std::size_t left = 0, right = 0;  // child node ids; 0 means leaf
    };

    std::size_t build(std::size_t begin, std::size_t end) {
        const std::size_t id = nodes_.size();
        nodes_.push_back({begin, end, 0, 0.0, 0, 0});
        if (end - begin <= leaf_size_) return id;

        const MatrixD& p = *points_;
        std::size_t best_dim = 0;
        double best_spread = -1.0;
        for (std::size_t d = 0; d < p.cols(); ++d) {
            double lo = p(index_[begin], d), hi = lo;
            for (std::size_t i = begin + 1; i < end; ++i) {
                lo = std::min(lo, p(index_[i], d));
                hi = std::max(hi, p(index_[i], d));
            }
            if (hi - lo > best_spread) {
                best_spread = hi - lo;
                best_dim = d;
            }
        }
        if (best_spread <= 0.0) return id;  // all coincident: keep as leaf

        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(index_.begin() + static_cast<std::ptrdiff_t>(begin),
                         index_.begin() + static_cast<std::ptrdiff_t>(mid),
                         index_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::uint32_t a, std::uint32_t b) { return p(a, best_dim) < p(b, best_dim); });
        const double split = p(index_[mid], best_dim);
        const std::size_t left = build(begin, mid);
        const std::size_t right = build(mid, end);
        nodes_[id].dim = best_dim;
        nodes_[id].split = split;
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    void search(std::size_t node_id, std::size_t query, std::size_t k,
                std::priority_queue<Neighbor>& heap) const {
        const Node& node = nodes_[node_id];
        const MatrixD& p = *points_;
        if (node.left == 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const std::uint32_t j = index_[i];
                if (j == query) continue;
                const Neighbor cand{squared_distance(p.row(query), p.row(j)), j};
                if (heap.size() < k) {
                    heap.push(cand);
                } else if (cand < heap.top()) {
                    heap.pop();
                    heap.push(cand);
                }
            }
            return;
        }
        // Left holds values <= split, right holds values >= split.
        const double diff = p(query, node.dim) - node.split;
        const std::size_t near = diff < 0.0 ? node.left : node.right;
        const std::size_t far = diff < 0.0 ? node.right : node.left;
        search(near, query, k, heap);
        // Prune only on a strictly larger plane distance: equal-distance points must
        // stay reachable for the index tie rule.
        if (heap.size() < k || diff * diff <= heap.top().dist2) search(far, query, k, heap);
    }

    const MatrixD* points_;
    std::size_t leaf_size_;
    std::vector<std::uint32_t> index_;
    std::vector<Node> nodes_;
};

/// Exact kNN; uses the kd-tree in low dimension and brute force otherwise.
inline NeighborLists exact_knn(const MatrixD& points, std::span<const std::size_t> counts,
                               ThreadPool* pool = nullptr) {
    if (points.cols() > 12) return brute_force_knn(points, counts, pool);
    KdTree tree(points);
    NeighborLists out(points.rows());
    auto query = [&](std::size_t i) { out[i] = tree.knn(i, counts[i]); };
    if (pool) {
        pool->parallel_for(points.rows(), query);
    } else {
        for (std::size_t i = 0; i < points.rows(); ++i) query(i);
    }
    return out;
}

}  // namespace gtv
