#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "gtvseg/error.hpp"
#include "gtvseg/graph.hpp"
#include "gtvseg/solver.hpp"

namespace gtv {

struct OracleResult {
    std::vector<std::size_t> labels;
    double energy = kInfinity;
    std::size_t feasible = 0;  // labelings satisfying the size spec
};

inline constexpr double kOracleLimit = 1e7;

/// Exhaustive minimum of the binary problem over all n^N labelings that
/// satisfy the size spec (hard modes filter, penalty mode adds the hinge).
/// The first minimizer in lexicographic order (node 0 most significant) wins.
inline OracleResult brute_force_oracle(const Graph& g, const RegionCosts& costs, const SizeSpec& size,
                                       std::size_t n_classes) {
    const std::size_t N = g.n_nodes();
    require(costs.n_nodes() == N && costs.n_classes() == n_classes, ErrorKind::InvalidInput,
            "oracle cost dimensions do not match");
    require(n_classes >= 1, ErrorKind::InvalidParameter, "need at least one class");
    require(std::pow(static_cast<double>(n_classes), static_cast<double>(N)) <= kOracleLimit, ErrorKind::SizeLimit,
            "brute force over " + std::to_string(n_classes) + "^" + std::to_string(N) + " labelings exceeds 1e7");
    if (size.active()) {
        require(size.lower.size() == n_classes && size.upper.size() == n_classes, ErrorKind::InvalidParameter,
                "size bounds need one entry per class");
    }

    OracleResult best;
    std::vector<std::size_t> labels(N, 0);
    std::vector<double> counts(n_classes, 0.0);
    counts[0] = static_cast<double>(N);

    // Running energy without the size term, updated per label change.
    double base = 0.0;
    for (std::size_t x = 0; x < N; ++x) base += costs(x, 0);

    auto relabel = [&](std::size_t x, std::size_t to) {
        const std::size_t from = labels[x];
        base += costs(x, to) - costs(x, from);
        if (std::isnan(base)) base = kInfinity;
        for (std::size_t e = g.edge_begin(x); e < g.edge_end(x); ++e) {
            const std::size_t y = labels[g.target(e)];
            // Each undirected cut edge appears twice among the directed edges.
            base += 2.0 * g.weight(e) * (static_cast<double>(y != to) - static_cast<double>(y != from));
        }
        counts[from] -= 1.0;
        counts[to] += 1.0;
        labels[x] = to;
    };

    bool has_inf = false;
    for (double v : costs.c.data()) has_inf = has_inf || std::isinf(v);

    for (;;) {
        bool ok = true;
        if (size.hard()) {
            for (std::size_t i = 0; i < n_classes && ok; ++i)
                ok = counts[i] >= size.lower[i] && counts[i] <= size.upper[i];
        }
        if (ok) {
            ++best.feasible;
            // Infinite costs break the incremental sum; recompute exactly.
            double e = has_inf ? labeling_energy(g, costs, labels) : base;
            if (size.mode == SizeSpec::Mode::Penalty) e += penalty_value(counts, size);
            if (e < best.energy) {
                best.energy = e;
                best.labels = labels;
            }
        }
        // Odometer increment, last node least significant.
        std::size_t x = N;
        while (x > 0) {
            --x;
            if (labels[x] + 1 < n_classes) {
                relabel(x, labels[x] + 1);
                break;
            }
            relabel(x, 0);
            if (x == 0) {
                x = N + 1;  // wrapped
                break;
            }
        }
        if (x == N + 1 || N == 0) break;
    }
    if (best.labels.empty()) {
        require(best.feasible > 0, ErrorKind::InfeasibleSize, "no labeling satisfies the size constraints");
        fail(ErrorKind::InvalidInput, "every labeling has infinite energy");
    }
    // Re-evaluate the winner from scratch so accumulated rounding does not leak out.
    best.energy = labeling_energy(g, costs, best.labels, size);
    return best;
}

}  // namespace gtv
