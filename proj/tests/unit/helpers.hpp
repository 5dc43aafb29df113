#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gtvseg/graph.hpp"
#include "gtvseg/matrix.hpp"
#include "gtvseg/rng.hpp"
#include "gtvseg/solver.hpp"

namespace gtv::test {

/// Random connected graph: a spanning path plus each other pair with probability `density`.
inline Graph random_graph(std::size_t n, Rng& rng, double density = 0.4, double wmin = 0.1, double wmax = 2.0) {
    std::vector<UndirectedEdge> edges;
    for (std::size_t x = 0; x + 1 < n; ++x)
        edges.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(x + 1), rng.uniform(wmin, wmax)});
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t y = x + 2; y < n; ++y)
            if (rng.uniform01() < density)
                edges.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), rng.uniform(wmin, wmax)});
    return Graph::from_undirected(n, std::move(edges));
}

inline MatrixD random_points(std::size_t n, std::size_t d, Rng& rng) {
    MatrixD p(n, d);
    for (double& v : p.data()) v = rng.normal();
    return p;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

/// Graph with explicit weighted edges.
inline Graph make_graph(std::size_t n, std::vector<UndirectedEdge> edges) {
    return Graph::from_undirected(n, std::move(edges));
}

inline SolverParams tight_params() {
    SolverParams p;
    p.delta = 1e-12;
    p.max_iters = 200000;
    return p;
}

}  // namespace gtv::test
