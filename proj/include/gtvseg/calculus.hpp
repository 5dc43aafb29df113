#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "gtvseg/error.hpp"
#include "gtvseg/graph.hpp"

namespace gtv {

/// One value per node.
using VertexFunction = std::vector<double>;
/// One value per directed edge, indexed like Graph edges.
using EdgeFunction = std::vector<double>;

/// Exponents of the operator family: vertex measure d(x)^r and edge
/// weighting w^q. d(x) is the neighbor count.
struct CalculusParams {
    double r = 0.0;      // in [0, 1]
    double q_exp = 1.0;  // in [1/2, 1]

    void validate() const {
        require(r >= 0.0 && r <= 1.0, ErrorKind::InvalidParameter, "r must lie in [0,1]");
        require(q_exp >= 0.5 && q_exp <= 1.0, ErrorKind::InvalidParameter, "q must lie in [1/2,1]");
    }
};

namespace detail {

inline double degree_power(const Graph& g, std::size_t x, double r) {
    if (r == 0.0) return 1.0;
    return std::pow(static_cast<double>(g.degree(x)), r);
}

inline void check_vertex(const Graph& g, std::span<const double> u) {
    require(u.size() == g.n_nodes(), ErrorKind::InvalidInput, "vertex function size mismatch");
}

inline void check_edge(const Graph& g, std::span<const double> phi) {
    require(phi.size() == g.n_edges(), ErrorKind::InvalidInput, "edge function size mismatch");
}

}  // namespace detail

/// (grad u)(x,y) = w^(1-q) (u(y) - u(x))
inline EdgeFunction gradient(const Graph& g, std::span<const double> u, const CalculusParams& p = {}) {
    p.validate();
    detail::check_vertex(g, u);
    EdgeFunction out(g.n_edges());
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        const double scale = p.q_exp == 1.0 ? 1.0 : std::pow(g.weight(e), 1.0 - p.q_exp);
        out[e] = scale * (u[g.target(e)] - u[g.source(e)]);
    }
    return out;
}

/// (div phi)(x) = 1/(2 d(x)^r) sum_y w^q (phi(x,y) - phi(y,x)). Isolated nodes get 0.
inline VertexFunction divergence(const Graph& g, std::span<const double> phi, const CalculusParams& p = {}) {
    p.validate();
    detail::check_edge(g, phi);
    VertexFunction out(g.n_nodes(), 0.0);
    for (std::size_t x = 0; x < g.n_nodes(); ++x) {
        if (g.degree(x) == 0) continue;
        double s = 0.0;
        for (std::size_t e = g.edge_begin(x); e < g.edge_end(x); ++e) {
            const double wq = p.q_exp == 1.0 ? g.weight(e) : std::pow(g.weight(e), p.q_exp);
            s += wq * (phi[e] - phi[g.reverse(e)]);
        }
        out[x] = s / (2.0 * detail::degree_power(g, x, p.r));
    }
    return out;
}

/// TV(u) = 1/2 sum over ordered pairs of w^q |u(y) - u(x)|.
inline double total_variation(const Graph& g, std::span<const double> u, const CalculusParams& p = {}) {
    p.validate();
    detail::check_vertex(g, u);
    double s = 0.0;
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        const double wq = p.q_exp == 1.0 ? g.weight(e) : std::pow(g.weight(e), p.q_exp);
        s += wq * std::abs(u[g.target(e)] - u[g.source(e)]);
    }
    return 0.5 * s;
}

/// (Lap u)(x) = sum_y w(x,y)/d(x)^r (u(y) - u(x)). Isolated nodes get 0.
inline VertexFunction laplacian_apply(const Graph& g, std::span<const double> u, const CalculusParams& p = {}) {
    p.validate();
    detail::check_vertex(g, u);
    VertexFunction out(g.n_nodes(), 0.0);
    for (std::size_t x = 0; x < g.n_nodes(); ++x) {
        if (g.degree(x) == 0) continue;
        double s = 0.0;
        for (std::size_t e = g.edge_begin(x); e < g.edge_end(x); ++e) s += g.weight(e) * (u[g.target(e)] - u[x]);
        out[x] = s / detail::degree_power(g, x, p.r);
    }
    return out;
}

/// <u,v>_V = sum_x u v d(x)^r
inline double inner_product_vertex(const Graph& g, std::span<const double> u, std::span<const double> v,
                                   const CalculusParams& p = {}) {
    p.validate();
    detail::check_vertex(g, u);
    detail::check_vertex(g, v);
    double s = 0.0;
    for (std::size_t x = 0; x < g.n_nodes(); ++x) s += u[x] * v[x] * detail::degree_power(g, x, p.r);
    return s;
}

/// <phi,psi>_E = 1/2 sum over directed edges of phi psi w^(2q-1)
inline double inner_product_edge(const Graph& g, std::span<const double> phi, std::span<const double> psi,
                                 const CalculusParams& p = {}) {
    p.validate();
    detail::check_edge(g, phi);
    detail::check_edge(g, psi);
    double s = 0.0;
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        const double we = p.q_exp == 1.0 ? g.weight(e) : std::pow(g.weight(e), 2.0 * p.q_exp - 1.0);
        s += phi[e] * psi[e] * we;
    }
    return 0.5 * s;
}

/// max over directed edges of |phi|
inline double infinity_norm(std::span<const double> phi) {
    double m = 0.0;
    for (double v : phi) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace gtv
