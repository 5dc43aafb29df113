#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gtvseg/calculus.hpp"
#include "gtvseg/error.hpp"
#include "gtvseg/graph.hpp"
#include "gtvseg/matrix.hpp"
#include "gtvseg/parallel.hpp"

namespace gtv {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Problem data
// ---------------------------------------------------------------------------

/// Class size information. Sizes count nodes (sum_x u_i(x)).
///
///   None      no size term (gamma = 0)
///   Exact     |V_i| = a_i, stored as lower = upper = a with gamma = inf
///   Interval  lower_i <= |V_i| <= upper_i, gamma = inf
///   Penalty   gamma * (distance of |V_i| to [lower_i, upper_i])
struct SizeSpec {
    enum class Mode { None, Exact, Interval, Penalty };

    Mode mode = Mode::None;
    std::vector<double> lower;
    std::vector<double> upper;
    double gamma = 0.0;

    static SizeSpec none() { return {}; }
    static SizeSpec exact(std::vector<double> sizes) {
        SizeSpec s;
        s.mode = Mode::Exact;
        s.lower = sizes;
        s.upper = std::move(sizes);
        s.gamma = kInfinity;
        return s;
    }
    static SizeSpec interval(std::vector<double> lower, std::vector<double> upper) {
        return {Mode::Interval, std::move(lower), std::move(upper), kInfinity};
    }
    static SizeSpec penalty(std::vector<double> lower, std::vector<double> upper, double gamma) {
        return {Mode::Penalty, std::move(lower), std::move(upper), gamma};
    }

    bool active() const noexcept { return mode != Mode::None; }
    bool hard() const noexcept { return mode == Mode::Exact || mode == Mode::Interval; }

    /// Upper clamp for the size multipliers: 0, gamma, or +inf.
    double multiplier_bound() const noexcept {
        switch (mode) {
            case Mode::None: return 0.0;
            case Mode::Penalty: return gamma;
            default: return kInfinity;
        }
    }

    double lower_bound(std::size_t i) const noexcept { return active() ? lower[i] : 0.0; }
    double upper_bound(std::size_t i) const noexcept { return active() ? upper[i] : 0.0; }

    void validate(std::size_t n_nodes, std::size_t n_classes) const {
        if (!active()) return;
        require(lower.size() == n_classes && upper.size() == n_classes, ErrorKind::InvalidParameter,
                "size bounds need one entry per class");
        double lo_sum = 0.0, hi_sum = 0.0;
        for (std::size_t i = 0; i < n_classes; ++i) {
            require(std::isfinite(lower[i]) && std::isfinite(upper[i]) && lower[i] >= 0.0,
                    ErrorKind::InvalidParameter, "size bounds must be finite and nonnegative");
            require(lower[i] <= upper[i], ErrorKind::InvalidParameter, "size lower bound exceeds upper bound");
            lo_sum += lower[i];
            hi_sum += upper[i];
        }
        const double n = static_cast<double>(n_nodes);
        const bool feasible = lo_sum <= n && n <= hi_sum;
        if (mode == Mode::Penalty) {
            require(gamma > 0.0 && std::isfinite(gamma), ErrorKind::InvalidParameter,
                    "penalty gamma must be positive and finite");
            require(feasible, ErrorKind::InvalidParameter, "penalty bounds must satisfy sum(lower) <= N <= sum(upper)");
        } else {
            require(feasible, ErrorKind::InfeasibleSize,
                    "size bounds admit no partition: sum(lower) = " + std::to_string(lo_sum) +
                        ", sum(upper) = " + std::to_string(hi_sum) + ", N = " + std::to_string(n_nodes));
        }
    }
};

/// Per-node, per-class assignment costs C_i(x), N x n. Entries are finite,
/// except +inf marks a class forbidden for a node (infinite supervision mode).
struct RegionCosts {
    MatrixD c;

    std::size_t n_nodes() const noexcept { return c.rows(); }
    std::size_t n_classes() const noexcept { return c.cols(); }
    double operator()(std::size_t x, std::size_t i) const noexcept { return c(x, i); }
};

struct SupervisedPoint {
    std::size_t node = 0;
    std::size_t label = 0;  // 0-based class
};

/// Weight of supervised points: a finite constant, or pinned (infinite).
struct SupervisionStrength {
    double eta = 500.0;
    bool infinite = false;

    static SupervisionStrength finite(double eta) { return {eta, false}; }
    static SupervisionStrength pinned() { return {0.0, true}; }
};

/// C_i(x) = eta if x is supervised with a class other than i, else 0; plus
/// the optional region term f_i(x).
inline RegionCosts assemble_costs(std::size_t n_nodes, std::size_t n_classes,
                                  std::span<const SupervisedPoint> supervised,
                                  SupervisionStrength strength = {}, const MatrixD* region = nullptr) {
    require(n_classes >= 1, ErrorKind::InvalidParameter, "need at least one class");
    require(strength.infinite || (std::isfinite(strength.eta) && strength.eta >= 0.0),
            ErrorKind::InvalidParameter, "eta must be finite and nonnegative");
    RegionCosts costs{MatrixD(n_nodes, n_classes, 0.0)};
    if (region) {
        require(region->rows() == n_nodes && region->cols() == n_classes, ErrorKind::InvalidInput,
                "region term dimensions do not match");
        for (double v : region->data()) require(std::isfinite(v), ErrorKind::InvalidInput, "non-finite region term");
        costs.c = *region;
    }
    std::vector<std::size_t> seen(n_nodes, n_classes);
    const double penalty = strength.infinite ? kInfinity : strength.eta;
    for (const auto& s : supervised) {
        require(s.node < n_nodes, ErrorKind::InvalidInput, "supervised node out of range");
        require(s.label < n_classes, ErrorKind::InvalidInput, "supervised class out of range");
        require(seen[s.node] == n_classes || seen[s.node] == s.label, ErrorKind::InvalidInput,
                "conflicting supervision for node " + std::to_string(s.node));
        if (seen[s.node] == s.label) continue;
        seen[s.node] = s.label;
        for (std::size_t i = 0; i < n_classes; ++i) {
            if (i != s.label) costs.c(s.node, i) += penalty;
        }
    }
    return costs;
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

struct SolverParams {
    double c = 0.1;                // augmented Lagrangian step
    double q_step = 0.0;           // fixed step for the q-update; 0 selects per-edge steps (see edge_steps)
    std::size_t inner_q_steps = 1;
    double delta = 1e-10;          // stop when mean |u - u_old| per node < delta
    std::size_t max_iters = 10000;
    std::size_t trace_every = 0;   // 0 disables the energy trace
    bool force_rho_steps = false;  // run the size-multiplier steps even without size info
    ThreadPool* pool = nullptr;

    /// Step per directed edge. The q-step is a gradient step on a quadratic
    /// whose Hessian is a Laplacian; with tau(x,y) <= 1/max(wdeg(x), wdeg(y))
    /// every row sum of the step-weighted Laplacian is at most 1, so its
    /// spectrum stays within [0, 2]. Automatic mode takes min(c, that bound).
    std::vector<double> edge_steps(const Graph& g) const {
        std::vector<double> tau(g.n_edges(), q_step);
        if (q_step > 0.0) return tau;
        std::vector<double> wdeg(g.n_nodes());
        for (std::size_t x = 0; x < g.n_nodes(); ++x) wdeg[x] = g.weighted_degree(x);
        for (std::size_t e = 0; e < g.n_edges(); ++e) {
            const double m = std::max(wdeg[g.source(e)], wdeg[g.target(e)]);
            tau[e] = m > 0.0 ? std::min(c, 1.0 / m) : c;
        }
        return tau;
    }

    void validate() const {
        require(c > 0.0 && std::isfinite(c), ErrorKind::InvalidParameter, "c must be > 0");
        require(q_step >= 0.0 && std::isfinite(q_step), ErrorKind::InvalidParameter, "q_step must be >= 0");
        require(delta > 0.0, ErrorKind::InvalidParameter, "delta must be > 0");
        require(max_iters >= 1, ErrorKind::InvalidParameter, "max_iters must be >= 1");
        require(inner_q_steps >= 1, ErrorKind::InvalidParameter, "inner_q_steps must be >= 1");
    }
};

/// Flow variables and multiplier, stored class-major.
struct SolverState {
    std::size_t n_nodes = 0;
    std::size_t n_classes = 0;
    std::vector<VertexFunction> u;      // relaxed labels (Lagrange multiplier)
    VertexFunction ps;                  // source flow
    std::vector<VertexFunction> p;      // sink flows
    std::vector<EdgeFunction> q;        // spatial flows on directed edges
    std::vector<double> rho1, rho2;     // size multipliers
    std::vector<VertexFunction> div_q;  // div q_i for the current q

    MatrixD u_matrix() const {
        MatrixD out(n_nodes, n_classes);
        for (std::size_t i = 0; i < n_classes; ++i)
            for (std::size_t x = 0; x < n_nodes; ++x) out(x, i) = u[i][x];
        return out;
    }
};

struct TraceEntry {
    std::size_t iter = 0;
    double primal = 0.0;
    double dual = 0.0;
    double binary_diff = 0.0;
    double u_change = 0.0;
};

struct SolverResult {
    MatrixD u;                        // relaxed labels, N x n
    std::vector<std::size_t> labels;  // argmax rounding, 0-based
    std::vector<TraceEntry> trace;
    std::size_t iterations = 0;
    bool converged = false;
    double final_u_change = 0.0;
    SolverState state;
};

/// Called after every iteration with (iteration, state). Return false to stop.
using IterationObserver = std::function<bool(std::size_t, const SolverState&)>;

/// Clip to [-1, 1].
inline double project_flow(double s) noexcept {
    if (s > 1.0) return 1.0;
    if (s < -1.0) return -1.0;
    return s;
}

/// Sum over classes of the hinge gamma * dist(size_i, [lower_i, upper_i]).
inline double penalty_value(std::span<const double> sizes, const SizeSpec& size) {
    require(size.mode == SizeSpec::Mode::Penalty, ErrorKind::InvalidParameter, "penalty_value needs penalty mode");
    require(sizes.size() == size.lower.size(), ErrorKind::InvalidInput, "one size per class required");
    double s = 0.0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] > size.upper[i]) s += size.gamma * (sizes[i] - size.upper[i]);
        else if (sizes[i] < size.lower[i]) s += size.gamma * (size.lower[i] - sizes[i]);
    }
    return s;
}

namespace detail {

// u * C with the convention 0 * inf = 0.
inline double cost_term(double u, double c) { return u == 0.0 ? 0.0 : u * c; }

template <typename F>
void for_nodes(ThreadPool* pool, std::size_t n, F&& f) {
    if (pool) pool->parallel_for(n, f);
    else for (std::size_t i = 0; i < n; ++i) f(i);
}

inline void divergence_into(const Graph& g, const EdgeFunction& q, VertexFunction& out, ThreadPool* pool) {
    for_nodes(pool, g.n_nodes(), [&](std::size_t x) {
        double s = 0.0;
        for (std::size_t e = g.edge_begin(x); e < g.edge_end(x); ++e) s += g.weight(e) * (q[e] - q[g.reverse(e)]);
        out[x] = 0.5 * s;
    });
}

}  // namespace detail

/// E(u) = sum_i sum_x C_i(x) u_i(x) + sum_i TV(u_i) [+ size penalty].
inline double primal_energy(const Graph& g, const MatrixD& u, const RegionCosts& costs, const SizeSpec& size = {}) {
    require(u.rows() == g.n_nodes() && u.cols() == costs.n_classes() && costs.n_nodes() == g.n_nodes(),
            ErrorKind::InvalidInput, "primal_energy dimension mismatch");
    const std::size_t n = u.cols();
    double e = 0.0;
    for (std::size_t x = 0; x < g.n_nodes(); ++x)
        for (std::size_t i = 0; i < n; ++i) e += detail::cost_term(u(x, i), costs(x, i));
    for (std::size_t i = 0; i < n; ++i) e += total_variation(g, u.column(i));
    if (size.mode == SizeSpec::Mode::Penalty) {
        std::vector<double> sizes(n, 0.0);
        for (std::size_t x = 0; x < g.n_nodes(); ++x)
            for (std::size_t i = 0; i < n; ++i) sizes[i] += u(x, i);
        e += penalty_value(sizes, size);
    }
    return e;
}

/// Max-flow objective: sum_x p_s(x) + sum_i (rho1_i S^l_i - rho2_i S^u_i).
inline double dual_energy(const SolverState& state, const SizeSpec& size = {}) {
    double e = 0.0;
    for (double v : state.ps) e += v;
    if (size.active()) {
        for (std::size_t i = 0; i < state.n_classes; ++i)
            e += state.rho1[i] * size.lower[i] - state.rho2[i] * size.upper[i];
    }
    return e;
}

/// Dual objective evaluated pointwise from q and rho alone:
///   sum_x min_i (C_i + div q_i + rho2_i - rho1_i)(x) + sum_i (rho1_i S^l_i - rho2_i S^u_i).
/// Any |q| <= 1 and rho in [0, gamma] give a lower bound on the relaxed optimum.
inline double dual_energy_pointwise(const RegionCosts& costs, const SolverState& state, const SizeSpec& size = {}) {
    double e = 0.0;
    for (std::size_t x = 0; x < state.n_nodes; ++x) {
        double best = kInfinity;
        for (std::size_t i = 0; i < state.n_classes; ++i)
            best = std::min(best, costs(x, i) + state.div_q[i][x] + state.rho2[i] - state.rho1[i]);
        e += best;
    }
    if (size.active()) {
        for (std::size_t i = 0; i < state.n_classes; ++i)
            e += state.rho1[i] * size.lower[i] - state.rho2[i] * size.upper[i];
    }
    return e;
}

/// Nearest simplex vertex: argmax_i u_i(x), ties to the lowest class.
inline std::vector<std::size_t> threshold_rounding(const MatrixD& u) {
    std::vector<std::size_t> labels(u.rows(), 0);
    for (std::size_t x = 0; x < u.rows(); ++x) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < u.cols(); ++i)
            if (u(x, i) > u(x, best)) best = i;
        labels[x] = best;
    }
    return labels;
}

/// One-hot encoding of labels, N x n.
inline MatrixD one_hot(std::span<const std::size_t> labels, std::size_t n_classes) {
    MatrixD u(labels.size(), n_classes, 0.0);
    for (std::size_t x = 0; x < labels.size(); ++x) u(x, labels[x]) = 1.0;
    return u;
}

struct DualThreshold {
    std::vector<std::size_t> labels;
    std::size_t tied_nodes = 0;       // nodes with two or more minimal components
    std::size_t multi_tied_nodes = 0; // nodes with three or more
};

/// Labels from the dual: argmin_i (C_i + div q_i + rho2_i - rho1_i)(x), ties
/// to the lowest class. Components within tie_tol of the minimum count as tied.
inline DualThreshold threshold_dual(const RegionCosts& costs, const SolverState& state, double tie_tol = 1e-9) {
    DualThreshold out;
    out.labels.assign(state.n_nodes, 0);
    std::vector<double> v(state.n_classes);
    for (std::size_t x = 0; x < state.n_nodes; ++x) {
        std::size_t best = 0;
        for (std::size_t i = 0; i < state.n_classes; ++i) {
            v[i] = costs(x, i) + state.div_q[i][x] + state.rho2[i] - state.rho1[i];
            if (v[i] < v[best]) best = i;
        }
        out.labels[x] = best;
        std::size_t ties = 0;
        for (std::size_t i = 0; i < state.n_classes; ++i)
            if (std::isfinite(v[i]) && v[i] - v[best] <= tie_tol * std::max(1.0, std::abs(v[best]))) ++ties;
        if (ties >= 2) ++out.tied_nodes;
        if (ties >= 3) ++out.multi_tied_nodes;
    }
    return out;
}

/// b(u) = 1/(2 n N) sum_i sum_x |u^T_i(x) - u_i(x)| with u^T from threshold_rounding.
inline double binary_difference(const MatrixD& u) {
    if (u.rows() == 0 || u.cols() == 0) return 0.0;
    const auto labels = threshold_rounding(u);
    double s = 0.0;
    for (std::size_t x = 0; x < u.rows(); ++x)
        for (std::size_t i = 0; i < u.cols(); ++i) s += std::abs((labels[x] == i ? 1.0 : 0.0) - u(x, i));
    return s / (2.0 * static_cast<double>(u.cols()) * static_cast<double>(u.rows()));
}

/// Energy of a hard labeling: sum_x C_{l(x)}(x) + sum_i TV(1[l = i]), plus the
/// size penalty in penalty mode. Each cut edge counts once per adjacent class.
inline double labeling_energy(const Graph& g, const RegionCosts& costs, std::span<const std::size_t> labels,
                              const SizeSpec& size = {}) {
    double e = 0.0;
    for (std::size_t x = 0; x < labels.size(); ++x) e += costs(x, labels[x]);
    for (std::size_t ed = 0; ed < g.n_edges(); ++ed)
        if (labels[g.source(ed)] != labels[g.target(ed)]) e += g.weight(ed);
    if (size.mode == SizeSpec::Mode::Penalty) {
        std::vector<double> sizes(costs.n_classes(), 0.0);
        for (std::size_t l : labels) sizes[l] += 1.0;
        e += penalty_value(sizes, size);
    }
    return e;
}

/// Size-aware rounding for hard size modes.
///
/// Two classes: nodes are ordered by u_0 (descending, ties by index) and every
/// prefix is a candidate class 0; these include all level sets of u_0. The
/// feasible candidate of lowest energy wins. A level set that meets the size
/// bounds minimizes the same Lagrangian as the relaxed solution and is then a
/// constrained optimum.
/// More classes: greedy assignment in decreasing order of u_i(x) under the
/// upper bounds, then classes below their lower bound take the nodes with the
/// largest u_i from classes that can spare them.
/// Without hard size bounds this is threshold_rounding.
inline std::vector<std::size_t> threshold_sized(const Graph& g, const RegionCosts& costs, const MatrixD& u,
                                                const SizeSpec& size) {
    if (!size.hard()) return threshold_rounding(u);
    const std::size_t N = u.rows(), n = u.cols();
    require(N == g.n_nodes() && costs.n_nodes() == N && costs.n_classes() == n, ErrorKind::InvalidInput,
            "threshold_sized dimension mismatch");
    if (n == 2) {
        std::vector<std::size_t> order(N);
        for (std::size_t x = 0; x < N; ++x) order[x] = x;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return u(a, 0) > u(b, 0); });
        std::vector<std::size_t> labels(N, 1);
        double e = labeling_energy(g, costs, labels);
        double best_e = kInfinity;
        std::size_t best_m = N + 1;
        auto feasible = [&](std::size_t m) {
            const double s0 = static_cast<double>(m), s1 = static_cast<double>(N - m);
            return s0 >= size.lower[0] && s0 <= size.upper[0] && s1 >= size.lower[1] && s1 <= size.upper[1];
        };
        for (std::size_t m = 0;; ++m) {
            if (feasible(m) && e < best_e) {
                best_e = e;
                best_m = m;
            }
            if (m == N) break;
            const std::size_t x = order[m];
            e += costs(x, 0) - costs(x, 1);
            if (std::isnan(e)) e = kInfinity;
            for (std::size_t ed = g.edge_begin(x); ed < g.edge_end(x); ++ed)
                e += 2.0 * g.weight(ed) * (labels[g.target(ed)] == 0 ? -1.0 : 1.0);
            labels[x] = 0;
        }
        require(best_m <= N, ErrorKind::InfeasibleSize, "no level set satisfies the size bounds");
        std::vector<std::size_t> out(N, 1);
        for (std::size_t m = 0; m < best_m; ++m) out[order[m]] = 0;
        return out;
    }

    struct Entry {
        double value;
        std::size_t node, cls;
    };
    std::vector<Entry> entries;
    entries.reserve(N * n);
    for (std::size_t x = 0; x < N; ++x)
        for (std::size_t i = 0; i < n; ++i) entries.push_back({u(x, i), x, i});
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.value > b.value; });
    std::vector<std::size_t> labels(N, n);
    std::vector<double> counts(n, 0.0);
    for (const auto& en : entries) {
        if (labels[en.node] != n || counts[en.cls] + 1.0 > size.upper[en.cls]) continue;
        labels[en.node] = en.cls;
        counts[en.cls] += 1.0;
    }
    for (std::size_t x = 0; x < N; ++x) require(labels[x] != n, ErrorKind::InfeasibleSize, "size bounds too tight");
    for (std::size_t i = 0; i < n; ++i) {
        while (counts[i] < size.lower[i]) {
            std::size_t pick = N;
            for (std::size_t x = 0; x < N; ++x) {
                const std::size_t from = labels[x];
                if (from == i || counts[from] - 1.0 < size.lower[from]) continue;
                if (pick == N || u(x, i) > u(pick, i)) pick = x;
            }
            require(pick != N, ErrorKind::InfeasibleSize, "size bounds too tight");
            counts[labels[pick]] -= 1.0;
            labels[pick] = i;
            counts[i] += 1.0;
        }
    }
    return labels;
}

/// Initial state: u = q = rho = 0, p_s = C of the last class, p_i = p_s.
/// Infinite (forbidden) costs start the source flow at 0.
inline SolverState initial_state(const Graph& g, const RegionCosts& costs) {
    SolverState s;
    s.n_nodes = g.n_nodes();
    s.n_classes = costs.n_classes();
    const std::size_t n = s.n_classes;
    s.u.assign(n, VertexFunction(s.n_nodes, 0.0));
    s.ps.resize(s.n_nodes);
    for (std::size_t x = 0; x < s.n_nodes; ++x) {
        const double c = costs(x, n - 1);
        s.ps[x] = std::isfinite(c) ? c : 0.0;
    }
    s.p.assign(n, s.ps);
    s.q.assign(n, EdgeFunction(g.n_edges(), 0.0));
    s.rho1.assign(n, 0.0);
    s.rho2.assign(n, 0.0);
    s.div_q.assign(n, VertexFunction(s.n_nodes, 0.0));
    return s;
}

/// Augmented Lagrangian max-flow solver.
///
/// Each iteration, with Rho_i = rho2_i - rho1_i:
///   q_i  <- Proj(q_i + tau * grad(div q_i - F_i)),  F_i = p_s - p_i + u_i/c - Rho_i
///   p_s  <- mean_i(p_i + div q_i - u_i/c + Rho_i) + 1/(n c)
///   p_i  <- min(p_s - div q_i + u_i/c - Rho_i, C_i)
///   rho1 <- clamp(mean(-J) + S^l/(c N), 0, gamma)
///   rho2 <- clamp(mean(-M) - S^u/(c N), 0, gamma)
///   u_i  <- u_i - c (div q_i - p_s + p_i + rho2_i - rho1_i)
/// The p_s line is the exact maximizer of the augmented Lagrangian over p_s
/// with the penalty summed over all classes. Without size information the
/// multiplier steps are skipped (they would clamp to zero anyway).
/// Stops when (1/N) sum_i sum_x |u_i - u_i^old| < delta. When the size
/// multipliers are active their change, scaled by c, is added to that sum:
/// with size constraints u can sit still for many iterations while rho drifts.
inline SolverResult solve(const Graph& g, const RegionCosts& costs, const SizeSpec& size,
                          const SolverParams& params, std::optional<SolverState> warm_start = std::nullopt,
                          const IterationObserver& observer = {}) {
    params.validate();
    const std::size_t N = g.n_nodes();
    const std::size_t n = costs.n_classes();
    require(costs.n_nodes() == N, ErrorKind::InvalidInput, "cost rows must match graph nodes");
    require(n >= 1, ErrorKind::InvalidInput, "need at least one class");
    require(N >= 1, ErrorKind::InvalidInput, "empty graph");
    for (double v : costs.c.data())
        require(!std::isnan(v) && v != -kInfinity, ErrorKind::InvalidInput, "costs must be finite or +inf");
    size.validate(N, n);

    SolverState s = warm_start ? std::move(*warm_start) : initial_state(g, costs);
    require(s.n_nodes == N && s.n_classes == n, ErrorKind::InvalidInput, "warm start dimensions do not match");
    if (warm_start)
        for (std::size_t i = 0; i < n; ++i) detail::divergence_into(g, s.q[i], s.div_q[i], params.pool);

    const double c = params.c;
    const double inv_c = 1.0 / c;
    const std::vector<double> tau = params.edge_steps(g);
    const double gamma = size.multiplier_bound();
    const bool rho_steps = size.active() || params.force_rho_steps;
    const double dn = static_cast<double>(N);
    ThreadPool* pool = params.pool;

    SolverResult result;
    VertexFunction work(N);
    std::vector<VertexFunction> u_old(n, VertexFunction(N));
    std::vector<double> rho1_old, rho2_old;

    std::size_t iter = 0;
    for (iter = 1; iter <= params.max_iters; ++iter) {
        // q-update
        for (std::size_t i = 0; i < n; ++i) {
            const double rho = s.rho2[i] - s.rho1[i];
            for (std::size_t step = 0; step < params.inner_q_steps; ++step) {
                detail::for_nodes(pool, N, [&](std::size_t x) {
                    work[x] = s.div_q[i][x] - (s.ps[x] - s.p[i][x] + s.u[i][x] * inv_c - rho);
                });
                EdgeFunction& q = s.q[i];
                detail::for_nodes(pool, N, [&](std::size_t x) {
                    for (std::size_t e = g.edge_begin(x); e < g.edge_end(x); ++e)
                        q[e] = project_flow(q[e] + tau[e] * (work[g.target(e)] - work[x]));
                });
                detail::divergence_into(g, q, s.div_q[i], pool);
            }
        }

        // source flow
        detail::for_nodes(pool, N, [&](std::size_t x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                acc += s.p[i][x] + s.div_q[i][x] - s.u[i][x] * inv_c + s.rho2[i] - s.rho1[i];
            s.ps[x] = acc / static_cast<double>(n) + inv_c / static_cast<double>(n);
        });

        // sink flows
        for (std::size_t i = 0; i < n; ++i) {
            const double rho = s.rho2[i] - s.rho1[i];
            detail::for_nodes(pool, N, [&](std::size_t x) {
                const double h = s.ps[x] - s.div_q[i][x] + s.u[i][x] * inv_c - rho;
                s.p[i][x] = std::min(h, costs(x, i));
            });
        }

        // size multipliers
        rho1_old = s.rho1;
        rho2_old = s.rho2;
        if (rho_steps) {
            for (std::size_t i = 0; i < n; ++i) {
                double sum_neg_j = 0.0;
                for (std::size_t x = 0; x < N; ++x)
                    sum_neg_j += s.p[i][x] + s.div_q[i][x] - s.u[i][x] * inv_c - s.ps[x] + s.rho2[i];
                const double r1 = sum_neg_j / dn + size.lower_bound(i) * inv_c / dn;
                s.rho1[i] = std::min(std::max(r1, 0.0), gamma);

                double sum_neg_m = 0.0;
                for (std::size_t x = 0; x < N; ++x)
                    sum_neg_m += -s.p[i][x] - s.div_q[i][x] + s.u[i][x] * inv_c + s.ps[x] + s.rho1[i];
                const double r2 = sum_neg_m / dn - size.upper_bound(i) * inv_c / dn;
                s.rho2[i] = std::min(std::max(r2, 0.0), gamma);
            }
        }

        // multiplier
        double change = 0.0;
        if (rho_steps) {
            for (std::size_t i = 0; i < n; ++i)
                change += c * (std::abs(s.rho1[i] - rho1_old[i]) + std::abs(s.rho2[i] - rho2_old[i]));
        }
        bool finite = true;
        for (std::size_t i = 0; i < n; ++i) {
            const double rho = s.rho2[i] - s.rho1[i];
            u_old[i] = s.u[i];
            detail::for_nodes(pool, N, [&](std::size_t x) {
                s.u[i][x] -= c * (s.div_q[i][x] - s.ps[x] + s.p[i][x] + rho);
            });
            for (std::size_t x = 0; x < N; ++x) {
                change += std::abs(s.u[i][x] - u_old[i][x]);
                finite = finite && std::isfinite(s.u[i][x]);
            }
        }
        if (!finite) throw DivergenceError(iter, "non-finite labeling function");
        change /= dn;
        result.final_u_change = change;

        const bool done = change < params.delta;
        if (params.trace_every > 0 && (iter % params.trace_every == 0 || done || iter == params.max_iters)) {
            const MatrixD um = s.u_matrix();
            result.trace.push_back({iter, primal_energy(g, um, costs, size), dual_energy(s, size),
                                    binary_difference(um), change});
        }
        if (observer && !observer(iter, s)) break;
        if (done) {
            result.converged = true;
            break;
        }
    }
    result.iterations = std::min(iter, params.max_iters);
    result.u = s.u_matrix();
    result.labels = threshold_rounding(result.u);
    result.state = std::move(s);
    return result;
}

/// Class sizes of a hard labeling.
inline std::vector<std::size_t> class_sizes(std::span<const std::size_t> labels, std::size_t n_classes) {
    std::vector<std::size_t> sizes(n_classes, 0);
    for (std::size_t l : labels) ++sizes[l];
    return sizes;
}

}  // namespace gtv
