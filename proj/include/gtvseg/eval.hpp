#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gtvseg/calculus.hpp"
#include "gtvseg/error.hpp"
#include "gtvseg/graph.hpp"
#include "gtvseg/solver.hpp"

namespace gtv {

inline constexpr std::size_t kMaxPermutedClasses = 6;

inline std::size_t label_count(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    std::size_t n = 0;
    for (std::size_t l : a) n = std::max(n, l + 1);
    for (std::size_t l : b) n = std::max(n, l + 1);
    return n;
}

/// Fraction of nodes with labels[x] == truth[x]. With `permute`, the maximum
/// over all relabelings of `labels` (exhaustive, at most 6 classes).
inline double accuracy(std::span<const std::size_t> labels, std::span<const std::size_t> truth, bool permute = false) {
    require(labels.size() == truth.size(), ErrorKind::InvalidInput, "label and truth lengths differ");
    if (labels.empty()) return 1.0;
    const auto N = static_cast<double>(labels.size());
    if (!permute) {
        std::size_t ok = 0;
        for (std::size_t x = 0; x < labels.size(); ++x) ok += labels[x] == truth[x];
        return static_cast<double>(ok) / N;
    }
    const std::size_t n = label_count(labels, truth);
    require(n <= kMaxPermutedClasses, ErrorKind::InvalidParameter, "permuted accuracy supports at most 6 classes");
    std::vector<std::size_t> confusion(n * n, 0);
    for (std::size_t x = 0; x < labels.size(); ++x) ++confusion[labels[x] * n + truth[x]];
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    do {
        std::size_t ok = 0;
        for (std::size_t i = 0; i < n; ++i) ok += confusion[i * n + perm[i]];
        best = std::max(best, ok);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / N;
}

/// Accuracy restricted to each ground truth class.
inline std::vector<double> per_class_accuracy(std::span<const std::size_t> labels, std::span<const std::size_t> truth,
                                              std::size_t n_classes) {
    require(labels.size() == truth.size(), ErrorKind::InvalidInput, "label and truth lengths differ");
    std::vector<double> ok(n_classes, 0.0), total(n_classes, 0.0);
    for (std::size_t x = 0; x < labels.size(); ++x) {
        require(truth[x] < n_classes, ErrorKind::InvalidInput, "truth label out of range");
        total[truth[x]] += 1.0;
        ok[truth[x]] += labels[x] == truth[x];
    }
    for (std::size_t i = 0; i < n_classes; ++i) ok[i] = total[i] > 0.0 ? ok[i] / total[i] : 0.0;
    return ok;
}

/// Relabel so that `labels` best matches `truth` (the permutation behind the
/// permuted accuracy).
inline std::vector<std::size_t> align_labels(std::span<const std::size_t> labels, std::span<const std::size_t> truth) {
    const std::size_t n = label_count(labels, truth);
    require(n <= kMaxPermutedClasses, ErrorKind::InvalidParameter, "label alignment supports at most 6 classes");
    std::vector<std::size_t> perm(n), best_perm;
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    bool first = true;
    do {
        std::size_t ok = 0;
        for (std::size_t x = 0; x < labels.size(); ++x) ok += perm[labels[x]] == truth[x];
        if (first || ok > best) {
            best = ok;
            best_perm = perm;
            first = false;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::vector<std::size_t> out(labels.size());
    for (std::size_t x = 0; x < labels.size(); ++x) out[x] = best_perm[labels[x]];
    return out;
}

/// Sum over classes of TV(1[l = i]). A cut edge contributes its weight once
/// for each of its two classes.
inline double tv_energy(const Graph& g, std::span<const std::size_t> labels) {
    require(labels.size() == g.n_nodes(), ErrorKind::InvalidInput, "one label per node required");
    // Accumulated class by class in the order total_variation uses, so the two agree bitwise.
    const std::size_t n = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t ed = 0; ed < g.n_edges(); ++ed)
            if ((labels[g.source(ed)] == i) != (labels[g.target(ed)] == i)) s += g.weight(ed);
        e += 0.5 * s;
    }
    return e;
}

/// Total weight of undirected edges joining different classes.
inline double cut_value(const Graph& g, std::span<const std::size_t> labels) { return 0.5 * tv_energy(g, labels); }

struct EvalReport {
    bool has_truth = false;
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    double tv_energy = 0.0;
    double cut = 0.0;
    double primal = 0.0;         // energy of the thresholded labeling
    double dual = 0.0;
    double duality_gap = 0.0;    // primal - dual
    double binary_difference_final = 0.0;
    std::vector<std::size_t> class_sizes;
    std::size_t iterations = 0;
    bool converged = false;
    std::size_t tied_nodes = 0;
};

struct ReportOptions {
    bool permute = false;  // unsupervised runs: best class permutation
    SizeSpec size;
};

/// Collect metrics of a finished solve.
inline EvalReport report(const SolverResult& result, std::span<const std::size_t> truth, const Graph& g,
                         const RegionCosts& costs, const ReportOptions& opts = {}) {
    const std::size_t n = costs.n_classes();
    require(result.labels.size() == g.n_nodes(), ErrorKind::InvalidInput, "result does not match graph");
    EvalReport r;
    r.has_truth = !truth.empty();
    if (r.has_truth) {
        r.accuracy = accuracy(result.labels, truth, opts.permute);
        const auto aligned = opts.permute ? align_labels(result.labels, truth) : result.labels;
        r.per_class_accuracy = per_class_accuracy(aligned, truth, std::max(n, label_count(aligned, truth)));
    }
    r.tv_energy = tv_energy(g, result.labels);
    r.cut = 0.5 * r.tv_energy;
    r.primal = labeling_energy(g, costs, result.labels, opts.size);
    r.dual = dual_energy(result.state, opts.size);
    r.duality_gap = r.primal - r.dual;
    r.binary_difference_final = binary_difference(result.u);
    r.class_sizes = class_sizes(result.labels, n);
    r.iterations = result.iterations;
    r.converged = result.converged;
    r.tied_nodes = threshold_dual(costs, result.state).tied_nodes;
    return r;
}

namespace detail {

template <typename T>
std::string join(const std::vector<T>& v, char sep, std::streamsize precision = 17) {
    std::ostringstream s;
    s.precision(precision);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s << sep;
        s << v[i];
    }
    return s.str();
}

}  // namespace detail

inline void write_report_txt(std::ostream& os, const EvalReport& r) {
    os.precision(10);
    if (r.has_truth) {
        os << "accuracy: " << r.accuracy << '\n';
        os << "per_class_accuracy: " << detail::join(r.per_class_accuracy, ' ', os.precision()) << '\n';
    }
    os << "tv_energy: " << r.tv_energy << '\n'
       << "cut: " << r.cut << '\n'
       << "primal: " << r.primal << '\n'
       << "dual: " << r.dual << '\n'
       << "duality_gap: " << r.duality_gap << '\n'
       << "binary_difference: " << r.binary_difference_final << '\n'
       << "class_sizes: " << detail::join(r.class_sizes, ' ') << '\n'
       << "iterations: " << r.iterations << '\n'
       << "converged: " << (r.converged ? "yes" : "no") << '\n'
       << "tied_nodes: " << r.tied_nodes << '\n';
}

/// Header plus one row; list fields are ';'-separated.
inline void write_report_csv(std::ostream& os, const EvalReport& r) {
    os.precision(17);
    os << "accuracy,per_class_accuracy,tv_energy,cut,primal,dual,duality_gap,binary_difference,class_sizes,"
          "iterations,converged,tied_nodes\n";
    if (r.has_truth) os << r.accuracy;
    os << ',' << detail::join(r.per_class_accuracy, ';') << ',' << r.tv_energy << ',' << r.cut << ',' << r.primal
       << ',' << r.dual << ',' << r.duality_gap << ',' << r.binary_difference_final << ','
       << detail::join(r.class_sizes, ';') << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << ','
       << r.tied_nodes << '\n';
}

inline void write_trace_csv(std::ostream& os, std::span<const TraceEntry> trace) {
    os.precision(17);
    os << "iter,primal,dual,binary_diff,u_change\n";
    for (const auto& t : trace)
        os << t.iter << ',' << t.primal << ',' << t.dual << ',' << t.binary_diff << ',' << t.u_change << '\n';
}

}  // namespace gtv
