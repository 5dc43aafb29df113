#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gtvseg/config.hpp"
#include "gtvseg/datasets.hpp"
#include "gtvseg/error.hpp"
#include "gtvseg/eval.hpp"
#include "gtvseg/graph.hpp"
#include "gtvseg/region_terms.hpp"
#include "gtvseg/solver.hpp"
#include "gtvseg/unsupervised.hpp"

namespace gtv {

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct GraphConfig {
    std::size_t k = 10;
    WeightSpec weight = WeightSpec::zmp(10);
    std::size_t boost = 2;  // neighborhood factor for supervised nodes
};

struct SupervisionConfig {
    double fraction = 0.05;
    double eta = 500.0;  // +inf pins supervised nodes
    bool biased = false; // restrict to a band of second eigenvector values
    double band_lo = 0.0, band_hi = 0.0;
};

/// Point cloud pipeline settings. Lengths are relative to s, the mean
/// distance between graph neighbors, so one preset covers any sampling density.
struct PointCloudConfig {
    double sigma_scale = 1.5;         // sigma = sigma_scale * s
    double gamma_scale = 0.2;         // gamma_conv = gamma_scale * s
    std::size_t height_k = 1500;      // neighborhood of the height estimate; 0 keeps the PCA mean
    double height_quantile = 0.05;    // < 0 averages instead
    double c_mix = 0.1;
    double theta = 3.0;
    double lambda_g = 0.002, lambda_h = 0.002, lambda_v = 20.0, lambda_v2 = 8.0, lambda_smoke = 4.0;  // units of s^2
    std::vector<RegionClass> classes{RegionClass::Ground, RegionClass::Human, RegionClass::Vegetation};

    RegionTermConfig region_config(double s) const {
        RegionTermConfig r;
        const double s2 = s * s;
        r.lambda_g = lambda_g * s2;
        r.lambda_h = lambda_h * s2;
        r.lambda_v = lambda_v * s2;
        r.lambda_v2 = lambda_v2 * s2;
        r.lambda_smoke = lambda_smoke * s2;
        r.c_mix = c_mix;
        r.theta = theta;
        return r;
    }
};

struct UnsupConfig {
    LaplacianKind laplacian = LaplacianKind::RandomWalk;
    double alpha = 0.0;          // > 0 fixes alpha
    double alpha_scale = 1.0;    // otherwise alpha = alpha_scale * default_alpha
    int p = 2;
    std::size_t outer_iters = 10;
    bool warm_start = false;
};

struct RunConfig {
    std::string preset;
    GraphConfig graph;
    SolverParams solver;
    SupervisionConfig supervision;
    SizeSpec size;
    PointCloudConfig cloud;
    UnsupConfig unsup;
    // Generator settings for synthetic presets.
    std::size_t n_per_class = 1000;
    std::size_t dims = 100;
    double noise = 0.14;
};

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"three-moons", "two-moons", "mnist", "mnist-subset", "coil", "landsat", "pointcloud"};
    return names;
}

/// Parameters per dataset: c and the local scale neighbor M follow the
/// published settings, k = M, eta = 500. mnist-subset adapts mnist to the
/// digits 4/9 sample shipped in data/mnist.
inline RunConfig preset(const std::string& name) {
    RunConfig r;
    r.preset = name;
    auto zmp = [&](std::size_t m, double c, double fraction) {
        r.graph.k = m;
        r.graph.weight = WeightSpec::zmp(m);
        r.solver.c = c;
        r.supervision.fraction = fraction;
    };
    if (name == "three-moons") {
        zmp(10, 0.1, 0.05);
    } else if (name == "two-moons") {
        zmp(10, 0.1, 0.05);
        r.n_per_class = 1000;
        r.dims = 2;
        r.noise = 0.1;
        r.unsup.alpha_scale = 0.0018;
    } else if (name == "mnist") {
        zmp(8, 0.05, 0.035);
    } else if (name == "mnist-subset") {
        // Two digits, about 2000 images: with k = 8 and boost 2 the cut around
        // each supervised node is cheaper than the class boundary, so the
        // minimizer is the trivial labeling. A sparser graph and wider
        // supervised neighborhoods restore the boundary as the cheaper cut.
        zmp(8, 0.05, 0.035);
        r.graph.k = 5;
        r.graph.boost = 8;
    } else if (name == "coil") {
        zmp(4, 0.03, 0.10);
    } else if (name == "landsat") {
        zmp(4, 0.3, 0.10);
    } else if (name == "pointcloud") {
        r.graph.k = 20;
        r.graph.weight = WeightSpec::pointcloud(1.0, 0.0);
        r.graph.boost = 1;
        r.solver.c = 0.1;
    } else {
        fail(ErrorKind::InvalidConfig, "unknown preset '" + name + "'");
    }
    return r;
}

inline const std::set<std::string>& config_keys() {
    static const std::set<std::string> keys{
        "preset", "c", "delta", "max_iters", "q_step", "inner_q_steps", "trace_every", "eta",
        "size.mode", "size.lower", "size.upper", "size.gamma",
        "graph.k", "graph.weight", "graph.sigma", "graph.m", "graph.boost",
        "supervised", "supervision.strategy", "supervision.band_lo", "supervision.band_hi",
        "data.n_per_class", "data.dims", "data.noise",
        "pointcloud.sigma_scale", "pointcloud.gamma_scale", "pointcloud.height_k", "pointcloud.height_quantile",
        "region.c_mix", "region.theta", "region.lambda_g", "region.lambda_h", "region.lambda_v", "region.lambda_v2",
        "region.lambda_smoke", "region.classes",
        "unsup.alpha", "unsup.alpha_scale", "unsup.p", "unsup.outer_iters", "unsup.laplacian", "unsup.warm_start"};
    return keys;
}

/// Start from `base` and apply every key in `cfg`.
inline RunConfig apply_config(RunConfig r, const Config& cfg) {
    cfg.check_keys(config_keys());
    r.solver.c = cfg.get_double("c", r.solver.c);
    r.solver.delta = cfg.get_double("delta", r.solver.delta);
    r.solver.max_iters = cfg.get_size("max_iters", r.solver.max_iters);
    r.solver.q_step = cfg.get_double("q_step", r.solver.q_step);
    r.solver.inner_q_steps = cfg.get_size("inner_q_steps", r.solver.inner_q_steps);
    r.solver.trace_every = cfg.get_size("trace_every", r.solver.trace_every);
    r.supervision.eta = cfg.get_double("eta", r.supervision.eta);

    r.graph.k = cfg.get_size("graph.k", r.graph.k);
    r.graph.boost = cfg.get_size("graph.boost", r.graph.boost);
    const std::string weight = cfg.get_string("graph.weight", "");
    if (weight == "gaussian") r.graph.weight.kind = WeightSpec::Kind::Gaussian;
    else if (weight == "zmp") r.graph.weight.kind = WeightSpec::Kind::Zmp;
    else if (weight == "pointcloud") r.graph.weight.kind = WeightSpec::Kind::PointCloud;
    else require(weight.empty(), ErrorKind::InvalidConfig, "graph.weight must be gaussian, zmp or pointcloud");
    r.graph.weight.sigma = cfg.get_double("graph.sigma", r.graph.weight.sigma);
    r.graph.weight.m = cfg.get_size("graph.m", r.graph.weight.m);

    r.supervision.fraction = cfg.get_double("supervised", r.supervision.fraction);
    const std::string strategy = cfg.get_string("supervision.strategy", r.supervision.biased ? "biased" : "uniform");
    require(strategy == "uniform" || strategy == "biased", ErrorKind::InvalidConfig,
            "supervision.strategy must be uniform or biased");
    r.supervision.biased = strategy == "biased";
    r.supervision.band_lo = cfg.get_double("supervision.band_lo", r.supervision.band_lo);
    r.supervision.band_hi = cfg.get_double("supervision.band_hi", r.supervision.band_hi);

    const std::string mode = cfg.get_string("size.mode", "");
    if (!mode.empty()) {
        const auto lower = cfg.get_list("size.lower");
        const auto upper = cfg.get_list("size.upper");
        if (mode == "none") r.size = SizeSpec::none();
        else if (mode == "exact") r.size = SizeSpec::exact(lower);
        else if (mode == "interval") r.size = SizeSpec::interval(lower, upper);
        else if (mode == "penalty") r.size = SizeSpec::penalty(lower, upper, cfg.get_double("size.gamma", 10.0));
        else fail(ErrorKind::InvalidConfig, "size.mode must be none, exact, interval or penalty");
    }

    r.n_per_class = cfg.get_size("data.n_per_class", r.n_per_class);
    r.dims = cfg.get_size("data.dims", r.dims);
    r.noise = cfg.get_double("data.noise", r.noise);

    auto& pc = r.cloud;
    pc.sigma_scale = cfg.get_double("pointcloud.sigma_scale", pc.sigma_scale);
    pc.gamma_scale = cfg.get_double("pointcloud.gamma_scale", pc.gamma_scale);
    pc.height_k = cfg.get_size("pointcloud.height_k", pc.height_k);
    pc.height_quantile = cfg.get_double("pointcloud.height_quantile", pc.height_quantile);
    pc.c_mix = cfg.get_double("region.c_mix", pc.c_mix);
    pc.theta = cfg.get_double("region.theta", pc.theta);
    pc.lambda_g = cfg.get_double("region.lambda_g", pc.lambda_g);
    pc.lambda_h = cfg.get_double("region.lambda_h", pc.lambda_h);
    pc.lambda_v = cfg.get_double("region.lambda_v", pc.lambda_v);
    pc.lambda_v2 = cfg.get_double("region.lambda_v2", pc.lambda_v2);
    pc.lambda_smoke = cfg.get_double("region.lambda_smoke", pc.lambda_smoke);
    if (cfg.has("region.classes")) {
        pc.classes.clear();
        std::stringstream ss(cfg.get_string("region.classes", ""));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok.erase(0, tok.find_first_not_of(' '));
            tok.erase(tok.find_last_not_of(' ') + 1);
            pc.classes.push_back(parse_region_class(tok));
        }
    }

    auto& us = r.unsup;
    us.alpha = cfg.get_double("unsup.alpha", us.alpha);
    us.alpha_scale = cfg.get_double("unsup.alpha_scale", us.alpha_scale);
    us.p = static_cast<int>(cfg.get_size("unsup.p", static_cast<std::size_t>(us.p)));
    us.outer_iters = cfg.get_size("unsup.outer_iters", us.outer_iters);
    us.warm_start = cfg.get_bool("unsup.warm_start", us.warm_start);
    const std::string lap = cfg.get_string("unsup.laplacian", "");
    if (lap == "rw") us.laplacian = LaplacianKind::RandomWalk;
    else if (lap == "unnorm") us.laplacian = LaplacianKind::Unnormalized;
    else require(lap.empty(), ErrorKind::InvalidConfig, "unsup.laplacian must be rw or unnorm");
    return r;
}

/// Range checks that do not depend on the data.
inline void validate(const RunConfig& r) {
    require(r.graph.k >= 1, ErrorKind::InvalidConfig, "graph.k must be >= 1");
    require(r.graph.boost >= 1, ErrorKind::InvalidConfig, "graph.boost must be >= 1");
    require(r.supervision.fraction > 0.0 && r.supervision.fraction < 1.0, ErrorKind::InvalidConfig,
            "supervised fraction must lie in (0,1)");
    require(r.supervision.eta >= 0.0, ErrorKind::InvalidConfig, "eta must be >= 0");
    require(r.unsup.p == 1 || r.unsup.p == 2, ErrorKind::InvalidConfig, "unsup.p must be 1 or 2");
    require(r.unsup.outer_iters >= 1, ErrorKind::InvalidConfig, "unsup.outer_iters must be >= 1");
    require(r.cloud.sigma_scale > 0.0, ErrorKind::InvalidConfig, "pointcloud.sigma_scale must be > 0");
    require(r.cloud.height_quantile <= 1.0, ErrorKind::InvalidConfig, "pointcloud.height_quantile must be <= 1");
    try {
        r.graph.weight.validate();
        r.solver.validate();
    } catch (const Error& e) {
        fail(ErrorKind::InvalidConfig, e.what());
    }
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

struct SegmentRun {
    Graph graph;
    RegionCosts costs;
    SolverResult result;
    std::vector<std::size_t> labels;  // size-aware rounding in hard size modes
};

/// Supervised nodes for `ds`. The biased strategy restricts sampling to a band
/// of second eigenvector values of the unboosted graph.
inline std::vector<SupervisedPoint> draw_supervision(const Dataset& ds, const RunConfig& cfg, std::uint64_t seed) {
    std::vector<std::size_t> nodes;
    if (cfg.supervision.biased) {
        const Graph g = build_knn_graph(ds.features, cfg.graph.k, cfg.graph.weight, {{}, 1, cfg.solver.pool});
        SpectralParams sp;
        sp.seed = seed;
        const SpectralField f = second_eigenvector(g, sp);
        nodes = sample_supervision(ds, cfg.supervision.fraction, seed, f.phi,
                                   std::make_pair(cfg.supervision.band_lo, cfg.supervision.band_hi));
    } else {
        nodes = sample_supervision(ds, cfg.supervision.fraction, seed);
    }
    std::vector<SupervisedPoint> out;
    out.reserve(nodes.size());
    for (std::size_t x : nodes) out.push_back({x, ds.labels[x]});
    return out;
}

inline SupervisionStrength strength_of(const SupervisionConfig& s) {
    return std::isinf(s.eta) ? SupervisionStrength::pinned() : SupervisionStrength::finite(s.eta);
}

/// kNN graph (supervised nodes boosted), costs from supervision, solve, round.
inline SegmentRun run_segment(const MatrixD& features, std::size_t n_classes,
                              std::span<const SupervisedPoint> supervised, const RunConfig& cfg,
                              const MatrixD* region = nullptr) {
    SegmentRun run;
    std::vector<std::size_t> nodes;
    for (const auto& s : supervised) nodes.push_back(s.node);
    KnnOptions opts;
    opts.boosted = nodes;
    opts.boost_factor = cfg.graph.boost;
    opts.pool = cfg.solver.pool;
    run.graph = build_knn_graph(features, cfg.graph.k, cfg.graph.weight, opts);
    run.costs = assemble_costs(features.rows(), n_classes, supervised, strength_of(cfg.supervision), region);
    run.result = solve(run.graph, run.costs, cfg.size, cfg.solver);
    run.labels = cfg.size.hard() ? threshold_sized(run.graph, run.costs, run.result.u, cfg.size) : run.result.labels;
    return run;
}

struct PointCloudRun {
    Graph graph;
    LocalGeometry geometry;
    RegionCosts costs;
    SolverResult result;
    double spacing = 0.0;  // mean neighbor distance s
};

/// kNN graph, local PCA, region terms and convexity weights; no solve yet.
inline PointCloudRun prepare_pointcloud(const MatrixD& points, const RunConfig& cfg) {
    const PointCloudConfig& pc = cfg.cloud;
    PointCloudRun run;
    const Graph base = build_knn_graph(points, cfg.graph.k, WeightSpec::gaussian(1.0), {{}, 1, cfg.solver.pool});
    run.spacing = mean_neighbor_distance(points, base);
    require(run.spacing > 0.0, ErrorKind::DegenerateDistance, "all neighbors coincide");
    run.geometry = local_pca(points, base);
    if (pc.height_k > 0) {
        const std::size_t k = std::min(pc.height_k, points.rows() - 1);
        estimate_heights(run.geometry, points, k,
                         pc.height_quantile >= 0.0 ? std::optional<double>(pc.height_quantile) : std::nullopt,
                         cfg.solver.pool);
    }
    const MatrixD f = class_region_terms(run.geometry, points, pc.region_config(run.spacing), pc.classes);
    run.costs = assemble_costs(points.rows(), pc.classes.size(), {}, {}, &f);
    run.graph = pointcloud_weights(base, points, normals(run.geometry), pc.sigma_scale * run.spacing,
                                   pc.gamma_scale * run.spacing);
    return run;
}

inline PointCloudRun run_pointcloud(const MatrixD& points, const RunConfig& cfg,
                                    const IterationObserver& observer = {}) {
    PointCloudRun run = prepare_pointcloud(points, cfg);
    run.result = solve(run.graph, run.costs, cfg.size, cfg.solver, std::nullopt, observer);
    return run;
}

struct UnsupRun {
    Graph graph;
    SpectralField spectral;
    double alpha = 0.0;
    AlternatingResult alternating;
};

/// Second eigenvector, eigenvector region terms, alternating centroid solve.
inline UnsupRun run_unsup(const MatrixD& features, const RunConfig& cfg, std::uint64_t seed = 0) {
    UnsupRun run;
    run.graph = build_knn_graph(features, cfg.graph.k, cfg.graph.weight, {{}, 1, cfg.solver.pool});
    SpectralParams sp;
    sp.kind = cfg.unsup.laplacian;
    sp.seed = seed;
    run.spectral = second_eigenvector(run.graph, sp);
    run.alpha = cfg.unsup.alpha > 0.0 ? cfg.unsup.alpha
                                      : cfg.unsup.alpha_scale * default_alpha(run.graph, run.spectral.phi, cfg.unsup.p);
    AlternatingParams ap;
    ap.alpha = run.alpha;
    ap.p = cfg.unsup.p;
    ap.max_outer = cfg.unsup.p == 1 ? 1 : cfg.unsup.outer_iters;
    ap.warm_start = cfg.unsup.warm_start;
    ap.solver = cfg.solver;
    run.alternating = alternating_segmentation(run.graph, run.spectral.phi, ap);
    return run;
}

}  // namespace gtv
