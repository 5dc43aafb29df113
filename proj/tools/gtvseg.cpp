#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gtvseg/config.hpp"
#include "gtvseg/datasets.hpp"
#include "gtvseg/error.hpp"
#include "gtvseg/eval.hpp"
#include "gtvseg/oracle.hpp"
#include "gtvseg/parallel.hpp"
#include "gtvseg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace gtv;

namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidConfig:
        case ErrorKind::InvalidParameter:
        case ErrorKind::SizeLimit: return 1;
        case ErrorKind::Divergence:
        case ErrorKind::SpectralConvergence: return 3;
        case ErrorKind::InfeasibleSize: return 4;
        default: return 2;
    }
}

struct Common {
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::size_t threads = default_thread_count();
    bool deterministic = false;
    std::string config_path;
    std::string preset;
    std::vector<std::string> overrides;  // key=value
    std::optional<double> supervised;
};

void add_common(CLI::App* app, Common& c, bool with_preset) {
    app->add_option("--seed", c.seed, "Seed for every random draw")->capture_default_str();
    app->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
    app->add_option("--threads", c.threads, "Worker threads (default: $GTVSEG_THREADS or 1)")->check(CLI::PositiveNumber);
    app->add_flag("--deterministic", c.deterministic, "Run single-threaded");
    if (with_preset) {
        app->add_option("--config", c.config_path, "key = value config file");
        app->add_option("--preset", c.preset, "Parameter preset");
        app->add_option("--set", c.overrides, "Config override key=value (repeatable)");
        app->add_option("--supervised", c.supervised, "Supervised fraction in (0,1)");
    }
}

/// preset -> config file -> --set -> explicit flags (applied by the caller).
RunConfig resolve(const Common& c, const std::string& fallback_preset) {
    Config cfg;
    if (!c.config_path.empty()) {
        std::ifstream in(c.config_path);
        require(static_cast<bool>(in), ErrorKind::InvalidConfig, "cannot open config " + c.config_path);
        cfg = Config::parse(in, c.config_path);
    }
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        require(eq != std::string::npos, ErrorKind::InvalidConfig, "--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    std::string name = c.preset.empty() ? cfg.get_string("preset", fallback_preset) : c.preset;
    RunConfig run = apply_config(preset(name), cfg);
    if (c.supervised) run.supervision.fraction = *c.supervised;
    return run;
}

std::unique_ptr<ThreadPool> make_pool(const Common& c) {
    const std::size_t t = c.deterministic ? 1 : c.threads;
    return t > 1 ? std::make_unique<ThreadPool>(t) : nullptr;
}

std::string out_path(const Common& c, const std::string& name) {
    fs::create_directories(c.out_dir);
    return (fs::path(c.out_dir) / name).string();
}

std::ofstream open_file(const Common& c, const std::string& name) {
    const std::string path = out_path(c, name);
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
    return out;
}

void write_reports(const Common& c, const EvalReport& r, std::span<const TraceEntry> trace) {
    auto txt = open_file(c, "report.txt");
    write_report_txt(txt, r);
    auto csv = open_file(c, "report.csv");
    write_report_csv(csv, r);
    if (!trace.empty()) {
        auto tr = open_file(c, "trace.csv");
        write_trace_csv(tr, trace);
    }
}

void write_supervision(const Common& c, std::span<const SupervisedPoint> sup) {
    auto out = open_file(c, "supervision.csv");
    out << "node_index,label\n";
    for (const auto& s : sup) out << s.node << ',' << s.label + 1 << '\n';
}

std::vector<SupervisedPoint> read_supervision(const std::string& path) {
    std::vector<SupervisedPoint> out;
    for (const auto& [node, label] : read_label_pairs(path)) out.push_back({node, label});
    return out;
}

/// Synthetic data for presets that have a generator, MNIST from data/mnist.
Dataset preset_dataset(const RunConfig& run, std::uint64_t seed, const std::string& mnist_dir) {
    if (run.preset == "three-moons") return three_moons(run.n_per_class, run.dims, run.noise, seed);
    if (run.preset == "two-moons") return two_moons(run.n_per_class, run.dims, run.noise, seed);
    if (run.preset == "mnist" || run.preset == "mnist-subset") {
        const std::array<std::size_t, 2> digits{4, 9};
        return load_idx_dataset((fs::path(mnist_dir) / "images.idx").string(),
                                (fs::path(mnist_dir) / "labels.idx").string(), digits);
    }
    fail(ErrorKind::InvalidInput, "preset '" + run.preset + "' has no built-in data; pass --features and --labels");
}

struct DataArgs {
    std::string features, labels, supervision;
    std::string mnist_dir = "data/mnist";
    std::size_t classes = 0;
};

void add_data(CLI::App* app, DataArgs& d) {
    app->add_option("--features", d.features, "Feature CSV (one row per node, no header)");
    app->add_option("--labels", d.labels, "Ground truth labels (node_index,label)");
    app->add_option("--supervision-file", d.supervision, "Supervised nodes (node_index,label)");
    app->add_option("--mnist-dir", d.mnist_dir, "Directory with images.idx and labels.idx")->capture_default_str();
    app->add_option("--classes", d.classes, "Number of classes when no labels are given");
}

Dataset load_dataset(const DataArgs& d, const RunConfig& run, std::uint64_t seed) {
    if (d.features.empty()) return preset_dataset(run, seed, d.mnist_dir);
    Dataset ds;
    ds.features = read_csv_matrix(d.features);
    if (!d.labels.empty()) {
        ds.labels = read_labels(d.labels, ds.size());
        for (std::size_t l : ds.labels) ds.n_classes = std::max(ds.n_classes, l + 1);
    }
    if (d.classes) ds.n_classes = d.classes;
    return ds;
}

// ---------------------------------------------------------------------------

int cmd_gen(const std::string& what, const Common& c, std::size_t n_per_class, std::optional<std::size_t> dims,
            std::optional<double> noise, double density, std::optional<double> supervised) {
    if (what == "scene") {
        SceneSpec spec;
        spec.density = density;
        const Scene scene = synth_scene(spec, c.seed);
        auto xyz = open_file(c, "cloud.xyz");
        xyz.precision(17);
        for (std::size_t x = 0; x < scene.data.size(); ++x)
            xyz << scene.data.features(x, 0) << ' ' << scene.data.features(x, 1) << ' ' << scene.data.features(x, 2)
                << '\n';
        write_labels(out_path(c, "labels.csv"), scene.data.labels);
        std::cout << "wrote " << scene.data.size() << " points to " << out_path(c, "cloud.xyz") << '\n';
        return 0;
    }
    RunConfig run = preset(what == "two-moons" ? "two-moons" : "three-moons");
    require(what == "three-moons" || what == "two-moons", ErrorKind::InvalidConfig,
            "gen supports three-moons, two-moons and scene");
    const Dataset ds = what == "two-moons"
                           ? two_moons(n_per_class, dims.value_or(2), noise.value_or(0.1), c.seed)
                           : three_moons(n_per_class, dims.value_or(100), noise.value_or(0.14), c.seed);
    auto f = open_file(c, "features.csv");
    write_csv_matrix(f, ds.features);
    write_labels(out_path(c, "labels.csv"), ds.labels);
    run.supervision.fraction = supervised.value_or(run.supervision.fraction);
    write_supervision(c, draw_supervision(ds, run, c.seed));
    std::cout << "wrote " << ds.size() << " points to " << c.out_dir << '\n';
    return 0;
}

int cmd_segment(const Common& c, const DataArgs& d) {
    RunConfig run = resolve(c, "three-moons");
    validate(run);
    auto pool = make_pool(c);
    run.solver.pool = pool.get();
    const Dataset ds = load_dataset(d, run, c.seed);
    const std::vector<SupervisedPoint> sup = d.supervision.empty() ? draw_supervision(ds, run, c.seed)
                                                                   : read_supervision(d.supervision);
    std::size_t n = ds.n_classes;
    for (const auto& s : sup) n = std::max(n, s.label + 1);
    require(n >= 2, ErrorKind::InvalidInput, "need labels, supervision or --classes to fix the class count");
    const SegmentRun res = run_segment(ds.features, n, sup, run);
    write_labels(out_path(c, "labels.csv"), res.labels);
    write_supervision(c, sup);
    SolverResult shown = res.result;
    shown.labels = res.labels;
    const EvalReport r = report(shown, ds.labels, res.graph, res.costs, {false, run.size});
    write_reports(c, r, res.result.trace);
    write_report_txt(std::cout, r);
    return 0;
}

int cmd_pointcloud(const Common& c, const std::string& input, const std::string& truth_path, double density) {
    RunConfig run = resolve(c, "pointcloud");
    validate(run);
    auto pool = make_pool(c);
    run.solver.pool = pool.get();
    MatrixD points;
    std::vector<std::size_t> truth;
    if (input.empty()) {
        SceneSpec spec;
        spec.density = density;
        Scene scene = synth_scene(spec, c.seed);
        points = std::move(scene.data.features);
        truth = std::move(scene.data.labels);
    } else {
        points = read_xyz(input);
    }
    if (!truth_path.empty()) truth = read_labels(truth_path, points.rows());
    const PointCloudRun res = run_pointcloud(points, run);
    write_labels(out_path(c, "labels.csv"), res.result.labels);
    auto xyz = open_file(c, "labeled.xyz");
    xyz.precision(17);
    write_labeled_xyz(xyz, points, res.result.labels);
    static constexpr std::array<std::array<int, 3>, 5> palette{
        {{150, 110, 60}, {220, 40, 40}, {40, 170, 60}, {30, 110, 30}, {160, 160, 160}}};
    auto col = open_file(c, "colored.xyz");
    col.precision(17);
    for (std::size_t x = 0; x < points.rows(); ++x) {
        const auto& rgb = palette[res.result.labels[x] % palette.size()];
        col << points(x, 0) << ' ' << points(x, 1) << ' ' << points(x, 2) << ' ' << rgb[0] << ' ' << rgb[1] << ' '
            << rgb[2] << '\n';
    }
    const EvalReport r = report(res.result, truth, res.graph, res.costs, {false, run.size});
    write_reports(c, r, res.result.trace);
    write_report_txt(std::cout, r);
    std::cout << "mean_neighbor_distance: " << res.spacing << '\n';
    return 0;
}

int cmd_unsup(const Common& c, const DataArgs& d, std::optional<double> alpha, std::optional<int> p,
              std::optional<std::size_t> outer, const std::string& laplacian) {
    RunConfig run = resolve(c, "two-moons");
    if (alpha) run.unsup.alpha = *alpha;
    if (p) run.unsup.p = *p;
    if (outer) run.unsup.outer_iters = *outer;
    if (laplacian == "rw") run.unsup.laplacian = LaplacianKind::RandomWalk;
    else if (laplacian == "unnorm") run.unsup.laplacian = LaplacianKind::Unnormalized;
    validate(run);
    auto pool = make_pool(c);
    run.solver.pool = pool.get();
    const Dataset ds = load_dataset(d, run, c.seed);
    const UnsupRun res = run_unsup(ds.features, run, c.seed);
    const AlternatingResult& alt = res.alternating;
    write_labels(out_path(c, "labels.csv"), alt.result.labels);
    auto phi = open_file(c, "phi.csv");
    phi.precision(17);
    for (double v : res.spectral.phi) phi << v << '\n';
    const RegionCosts costs{spectral_region_terms(res.spectral.phi, alt.centroids.back())};
    const EvalReport r = report(alt.result, ds.labels, res.graph, costs, {true, {}});
    write_reports(c, r, alt.result.trace);
    auto extra = open_file(c, "unsup.txt");
    for (std::ostream* os : {static_cast<std::ostream*>(&extra), static_cast<std::ostream*>(&std::cout)}) {
        os->precision(10);
        *os << "eigenvalue: " << res.spectral.eigenvalue << '\n'
            << "alpha: " << res.alpha << '\n'
            << "outer_iterations: " << alt.outer_iterations << '\n'
            << "labels_stable: " << (alt.labels_stable ? "yes" : "no") << '\n'
            << "centroids: " << alt.centroids.back().c1 << ' ' << alt.centroids.back().c2 << '\n'
            << "joint_energy:";
        for (double e : alt.joint_energy) *os << ' ' << e;
        *os << '\n';
    }
    write_report_txt(std::cout, r);
    return 0;
}

/// Fixture JSON: {"nodes": N, "classes": n, "edges": [[x, y, w], ...],
/// "costs": [[C_1(x), ..., C_n(x)], ...], optional "size": {"mode", "lower",
/// "upper", "gamma"}, optional "expected_energy"}.
int cmd_oracle(const Common& c, const std::string& fixture, bool also_solve) {
    std::ifstream in(fixture);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + fixture);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail(ErrorKind::InvalidInput, fixture + ": " + e.what());
    }
    try {
        const auto N = j.at("nodes").get<std::size_t>();
        const auto n = j.at("classes").get<std::size_t>();
        std::vector<UndirectedEdge> edges;
        for (const auto& e : j.at("edges"))
            edges.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>(), e.at(2).get<double>()});
        const Graph g = Graph::from_undirected(N, std::move(edges));
        RegionCosts costs{MatrixD(N, n, 0.0)};
        const auto& cj = j.at("costs");
        require(cj.size() == N, ErrorKind::InvalidInput, "costs need one row per node");
        for (std::size_t x = 0; x < N; ++x) {
            require(cj[x].size() == n, ErrorKind::InvalidInput, "cost row length must equal classes");
            for (std::size_t i = 0; i < n; ++i) costs.c(x, i) = cj[x][i].get<double>();
        }
        SizeSpec size;
        if (j.contains("size")) {
            const auto& s = j["size"];
            const auto mode = s.at("mode").get<std::string>();
            const auto lower = s.value("lower", std::vector<double>{});
            const auto upper = s.value("upper", lower);
            if (mode == "exact") size = SizeSpec::exact(lower);
            else if (mode == "interval") size = SizeSpec::interval(lower, upper);
            else if (mode == "penalty") size = SizeSpec::penalty(lower, upper, s.value("gamma", 10.0));
            else require(mode == "none", ErrorKind::InvalidInput, "unknown size mode '" + mode + "'");
        }
        const OracleResult o = brute_force_oracle(g, costs, size, n);
        auto out = open_file(c, "oracle.txt");
        for (std::ostream* os : {static_cast<std::ostream*>(&out), static_cast<std::ostream*>(&std::cout)}) {
            os->precision(17);
            *os << "energy: " << o.energy << '\n' << "feasible: " << o.feasible << '\n' << "labels:";
            for (std::size_t l : o.labels) *os << ' ' << l + 1;
            *os << '\n';
            if (j.contains("expected_energy")) {
                const double expected = j["expected_energy"].get<double>();
                *os << "expected_energy: " << expected << '\n'
                    << "match: " << (std::abs(o.energy - expected) <= 1e-9 * std::max(1.0, std::abs(expected)) ? "yes" : "no")
                    << '\n';
            }
        }
        if (also_solve) {
            SolverParams sp;
            sp.delta = 1e-12;
            sp.max_iters = 100000;
            const SolverResult r = solve(g, costs, size, sp);
            const auto labels = threshold_sized(g, costs, r.u, size);
            std::cout << "solver_energy: " << labeling_energy(g, costs, labels, size) << '\n';
        }
        if (j.contains("expected_energy")) {
            const double expected = j["expected_energy"].get<double>();
            if (std::abs(o.energy - expected) > 1e-9 * std::max(1.0, std::abs(expected))) return 2;
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidInput, fixture + ": " + e.what());
    }
    return 0;
}

int cmd_report(const Common& c, const std::string& labels_path, const std::string& truth_path, bool permute,
               const DataArgs& d) {
    RunConfig run = resolve(c, "three-moons");
    std::vector<std::size_t> labels;
    std::size_t N = 0;
    for (const auto& [node, l] : read_label_pairs(labels_path)) N = std::max(N, node + 1);
    labels = read_labels(labels_path, N);
    EvalReport r;
    std::size_t n = 0;
    for (std::size_t l : labels) n = std::max(n, l + 1);
    if (!truth_path.empty()) {
        const auto truth = read_labels(truth_path, N);
        r.has_truth = true;
        r.accuracy = accuracy(labels, truth, permute);
        const auto aligned = permute ? align_labels(labels, truth) : labels;
        r.per_class_accuracy = per_class_accuracy(aligned, truth, label_count(aligned, truth));
    }
    r.class_sizes = class_sizes(labels, n);
    r.converged = true;
    if (!d.features.empty()) {
        const MatrixD f = read_csv_matrix(d.features);
        require(f.rows() == N, ErrorKind::InvalidInput, "features and labels disagree on the node count");
        const Graph g = build_knn_graph(f, run.graph.k, run.graph.weight);
        r.tv_energy = tv_energy(g, labels);
        r.cut = 0.5 * r.tv_energy;
        r.primal = r.tv_energy;
        r.dual = r.tv_energy;
    }
    write_reports(c, r, {});
    write_report_txt(std::cout, r);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiclass graph total variation segmentation"};
    app.require_subcommand(1);

    Common gen_c, seg_c, pc_c, un_c, or_c, rep_c;
    DataArgs seg_d, un_d, rep_d;

    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
    std::string gen_what;
    std::size_t gen_n = 1000;
    std::optional<std::size_t> gen_dims;
    std::optional<double> gen_noise, gen_sup;
    double gen_density = 50.0;
    gen->add_option("dataset", gen_what, "three-moons, two-moons or scene")->required();
    gen->add_option("--n-per-class", gen_n, "Points per class")->capture_default_str();
    gen->add_option("--dims", gen_dims, "Ambient dimension");
    gen->add_option("--noise", gen_noise, "Gaussian noise standard deviation");
    gen->add_option("--density", gen_density, "Scene points per unit area")->capture_default_str();
    gen->add_option("--supervised", gen_sup, "Supervised fraction written to supervision.csv");
    add_common(gen, gen_c, false);

    auto* seg = app.add_subcommand("segment", "Semi-supervised segmentation of a feature set");
    add_common(seg, seg_c, true);
    add_data(seg, seg_d);

    auto* pc = app.add_subcommand("pointcloud", "Unsupervised segmentation of a 3D point cloud");
    std::string pc_input, pc_truth;
    double pc_density = 50.0;
    pc->add_option("--input", pc_input, "Cloud as `x y z` lines (default: synthetic scene from --seed)");
    pc->add_option("--truth", pc_truth, "Ground truth labels (node_index,label)");
    pc->add_option("--density", pc_density, "Synthetic scene density")->capture_default_str();
    add_common(pc, pc_c, true);

    auto* un = app.add_subcommand("unsup", "Two-class segmentation from the second Laplacian eigenvector");
    std::optional<double> un_alpha;
    std::optional<int> un_p;
    std::optional<std::size_t> un_outer;
    std::string un_lap;
    un->add_option("--alpha", un_alpha, "Region term weight (default: scaled from the data)");
    un->add_option("--p", un_p, "Exponent of the region term")->check(CLI::IsMember({1, 2}));
    un->add_option("--outer-iters", un_outer, "Maximum centroid updates");
    un->add_option("--laplacian", un_lap, "rw or unnorm")->check(CLI::IsMember({"rw", "unnorm"}));
    add_common(un, un_c, true);
    add_data(un, un_d);

    auto* orc = app.add_subcommand("oracle", "Brute-force minimum of a tiny instance");
    std::string or_fixture;
    bool or_solve = false;
    orc->add_option("fixture", or_fixture, "Instance JSON")->required();
    orc->add_flag("--solve", or_solve, "Also run the solver and print its thresholded energy");
    add_common(orc, or_c, false);

    auto* rep = app.add_subcommand("report", "Metrics of an existing labeling");
    std::string rep_labels, rep_truth;
    bool rep_permute = false;
    rep->add_option("labeling", rep_labels, "Labels to evaluate (node_index,label)")->required();
    rep->add_option("--truth", rep_truth, "Ground truth labels");
    rep->add_flag("--permute", rep_permute, "Best class permutation");
    add_common(rep, rep_c, true);
    add_data(rep, rep_d);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen) return cmd_gen(gen_what, gen_c, gen_n, gen_dims, gen_noise, gen_density, gen_sup);
        if (*seg) return cmd_segment(seg_c, seg_d);
        if (*pc) return cmd_pointcloud(pc_c, pc_input, pc_truth, pc_density);
        if (*un) return cmd_unsup(un_c, un_d, un_alpha, un_p, un_outer, un_lap);
        if (*orc) return cmd_oracle(or_c, or_fixture, or_solve);
        if (*rep) return cmd_report(rep_c, rep_labels, rep_truth, rep_permute, rep_d);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
