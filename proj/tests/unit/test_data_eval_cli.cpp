#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "gtvseg/calculus.hpp"
#include "gtvseg/config.hpp"
#include "gtvseg/datasets.hpp"
#include "gtvseg/eval.hpp"
#include "gtvseg/oracle.hpp"
#include "gtvseg/pipeline.hpp"
#include "gtvseg/unsupervised.hpp"
#include "helpers.hpp"

using namespace gtv;
namespace fs = std::filesystem;

namespace {

double arc_distance(double x, double y, double cx, double cy, double r, bool upper) {
    // distance from (x, y) to a half circle
    const double dy = y - cy;
    if ((upper && dy >= 0.0) || (!upper && dy <= 0.0)) return std::abs(std::hypot(x - cx, dy) - r);
    return std::min(std::hypot(x - cx - r, dy), std::hypot(x - cx + r, dy));
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("gtvseg_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(GTVSEG_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ThreeMoons, DefaultShape) {
    const Dataset ds = three_moons();
    EXPECT_EQ(ds.features.rows(), 3000u);
    EXPECT_EQ(ds.features.cols(), 100u);
    EXPECT_EQ(ds.n_classes, 3u);
    EXPECT_EQ(class_sizes(ds.labels, 3), (std::vector<std::size_t>{1000, 1000, 1000}));
}

TEST(ThreeMoons, NoiselessPointsOnArcs) {
    const Dataset ds = three_moons(200, 5, 0.0, 3);
    const double arcs[3][4] = {{0.0, 0.0, 1.0, 1}, {3.0, 0.0, 1.0, 1}, {1.5, 0.4, 1.5, 0}};
    for (std::size_t x = 0; x < ds.size(); ++x) {
        const auto* a = arcs[ds.labels[x]];
        EXPECT_NEAR(std::hypot(ds.features(x, 0) - a[0], ds.features(x, 1) - a[1]), a[2], 1e-12);
        EXPECT_EQ(a[3] == 1, ds.features(x, 1) >= a[1] - 1e-12);
        for (std::size_t d = 2; d < 5; ++d) EXPECT_EQ(ds.features(x, d), 0.0);
    }
}

TEST(ThreeMoons, CleanArcsDoNotTouch) {
    const Dataset ds = three_moons(400, 2, 0.0, 4);
    const double arcs[3][4] = {{0.0, 0.0, 1.0, 1}, {3.0, 0.0, 1.0, 1}, {1.5, 0.4, 1.5, 0}};
    double closest = kInfinity;
    for (std::size_t x = 0; x < ds.size(); ++x)
        for (std::size_t c = 0; c < 3; ++c)
            if (c != ds.labels[x])
                closest = std::min(closest, arc_distance(ds.features(x, 0), ds.features(x, 1), arcs[c][0], arcs[c][1],
                                                         arcs[c][2], arcs[c][3] == 1));
    EXPECT_GT(closest, 0.05);
}

TEST(ThreeMoons, Deterministic) {
    const Dataset a = three_moons(100, 10, 0.14, 9), b = three_moons(100, 10, 0.14, 9);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    const Dataset c = three_moons(100, 10, 0.14, 10);
    EXPECT_NE(a.features, c.features);
    EXPECT_THROW(three_moons(10, 1, 0.1, 0), Error);
}

TEST(TwoMoons, Shape) {
    const Dataset ds = two_moons();
    EXPECT_EQ(ds.size(), 2000u);
    EXPECT_EQ(class_sizes(ds.labels, 2), (std::vector<std::size_t>{1000, 1000}));
    const Dataset clean = two_moons(50, 2, 0.0, 1);
    for (std::size_t x = 0; x < clean.size(); ++x) {
        const double cx = clean.labels[x] == 0 ? 0.0 : 1.0, cy = clean.labels[x] == 0 ? 0.0 : 0.5;
        EXPECT_NEAR(std::hypot(clean.features(x, 0) - cx, clean.features(x, 1) - cy), 1.0, 1e-12);
    }
    EXPECT_EQ(two_moons(30, 2, 0.1, 5).features, two_moons(30, 2, 0.1, 5).features);
}

TEST(Scene, SingleComponentScenes) {
    SceneSpec plane;
    plane.box = false;
    plane.blobs = 0;
    plane.density = 5.0;
    const Scene a = synth_scene(plane, 1);
    EXPECT_EQ(class_sizes(a.data.labels, 3)[0], a.data.size());

    SceneSpec box;
    box.plane = false;
    box.blobs = 0;
    box.density = 20.0;
    const Scene b = synth_scene(box, 1);
    EXPECT_EQ(class_sizes(b.data.labels, 3)[1], b.data.size());
}

TEST(Scene, ProportionsMatchAreas) {
    SceneSpec spec;
    const Scene s = synth_scene(spec, 2);
    ASSERT_GE(s.data.size(), 20000u);
    const double areas[3] = {spec.plane_area(), spec.box_area(), spec.blob_area()};
    const double total_area = areas[0] + areas[1] + areas[2];
    const auto sizes = class_sizes(s.data.labels, 3);
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_NEAR(static_cast<double>(sizes[i]) / static_cast<double>(s.data.size()), areas[i] / total_area, 0.05);
    EXPECT_EQ(synth_scene(spec, 2).data.features, s.data.features);
}

TEST(Supervision, StratifiedCounts) {
    const Dataset ds = three_moons(1000, 2, 0.14, 1);
    const auto sup = sample_supervision(ds, 0.05, 7);
    EXPECT_EQ(sup.size(), 150u);
    std::vector<std::size_t> labels;
    for (std::size_t x : sup) labels.push_back(ds.labels[x]);
    EXPECT_EQ(class_sizes(labels, 3), (std::vector<std::size_t>{50, 50, 50}));
    EXPECT_TRUE(std::is_sorted(sup.begin(), sup.end()));
    EXPECT_EQ(std::adjacent_find(sup.begin(), sup.end()), sup.end());

    const auto tiny = sample_supervision(ds, 1e-6, 7);
    std::vector<std::size_t> tl;
    for (std::size_t x : tiny) tl.push_back(ds.labels[x]);
    EXPECT_EQ(class_sizes(tl, 3), (std::vector<std::size_t>{1, 1, 1}));
}

TEST(Supervision, BandSampling) {
    const Dataset ds = three_moons(200, 2, 0.14, 2);
    std::vector<double> score(ds.size());
    for (std::size_t x = 0; x < ds.size(); ++x) score[x] = std::sin(static_cast<double>(x));
    EXPECT_EQ(sample_supervision(ds, 0.1, 3, score, std::pair{-2.0, 2.0}), sample_supervision(ds, 0.1, 3));
    const auto banded = sample_supervision(ds, 0.1, 3, score, std::pair{0.0, 2.0});
    for (std::size_t x : banded) EXPECT_GE(score[x], 0.0);
    try {
        sample_supervision(ds, 0.1, 3, score, std::pair{0.999999, 1.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InfeasibleSupervision);
    }
    EXPECT_THROW(sample_supervision(ds, 1.0, 3), Error);
}

TEST(Accuracy, Examples) {
    const std::vector<std::size_t> a{0, 1, 1, 2}, swapped{1, 0, 0, 2};
    EXPECT_EQ(accuracy(a, a), 1.0);
    EXPECT_EQ(accuracy(swapped, a), 0.25);
    EXPECT_EQ(accuracy(swapped, a, true), 1.0);
    const std::vector<std::size_t> two{0, 0, 1, 1}, flip{1, 1, 0, 0};
    EXPECT_EQ(accuracy(flip, two, true), 1.0);
    EXPECT_THROW(accuracy(a, std::vector<std::size_t>{0, 1, 1}), Error);
    const auto pc = per_class_accuracy(std::vector<std::size_t>{0, 1, 1, 1}, two, 2);
    EXPECT_EQ(pc, (std::vector<double>{0.5, 1.0}));
}

TEST(Accuracy, PermutationInvariant) {
    Rng rng(61);
    std::vector<std::size_t> l(50), t(50);
    for (auto& v : l) v = rng.below(4);
    for (auto& v : t) v = rng.below(4);
    const std::size_t perm[4] = {2, 0, 3, 1};
    std::vector<std::size_t> pl(50);
    for (std::size_t x = 0; x < 50; ++x) pl[x] = perm[l[x]];
    EXPECT_DOUBLE_EQ(accuracy(pl, t, true), accuracy(l, t, true));
}

TEST(TvEnergy, Examples) {
    const Graph g = test::make_graph(3, {{0, 1, 5.0}, {0, 2, 1.0}, {1, 2, 1.0}});
    EXPECT_EQ(tv_energy(g, std::vector<std::size_t>{1, 1, 1}), 0.0);
    // TV of the one-hot field counts each cut edge once per class it separates
    EXPECT_DOUBLE_EQ(tv_energy(g, std::vector<std::size_t>{0, 0, 1}), 4.0);
    EXPECT_DOUBLE_EQ(cut_value(g, std::vector<std::size_t>{0, 0, 1}), 2.0);
}

TEST(TvEnergy, EqualsTotalVariationOfOneHot) {
    Rng rng(62);
    for (int t = 0; t < 20; ++t) {
        const Graph g = test::random_graph(10, rng);
        std::vector<std::size_t> l(10);
        for (auto& v : l) v = rng.below(3);
        const MatrixD u = one_hot(l, 3);
        double tv = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            std::vector<double> col(10);
            for (std::size_t x = 0; x < 10; ++x) col[x] = u(x, i);
            tv += total_variation(g, col);
        }
        EXPECT_EQ(tv_energy(g, l), tv);
    }
}

TEST(TvEnergy, SolverDominatesRandomLabelings) {
    Rng rng(63);
    for (int t = 0; t < 5; ++t) {
        const Graph g = test::random_graph(12, rng);
        std::vector<SupervisedPoint> sup{{0, 0}, {5, 1}, {11, 2}};
        const RegionCosts c = assemble_costs(12, 3, sup);
        const SolverResult r = solve(g, c, {}, test::tight_params());
        const double e = labeling_energy(g, c, r.labels);
        for (int k = 0; k < 100; ++k) {
            std::vector<std::size_t> l(12);
            for (auto& v : l) v = rng.below(3);
            l[0] = 0, l[5] = 1, l[11] = 2;
            EXPECT_LE(e, labeling_energy(g, c, l) + 1e-9);
        }
    }
}

TEST(Report, Fields) {
    const Graph g = test::make_graph(3, {{0, 1, 5.0}, {0, 2, 1.0}, {1, 2, 1.0}});
    const RegionCosts c = assemble_costs(3, 2, std::vector<SupervisedPoint>{{0, 0}, {2, 1}});
    const SolverResult r = solve(g, c, {}, test::tight_params());
    const EvalReport rep = report(r, std::vector<std::size_t>{0, 0, 1}, g, c);
    EXPECT_EQ(rep.accuracy, 1.0);
    EXPECT_NEAR(rep.binary_difference_final, 0.0, 1e-9);
    EXPECT_DOUBLE_EQ(rep.duality_gap, rep.primal - rep.dual);
    EXPECT_EQ(rep.class_sizes, (std::vector<std::size_t>{2, 1}));
    EXPECT_DOUBLE_EQ(rep.cut, 2.0);
    std::ostringstream txt, csv;
    write_report_txt(txt, rep);
    write_report_csv(csv, rep);
    for (const char* key : {"accuracy:", "per_class_accuracy:", "tv_energy:", "duality_gap:", "binary_difference:",
                            "class_sizes:", "iterations:"})
        EXPECT_NE(txt.str().find(key), std::string::npos) << key;
    const std::string rows = csv.str();
    EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 2);
}

TEST(Report, ThreeMoonsPresetFieldsNonEmpty) {
    const RunConfig cfg = preset("three-moons");
    const Dataset ds = three_moons(300, 20, 0.14, 5);
    const auto sup = draw_supervision(ds, cfg, 5);
    const SegmentRun run = run_segment(ds.features, 3, sup, cfg);
    const EvalReport rep = report(run.result, ds.labels, run.graph, run.costs);
    EXPECT_TRUE(rep.has_truth);
    EXPECT_EQ(rep.per_class_accuracy.size(), 3u);
    EXPECT_EQ(rep.class_sizes.size(), 3u);
    EXPECT_GT(rep.tv_energy, 0.0);
    EXPECT_GT(rep.iterations, 0u);
    EXPECT_LE(std::abs(rep.duality_gap) / std::max(1.0, std::abs(rep.dual)), 1e-4);
}

TEST(Config, ParseAndOverride) {
    const Config c = Config::parse_string("c = 0.2\n[size]\nmode = interval # comment\nlower = 1, 2\n\nupper=3,inf\n");
    EXPECT_EQ(c.get_double("c", 0.0), 0.2);
    EXPECT_EQ(c.get_string("size.mode", ""), "interval");
    EXPECT_EQ(c.get_list("size.lower"), (std::vector<double>{1.0, 2.0}));
    EXPECT_TRUE(std::isinf(c.get_list("size.upper")[1]));
    EXPECT_THROW(Config::parse_string("novalue\n"), Error);
    EXPECT_THROW(Config::parse_string("c = abc\n").get_double("c", 0.0), Error);

    RunConfig r = preset("three-moons");
    r = apply_config(r, Config::parse_string("c = 0.3\ngraph.k = 7\nsize.mode = exact\nsize.lower = 10,10,10\n"));
    EXPECT_EQ(r.solver.c, 0.3);
    EXPECT_EQ(r.graph.k, 7u);
    EXPECT_EQ(r.size.mode, SizeSpec::Mode::Exact);
    try {
        apply_config(r, Config::parse_string("graph.kk = 3\n"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
    }
    EXPECT_THROW(preset("nope"), Error);
}

TEST(Presets, EncodeDatasetParameters) {
    EXPECT_EQ(preset("three-moons").solver.c, 0.1);
    EXPECT_EQ(preset("three-moons").graph.weight.m, 10u);
    EXPECT_EQ(preset("mnist").solver.c, 0.05);
    EXPECT_EQ(preset("mnist").graph.weight.m, 8u);
    EXPECT_EQ(preset("coil").solver.c, 0.03);
    EXPECT_EQ(preset("coil").graph.weight.m, 4u);
    EXPECT_EQ(preset("landsat").solver.c, 0.3);
    EXPECT_EQ(preset("pointcloud").graph.k, 20u);
    EXPECT_EQ(preset("three-moons").supervision.eta, 500.0);
}

TEST(FileIo, RoundTrips) {
    const fs::path d = fresh_dir("io");
    MatrixD m(3, 2);
    m(0, 0) = 0.1, m(0, 1) = -2.5, m(1, 0) = 1e-17, m(1, 1) = 3.0, m(2, 0) = 1.0 / 3.0, m(2, 1) = 7.0;
    write_csv_matrix((d / "m.csv").string(), m);
    EXPECT_EQ(read_csv_matrix((d / "m.csv").string()), m);
    const std::vector<std::size_t> l{2, 0, 1};
    write_labels((d / "l.csv").string(), l);
    EXPECT_EQ(read_labels((d / "l.csv").string(), 3), l);
    EXPECT_THROW(read_csv_matrix((d / "missing.csv").string()), Error);
}

class Cli : public ::testing::Test {};

TEST_F(Cli, GenIsReproducible) {
    const fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
    ASSERT_EQ(run_cli("gen three-moons --seed 7 --n-per-class 50 --out-dir " + a.string(), a / "log"), 0);
    ASSERT_EQ(run_cli("gen three-moons --seed 7 --n-per-class 50 --out-dir " + b.string(), b / "log"), 0);
    for (const char* f : {"features.csv", "labels.csv", "supervision.csv"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
}

TEST_F(Cli, SegmentWritesReport) {
    const fs::path d = fresh_dir("segment");
    ASSERT_EQ(run_cli("segment --preset three-moons --supervised 0.05 --set data.n_per_class=300 --seed 2 --out-dir " +
                          d.string(),
                      d / "log"),
              0)
        << slurp(d / "log");
    const std::string rep = slurp(d / "report.txt");
    EXPECT_NE(rep.find("accuracy: "), std::string::npos);
    EXPECT_TRUE(fs::exists(d / "labels.csv"));
    EXPECT_TRUE(fs::exists(d / "report.csv"));
}

TEST_F(Cli, OracleMatchesFixture) {
    const fs::path d = fresh_dir("oracle");
    const std::string fixture = std::string(GTVSEG_FIXTURE_DIR) + "/oracle8.json";
    ASSERT_EQ(run_cli("oracle " + fixture + " --out-dir " + d.string(), d / "log"), 0) << slurp(d / "log");
    const std::string out = slurp(d / "oracle.txt");
    EXPECT_NE(out.find("match: yes"), std::string::npos) << out;
    EXPECT_NE(out.find("labels: 1 2 2 1 1 2 2 1"), std::string::npos) << out;
}

TEST_F(Cli, ExitCodes) {
    const fs::path d = fresh_dir("exit");
    EXPECT_EQ(run_cli("segment --preset nope --out-dir " + d.string(), d / "log"), 1);
    EXPECT_EQ(run_cli("segment --preset three-moons --set bogus=1 --out-dir " + d.string(), d / "log"), 1);
    EXPECT_EQ(run_cli("segment --features " + (d / "missing.csv").string() + " --out-dir " + d.string(), d / "log"), 2);
    EXPECT_EQ(run_cli("segment --preset three-moons --set data.n_per_class=20 --set data.dims=2 --set size.mode=exact "
                      "--set size.lower=1,1,1 --out-dir " +
                          d.string(),
                      d / "log"),
              4)
        << slurp(d / "log");
}
