// Supervised segmentation of three noisy moons in R^100 with 5% labeled points.
#include <cstdio>

#include "gtvseg/datasets.hpp"
#include "gtvseg/eval.hpp"
#include "gtvseg/pipeline.hpp"

int main() {
    const gtv::RunConfig cfg = gtv::preset("three-moons");
    const gtv::Dataset ds = gtv::three_moons(1000, 100, 0.14, 0);
    const auto supervised = gtv::draw_supervision(ds, cfg, 0);
    const gtv::SegmentRun run = gtv::run_segment(ds.features, ds.n_classes, supervised, cfg);
    std::printf("labeled %zu of %zu points\n", supervised.size(), ds.features.rows());
    std::printf("iterations %zu, converged %s\n", run.result.iterations, run.result.converged ? "yes" : "no");
    std::printf("accuracy %.4f\n", gtv::accuracy(run.labels, ds.labels));
    std::printf("cut %.4f\n", gtv::cut_value(run.graph, run.labels));
}
