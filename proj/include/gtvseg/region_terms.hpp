#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gtvseg/error.hpp"
#include "gtvseg/graph.hpp"
#include "gtvseg/knn.hpp"
#include "gtvseg/matrix.hpp"

namespace gtv {

using Vec3 = std::array<double, 3>;

/// Local PCA of one neighborhood. Eigenvalues ascend; v[0] is the normal
/// estimate with a nonnegative up component.
struct PointGeometry {
    Vec3 lambda{0.0, 0.0, 0.0};
    std::array<Vec3, 3> v{Vec3{0.0, 0.0, 1.0}, Vec3{1.0, 0.0, 0.0}, Vec3{0.0, 1.0, 0.0}};
    double h_star = 0.0;
    bool degenerate = false;  // scatter matrix was zero
};

using LocalGeometry = std::vector<PointGeometry>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

namespace detail {

inline void check_cloud(const MatrixD& points) {
    require(points.cols() == 3, ErrorKind::InvalidInput, "point clouds need three coordinates");
    for (double v : points.data()) require(std::isfinite(v), ErrorKind::InvalidInput, "non-finite coordinate");
}

// Flip so the up component is positive; for horizontal vectors the first
// nonzero component decides.
inline void orient(Vec3& v) {
    double key = v[2];
    if (key == 0.0) key = v[0] != 0.0 ? v[0] : v[1];
    if (key < 0.0)
        for (double& c : v) c = -c;
}

}  // namespace detail

/// PCA of the neighborhood {x} U nbrs: center on the neighborhood mean, form
/// Y Y^T (3x3, not normalized by the count) and eigendecompose. h_star is the
/// mean height over the same neighborhood.
inline PointGeometry neighborhood_pca(const MatrixD& points, std::size_t x, std::span<const std::uint32_t> nbrs) {
    const std::size_t m = nbrs.size() + 1;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    auto at = [&](std::size_t j) {
        const std::size_t idx = j == 0 ? x : nbrs[j - 1];
        return Eigen::Vector3d(points(idx, 0), points(idx, 1), points(idx, 2));
    };
    for (std::size_t j = 0; j < m; ++j) mean += at(j);
    mean /= static_cast<double>(m);
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (std::size_t j = 0; j < m; ++j) {
        const Eigen::Vector3d d = at(j) - mean;
        scatter.noalias() += d * d.transpose();
    }

    PointGeometry out;
    out.h_star = mean.z();
    if (scatter.isZero(0.0)) {
        out.degenerate = true;
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
    for (int i = 0; i < 3; ++i) {
        out.lambda[i] = std::max(0.0, eig.eigenvalues()(i));
        const Eigen::Vector3d v = eig.eigenvectors().col(i).normalized();
        out.v[i] = {v.x(), v.y(), v.z()};
    }
    detail::orient(out.v[0]);
    detail::orient(out.v[1]);
    // Right-handed frame.
    const Vec3& a = out.v[0];
    const Vec3& b = out.v[1];
    out.v[2] = {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
    return out;
}

/// Local PCA over the graph neighborhood of every point.
inline LocalGeometry local_pca(const MatrixD& points, const Graph& g) {
    detail::check_cloud(points);
    require(points.rows() == g.n_nodes(), ErrorKind::InvalidInput, "graph and cloud sizes differ");
    LocalGeometry geom(points.rows());
    for (std::size_t x = 0; x < points.rows(); ++x) geom[x] = neighborhood_pca(points, x, g.neighbors(x));
    return geom;
}

/// Recompute h_star over the k nearest neighbors of each point (the point
/// included): the mean height, or with `quantile` in [0,1] that quantile of
/// the heights. A low quantile over a wide neighborhood estimates the local
/// ground level rather than the local surface height.
inline void estimate_heights(LocalGeometry& geom, const MatrixD& points, std::size_t k,
                             std::optional<double> quantile = std::nullopt, ThreadPool* pool = nullptr) {
    detail::check_cloud(points);
    require(geom.size() == points.rows(), ErrorKind::InvalidInput, "geometry and cloud sizes differ");
    require(k >= 1 && k < points.rows(), ErrorKind::InvalidParameter, "height neighborhood must satisfy 1 <= k < N");
    require(!quantile || (*quantile >= 0.0 && *quantile <= 1.0), ErrorKind::InvalidParameter,
            "height quantile must lie in [0,1]");
    const std::vector<std::size_t> counts(points.rows(), k);
    const NeighborLists lists = exact_knn(points, counts, pool);
    std::vector<double> z;
    for (std::size_t x = 0; x < points.rows(); ++x) {
        z.assign(1, points(x, 2));
        for (const auto& nb : lists[x]) z.push_back(points(nb.index, 2));
        if (quantile) {
            const auto pos = static_cast<std::size_t>(*quantile * static_cast<double>(z.size() - 1));
            std::nth_element(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(pos), z.end());
            geom[x].h_star = z[pos];
        } else {
            double sum = 0.0;
            for (double v : z) sum += v;
            geom[x].h_star = sum / static_cast<double>(z.size());
        }
    }
}

inline std::vector<Vec3> normals(const LocalGeometry& geom) {
    std::vector<Vec3> out(geom.size());
    for (std::size_t x = 0; x < geom.size(); ++x) out[x] = geom[x].v[0];
    return out;
}

/// Mean distance from each point to its graph neighbors, averaged over points.
inline double mean_neighbor_distance(const MatrixD& points, const Graph& g) {
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
        s += std::sqrt(squared_distance(points.row(g.source(e)), points.row(g.target(e))));
        ++count;
    }
    return count ? s / static_cast<double>(count) : 0.0;
}

/// |lambda1 - level|^2
inline double lambda_homogeneity(double lambda1, double level) {
    const double d = lambda1 - level;
    return d * d;
}

enum class RegionClass { Ground, Human, Vegetation, Vegetation2, Smoke };

inline RegionClass parse_region_class(std::string_view tag) {
    if (tag == "ground") return RegionClass::Ground;
    if (tag == "human") return RegionClass::Human;
    if (tag == "vegetation") return RegionClass::Vegetation;
    if (tag == "vegetation2") return RegionClass::Vegetation2;
    if (tag == "smoke") return RegionClass::Smoke;
    fail(ErrorKind::InvalidConfig, "unknown region class '" + std::string(tag) + "'");
}

inline const char* to_string(RegionClass c) {
    switch (c) {
        case RegionClass::Ground: return "ground";
        case RegionClass::Human: return "human";
        case RegionClass::Vegetation: return "vegetation";
        case RegionClass::Vegetation2: return "vegetation2";
        case RegionClass::Smoke: return "smoke";
    }
    return "unknown";
}

struct RegionTermConfig {
    double lambda_g = 0.0;
    double lambda_h = 0.0;
    double lambda_v = 0.0;
    double lambda_v2 = 0.0;
    double lambda_smoke = 0.0;
    double c_mix = 0.1;
    double theta = 1.0;
    Vec3 up{0.0, 0.0, 1.0};

    /// Levels in units of s^2, s the mean neighbor distance: planar surfaces
    /// 0.002 s^2, vegetation 20 s^2 (a volumetric k = 20 neighborhood), a
    /// sparser second vegetation class 8 s^2 and smoke 4 s^2.
    static RegionTermConfig preset(double mean_neighbor_dist) {
        RegionTermConfig cfg;
        const double s2 = mean_neighbor_dist * mean_neighbor_dist;
        cfg.lambda_g = cfg.lambda_h = 0.002 * s2;
        cfg.lambda_v = 20.0 * s2;
        cfg.lambda_v2 = 8.0 * s2;
        cfg.lambda_smoke = 4.0 * s2;
        cfg.theta = 3.0;
        return cfg;
    }

    void validate() const {
        require(c_mix > 0.0 && c_mix < 1.0, ErrorKind::InvalidConfig, "C must lie in (0,1)");
        for (double l : {lambda_g, lambda_h, lambda_v, lambda_v2, lambda_smoke})
            require(std::isfinite(l) && l >= 0.0, ErrorKind::InvalidConfig, "lambda levels must be finite and >= 0");
        require(std::isfinite(theta), ErrorKind::InvalidConfig, "theta must be finite");
        require(std::abs(std::sqrt(dot(up, up)) - 1.0) < 1e-9, ErrorKind::InvalidConfig, "up direction must be unit length");
    }
};

/// One region term for one point:
///   ground      (1-C)|l1 - l_g|^2 + C(-|v1.n| + theta (x3 - h*))
///   human       (1-C)|l1 - l_h|^2 + C|v1.n|
///   vegetation  C|l1 - l_v|^2   (vegetation2, smoke: same with their levels)
inline double region_term(RegionClass cls, const PointGeometry& pg, double height, const RegionTermConfig& cfg) {
    const double l1 = pg.lambda[0];
    const double c = cfg.c_mix;
    const double align = std::abs(dot(pg.v[0], cfg.up));
    switch (cls) {
        case RegionClass::Ground:
            return (1.0 - c) * lambda_homogeneity(l1, cfg.lambda_g) + c * (-align + cfg.theta * (height - pg.h_star));
        case RegionClass::Human: return (1.0 - c) * lambda_homogeneity(l1, cfg.lambda_h) + c * align;
        case RegionClass::Vegetation: return c * lambda_homogeneity(l1, cfg.lambda_v);
        case RegionClass::Vegetation2: return c * lambda_homogeneity(l1, cfg.lambda_v2);
        case RegionClass::Smoke: return c * lambda_homogeneity(l1, cfg.lambda_smoke);
    }
    return 0.0;
}

/// N x n matrix of region terms, one column per requested class.
inline MatrixD class_region_terms(const LocalGeometry& geom, const MatrixD& points, const RegionTermConfig& cfg,
                                  std::span<const RegionClass> classes) {
    cfg.validate();
    detail::check_cloud(points);
    require(geom.size() == points.rows(), ErrorKind::InvalidInput, "geometry and cloud sizes differ");
    require(!classes.empty(), ErrorKind::InvalidConfig, "no region classes requested");
    MatrixD out(points.rows(), classes.size());
    for (std::size_t x = 0; x < points.rows(); ++x)
        for (std::size_t i = 0; i < classes.size(); ++i) out(x, i) = region_term(classes[i], geom[x], points(x, 2), cfg);
    return out;
}

/// `x,y,z,l1,l2,l3,v1x,v1y,v1z,h*` per point.
inline void write_features(std::ostream& os, const MatrixD& points, const LocalGeometry& geom) {
    os.precision(12);
    os << "x,y,z,l1,l2,l3,v1x,v1y,v1z,h*\n";
    for (std::size_t x = 0; x < points.rows(); ++x) {
        const auto& pg = geom[x];
        os << points(x, 0) << ',' << points(x, 1) << ',' << points(x, 2) << ',' << pg.lambda[0] << ',' << pg.lambda[1]
           << ',' << pg.lambda[2] << ',' << pg.v[0][0] << ',' << pg.v[0][1] << ',' << pg.v[0][2] << ',' << pg.h_star
           << '\n';
    }
}

}  // namespace gtv
