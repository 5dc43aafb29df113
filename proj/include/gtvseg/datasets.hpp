#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gtvseg/error.hpp"
#include "gtvseg/matrix.hpp"
#include "gtvseg/rng.hpp"

namespace gtv {

struct Dataset {
    MatrixD features;
    std::vector<std::size_t> labels;  // 0-based; empty when unknown
    std::size_t n_classes = 0;

    std::size_t size() const noexcept { return features.rows(); }
    bool has_labels() const noexcept { return !labels.empty(); }
};

namespace detail {

struct Arc {
    double cx, cy, radius;
    bool upper;  // upper half circle, else lower
};

inline Dataset sample_arcs(std::span<const Arc> arcs, std::size_t n_per_class, std::size_t dims, double noise_std,
                           std::uint64_t seed) {
    require(dims >= 2, ErrorKind::InvalidParameter, "need at least two dimensions");
    require(noise_std >= 0.0 && std::isfinite(noise_std), ErrorKind::InvalidParameter, "noise must be >= 0");
    Rng rng(seed);
    Dataset ds;
    ds.n_classes = arcs.size();
    ds.features = MatrixD(arcs.size() * n_per_class, dims, 0.0);
    ds.labels.resize(ds.features.rows());
    std::size_t row = 0;
    for (std::size_t c = 0; c < arcs.size(); ++c) {
        const Arc& a = arcs[c];
        for (std::size_t j = 0; j < n_per_class; ++j, ++row) {
            const double t = std::numbers::pi * rng.uniform01();
            ds.features(row, 0) = a.cx + a.radius * std::cos(t);
            ds.features(row, 1) = a.cy + (a.upper ? 1.0 : -1.0) * a.radius * std::sin(t);
            ds.labels[row] = c;
        }
    }
    if (noise_std > 0.0)
        for (double& v : ds.features.data()) v += noise_std * rng.normal();
    return ds;
}

}  // namespace detail

/// Three moons: upper unit half circles centered at (0,0) and (3,0), lower
/// half circle of radius 1.5 centered at (1.5,0.4). Zero-padded to `dims`
/// coordinates, then iid N(0, noise_std^2) added to every coordinate.
/// Angles are drawn first (class by class), then the noise row by row.
inline Dataset three_moons(std::size_t n_per_class = 1000, std::size_t dims = 100, double noise_std = 0.14,
                           std::uint64_t seed = 0) {
    const std::array<detail::Arc, 3> arcs{{{0.0, 0.0, 1.0, true}, {3.0, 0.0, 1.0, true}, {1.5, 0.4, 1.5, false}}};
    return detail::sample_arcs(arcs, n_per_class, dims, noise_std, seed);
}

/// Two interlocking moons: (cos t, sin t) and (1 - cos t, 0.5 - sin t).
inline Dataset two_moons(std::size_t n_per_class = 1000, std::size_t dims = 2, double noise_std = 0.1,
                         std::uint64_t seed = 0) {
    const std::array<detail::Arc, 2> arcs{{{0.0, 0.0, 1.0, true}, {1.0, 0.5, 1.0, false}}};
    return detail::sample_arcs(arcs, n_per_class, dims, noise_std, seed);
}

// ---------------------------------------------------------------------------
// Synthetic point cloud scene
// ---------------------------------------------------------------------------

enum SceneLabel : std::size_t { kGround = 0, kHuman = 1, kVegetation = 2 };

/// Ground plane, one box (walls and roof) and Gaussian blobs standing in for
/// vegetation. Axis 1 points away from the viewer, axis 3 is up.
struct SceneSpec {
    bool plane = true;
    double extent_x = 20.0, extent_y = 20.0;  // plane centered at the origin
    double tilt = 0.0;                        // ground slope along axis 1, radians

    bool box = true;
    double box_x = 2.0, box_y = 0.0;          // footprint center
    double box_sx = 4.0, box_sy = 6.0, box_sz = 3.0;
    double box_yaw = 0.0;                     // rotation about the up axis

    std::size_t blobs = 4;
    double blob_spread = 0.6;                 // standard deviation per axis
    double blob_height = 2.0;                 // center above the ground

    double noise = 0.01;                      // sensor noise on surfaces
    double density = 50.0;                    // points per unit area

    void validate() const {
        require(!plane || (extent_x > 0.0 && extent_y > 0.0), ErrorKind::InvalidParameter, "plane extents must be > 0");
        require(!box || (box_sx > 0.0 && box_sy > 0.0 && box_sz > 0.0), ErrorKind::InvalidParameter,
                "box dimensions must be > 0");
        require(blobs == 0 || blob_spread > 0.0, ErrorKind::InvalidParameter, "blob spread must be > 0");
        require(density > 0.0 && noise >= 0.0, ErrorKind::InvalidParameter, "density must be > 0, noise >= 0");
        require(plane || box || blobs > 0, ErrorKind::InvalidParameter, "scene is empty");
    }

    double ground_height(double x) const { return std::tan(tilt) * x; }
    double plane_area() const {
        return plane ? extent_x * extent_y - (box ? box_sx * box_sy : 0.0) : 0.0;
    }
    double box_area() const { return box ? 2.0 * (box_sx + box_sy) * box_sz + box_sx * box_sy : 0.0; }
    /// Blobs count as the surface of a sphere of radius `blob_spread` each.
    double blob_area() const {
        return static_cast<double>(blobs) * 4.0 * std::numbers::pi * blob_spread * blob_spread;
    }
};

struct Scene {
    Dataset data;
    std::array<std::size_t, 3> counts{};  // ground, human, vegetation
};

inline Scene synth_scene(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const std::array<double, 3> areas{spec.plane_area(), spec.box_area(), spec.blob_area()};
    Scene scene;
    for (std::size_t i = 0; i < 3; ++i)
        scene.counts[i] = static_cast<std::size_t>(std::llround(spec.density * areas[i]));
    const std::size_t total = scene.counts[0] + scene.counts[1] + scene.counts[2];
    require(total >= 1, ErrorKind::InvalidParameter, "scene density too low");

    Dataset& ds = scene.data;
    ds.n_classes = 3;
    ds.features = MatrixD(total, 3, 0.0);
    ds.labels.resize(total);

    const double cy = std::cos(spec.box_yaw), sy = std::sin(spec.box_yaw);
    // Box-local (u along sx, v along sy) to world.
    auto to_world = [&](double u, double v) {
        return std::array<double, 2>{spec.box_x + cy * u - sy * v, spec.box_y + sy * u + cy * v};
    };
    auto in_footprint = [&](double x, double y, double margin) {
        if (!spec.box) return false;
        const double dx = x - spec.box_x, dy = y - spec.box_y;
        const double u = cy * dx + sy * dy, v = -sy * dx + cy * dy;
        return std::abs(u) <= 0.5 * spec.box_sx + margin && std::abs(v) <= 0.5 * spec.box_sy + margin;
    };
    const double base = spec.ground_height(spec.box_x);

    std::size_t row = 0;
    auto emit = [&](double x, double y, double z, std::size_t label, double noise) {
        ds.features(row, 0) = x + noise * rng.normal();
        ds.features(row, 1) = y + noise * rng.normal();
        ds.features(row, 2) = z + noise * rng.normal();
        ds.labels[row] = label;
        ++row;
    };

    for (std::size_t j = 0; j < scene.counts[0]; ++j) {
        double x = 0.0, y = 0.0;
        do {
            x = rng.uniform(-0.5 * spec.extent_x, 0.5 * spec.extent_x);
            y = rng.uniform(-0.5 * spec.extent_y, 0.5 * spec.extent_y);
        } while (in_footprint(x, y, 0.0));
        emit(x, y, spec.ground_height(x), kGround, spec.noise);
    }

    if (spec.box) {
        const double hx = 0.5 * spec.box_sx, hy = 0.5 * spec.box_sy, h = spec.box_sz;
        const std::array<double, 5> face_area{spec.box_sy * h, spec.box_sy * h, spec.box_sx * h, spec.box_sx * h,
                                              spec.box_sx * spec.box_sy};
        const double face_total = spec.box_area();
        for (std::size_t j = 0; j < scene.counts[1]; ++j) {
            double pick = rng.uniform01() * face_total;
            std::size_t f = 0;
            while (f + 1 < face_area.size() && pick >= face_area[f]) pick -= face_area[f++];
            const double a = rng.uniform(-1.0, 1.0), b = rng.uniform01();
            double u = 0.0, v = 0.0, z = base;
            switch (f) {
                case 0: u = -hx; v = a * hy; z += b * h; break;
                case 1: u = hx; v = a * hy; z += b * h; break;
                case 2: u = a * hx; v = -hy; z += b * h; break;
                case 3: u = a * hx; v = hy; z += b * h; break;
                default: u = a * hx; v = (2.0 * b - 1.0) * hy; z += h; break;
            }
            const auto w = to_world(u, v);
            emit(w[0], w[1], z, kHuman, spec.noise);
        }
    }

    if (spec.blobs > 0) {
        std::vector<std::array<double, 3>> centers;
        const double margin = 3.0 * spec.blob_spread;
        const double half_x = 0.5 * (spec.plane ? spec.extent_x : 10.0) - margin;
        const double half_y = 0.5 * (spec.plane ? spec.extent_y : 10.0) - margin;
        for (std::size_t b = 0; b < spec.blobs; ++b) {
            double x = 0.0, y = 0.0;
            std::size_t tries = 0;
            bool ok = false;
            while (!ok) {
                require(++tries < 100000, ErrorKind::InvalidParameter, "no room for vegetation blobs");
                x = rng.uniform(-half_x, half_x);
                y = rng.uniform(-half_y, half_y);
                ok = !in_footprint(x, y, margin);
                for (const auto& c : centers)
                    ok = ok && std::hypot(c[0] - x, c[1] - y) > 2.0 * margin;
            }
            centers.push_back({x, y, spec.ground_height(x) + spec.blob_height});
        }
        for (std::size_t j = 0; j < scene.counts[2]; ++j) {
            const auto& c = centers[static_cast<std::size_t>(rng.below(centers.size()))];
            emit(c[0], c[1], c[2], kVegetation, 0.0);
            for (std::size_t d = 0; d < 3; ++d) ds.features(row - 1, d) += spec.blob_spread * rng.normal();
        }
    }
    return scene;
}

// ---------------------------------------------------------------------------
// Supervision
// ---------------------------------------------------------------------------

/// Stratified sample of round(fraction * |class|) nodes per class (at least
/// one). With `score` and a band, only nodes whose score lies in [lo, hi] are
/// eligible. Returns sorted node indices.
inline std::vector<std::size_t> sample_supervision(const Dataset& ds, double fraction, std::uint64_t seed,
                                                   std::span<const double> score = {},
                                                   std::optional<std::pair<double, double>> band = std::nullopt) {
    require(fraction > 0.0 && fraction < 1.0, ErrorKind::InvalidParameter, "supervision fraction must lie in (0,1)");
    require(ds.has_labels(), ErrorKind::InvalidInput, "supervision sampling needs ground truth labels");
    require(!band || score.size() == ds.size(), ErrorKind::InvalidInput, "band sampling needs one score per node");
    Rng rng(seed);
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < ds.n_classes; ++c) {
        std::vector<std::size_t> members, eligible;
        for (std::size_t x = 0; x < ds.size(); ++x) {
            if (ds.labels[x] != c) continue;
            members.push_back(x);
            if (!band || (score[x] >= band->first && score[x] <= band->second)) eligible.push_back(x);
        }
        if (members.empty()) continue;
        const auto want = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size()))));
        require(eligible.size() >= want, ErrorKind::InfeasibleSupervision,
                "class " + std::to_string(c + 1) + " has " + std::to_string(eligible.size()) +
                    " eligible nodes, " + std::to_string(want) + " requested");
        rng.shuffle(eligible);
        out.insert(out.end(), eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(want));
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// File IO
// ---------------------------------------------------------------------------

namespace detail {

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path);
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
    out.precision(17);
    return out;
}

inline double parse_real(const std::string& tok, std::size_t line) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    require(used > 0 && tok.find_first_not_of(" \t\r", used) == std::string::npos, ErrorKind::InvalidInput,
            "line " + std::to_string(line) + ": cannot parse '" + tok + "'");
    return v;
}

}  // namespace detail

/// Comma-separated reals, one row per point, no header.
inline MatrixD read_csv_matrix(std::istream& in) {
    std::vector<double> data;
    std::size_t cols = 0, rows = 0, line_no = 0;
    std::string line, tok;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::stringstream ss(line);
        std::size_t c = 0;
        while (std::getline(ss, tok, ',')) {
            data.push_back(detail::parse_real(tok, line_no));
            ++c;
        }
        require(rows == 0 || c == cols, ErrorKind::InvalidInput, "line " + std::to_string(line_no) + ": ragged row");
        cols = c;
        ++rows;
    }
    require(rows > 0, ErrorKind::InvalidInput, "no data rows");
    return MatrixD(rows, cols, std::move(data));
}

inline MatrixD read_csv_matrix(const std::string& path) {
    auto in = detail::open_in(path);
    return read_csv_matrix(in);
}

inline void write_csv_matrix(std::ostream& os, const MatrixD& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m(r, c);
        os << '\n';
    }
}

inline void write_csv_matrix(const std::string& path, const MatrixD& m) {
    auto out = detail::open_out(path);
    write_csv_matrix(out, m);
}

/// Whitespace-separated XYZ; extra columns are ignored, '#' starts a comment.
inline MatrixD read_xyz(std::istream& in) {
    std::vector<double> data;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::stringstream ss(line);
        std::array<std::string, 3> tok;
        if (!(ss >> tok[0])) continue;
        require(static_cast<bool>(ss >> tok[1] >> tok[2]), ErrorKind::InvalidInput,
                "line " + std::to_string(line_no) + ": expected three coordinates");
        for (const auto& t : tok) data.push_back(detail::parse_real(t, line_no));
    }
    require(!data.empty(), ErrorKind::InvalidInput, "no points");
    const std::size_t rows = data.size() / 3;
    return MatrixD(rows, 3, std::move(data));
}

inline MatrixD read_xyz(const std::string& path) {
    auto in = detail::open_in(path);
    return read_xyz(in);
}

/// `x y z label` per line; labels 1-based.
inline void write_labeled_xyz(std::ostream& os, const MatrixD& points, std::span<const std::size_t> labels) {
    for (std::size_t x = 0; x < points.rows(); ++x)
        os << points(x, 0) << ' ' << points(x, 1) << ' ' << points(x, 2) << ' ' << labels[x] + 1 << '\n';
}

/// `node_index,label` with header; labels written 1-based.
inline void write_labels(std::ostream& os, std::span<const std::size_t> labels) {
    os << "node_index,label\n";
    for (std::size_t x = 0; x < labels.size(); ++x) os << x << ',' << labels[x] + 1 << '\n';
}

inline void write_labels(const std::string& path, std::span<const std::size_t> labels) {
    auto out = detail::open_out(path);
    write_labels(out, labels);
}

/// Reads `node_index,label` pairs (header required); labels converted to 0-based.
inline std::vector<std::pair<std::size_t, std::size_t>> read_label_pairs(std::istream& in) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::InvalidInput, "empty label file");
    require(line.rfind("node_index,label", 0) == 0, ErrorKind::InvalidInput, "label file must start with node_index,label");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto comma = line.find(',');
        require(comma != std::string::npos, ErrorKind::InvalidInput, "line " + std::to_string(line_no) + ": missing comma");
        const double node = detail::parse_real(line.substr(0, comma), line_no);
        const double label = detail::parse_real(line.substr(comma + 1), line_no);
        require(node >= 0 && label >= 1 && node == std::floor(node) && label == std::floor(label),
                ErrorKind::InvalidInput, "line " + std::to_string(line_no) + ": bad node or label");
        out.emplace_back(static_cast<std::size_t>(node), static_cast<std::size_t>(label) - 1);
    }
    return out;
}

inline std::vector<std::pair<std::size_t, std::size_t>> read_label_pairs(const std::string& path) {
    auto in = detail::open_in(path);
    return read_label_pairs(in);
}

/// Dense label vector from a complete `node_index,label` file.
inline std::vector<std::size_t> read_labels(const std::string& path, std::size_t n_nodes) {
    const auto pairs = read_label_pairs(path);
    std::vector<std::size_t> labels(n_nodes, SIZE_MAX);
    for (const auto& [node, label] : pairs) {
        require(node < n_nodes, ErrorKind::InvalidInput, "label for node out of range");
        labels[node] = label;
    }
    for (std::size_t l : labels) require(l != SIZE_MAX, ErrorKind::InvalidInput, "label file misses nodes");
    return labels;
}

// ---------------------------------------------------------------------------
// IDX (MNIST) files, uncompressed
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    require(static_cast<bool>(in), ErrorKind::InvalidInput, "truncated IDX header");
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

}  // namespace detail

/// Unsigned-byte IDX tensor flattened to rows: first dimension is the row.
inline MatrixD read_idx(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path);
    const std::uint32_t magic = detail::read_be32(in);
    require((magic >> 8) == 0x08, ErrorKind::InvalidInput, path + ": only unsigned-byte IDX files are supported");
    const std::uint32_t ndim = magic & 0xff;
    require(ndim >= 1 && ndim <= 4, ErrorKind::InvalidInput, path + ": bad IDX rank");
    std::vector<std::size_t> dims(ndim);
    for (auto& d : dims) d = detail::read_be32(in);
    std::size_t cols = 1;
    for (std::size_t i = 1; i < ndim; ++i) cols *= dims[i];
    std::vector<unsigned char> raw(dims[0] * cols);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    require(static_cast<bool>(in), ErrorKind::InvalidInput, path + ": truncated IDX payload");
    std::vector<double> data(raw.begin(), raw.end());
    return MatrixD(dims[0], cols, std::move(data));
}

/// MNIST-style images + labels, keeping only `digits` (relabelled 0.. in the
/// given order) and at most `limit` points.
inline Dataset load_idx_dataset(const std::string& images, const std::string& labels,
                                std::span<const std::size_t> digits = {}, std::size_t limit = 0) {
    const MatrixD img = read_idx(images);
    const MatrixD lab = read_idx(labels);
    require(lab.cols() == 1 && lab.rows() == img.rows(), ErrorKind::InvalidInput, "image and label counts differ");
    std::vector<std::size_t> keep, mapped;
    for (std::size_t r = 0; r < img.rows(); ++r) {
        const auto d = static_cast<std::size_t>(lab(r, 0));
        std::size_t cls = d;
        if (!digits.empty()) {
            const auto it = std::find(digits.begin(), digits.end(), d);
            if (it == digits.end()) continue;
            cls = static_cast<std::size_t>(it - digits.begin());
        }
        if (limit && keep.size() >= limit) break;
        keep.push_back(r);
        mapped.push_back(cls);
    }
    require(!keep.empty(), ErrorKind::InvalidInput, "no images selected");
    Dataset ds;
    ds.features = MatrixD(keep.size(), img.cols());
    for (std::size_t i = 0; i < keep.size(); ++i)
        std::copy(img.row(keep[i]).begin(), img.row(keep[i]).end(), ds.features.row(i).begin());
    ds.labels = std::move(mapped);
    ds.n_classes = digits.empty() ? *std::max_element(ds.labels.begin(), ds.labels.end()) + 1 : digits.size();
    return ds;
}

}  // namespace gtv
