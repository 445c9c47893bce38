/*
 * Copyright 2026 The subscan Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "subscan/scenario.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "json.hpp"
#include "subscan/rng.hpp"

namespace subscan {

namespace {

enum Stream : std::uint64_t { kSurfaceStream = 1, kTumorStream = 2, kOrganStream = 3 };

Box bounding_box(std::span<const Vec3> points) {
    Box b{points.front(), points.front()};
    for (const auto& p : points) {
        b.lo = b.lo.cwiseMin(p);
        b.hi = b.hi.cwiseMax(p);
    }
    return b;
}

double mean_nn_distance(std::span<const Vec3> points, const PointIndex& index) {
    if (points.size() < 2) return 0.0;
    // Deterministic stride sample keeps this cheap on large clouds.
    const std::size_t stride = std::max<std::size_t>(1, points.size() / 2000);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < points.size(); i += stride) {
        const auto nn = index.knn(points[i], 2);
        sum += (points[nn[1]] - points[i]).norm();
        ++n;
    }
    return sum / static_cast<double>(n);
}

}  // namespace

SensingPose::SensingPose(const Vec3& position, const Vec3& orientation) : position_(position) {
    const double n = orientation.norm();
    if (!std::isfinite(n) || n == 0.0 || !position.allFinite())
        throw ConfigError("sensing pose needs a finite position and a non-zero orientation");
    orientation_ = orientation / n;
}

AnatomyModel::AnatomyModel(std::vector<Vec3> points, std::vector<std::uint8_t> labels, std::optional<Box> bounds,
                           std::vector<Sphere> tumors)
    : points_(std::move(points)), labels_(std::move(labels)), tumors_(std::move(tumors)) {
    if (points_.empty()) throw ConfigError("anatomy needs at least one point");
    if (points_.size() != labels_.size()) throw ConfigError("anatomy points and labels differ in length");
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!points_[i].allFinite()) throw ConfigError("anatomy point " + std::to_string(i) + " is not finite");
        if (labels_[i] > 1) throw ConfigError("anatomy label " + std::to_string(i) + " is not 0 or 1");
        if (labels_[i] == 1) tumor_indices_.push_back(i);
    }
    bounds_ = bounds.value_or(bounding_box(points_));
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!bounds_.contains(points_[i], 1e-9))
            throw ConfigError("anatomy point " + std::to_string(i) + " lies outside the bounds");
    }
    index_ = PointIndex(points_);
    support_radius_ = mean_nn_distance(points_, index_);
}

std::uint8_t AnatomyModel::label_at(const Vec3& x) const {
    if (!tumors_.empty()) {
        for (const auto& s : tumors_)
            if (s.contains(x)) return 1;
        return 0;
    }
    const std::size_t i = index_.nearest(x);
    if ((points_[i] - x).norm() > support_radius_) return 0;
    return labels_[i];
}

double SurfaceField::height(double x, double y) const {
    // Coordinates are mapped onto the [-3, 3] domain the shape is defined on.
    const double u = x * 3.0 / half_extent;
    const double v = y * 3.0 / half_extent;
    const double g1 = std::exp(-(u * u + v * v) / 2.0) / (2.0 * M_PI);
    const double a = (u - 1.0) / 1.5, b = (v - 1.0) / 0.5;
    const double g2 = std::exp(-(a * a + b * b) / 2.0) / (2.0 * M_PI * 0.5 * 1.5);
    constexpr double kPeak = 0.16;  // roughly max |g2 - g1|
    return amplitude * (g2 - g1) / kPeak;
}

SurfaceField make_surface_field(std::uint64_t seed, double half_extent, double base_amplitude) {
    if (!(half_extent > 0.0)) throw ConfigError("surface half extent must be positive");
    Rng rng(Rng::derive(seed, kSurfaceStream));
    return SurfaceField{half_extent, base_amplitude * (0.75 + 0.5 * rng.uniform())};
}

std::vector<Vec3> sample_surface(const SurfaceField& field, int grid_resolution) {
    if (grid_resolution < 2) throw ConfigError("surface grid resolution must be >= 2");
    const auto n = static_cast<std::size_t>(grid_resolution);
    std::vector<Vec3> out;
    out.reserve(n * n);
    const double step = 2.0 * field.half_extent / static_cast<double>(n - 1);
    for (std::size_t iy = 0; iy < n; ++iy) {
        const double y = -field.half_extent + step * static_cast<double>(iy);
        for (std::size_t ix = 0; ix < n; ++ix) {
            const double x = -field.half_extent + step * static_cast<double>(ix);
            out.emplace_back(x, y, field.height(x, y));
        }
    }
    return out;
}

std::vector<Vec3> generate_surface(int grid_resolution, std::uint64_t seed, double half_extent, double base_amplitude) {
    if (grid_resolution < 2) throw ConfigError("surface grid resolution must be >= 2");
    return sample_surface(make_surface_field(seed, half_extent, base_amplitude), grid_resolution);
}

TumorSample place_spherical_tumor(const Box& bounds, const SurfaceField& surface, double radius, int point_budget,
                                  std::uint64_t seed, std::span<const Sphere> avoid) {
    if (!(radius > 0.0)) throw ConfigError("tumor radius must be positive");
    if (point_budget < 1) throw ConfigError("tumor point budget must be >= 1");
    const Vec3 lo = bounds.lo.array() + radius;
    const Vec3 hi = bounds.hi.array() - radius;
    if ((hi.array() <= lo.array()).any())
        throw ConfigError("tumor radius " + std::to_string(radius) + " does not fit inside the search bounds");

    Rng rng(Rng::derive(seed, kTumorStream));

    // The surface must clear the sphere top over the whole footprint, checked
    // on concentric rings slightly wider than the sphere.
    auto clears_surface = [&](const Vec3& c) {
        const double top = c.z() + radius;
        if (!(top < surface.height(c.x(), c.y()))) return false;
        constexpr int kRings = 6, kSpokes = 24;
        for (int r = 1; r <= kRings; ++r) {
            const double rr = 1.05 * radius * r / kRings;
            for (int s = 0; s < kSpokes; ++s) {
                const double t = 2.0 * M_PI * s / kSpokes;
                if (!(top < surface.height(c.x() + rr * std::cos(t), c.y() + rr * std::sin(t)))) return false;
            }
        }
        return true;
    };

    constexpr int kMaxAttempts = 20000;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const Vec3 c(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()), rng.uniform(lo.z(), hi.z()));
        if (!clears_surface(c)) continue;
        const bool overlaps = std::any_of(avoid.begin(), avoid.end(), [&](const Sphere& s) {
            return (s.center - c).norm() < s.radius + radius;
        });
        if (overlaps) continue;

        TumorSample out{Sphere{c, radius}, {}};
        out.points.reserve(static_cast<std::size_t>(point_budget));
        while (out.points.size() < static_cast<std::size_t>(point_budget)) {
            const Vec3 d(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
            if (d.squaredNorm() <= 1.0) out.points.push_back(c + radius * d);
        }
        return out;
    }
    throw ConfigError("no feasible subsurface center for a tumor of radius " + std::to_string(radius));
}

SensorWorkspace estimate_normals(std::span<const Vec3> surface_points, int k_neighbors) {
    if (k_neighbors < 3) throw ConfigError("normal estimation needs k_neighbors >= 3");
    if (surface_points.size() < static_cast<std::size_t>(k_neighbors))
        throw ConfigError("normal estimation needs at least k_neighbors surface points");

    PointIndex index(surface_points);
    SensorWorkspace ws;
    ws.poses.reserve(surface_points.size());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
    for (std::size_t i = 0; i < surface_points.size(); ++i) {
        const auto nbrs = index.knn(surface_points[i], static_cast<std::size_t>(k_neighbors));
        Vec3 centroid = Vec3::Zero();
        for (auto j : nbrs) centroid += surface_points[j];
        centroid /= static_cast<double>(nbrs.size());
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (auto j : nbrs) {
            const Vec3 d = surface_points[j] - centroid;
            cov += d * d.transpose();
        }
        solver.compute(cov);
        const Vec3 ev = solver.eigenvalues();  // ascending
        if (!(ev[1] > 1e-12 * std::max(ev[2], 1e-300)))
            throw NumericalError("degenerate neighbourhood (rank < 2) at surface point " + std::to_string(i));
        Vec3 normal = solver.eigenvectors().col(0);
        if (normal.z() > 0.0) normal = -normal;
        ws.poses.emplace_back(surface_points[i], normal);
    }
    return ws;
}

CloudFormat cloud_format_from_path(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".csv") return CloudFormat::Csv;
    if (ext == ".json") return CloudFormat::Json;
    throw ConfigError("unknown point cloud format for " + path.string() + " (expected .csv or .json)");
}

namespace {

std::uint8_t parse_label(const std::string& path, std::size_t line, double value) {
    if (value == 0.0) return 0;
    if (value == 1.0) return 1;
    std::ostringstream os;
    os << "label " << value << " is not 0 or 1";
    throw ParseError(path, line, os.str());
}

AnatomyModel load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path.string(), 0, "cannot open file");
    std::string line;
    std::size_t lineno = 0;
    std::vector<Vec3> points;
    std::vector<std::uint8_t> labels;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (!header_seen) {
            std::string compact;
            for (char c : line)
                if (c != ' ' && c != '\t') compact.push_back(c);
            if (compact != "x,y,z,label") throw ParseError(path.string(), lineno, "expected header 'x,y,z,label'");
            header_seen = true;
            continue;
        }
        std::array<double, 4> v{};
        std::stringstream ss(line);
        std::string field;
        std::size_t n = 0;
        while (std::getline(ss, field, ',')) {
            if (n == 4) throw ParseError(path.string(), lineno, "expected 4 fields");
            std::size_t used = 0;
            try {
                v[n] = std::stod(field, &used);
            } catch (const std::exception&) {
                throw ParseError(path.string(), lineno, "field '" + field + "' is not a number");
            }
            if (field.find_first_not_of(" \t", used) != std::string::npos)
                throw ParseError(path.string(), lineno, "field '" + field + "' is not a number");
            ++n;
        }
        if (n != 4) throw ParseError(path.string(), lineno, "expected 4 fields");
        const Vec3 p(v[0], v[1], v[2]);
        if (!p.allFinite()) throw ParseError(path.string(), lineno, "coordinate is not finite");
        points.push_back(p);
        labels.push_back(parse_label(path.string(), lineno, v[3]));
    }
    if (!header_seen) throw ParseError(path.string(), 0, "empty file");
    if (points.empty()) throw ParseError(path.string(), lineno, "no points");
    return AnatomyModel(std::move(points), std::move(labels));
}

AnatomyModel load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path.string(), 0, "cannot open file");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    if (!doc.is_object() || !doc.contains("points") || !doc.contains("labels"))
        throw ParseError(path.string(), 0, "expected an object with 'points' and 'labels'");
    const auto& jp = doc["points"];
    const auto& jl = doc["labels"];
    if (!jp.is_array() || !jl.is_array() || jp.size() != jl.size())
        throw ParseError(path.string(), 0, "'points' and 'labels' must be arrays of equal length");
    if (jp.empty()) throw ParseError(path.string(), 0, "no points");
    std::vector<Vec3> points;
    std::vector<std::uint8_t> labels;
    for (std::size_t i = 0; i < jp.size(); ++i) {
        const auto& e = jp[i];
        const std::size_t entry = i + 1;
        if (!e.is_array() || e.size() != 3 || !e[0].is_number() || !e[1].is_number() || !e[2].is_number())
            throw ParseError(path.string(), entry, "point entry must be [x, y, z]");
        const Vec3 p(e[0].get<double>(), e[1].get<double>(), e[2].get<double>());
        if (!p.allFinite()) throw ParseError(path.string(), entry, "coordinate is not finite");
        if (!jl[i].is_number()) throw ParseError(path.string(), entry, "label is not a number");
        points.push_back(p);
        labels.push_back(parse_label(path.string(), entry, jl[i].get<double>()));
    }
    return AnatomyModel(std::move(points), std::move(labels));
}

}  // namespace

AnatomyModel load_labeled_point_cloud(const std::filesystem::path& path, CloudFormat format) {
    if (!std::filesystem::exists(path)) throw ParseError(path.string(), 0, "file does not exist");
    return format == CloudFormat::Csv ? load_csv(path) : load_json(path);
}

void save_labeled_point_cloud(const AnatomyModel& anatomy, const std::filesystem::path& path, CloudFormat format) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    const auto pts = anatomy.points();
    const auto lbl = anatomy.labels();
    if (format == CloudFormat::Csv) {
        out << "x,y,z,label\n";
        auto num = [](double x) {
            char buf[32];
            return std::string(buf, std::to_chars(buf, buf + sizeof buf, x).ptr);
        };
        for (std::size_t i = 0; i < pts.size(); ++i)
            out << num(pts[i].x()) << ',' << num(pts[i].y()) << ',' << num(pts[i].z()) << ',' << int(lbl[i]) << '\n';
    } else {
        nlohmann::json doc;
        auto& jp = doc["points"] = nlohmann::json::array();
        auto& jl = doc["labels"] = nlohmann::json::array();
        for (std::size_t i = 0; i < pts.size(); ++i) {
            jp.push_back({pts[i].x(), pts[i].y(), pts[i].z()});
            jl.push_back(int(lbl[i]));
        }
        out << doc.dump() << '\n';
    }
}

Scenario build_synthetic_scenario(const ScenarioConfig& config, std::uint64_t seed) {
    if (config.tumor_count < 1) throw ConfigError("scenario needs at least one tumor");
    if (!(config.search_depth > 0.0)) throw ConfigError("search depth must be positive");
    if (!(config.surface_clearance >= 0.0)) throw ConfigError("surface clearance must be non-negative");

    const SurfaceField field = make_surface_field(seed, config.half_extent, config.base_amplitude);
    auto surface = sample_surface(field, config.surface_resolution);

    double z_min = std::numeric_limits<double>::infinity(), z_max = -z_min;
    for (const auto& p : surface) {
        z_min = std::min(z_min, p.z());
        z_max = std::max(z_max, p.z());
    }
    // The search box sits entirely below the lowest surface point.
    const double top = z_min - config.surface_clearance;
    const Box bounds{Vec3(-config.half_extent, -config.half_extent, top - config.search_depth),
                     Vec3(config.half_extent, config.half_extent, top)};

    std::vector<Sphere> spheres;
    std::vector<Vec3> points;
    for (int t = 0; t < config.tumor_count; ++t) {
        auto tumor = place_spherical_tumor(bounds, field, config.tumor_radius, config.tumor_points,
                                           Rng::derive(seed, 100 + static_cast<std::uint64_t>(t)), spheres);
        spheres.push_back(tumor.sphere);
        points.insert(points.end(), tumor.points.begin(), tumor.points.end());
    }
    std::vector<std::uint8_t> labels(points.size(), 1);
    AnatomyModel anatomy(std::move(points), std::move(labels), bounds, std::move(spheres));
    auto workspace = estimate_normals(surface, config.k_neighbors);
    return Scenario{std::move(anatomy), std::move(workspace), std::move(surface), z_max};
}

Scenario build_ingested_scenario(AnatomyModel anatomy, int k_neighbors, double standoff) {
    if (!(standoff >= 0.0)) throw ConfigError("sensing standoff must be non-negative");
    // Highest point per xy column, columns sized by the cloud spacing.
    const double cell = std::max(anatomy.support_radius(), 1e-9);
    const Box& b = anatomy.bounds();
    std::map<std::pair<long, long>, std::size_t> top;
    const auto pts = anatomy.points();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto key = std::make_pair(std::lround((pts[i].y() - b.lo.y()) / cell),
                                        std::lround((pts[i].x() - b.lo.x()) / cell));
        auto [it, inserted] = top.emplace(key, i);
        if (!inserted && pts[i].z() > pts[it->second].z()) it->second = i;
    }
    std::vector<Vec3> surface;
    surface.reserve(top.size());
    double z_max = -std::numeric_limits<double>::infinity();
    for (const auto& [key, i] : top) {
        surface.push_back(pts[i]);
        z_max = std::max(z_max, pts[i].z());
    }
    auto normals = estimate_normals(surface, k_neighbors);
    SensorWorkspace workspace;
    workspace.poses.reserve(surface.size());
    for (std::size_t i = 0; i < surface.size(); ++i) {
        surface[i].z() += standoff;
        workspace.poses.emplace_back(surface[i], normals.poses[i].orientation());
    }
    return Scenario{std::move(anatomy), std::move(workspace), std::move(surface), z_max + standoff};
}

Scenario build_scenario(const ScenarioConfig& config, std::uint64_t seed) {
    if (config.cloud_path) {
        auto anatomy = load_labeled_point_cloud(*config.cloud_path, cloud_format_from_path(*config.cloud_path));
        return build_ingested_scenario(std::move(anatomy), config.k_neighbors, config.surface_clearance);
    }
    return build_synthetic_scenario(config, seed);
}

AnatomyModel synthesize_organ_cloud(std::uint64_t seed, double spacing, double tumor_spacing) {
    if (!(spacing > 0.0) || !(tumor_spacing > 0.0)) throw ConfigError("organ lattice spacing must be positive");
    Rng rng(Rng::derive(seed, kOrganStream));
    constexpr double kHalfX = 3.0, kHalfY = 2.6, kFloor = -3.0;
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    auto top = [&](double x, double y) {
        return 0.3 * std::sin(0.9 * x + phase) * std::cos(0.7 * y) + 0.15 * std::cos(1.3 * y - 0.5 * x);
    };
    auto bottom = [&](double x, double y) {
        const double r2 = (x / kHalfX) * (x / kHalfX) + (y / kHalfY) * (y / kHalfY);
        return kFloor + 0.8 * r2;
    };

    struct Ellipsoid {
        Vec3 c;
        Vec3 axes;
        bool contains(const Vec3& p) const { return ((p - c).array() / axes.array()).matrix().squaredNorm() <= 1.0; }
    };
    std::vector<Ellipsoid> tumors;
    constexpr std::size_t kTumors = 1;
    constexpr double kA0 = 0.34, kA1 = 0.42;
    while (tumors.size() < kTumors) {
        const Vec3 axes(rng.uniform(kA0, kA1), rng.uniform(kA0, kA1), rng.uniform(kA0, kA1));
        const Vec3 c(rng.uniform(-2.2, 2.2), rng.uniform(-1.8, 1.8), rng.uniform(-2.0, -0.8));
        if (c.z() + axes.z() > top(c.x(), c.y()) - 0.3 || c.z() - axes.z() < bottom(c.x(), c.y()) + 0.2) continue;
        const bool close = std::any_of(tumors.begin(), tumors.end(), [&](const Ellipsoid& e) {
            return (e.c - c).norm() < 1.5;
        });
        if (!close) tumors.push_back({c, axes});
    }

    std::vector<Vec3> points;
    std::vector<std::uint8_t> labels;
    const long nx = std::lround(2.0 * kHalfX / spacing), ny = std::lround(2.0 * kHalfY / spacing);
    for (long iy = 0; iy <= ny; ++iy) {
        const double y = -kHalfY + spacing * static_cast<double>(iy);
        for (long ix = 0; ix <= nx; ++ix) {
            const double x = -kHalfX + spacing * static_cast<double>(ix);
            if ((x / kHalfX) * (x / kHalfX) + (y / kHalfY) * (y / kHalfY) > 1.0) continue;
            const double zt = top(x, y), zb = bottom(x, y);
            for (long iz = 0;; ++iz) {
                const double z = kFloor + spacing * static_cast<double>(iz);
                if (z > zt) break;
                if (z < zb) continue;
                const Vec3 p(x, y, z);
                if (std::any_of(tumors.begin(), tumors.end(), [&](const Ellipsoid& e) { return e.contains(p); })) continue;
                points.push_back(p);
                labels.push_back(0);
            }
        }
    }
    for (const Ellipsoid& e : tumors) {
        const long n = static_cast<long>(std::ceil(e.axes.maxCoeff() / tumor_spacing));
        for (long i = -n; i <= n; ++i)
            for (long j = -n; j <= n; ++j)
                for (long l = -n; l <= n; ++l) {
                    const Vec3 p = e.c + tumor_spacing * Vec3(double(i), double(j), double(l));
                    if (!e.contains(p)) continue;
                    points.push_back(p);
                    labels.push_back(1);
                }
    }
    return AnatomyModel(std::move(points), std::move(labels));
}

}  // namespace subscan
