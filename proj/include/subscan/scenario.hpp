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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "subscan/geometry.hpp"
#include "subscan/spatial_index.hpp"

namespace subscan {

/// Position plus unit pointing direction (into the anatomy).
class SensingPose {
public:
    SensingPose() = default;
    /// Normalizes `orientation`; throws ConfigError for a zero or non-finite direction.
    SensingPose(const Vec3& position, const Vec3& orientation);

    const Vec3& position() const { return position_; }
    const Vec3& orientation() const { return orientation_; }

private:
    Vec3 position_ = Vec3::Zero();
    Vec3 orientation_ = Vec3(0.0, 0.0, -1.0);
};

/// Candidate poses, in a fixed order.
struct SensorWorkspace {
    std::vector<SensingPose> poses;

    std::size_t size() const { return poses.size(); }
};

struct Sphere {
    Vec3 center = Vec3::Zero();
    double radius = 0.0;

    bool contains(const Vec3& x) const { return (x - center).squaredNorm() <= radius * radius; }
};

/// Labeled point cloud (1 = tumor, 0 = free) over the search box.
///
/// Ground truth at arbitrary locations comes from the analytic tumor spheres
/// when the model was synthesized, otherwise from the label of the nearest
/// cloud point within `support_radius()` (free beyond it).
class AnatomyModel {
public:
    AnatomyModel(std::vector<Vec3> points, std::vector<std::uint8_t> labels,
                 std::optional<Box> bounds = std::nullopt, std::vector<Sphere> tumors = {});

    std::span<const Vec3> points() const { return points_; }
    std::span<const std::uint8_t> labels() const { return labels_; }
    const Box& bounds() const { return bounds_; }
    std::span<const Sphere> tumors() const { return tumors_; }

    /// Indices of points labeled 1, ascending.
    std::span<const std::size_t> tumor_indices() const { return tumor_indices_; }
    std::size_t size() const { return points_.size(); }

    double support_radius() const { return support_radius_; }

    /// Ground-truth occupancy at an arbitrary location.
    std::uint8_t label_at(const Vec3& x) const;

private:
    std::vector<Vec3> points_;
    std::vector<std::uint8_t> labels_;
    Box bounds_;
    std::vector<Sphere> tumors_;
    std::vector<std::size_t> tumor_indices_;
    PointIndex index_;
    double support_radius_ = 0.0;
};

/// Smooth uneven height field built from a difference of two Gaussians
/// (the shape of the classic "peaks" test surface), scaled per seed.
struct SurfaceField {
    double half_extent = 3.0;
    double amplitude = 0.6;

    double height(double x, double y) const;
};

/// Height field for a seed: amplitude is base_amplitude * (0.75 + 0.5 u), u ~ U[0,1).
SurfaceField make_surface_field(std::uint64_t seed, double half_extent = 3.0, double base_amplitude = 0.6);

/// resolution^2 points on a regular grid spanning [-half_extent, half_extent]^2,
/// endpoints included, row-major in y then x.
std::vector<Vec3> generate_surface(int grid_resolution, std::uint64_t seed, double half_extent = 3.0,
                                   double base_amplitude = 0.6);
std::vector<Vec3> sample_surface(const SurfaceField& field, int grid_resolution);

struct TumorSample {
    Sphere sphere;
    std::vector<Vec3> points;
};

/// Places a sphere strictly inside `bounds` and strictly below `surface`, not
/// overlapping `avoid`, and fills it with `point_budget` uniform points.
/// Throws ConfigError when no feasible center is found.
TumorSample place_spherical_tumor(const Box& bounds, const SurfaceField& surface, double radius, int point_budget,
                                  std::uint64_t seed, std::span<const Sphere> avoid = {});

/// One pose per surface point; orientation is the least-squares plane normal
/// of the k nearest neighbours (the point itself included), flipped to -z.
/// Throws NumericalError for rank-deficient neighbourhoods.
SensorWorkspace estimate_normals(std::span<const Vec3> surface_points, int k_neighbors = 10);

enum class CloudFormat { Csv, Json };

CloudFormat cloud_format_from_path(const std::filesystem::path& path);

/// Reads a labeled cloud. Throws ParseError naming the offending line (CSV)
/// or entry (JSON).
AnatomyModel load_labeled_point_cloud(const std::filesystem::path& path, CloudFormat format);
void save_labeled_point_cloud(const AnatomyModel& anatomy, const std::filesystem::path& path, CloudFormat format);

struct ScenarioConfig {
    int surface_resolution = 120;
    double half_extent = 3.0;
    double base_amplitude = 0.6;
    /// Search box height below the lowest surface point.
    double search_depth = 3.4;
    /// Gap between the lowest surface point and the top of the search box.
    double surface_clearance = 1.0;
    int tumor_count = 1;
    double tumor_radius = 0.4;
    int tumor_points = 500;
    int k_neighbors = 10;
    /// When set, the anatomy is loaded from this cloud instead of synthesized.
    std::optional<std::filesystem::path> cloud_path;
};

struct Scenario {
    AnatomyModel anatomy;
    SensorWorkspace workspace;
    std::vector<Vec3> surface_points;
    /// Highest surface point; sensing cones start at or below it.
    double surface_top = 0.0;
};

/// Synthetic surface + spherical tumors for a trial seed.
Scenario build_synthetic_scenario(const ScenarioConfig& config, std::uint64_t seed);

/// Workspace on the top surface of an ingested cloud (highest point per xy column).
/// Sensing surface: the highest cloud point of each xy column, raised by
/// `standoff` along +z. Normals come from the unraised points.
Scenario build_ingested_scenario(AnatomyModel anatomy, int k_neighbors = 10, double standoff = 0.0);

Scenario build_scenario(const ScenarioConfig& config, std::uint64_t seed);

/// Lattice-sampled organ-like block with a bumpy top and one embedded
/// ellipsoidal tumor. Healthy tissue uses `spacing`; the tumor is resampled
/// on its own lattice with `tumor_spacing`. Used to produce the bundled
/// ingestion cloud.
AnatomyModel synthesize_organ_cloud(std::uint64_t seed, double spacing = 0.2, double tumor_spacing = 0.1);

}  // namespace subscan
