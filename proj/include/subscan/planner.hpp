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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "subscan/bhm.hpp"
#include "subscan/metrics.hpp"

namespace subscan {

struct AcquisitionConfig {
    /// Exploration offset subtracted inside EI.
    double ei_xi = 0.01;
    /// Max angle between a pose's orientation and the direction to the query point.
    double angle_threshold = deg_to_rad(5.0);
    /// Points over which EI is maximized.
    std::vector<Vec3> candidate_points;

    void validate() const;
};

/// Closed-form EI with m = probability, s = sqrt(latent_variance),
/// d = m - f_best - ei_xi: d Phi(d/s) + s phi(d/s), or max(0, d) when s = 0.
double expected_improvement(const OccupancyEstimate& estimate, double f_best, double ei_xi);

struct QuerySelection {
    std::size_t index = 0;
    Vec3 point = Vec3::Zero();
    double ei = 0.0;
    double f_best = 0.0;
};

/// argmax EI over pre-computed candidate estimates; f_best is the largest
/// candidate probability and ties go to the lowest index.
QuerySelection select_from_estimates(std::span<const OccupancyEstimate> estimates, std::span<const Vec3> candidates,
                                     double ei_xi);
QuerySelection select_query_point(const WeightPosterior& posterior, const HingeGrid& grid,
                                  const AcquisitionConfig& config);

/// Index of the first pose (workspace order) whose orientation is within
/// `angle_threshold` of the direction to `target`, else the minimum-angle
/// pose (lowest index on ties). A pose located exactly at `target` is
/// returned immediately.
std::size_t next_sensing_pose(const Vec3& target, const SensorWorkspace& workspace, double angle_threshold);

/// The points inside the cone of at least one workspace pose, input order kept.
std::vector<Vec3> sensable_points(std::span<const Vec3> points, const SensorWorkspace& workspace,
                                  const ConeSensor& sensor);

struct IterationRecord {
    int iteration = 0;  ///< 1-based
    std::size_t pose_index = 0;
    std::optional<std::size_t> query_index;  ///< BO only
    bool repeat = false;
    std::size_t samples = 0;
    double coverage = 0.0;
    std::optional<double> auprc;
};

struct PlanTrace {
    std::string planner;
    std::vector<std::size_t> pose_indices;
    std::vector<SensingPose> poses;
    std::vector<SensorReading> readings;
    std::vector<IterationRecord> records;
    /// Map quality before any sensing, when evaluation is enabled.
    std::optional<double> initial_auprc;
    /// First iteration whose coverage reached the detection threshold.
    std::optional<int> poses_to_detection;
    int repeats = 0;
    std::optional<WeightPosterior> posterior;

    std::size_t iterations() const { return pose_indices.size(); }
};

struct PlanOptions {
    int budget = 100;
    std::uint64_t seed = 0;
    double detection_threshold = 0.95;
    /// End the run as soon as the detection threshold is reached.
    bool stop_at_detection = false;
    /// Evaluation lattice for per-iteration AUPRC; nullptr disables it.
    const EvaluationSet* evaluation = nullptr;
    /// Baselines only maintain a map when this is set (or evaluation is requested).
    bool track_map = false;
    bool keep_readings = true;
    unsigned threads = 0;
};

/// Everything a planner needs about the world.
struct PlanProblem {
    const AnatomyModel& anatomy;
    const SensorWorkspace& workspace;
    const ConeSensor& sensor;
    const MapConfig& map;
};

/// Expected-improvement planner: a seeded random first pose, then
/// argmax-EI query point -> aligned pose, sensing and a map update per step.
PlanTrace plan(const PlanProblem& problem, const AcquisitionConfig& acquisition, const PlanOptions& options);

/// Uniform sampling without replacement. Throws ConfigError when budget > N.
PlanTrace plan_random(const PlanProblem& problem, const PlanOptions& options);

/// Coarse-to-fine raster scan: round r senses the poses nearest (in xy) to
/// the centers of a 2^(r-1) x 2^(r-1) partition of the workspace footprint.
PlanTrace plan_multiresolution(const PlanProblem& problem, const PlanOptions& options);

/// Cell centers of multi-resolution round `round` (1-based), raster order
/// (rows of ascending y, ascending x within a row).
std::vector<Eigen::Vector2d> multiresolution_centers(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi, int round);

}  // namespace subscan
