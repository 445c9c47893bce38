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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "subscan/planner.hpp"
#include "subscan/scenario.hpp"

namespace subscan {

inline constexpr const char* kVersion = "1.0.0";

enum class CandidateMode { Lattice, Sensable };

/// Every parameter that affects the output of a run.
struct RunConfig {
    std::string run_id = "default";
    ScenarioConfig scenario;
    ConeSensor sensor;
    /// Cone depth; unset means the full search height below the surface top.
    std::optional<double> sensor_depth;
    MapConfig map;
    double ei_xi = 0.01;
    double angle_threshold_deg = 5.0;
    /// Lattice: every evaluation point is an EI candidate. Sensable: only the
    /// evaluation points inside at least one workspace cone.
    CandidateMode candidates = CandidateMode::Lattice;
    std::array<int, 3> evaluation_shape{22, 22, 13};
    /// Per-iteration AUPRC on the evaluation lattice.
    bool evaluate = true;
    std::vector<std::string> planners{"bo", "random", "multires"};
    int budget = 50;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    double detection_threshold = 0.95;
    bool stop_at_detection = false;
    /// Query workers (0 = hardware concurrency). Results do not depend on it.
    unsigned threads = 0;

    /// Throws ConfigError for out-of-range values or unknown planners.
    void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys and wrong types throw
/// ConfigError. A manifest document (with a "config" member) is accepted too.
RunConfig run_config_from_json(const nlohmann::json& doc);
/// Parses a JSON file; a relative scenario.cloud_path is resolved against
/// the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

/// Config plus tool version, PRNG id and interpolation rule.
nlohmann::json make_manifest(const RunConfig& config);

/// Scenario, sensor, evaluation set and candidates for one trial seed.
struct TrialSetup {
    Scenario scenario;
    ConeSensor sensor;
    EvaluationSet evaluation;
    AcquisitionConfig acquisition;
};
TrialSetup make_trial_setup(const RunConfig& config, std::uint64_t seed);

/// Runs one (planner, seed) cell.
PlanTrace run_trial(const RunConfig& config, const TrialSetup& setup, const std::string& planner, std::uint64_t seed);

/// iteration,pose_index,x,y,z,ox,oy,oz,query_index,repeat,samples,coverage,auprc
void write_trace_csv(const PlanTrace& trace, const std::filesystem::path& path);
/// threshold,recall,precision
void write_pr_curve_csv(const PRCurve& curve, const std::filesystem::path& path);
/// auprc_by_iteration, coverage_by_iteration, poses_to_detection and friends.
nlohmann::json trace_metrics(const PlanTrace& trace);

struct CellResult {
    std::string planner;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    nlohmann::json metrics;
};

/// Mean, sample standard deviation and median per planner, recomputed from
/// the cell metrics alone. Undetected cells count as +inf in the median and
/// are left out of the mean.
nlohmann::json summarize(const RunConfig& config, const std::vector<CellResult>& cells);

struct CampaignResult {
    std::filesystem::path root;
    std::vector<CellResult> cells;
    nlohmann::json summary;
};

/// Writes <out>/<run_id>/manifest.json, summary.json and, per cell,
/// <planner>/<seed>/{trace.csv, metrics.json} (plus pr_curve.csv and
/// posterior.json when a map was kept). A failing cell is recorded in the
/// summary and the campaign goes on.
CampaignResult run_campaign(const RunConfig& config, const std::filesystem::path& out);

struct SlicePlane {
    int axis = 2;  ///< 0 = x, 1 = y, 2 = z
    double offset = 0.0;
};

struct OccupancySlice {
    SlicePlane plane;
    std::vector<double> u;  ///< first in-plane axis coordinates (columns)
    std::vector<double> v;  ///< second in-plane axis coordinates (rows)
    std::vector<double> probability;  ///< row-major, v.size() rows
};

/// Query probabilities on a res_u x res_v lattice of the plane, clipped to
/// `box`. Throws ConfigError when the plane misses the box.
OccupancySlice occupancy_slice(const WeightPosterior& posterior, const HingeGrid& grid, const Box& box,
                               const SlicePlane& plane, int res_u = 60, int res_v = 60);
/// First row is "<v>\<u>" then the u coordinates; each further row starts with its v.
void emit_occupancy_slices(const OccupancySlice& slice, const std::filesystem::path& path);

}  // namespace subscan
