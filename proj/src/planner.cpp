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

#include "subscan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "subscan/rng.hpp"

namespace subscan {

namespace {

enum Stream : std::uint64_t { kBoStream = 11, kRandomStream = 12 };

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Shared bookkeeping for all planners: sensing, coverage, the optional map
/// and per-iteration metrics.
class Session {
public:
    Session(const PlanProblem& problem, const PlanOptions& options, std::string name, bool needs_map,
            std::span<const Vec3> candidates = {})
        : problem_(problem), options_(options), coverage_(problem.anatomy), seen_(problem.workspace.size(), false) {
        if (problem.workspace.size() == 0) throw ConfigError("planner needs a non-empty workspace");
        if (options.budget < 1) throw ConfigError("planner budget must be >= 1");
        problem.sensor.validate();
        trace_.planner = std::move(name);

        const bool with_map = needs_map || options.track_map || options.evaluation;
        if (with_map) {
            grid_.emplace(problem.map.make_grid(problem.anatomy.bounds()));
            posterior_ = init_posterior(grid_->size(), problem.map.prior_variance);
        }
        if (options.evaluation) {
            if (options.evaluation->positives() == 0) throw ConfigError("evaluation set has no positive labels");
            eval_shares_candidates_ = !candidates.empty() &&
                                      std::equal(candidates.begin(), candidates.end(),
                                                 options.evaluation->points.begin(), options.evaluation->points.end());
        }
        candidates_ = candidates;
        refresh_estimates();
        if (options.evaluation) trace_.initial_auprc = evaluate_estimates(eval_estimates(), *options.evaluation).auprc;
    }

    bool done() const {
        if (static_cast<int>(trace_.iterations()) >= options_.budget) return true;
        return options_.stop_at_detection && trace_.poses_to_detection.has_value();
    }

    int next_iteration() const { return static_cast<int>(trace_.iterations()) + 1; }

    std::span<const OccupancyEstimate> candidate_estimates() const { return candidate_estimates_; }

    void step(std::size_t pose_index, std::optional<std::size_t> query_index = std::nullopt) {
        const SensingPose& pose = problem_.workspace.poses.at(pose_index);
        SensorReading reading = sense(pose, problem_.sensor, problem_.anatomy);
        coverage_.add(reading);

        if (posterior_ && !reading.empty()) {
            posterior_ = update(*posterior_, reading, *grid_, problem_.map.em);
            refresh_estimates();
        }

        IterationRecord rec;
        rec.iteration = next_iteration();
        rec.pose_index = pose_index;
        rec.query_index = query_index;
        rec.repeat = seen_[pose_index];
        rec.samples = reading.samples.size();
        rec.coverage = coverage_.fraction();
        if (options_.evaluation) rec.auprc = evaluate_estimates(eval_estimates(), *options_.evaluation).auprc;

        if (rec.repeat) ++trace_.repeats;
        seen_[pose_index] = true;
        if (!trace_.poses_to_detection && rec.coverage >= options_.detection_threshold)
            trace_.poses_to_detection = rec.iteration;

        trace_.pose_indices.push_back(pose_index);
        trace_.poses.push_back(pose);
        if (options_.keep_readings) trace_.readings.push_back(std::move(reading));
        trace_.records.push_back(rec);
    }

    PlanTrace finish() {
        trace_.posterior = posterior_;
        return std::move(trace_);
    }

private:
    std::span<const OccupancyEstimate> eval_estimates() const {
        return eval_shares_candidates_ ? std::span<const OccupancyEstimate>(candidate_estimates_)
                                       : std::span<const OccupancyEstimate>(eval_only_estimates_);
    }

    void refresh_estimates() {
        if (!posterior_) return;
        if (!candidates_.empty()) candidate_estimates_ = query_grid(*posterior_, *grid_, candidates_, options_.threads);
        if (options_.evaluation && !eval_shares_candidates_)
            eval_only_estimates_ = query_grid(*posterior_, *grid_, options_.evaluation->points, options_.threads);
    }

    const PlanProblem& problem_;
    const PlanOptions& options_;
    PlanTrace trace_;
    CoverageTracker coverage_;
    std::vector<bool> seen_;
    std::optional<HingeGrid> grid_;
    std::optional<WeightPosterior> posterior_;
    std::span<const Vec3> candidates_;
    bool eval_shares_candidates_ = false;
    std::vector<OccupancyEstimate> candidate_estimates_;
    std::vector<OccupancyEstimate> eval_only_estimates_;
};

}  // namespace

void AcquisitionConfig::validate() const {
    if (!(ei_xi >= 0.0)) throw ConfigError("ei_xi must be >= 0");
    if (!(angle_threshold > 0.0 && angle_threshold <= M_PI)) throw ConfigError("angle threshold must be in (0, 180] degrees");
}

double expected_improvement(const OccupancyEstimate& estimate, double f_best, double ei_xi) {
    const double d = estimate.probability - f_best - ei_xi;
    const double s = std::sqrt(std::max(0.0, estimate.latent_variance));
    if (s == 0.0) return std::max(0.0, d);
    const double z = d / s;
    return std::max(0.0, d * normal_cdf(z) + s * normal_pdf(z));
}

QuerySelection select_from_estimates(std::span<const OccupancyEstimate> estimates, std::span<const Vec3> candidates,
                                     double ei_xi) {
    if (estimates.empty() || estimates.size() != candidates.size())
        throw std::invalid_argument("query selection needs one estimate per candidate");
    double f_best = -std::numeric_limits<double>::infinity();
    for (const auto& e : estimates) f_best = std::max(f_best, e.probability);

    QuerySelection best;
    best.f_best = f_best;
    best.ei = -1.0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const double ei = expected_improvement(estimates[i], f_best, ei_xi);
        if (ei > best.ei) {
            best.ei = ei;
            best.index = i;
        }
    }
    best.point = candidates[best.index];
    return best;
}

QuerySelection select_query_point(const WeightPosterior& posterior, const HingeGrid& grid,
                                  const AcquisitionConfig& config) {
    if (config.candidate_points.empty()) throw ConfigError("acquisition needs candidate points");
    const auto estimates = query_grid(posterior, grid, config.candidate_points);
    return select_from_estimates(estimates, config.candidate_points, config.ei_xi);
}

std::size_t next_sensing_pose(const Vec3& target, const SensorWorkspace& workspace, double angle_threshold) {
    if (workspace.size() == 0) throw ConfigError("workspace is empty");
    std::size_t best = 0;
    double best_angle = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < workspace.size(); ++i) {
        const auto& pose = workspace.poses[i];
        const Vec3 q = target - pose.position();
        if (q.squaredNorm() == 0.0) return i;
        const double angle = angle_between(pose.orientation(), q);
        if (angle <= angle_threshold) return i;
        if (angle < best_angle) {
            best_angle = angle;
            best = i;
        }
    }
    return best;
}

std::vector<Vec3> sensable_points(std::span<const Vec3> points, const SensorWorkspace& workspace,
                                  const ConeSensor& sensor) {
    std::vector<Vec3> out;
    for (const auto& x : points) {
        const bool seen = std::any_of(workspace.poses.begin(), workspace.poses.end(),
                                      [&](const SensingPose& pose) { return cone_contains(pose, sensor, x); });
        if (seen) out.push_back(x);
    }
    return out;
}

PlanTrace plan(const PlanProblem& problem, const AcquisitionConfig& acquisition, const PlanOptions& options) {
    acquisition.validate();
    if (acquisition.candidate_points.empty()) throw ConfigError("acquisition needs candidate points");
    Session session(problem, options, "bo", true, acquisition.candidate_points);
    Rng rng(Rng::derive(options.seed, kBoStream));

    while (!session.done()) {
        if (session.next_iteration() == 1) {
            session.step(static_cast<std::size_t>(rng.index(problem.workspace.size())));
            continue;
        }
        const auto sel = select_from_estimates(session.candidate_estimates(), acquisition.candidate_points,
                                               acquisition.ei_xi);
        session.step(next_sensing_pose(sel.point, problem.workspace, acquisition.angle_threshold), sel.index);
    }
    return session.finish();
}

PlanTrace plan_random(const PlanProblem& problem, const PlanOptions& options) {
    const std::size_t n = problem.workspace.size();
    if (options.budget > 0 && static_cast<std::size_t>(options.budget) > n)
        throw ConfigError("random planner budget exceeds the workspace size");
    Session session(problem, options, "random", false);
    Rng rng(Rng::derive(options.seed, kRandomStream));

    // Lazy Fisher-Yates: only the drawn prefix is materialized.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 0; !session.done(); ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.index(n - i));
        std::swap(perm[i], perm[j]);
        session.step(perm[i]);
    }
    return session.finish();
}

std::vector<Eigen::Vector2d> multiresolution_centers(const Eigen::Vector2d& lo, const Eigen::Vector2d& hi, int round) {
    if (round < 1 || round > 31) throw ConfigError("multi-resolution round out of range");
    const long cells = 1L << (round - 1);
    const Eigen::Vector2d size = (hi - lo) / static_cast<double>(cells);
    std::vector<Eigen::Vector2d> out;
    out.reserve(static_cast<std::size_t>(cells * cells));
    for (long iy = 0; iy < cells; ++iy)
        for (long ix = 0; ix < cells; ++ix)
            out.emplace_back(lo.x() + (static_cast<double>(ix) + 0.5) * size.x(),
                             lo.y() + (static_cast<double>(iy) + 0.5) * size.y());
    return out;
}

PlanTrace plan_multiresolution(const PlanProblem& problem, const PlanOptions& options) {
    Session session(problem, options, "multires", false);

    std::vector<Vec3> flat;
    flat.reserve(problem.workspace.size());
    Eigen::Vector2d lo(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
    Eigen::Vector2d hi = -lo;
    for (const auto& pose : problem.workspace.poses) {
        const Vec3& p = pose.position();
        flat.emplace_back(p.x(), p.y(), 0.0);
        lo = lo.cwiseMin(p.head<2>());
        hi = hi.cwiseMax(p.head<2>());
    }
    const PointIndex index(flat);

    for (int round = 1; !session.done(); ++round) {
        for (const auto& c : multiresolution_centers(lo, hi, round)) {
            if (session.done()) break;
            session.step(index.nearest(Vec3(c.x(), c.y(), 0.0)));
        }
    }
    return session.finish();
}

}  // namespace subscan
