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

#include "subscan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace subscan {

PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
    std::size_t positives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) throw std::invalid_argument("score is not finite");
        if (labels[i] > 1) throw std::invalid_argument("label is not 0 or 1");
        positives += labels[i];
    }
    if (positives == 0) throw std::invalid_argument("precision-recall needs at least one positive label");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    PRCurve curve;
    std::size_t tp = 0, fp = 0;
    const double p = static_cast<double>(positives);
    for (std::size_t i = 0; i < order.size();) {
        const double threshold = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == threshold; ++i) {
            if (labels[order[i]]) ++tp;
            else ++fp;
        }
        curve.points.push_back(PRPoint{threshold, static_cast<double>(tp) / p,
                                       static_cast<double>(tp) / static_cast<double>(tp + fp)});
    }
    curve.points.insert(curve.points.begin(),
                        PRPoint{std::numeric_limits<double>::infinity(), 0.0, curve.points.front().precision});
    curve.auprc = trapezoid_area(curve.points);
    return curve;
}

double trapezoid_area(std::span<const PRPoint> points) {
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
        area += (points[i].recall - points[i - 1].recall) * 0.5 * (points[i].precision + points[i - 1].precision);
    return area;
}

std::size_t EvaluationSet::positives() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

double EvaluationSet::positive_ratio() const {
    return labels.empty() ? 0.0 : static_cast<double>(positives()) / static_cast<double>(labels.size());
}

std::vector<Vec3> lattice_points(const Box& box, std::array<int, 3> shape) {
    for (int n : shape)
        if (n < 1) throw ConfigError("lattice dimensions must be >= 1");
    auto coord = [&](int axis, int i) {
        const int n = shape[static_cast<std::size_t>(axis)];
        const double t = n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1);
        return (1.0 - t) * box.lo[axis] + t * box.hi[axis];
    };
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(shape[0]) * static_cast<std::size_t>(shape[1]) * static_cast<std::size_t>(shape[2]));
    for (int iz = 0; iz < shape[2]; ++iz)
        for (int iy = 0; iy < shape[1]; ++iy)
            for (int ix = 0; ix < shape[0]; ++ix) out.emplace_back(coord(0, ix), coord(1, iy), coord(2, iz));
    return out;
}

EvaluationSet make_evaluation_set(const AnatomyModel& anatomy, std::array<int, 3> shape) {
    EvaluationSet set;
    set.points = lattice_points(anatomy.bounds(), shape);
    set.labels.reserve(set.points.size());
    for (const auto& p : set.points) set.labels.push_back(anatomy.label_at(p));
    return set;
}

PRCurve evaluate_estimates(std::span<const OccupancyEstimate> estimates, const EvaluationSet& evaluation) {
    if (estimates.size() != evaluation.points.size()) throw std::invalid_argument("estimate count differs from evaluation set");
    std::vector<double> scores(estimates.size());
    std::transform(estimates.begin(), estimates.end(), scores.begin(), [](const auto& e) { return e.probability; });
    return pr_curve(scores, evaluation.labels);
}

PRCurve evaluate_map(const WeightPosterior& posterior, const HingeGrid& grid, const EvaluationSet& evaluation) {
    return evaluate_estimates(query_grid(posterior, grid, evaluation.points), evaluation);
}

bool detection_stop(std::span<const SensorReading> readings, const AnatomyModel& anatomy, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("detection threshold must be in (0, 1]");
    return coverage_fraction(readings, anatomy) >= threshold;
}

}  // namespace subscan
