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
#include <span>
#include <vector>

#include "subscan/bhm.hpp"

namespace subscan {

struct PRPoint {
    double threshold;
    double recall;
    double precision;
};

/// Precision-recall curve, ascending recall. The first point is the anchor
/// (recall 0, precision of the highest threshold, threshold +inf); the area
/// is the trapezoidal rule over all points.
struct PRCurve {
    std::vector<PRPoint> points;
    double auprc = 0.0;
};

/// Threshold sweep over the distinct scores, descending; a sample is predicted
/// positive when its score is >= the threshold. Throws std::invalid_argument
/// for mismatched lengths, non-finite scores, labels outside {0,1}, or no positives.
PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Trapezoidal area under a list of (recall, precision) points.
double trapezoid_area(std::span<const PRPoint> points);

/// Ground-truth-labeled evaluation points.
struct EvaluationSet {
    std::vector<Vec3> points;
    std::vector<std::uint8_t> labels;

    std::size_t positives() const;
    double positive_ratio() const;
};

/// Regular lattice spanning the anatomy bounds (endpoints included),
/// labeled by AnatomyModel::label_at. Order: x fastest, then y, then z.
std::vector<Vec3> lattice_points(const Box& box, std::array<int, 3> shape);
EvaluationSet make_evaluation_set(const AnatomyModel& anatomy, std::array<int, 3> shape = {22, 22, 13});

PRCurve evaluate_map(const WeightPosterior& posterior, const HingeGrid& grid, const EvaluationSet& evaluation);
PRCurve evaluate_estimates(std::span<const OccupancyEstimate> estimates, const EvaluationSet& evaluation);

/// True iff the readings cover at least `threshold` of the tumor points.
bool detection_stop(std::span<const SensorReading> readings, const AnatomyModel& anatomy, double threshold);

}  // namespace subscan
