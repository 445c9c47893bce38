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
#include <span>
#include <vector>

#include "subscan/scenario.hpp"

namespace subscan {

/// Idealized noiseless cone-volume sensor.
struct ConeSensor {
    double half_angle = deg_to_rad(15.0);
    double depth = 1.0;
    /// Free-space evidence points sampled inside each cone.
    int filler_points = 200;

    /// Throws ConfigError unless 0 < half_angle < pi/2, depth > 0, filler_points >= 0.
    void validate() const;
};

struct Sample {
    Vec3 point;
    std::uint8_t occupied = 0;
    /// Index into the anatomy cloud, or -1 for a filler point.
    std::int64_t source = -1;
};

struct SensorReading {
    SensingPose pose;
    std::vector<Sample> samples;

    bool empty() const { return samples.empty(); }
};

bool cone_contains(const SensingPose& pose, const ConeSensor& sensor, const Vec3& x);

/// Filler points in the cone of `pose`, before bounds clipping. Deterministic
/// (Halton bases 2, 3, 5 mapped to uniform-in-volume cone coordinates).
std::vector<Vec3> cone_filler_points(const SensingPose& pose, const ConeSensor& sensor);

/// Every anatomy point in the cone (ascending index) followed by the filler
/// points that fall inside the anatomy bounds, all labeled by ground truth.
SensorReading sense(const SensingPose& pose, const ConeSensor& sensor, const AnatomyModel& anatomy);

/// Share of tumor points present in at least one reading. Throws ConfigError
/// when the anatomy has no tumor points.
double coverage_fraction(std::span<const SensorReading> readings, const AnatomyModel& anatomy);

/// Incremental form of coverage_fraction for the planning loop.
class CoverageTracker {
public:
    explicit CoverageTracker(const AnatomyModel& anatomy);

    void add(const SensorReading& reading);
    double fraction() const;
    std::size_t covered() const { return covered_; }

private:
    const AnatomyModel* anatomy_;
    std::vector<bool> seen_;
    std::size_t covered_ = 0;
};

}  // namespace subscan
