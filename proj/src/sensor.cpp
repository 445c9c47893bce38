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

#include "subscan/sensor.hpp"

#include <cmath>

namespace subscan {

namespace {

double radical_inverse(std::uint64_t i, std::uint64_t base) {
    double inv = 1.0 / static_cast<double>(base), f = inv, r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

}  // namespace

void ConeSensor::validate() const {
    if (!(half_angle > 0.0 && half_angle < M_PI / 2.0)) throw ConfigError("cone half angle must be in (0, 90) degrees");
    if (!(depth > 0.0)) throw ConfigError("cone depth must be positive");
    if (filler_points < 0) throw ConfigError("filler point count must be >= 0");
}

bool cone_contains(const SensingPose& pose, const ConeSensor& sensor, const Vec3& x) {
    const Vec3 d = x - pose.position();
    const double along = d.dot(pose.orientation());
    if (along < 0.0 || along > sensor.depth) return false;
    return along >= d.norm() * std::cos(sensor.half_angle);
}

std::vector<Vec3> cone_filler_points(const SensingPose& pose, const ConeSensor& sensor) {
    const Vec3& o = pose.orientation();
    const Vec3 helper = std::abs(o.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 e1 = helper.cross(o).normalized();
    const Vec3 e2 = o.cross(e1);
    const double tan_half = std::tan(sensor.half_angle);

    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(sensor.filler_points));
    for (int i = 1; i <= sensor.filler_points; ++i) {
        const auto k = static_cast<std::uint64_t>(i);
        const double t = sensor.depth * std::cbrt(radical_inverse(k, 2));
        const double rho = t * tan_half * std::sqrt(radical_inverse(k, 3));
        const double phi = 2.0 * M_PI * radical_inverse(k, 5);
        out.push_back(pose.position() + t * o + rho * (std::cos(phi) * e1 + std::sin(phi) * e2));
    }
    return out;
}

SensorReading sense(const SensingPose& pose, const ConeSensor& sensor, const AnatomyModel& anatomy) {
    SensorReading reading{pose, {}};
    const auto pts = anatomy.points();
    const auto lbl = anatomy.labels();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (cone_contains(pose, sensor, pts[i]))
            reading.samples.push_back(Sample{pts[i], lbl[i], static_cast<std::int64_t>(i)});
    }
    for (const auto& f : cone_filler_points(pose, sensor)) {
        if (anatomy.bounds().contains(f)) reading.samples.push_back(Sample{f, anatomy.label_at(f), -1});
    }
    return reading;
}

CoverageTracker::CoverageTracker(const AnatomyModel& anatomy) : anatomy_(&anatomy), seen_(anatomy.size(), false) {
    if (anatomy.tumor_indices().empty()) throw ConfigError("coverage needs at least one tumor point");
}

void CoverageTracker::add(const SensorReading& reading) {
    const auto labels = anatomy_->labels();
    for (const auto& s : reading.samples) {
        if (s.source < 0) continue;
        const auto i = static_cast<std::size_t>(s.source);
        if (i >= seen_.size()) throw std::out_of_range("reading references a point outside the anatomy");
        if (!seen_[i]) {
            seen_[i] = true;
            if (labels[i] == 1) ++covered_;
        }
    }
}

double CoverageTracker::fraction() const {
    return static_cast<double>(covered_) / static_cast<double>(anatomy_->tumor_indices().size());
}

double coverage_fraction(std::span<const SensorReading> readings, const AnatomyModel& anatomy) {
    CoverageTracker tracker(anatomy);
    for (const auto& r : readings) tracker.add(r);
    return tracker.fraction();
}

}  // namespace subscan
