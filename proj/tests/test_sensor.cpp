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

#include <set>

#include "doctest.h"
#include "subscan/rng.hpp"
#include "subscan/sensor.hpp"

using namespace subscan;

namespace {

// Cone membership evaluated in an explicit orthonormal frame around the axis.
bool frame_contains(const SensingPose& pose, const ConeSensor& sensor, const Vec3& x) {
    const Vec3 w = pose.orientation();
    const Vec3 helper = std::abs(w.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
    const Vec3 u = (helper - helper.dot(w) * w).normalized();
    const Vec3 v = w.cross(u);
    const Vec3 r = x - pose.position();
    const double a = r.dot(u), b = r.dot(v), c = r.dot(w);
    if (c < 0.0 || c > sensor.depth) return false;
    return std::hypot(a, b) <= c * std::tan(sensor.half_angle);
}

AnatomyModel single_tumor(const Vec3& center, double radius, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec3> pts;
    while (pts.size() < 500) {
        const Vec3 d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        if (d.squaredNorm() <= 1.0) pts.push_back(center + radius * d);
    }
    std::vector<std::uint8_t> labels(pts.size(), 1);
    const Box bounds{Vec3(-3, -3, -4), Vec3(3, 3, 0)};
    return AnatomyModel(std::move(pts), std::move(labels), bounds, {Sphere{center, radius}});
}

}  // namespace

TEST_CASE("cone_contains basic cases") {
    const SensingPose pose(Vec3(0.2, -0.1, 0.5), Vec3(0.1, 0.2, -1.0));
    ConeSensor sensor;
    sensor.depth = 2.0;
    CHECK(cone_contains(pose, sensor, pose.position() + 0.5 * sensor.depth * pose.orientation()));
    CHECK_FALSE(cone_contains(pose, sensor, pose.position() - 1e-6 * pose.orientation()));
    CHECK(cone_contains(pose, sensor, pose.position()));
    CHECK_FALSE(cone_contains(pose, sensor, pose.position() + 2.001 * pose.orientation()));
}

TEST_CASE("cone_contains agrees with a rotated-frame oracle") {
    Rng rng(77);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 o(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        if (o.norm() < 1e-3) continue;
        const SensingPose pose(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)), o);
        ConeSensor sensor;
        sensor.half_angle = deg_to_rad(rng.uniform(5, 60));
        sensor.depth = rng.uniform(0.5, 3);
        const Vec3 x(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        REQUIRE(cone_contains(pose, sensor, x) == frame_contains(pose, sensor, x));
    }
}

TEST_CASE("ConeSensor validation") {
    ConeSensor s;
    CHECK_NOTHROW(s.validate());
    s.half_angle = 0.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.half_angle = deg_to_rad(90.0);
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = ConeSensor{};
    s.depth = 0.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = ConeSensor{};
    s.filler_points = -1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("sense: samples lie in the cone and carry ground truth") {
    const auto anatomy = single_tumor(Vec3(0.3, 0.1, -2.0), 0.4, 5);
    ConeSensor sensor;
    sensor.depth = 4.0;
    const SensingPose pose(Vec3(0.0, 0.0, 0.0), Vec3(0.15, 0.05, -1.0));
    const auto r = sense(pose, sensor, anatomy);
    REQUIRE_FALSE(r.empty());
    for (const auto& s : r.samples) {
        CHECK(cone_contains(pose, sensor, s.point));
        CHECK(anatomy.bounds().contains(s.point));
        if (s.source >= 0) {
            CHECK(s.point == anatomy.points()[std::size_t(s.source)]);
            CHECK(s.occupied == anatomy.labels()[std::size_t(s.source)]);
        } else {
            CHECK(s.occupied == anatomy.label_at(s.point));
        }
    }
    const auto again = sense(pose, sensor, anatomy);
    REQUIRE(again.samples.size() == r.samples.size());
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        CHECK(again.samples[i].point == r.samples[i].point);
        CHECK(again.samples[i].occupied == r.samples[i].occupied);
    }
}

TEST_CASE("sense: axis through the tumor center sees the whole tumor") {
    const Vec3 c(0.5, -0.5, -2.0);
    const auto anatomy = single_tumor(c, 0.4, 9);
    ConeSensor sensor;
    sensor.depth = 4.0;
    const SensingPose pose(c + Vec3(0.1, 0.2, 2.0), -Vec3(0.1, 0.2, 2.0));
    const auto r = sense(pose, sensor, anatomy);
    std::size_t tumor = 0;
    for (const auto& s : r.samples) tumor += s.source >= 0 && s.occupied == 1;
    CHECK(tumor == 500);
    CHECK(coverage_fraction(std::span(&r, 1), anatomy) == 1.0);
}

TEST_CASE("sense: a cone above the tumor sees only free space") {
    const auto anatomy = single_tumor(Vec3(0, 0, -3.0), 0.4, 1);
    ConeSensor sensor;
    sensor.depth = 2.0;
    const auto r = sense(SensingPose(Vec3(0, 0, 0), Vec3(0, 0, -1)), sensor, anatomy);
    REQUIRE_FALSE(r.empty());
    for (const auto& s : r.samples) CHECK(s.occupied == 0);

    sensor.filler_points = 0;
    CHECK(sense(SensingPose(Vec3(0, 0, 0), Vec3(0, 0, -1)), sensor, anatomy).empty());
}

TEST_CASE("filler points are deterministic and inside the cone") {
    const SensingPose pose(Vec3(1, 2, 0), Vec3(0.3, -0.2, -1));
    ConeSensor sensor;
    sensor.depth = 3.0;
    const auto a = cone_filler_points(pose, sensor);
    CHECK(a.size() == 200);
    CHECK(a == cone_filler_points(pose, sensor));
    for (const auto& p : a) CHECK(cone_contains(pose, sensor, p));
}

TEST_CASE("coverage over a workspace matches exhaustive membership") {
    ScenarioConfig cfg;
    cfg.surface_resolution = 25;
    const auto s = build_synthetic_scenario(cfg, 3);
    ConeSensor sensor;
    sensor.depth = s.surface_top - s.anatomy.bounds().lo.z();
    sensor.filler_points = 0;

    std::set<std::size_t> brute;
    std::vector<SensorReading> readings;
    for (const auto& pose : s.workspace.poses) {
        for (std::size_t i : s.anatomy.tumor_indices())
            if (cone_contains(pose, sensor, s.anatomy.points()[i])) brute.insert(i);
        readings.push_back(sense(pose, sensor, s.anatomy));
    }
    const double expected = double(brute.size()) / double(s.anatomy.tumor_indices().size());
    CHECK(coverage_fraction(readings, s.anatomy) >= expected);

    CoverageTracker tracker(s.anatomy);
    double last = 0.0;
    for (const auto& r : readings) {
        tracker.add(r);
        CHECK(tracker.fraction() >= last);
        last = tracker.fraction();
    }
    CHECK(last == coverage_fraction(readings, s.anatomy));
}

TEST_CASE("coverage_fraction edge cases and overlapping cones") {
    const Vec3 c(0, 0, -2.0);
    const auto anatomy = single_tumor(c, 0.4, 2);
    CHECK(coverage_fraction({}, anatomy) == 0.0);

    ConeSensor sensor;
    sensor.depth = 4.0;
    sensor.half_angle = deg_to_rad(5.0);
    const SensingPose a(Vec3(0.1, 0, 0), Vec3(0, 0, -1)), b(Vec3(-0.1, 0, 0), Vec3(0, 0, -1));
    std::vector<SensorReading> readings{sense(a, sensor, anatomy), sense(b, sensor, anatomy)};
    std::set<std::int64_t> ids;
    for (const auto& r : readings)
        for (const auto& s : r.samples)
            if (s.source >= 0) ids.insert(s.source);
    CHECK(coverage_fraction(readings, anatomy) == double(ids.size()) / 500.0);

    const AnatomyModel no_tumor({Vec3(0, 0, 0), Vec3(1, 1, 1)}, {0, 0});
    CHECK_THROWS_AS(coverage_fraction({}, no_tumor), ConfigError);
}
