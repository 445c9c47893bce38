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

#include <filesystem>
#include <fstream>
#include <set>

#include <Eigen/Geometry>

#include "doctest.h"
#include "oracles.hpp"
#include "subscan/scenario.hpp"

using namespace subscan;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "subscan_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("generate_surface sizes and determinism") {
    CHECK(generate_surface(120, 7).size() == 14400);

    const auto corners = generate_surface(2, 3);
    REQUIRE(corners.size() == 4);
    CHECK(corners[0].head<2>() == Eigen::Vector2d(-3, -3));
    CHECK(corners[1].head<2>() == Eigen::Vector2d(3, -3));
    CHECK(corners[2].head<2>() == Eigen::Vector2d(-3, 3));
    CHECK(corners[3].head<2>() == Eigen::Vector2d(3, 3));

    const auto a = generate_surface(40, 11), b = generate_surface(40, 11);
    CHECK(a == b);
    CHECK(generate_surface(40, 12) != a);

    CHECK_THROWS_AS(generate_surface(1, 0), ConfigError);
}

TEST_CASE("place_spherical_tumor respects budget, radius and the surface") {
    const SurfaceField field = make_surface_field(5);
    const Box bounds{Vec3(-3, -3, -4), Vec3(3, 3, 0.5)};  // top above parts of the surface

    const auto t = place_spherical_tumor(bounds, field, 0.4, 500, 21);
    CHECK(t.points.size() == 500);
    for (const auto& p : t.points) CHECK((p - t.sphere.center).norm() <= 0.4 + 1e-12);

    std::set<std::array<double, 3>> centers;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto s = place_spherical_tumor(bounds, field, 0.4, 500, seed);
        centers.insert({s.sphere.center.x(), s.sphere.center.y(), s.sphere.center.z()});
        // brute-force depth check: every point below the height field at its own (x, y)
        CHECK(s.sphere.center.z() < field.height(s.sphere.center.x(), s.sphere.center.y()));
        for (const auto& p : s.points) REQUIRE(p.z() < field.height(p.x(), p.y()));
        CHECK(bounds.contains(s.sphere.center));
    }
    CHECK(centers.size() == 10);

    CHECK_THROWS_AS(place_spherical_tumor(bounds, field, 5.0, 10, 0), ConfigError);
    CHECK_THROWS_AS(place_spherical_tumor(bounds, field, 0.4, 0, 0), ConfigError);
}

TEST_CASE("estimate_normals on analytic planes") {
    std::vector<Vec3> flat, tilted;
    for (int i = 0; i < 15; ++i) {
        for (int j = 0; j < 15; ++j) {
            const double x = 0.1 * i, y = 0.1 * j;
            flat.emplace_back(x, y, 2.0);
            tilted.emplace_back(x, y, x);
        }
    }
    const auto wf = estimate_normals(flat, 10);
    REQUIRE(wf.size() == flat.size());
    for (const auto& p : wf.poses) CHECK((p.orientation() - Vec3(0, 0, -1)).norm() < 1e-9);

    const Vec3 expected = Vec3(1, 0, -1).normalized();
    for (const auto& p : estimate_normals(tilted, 10).poses) CHECK((p.orientation() - expected).norm() < 1e-9);
}

TEST_CASE("estimate_normals matches a brute-force covariance eigen-solve") {
    const auto surface = generate_surface(30, 4);
    const auto ws = estimate_normals(surface, 10);
    REQUIRE(ws.size() == surface.size());
    for (std::size_t i = 0; i < surface.size(); ++i) {
        Vec3 ref = oracle::normal_from_neighbours(surface, oracle::brute_knn(surface, surface[i], 10));
        if (ref.z() > 0) ref = -ref;
        const Vec3& o = ws.poses[i].orientation();
        REQUIRE((o - ref).norm() < 1e-6);
        REQUIRE(std::abs(o.norm() - 1.0) < 1e-9);
        CHECK(ws.poses[i].position() == surface[i]);
    }
}

TEST_CASE("estimate_normals is rotation equivariant") {
    const auto surface = generate_surface(20, 9);
    const Eigen::Matrix3d R = Eigen::AngleAxisd(0.3, Vec3(0.2, 0.9, 0.1).normalized()).toRotationMatrix();
    std::vector<Vec3> rotated;
    for (const auto& p : surface) rotated.push_back(R * p);
    const auto a = estimate_normals(surface, 10);
    const auto b = estimate_normals(rotated, 10);
    for (std::size_t i = 0; i < surface.size(); ++i) {
        const Vec3 ra = R * a.poses[i].orientation();
        const Vec3& nb = b.poses[i].orientation();
        CHECK(std::min((ra - nb).norm(), (ra + nb).norm()) < 1e-6);
    }
}

TEST_CASE("estimate_normals rejects degenerate input") {
    std::vector<Vec3> line;
    for (int i = 0; i < 20; ++i) line.emplace_back(0.1 * i, 0.0, 0.0);
    CHECK_THROWS_AS(estimate_normals(line, 10), NumericalError);
    CHECK_THROWS_AS(estimate_normals(line, 2), ConfigError);
    CHECK_THROWS_AS(estimate_normals(std::vector<Vec3>(line.begin(), line.begin() + 5), 10), ConfigError);
}

TEST_CASE("synthetic scenario invariants") {
    ScenarioConfig cfg;
    cfg.surface_resolution = 40;
    cfg.tumor_count = 3;
    const Scenario s = build_synthetic_scenario(cfg, 2);
    CHECK(s.workspace.size() == s.surface_points.size());
    CHECK(s.anatomy.tumor_indices().size() == 1500);
    CHECK(s.anatomy.tumors().size() == 3);
    for (const auto& p : s.anatomy.points()) CHECK(s.anatomy.bounds().contains(p));
    for (const auto& p : s.workspace.poses) CHECK(std::abs(p.orientation().norm() - 1.0) < 1e-9);
    // the search box lies entirely below the surface
    for (const auto& p : s.surface_points) CHECK(p.z() >= s.anatomy.bounds().hi.z());
}

TEST_CASE("load_labeled_point_cloud parses CSV and JSON") {
    const auto csv = temp_file("four.csv");
    write_text(csv, "x,y,z,label\n0,0,0,0\n1,0,0,0\n0,1,0,1\n0,0,1,0\n");
    const auto a = load_labeled_point_cloud(csv, CloudFormat::Csv);
    CHECK(a.size() == 4);
    CHECK(a.tumor_indices().size() == 1);
    CHECK(a.tumor_indices()[0] == 2);
    CHECK(a.bounds().lo == Vec3(0, 0, 0));
    CHECK(a.bounds().hi == Vec3(1, 1, 1));

    const auto bad = temp_file("bad_label.csv");
    write_text(bad, "x,y,z,label\n0,0,0,0\n1,0,0,2\n");
    try {
        load_labeled_point_cloud(bad, CloudFormat::Csv);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }

    const auto malformed = temp_file("malformed.csv");
    write_text(malformed, "x,y,z,label\n0,0,0,0\n1,zz,0,1\n");
    CHECK_THROWS_AS(load_labeled_point_cloud(malformed, CloudFormat::Csv), ParseError);
    write_text(malformed, "x,y,z,label\n0,0,0\n");
    CHECK_THROWS_AS(load_labeled_point_cloud(malformed, CloudFormat::Csv), ParseError);
    write_text(malformed, "");
    CHECK_THROWS_AS(load_labeled_point_cloud(malformed, CloudFormat::Csv), ParseError);
    write_text(malformed, "x,y,z,label\n");
    CHECK_THROWS_AS(load_labeled_point_cloud(malformed, CloudFormat::Csv), ParseError);

    const auto json = temp_file("cloud.json");
    write_text(json, R"({"points": [[0,0,0],[1,2,3]], "labels": [1, 0]})");
    const auto j = load_labeled_point_cloud(json, CloudFormat::Json);
    CHECK(j.size() == 2);
    CHECK(j.labels()[0] == 1);
    write_text(json, R"({"points": [[0,0,0],[1,2,3]], "labels": [1, 7]})");
    try {
        load_labeled_point_cloud(json, CloudFormat::Json);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(load_labeled_point_cloud(temp_file("missing.csv"), CloudFormat::Csv), ParseError);
}

TEST_CASE("labeled cloud export/load round trip") {
    ScenarioConfig cfg;
    cfg.surface_resolution = 10;
    cfg.tumor_points = 50;
    const auto s = build_synthetic_scenario(cfg, 1);
    for (auto fmt : {CloudFormat::Csv, CloudFormat::Json}) {
        const auto path = temp_file(fmt == CloudFormat::Csv ? "rt.csv" : "rt.json");
        save_labeled_point_cloud(s.anatomy, path, fmt);
        const auto back = load_labeled_point_cloud(path, fmt);
        std::multiset<std::array<double, 4>> want, got;
        for (std::size_t i = 0; i < s.anatomy.size(); ++i) {
            const auto& p = s.anatomy.points()[i];
            want.insert({p.x(), p.y(), p.z(), double(s.anatomy.labels()[i])});
            const auto& q = back.points()[i];
            got.insert({q.x(), q.y(), q.z(), double(back.labels()[i])});
        }
        CHECK(want == got);
    }
}

TEST_CASE("ingested anatomy labels by nearest cloud point") {
    const AnatomyModel organ = synthesize_organ_cloud(3, 0.25);
    CHECK(organ.tumor_indices().size() > 0);
    CHECK(organ.tumors().empty());
    for (std::size_t i = 0; i < organ.size(); i += 37) CHECK(organ.label_at(organ.points()[i]) == organ.labels()[i]);
    // far outside the cloud is free
    CHECK(organ.label_at(organ.bounds().hi + Vec3(5, 5, 5)) == 0);

    const Scenario s = build_ingested_scenario(organ, 10);
    CHECK(s.workspace.size() > 100);
    for (const auto& p : s.workspace.poses) CHECK(p.orientation().z() <= 0.0);
}
