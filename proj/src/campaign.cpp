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


#include "subscan/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "subscan/rng.hpp"

namespace subscan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kPlanners{"bo", "random", "multires"};

/// Reads members of one JSON object and rejects keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        known_.insert(key);
        const auto it = obj_.find(key);
        if (it == obj_.end()) return;
        try {
            if constexpr (std::is_arithmetic_v<T> && !std::is_same_v<T, bool>) {
                if (!it->is_number()) throw ConfigError(path(key) + ": expected a number");
                if constexpr (std::is_unsigned_v<T>) {
                    if (!it->is_number_unsigned()) throw ConfigError(path(key) + ": expected a non-negative integer");
                }
                if constexpr (std::is_integral_v<T>) {
                    if (it->is_number_float()) throw ConfigError(path(key) + ": expected an integer");
                }
            }
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path(key) + ": " + e.what());
        }
    }

    const json* child(const std::string& key) {
        known_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    std::string path(const std::string& key) const { return where_ + "." + key; }

    void finish() const {
        for (const auto& item : obj_.items())
            if (!known_.count(item.key())) throw ConfigError("unknown key " + path(item.key()));
    }

private:
    const json& obj_;
    std::string where_;
    std::set<std::string> known_;
};

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    char buf[32];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, x).ptr);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

void write_json(const json& doc, const fs::path& path) {
    auto out = open_out(path);
    out << doc.dump(2) << '\n';
}

struct Stats {
    double mean = 0.0;
    double std = 0.0;
};

Stats stats_of(const std::vector<double>& xs) {
    Stats s;
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double acc = 0.0;
        for (double x : xs) acc += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(acc / static_cast<double>(xs.size() - 1));
    }
    return s;
}

json stats_json(const std::vector<double>& xs) {
    if (xs.empty()) return json{{"mean", nullptr}, {"std", nullptr}, {"count", 0}};
    const Stats s = stats_of(xs);
    return json{{"mean", s.mean}, {"std", s.std}, {"count", xs.size()}};
}

/// Per-iteration mean/std over the series that reach that iteration.
json series_stats(const std::vector<std::vector<double>>& series) {
    std::size_t longest = 0;
    for (const auto& s : series) longest = std::max(longest, s.size());
    json mean = json::array(), std = json::array(), count = json::array();
    for (std::size_t t = 0; t < longest; ++t) {
        std::vector<double> xs;
        for (const auto& s : series)
            if (t < s.size()) xs.push_back(s[t]);
        const Stats st = stats_of(xs);
        mean.push_back(st.mean);
        std.push_back(st.std);
        count.push_back(xs.size());
    }
    return json{{"mean", mean}, {"std", std}, {"count", count}};
}

}  // namespace

void RunConfig::validate() const {
    if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos || run_id == "." || run_id == "..")
        throw ConfigError("run_id must be a plain directory name");
    ConeSensor s = sensor;
    if (sensor_depth) s.depth = *sensor_depth;
    s.validate();
    if (!(map.gamma > 0.0)) throw ConfigError("map.gamma must be positive");
    if (!(map.prior_variance > 0.0)) throw ConfigError("map.prior_variance must be positive");
    for (int n : map.hinge_shape)
        if (n < 1) throw ConfigError("map.hinge_shape entries must be >= 1");
    if (!(map.em.tolerance > 0.0)) throw ConfigError("map.em.tolerance must be positive");
    if (map.em.max_iterations < 1) throw ConfigError("map.em.max_iterations must be >= 1");
    if (map.em.mean_sweeps < 1) throw ConfigError("map.em.mean_sweeps must be >= 1");
    AcquisitionConfig acq;
    acq.ei_xi = ei_xi;
    acq.angle_threshold = deg_to_rad(angle_threshold_deg);
    acq.validate();
    for (int n : evaluation_shape)
        if (n < 2) throw ConfigError("evaluation.shape entries must be >= 2");
    if (planners.empty()) throw ConfigError("at least one planner is required");
    std::set<std::string> seen;
    for (const auto& p : planners) {
        if (!kPlanners.count(p)) throw ConfigError("unknown planner '" + p + "' (expected bo, random or multires)");
        if (!seen.insert(p).second) throw ConfigError("planner '" + p + "' listed twice");
    }
    if (budget < 1) throw ConfigError("budget must be >= 1");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
        throw ConfigError("seeds must be distinct");
    if (!(detection_threshold > 0.0 && detection_threshold <= 1.0))
        throw ConfigError("detection_threshold must be in (0, 1]");
}

json to_json(const RunConfig& c) {
    const ScenarioConfig& s = c.scenario;
    json scenario{{"surface_resolution", s.surface_resolution},
                  {"half_extent", s.half_extent},
                  {"base_amplitude", s.base_amplitude},
                  {"search_depth", s.search_depth},
                  {"surface_clearance", s.surface_clearance},
                  {"tumor_count", s.tumor_count},
                  {"tumor_radius", s.tumor_radius},
                  {"tumor_points", s.tumor_points},
                  {"k_neighbors", s.k_neighbors},
                  {"cloud_path", s.cloud_path ? json(s.cloud_path->string()) : json(nullptr)}};
    json sensor{{"half_angle_deg", rad_to_deg(c.sensor.half_angle)},
                {"depth", c.sensor_depth ? json(*c.sensor_depth) : json("auto")},
                {"filler_points", c.sensor.filler_points}};
    json em{{"tolerance", c.map.em.tolerance},
            {"max_iterations", c.map.em.max_iterations},
            {"mean_sweeps", c.map.em.mean_sweeps},
            {"initial_xi", c.map.em.initial_xi ? json(*c.map.em.initial_xi) : json(nullptr)}};
    json map{{"gamma", c.map.gamma},
             {"hinge_shape", c.map.hinge_shape},
             {"prior_variance", c.map.prior_variance},
             {"em", em}};
    json acquisition{{"ei_xi", c.ei_xi},
                     {"angle_threshold_deg", c.angle_threshold_deg},
                     {"candidates", c.candidates == CandidateMode::Lattice ? "lattice" : "sensable"}};
    return json{{"run_id", c.run_id},
                {"scenario", scenario},
                {"sensor", sensor},
                {"map", map},
                {"acquisition", acquisition},
                {"evaluation", {{"shape", c.evaluation_shape}, {"enabled", c.evaluate}}},
                {"planners", c.planners},
                {"budget", c.budget},
                {"seeds", c.seeds},
                {"detection_threshold", c.detection_threshold},
                {"stop_at_detection", c.stop_at_detection},
                {"threads", c.threads}};
}

RunConfig run_config_from_json(const json& doc) {
    if (doc.is_object() && doc.contains("config") && doc.contains("version")) return run_config_from_json(doc.at("config"));

    RunConfig c;
    ObjectReader top(doc, "config");
    top.get("run_id", c.run_id);

    if (const json* j = top.child("scenario")) {
        ObjectReader r(*j, "scenario");
        ScenarioConfig& s = c.scenario;
        r.get("surface_resolution", s.surface_resolution);
        r.get("half_extent", s.half_extent);
        r.get("base_amplitude", s.base_amplitude);
        r.get("search_depth", s.search_depth);
        r.get("surface_clearance", s.surface_clearance);
        r.get("tumor_count", s.tumor_count);
        r.get("tumor_radius", s.tumor_radius);
        r.get("tumor_points", s.tumor_points);
        r.get("k_neighbors", s.k_neighbors);
        if (const json* p = r.child("cloud_path"); p && !p->is_null()) {
            if (!p->is_string()) throw ConfigError("scenario.cloud_path: expected a string or null");
            s.cloud_path = p->get<std::string>();
        }
        r.finish();
    }

    if (const json* j = top.child("sensor")) {
        ObjectReader r(*j, "sensor");
        double half_angle_deg = rad_to_deg(c.sensor.half_angle);
        r.get("half_angle_deg", half_angle_deg);
        c.sensor.half_angle = deg_to_rad(half_angle_deg);
        if (const json* d = r.child("depth"); d && !(d->is_string() && d->get<std::string>() == "auto")) {
            if (!d->is_number()) throw ConfigError("sensor.depth: expected a number or \"auto\"");
            c.sensor_depth = d->get<double>();
        }
        r.get("filler_points", c.sensor.filler_points);
        r.finish();
    }

    if (const json* j = top.child("map")) {
        ObjectReader r(*j, "map");
        r.get("gamma", c.map.gamma);
        r.get("hinge_shape", c.map.hinge_shape);
        r.get("prior_variance", c.map.prior_variance);
        if (const json* e = r.child("em")) {
            ObjectReader er(*e, "map.em");
            er.get("tolerance", c.map.em.tolerance);
            er.get("max_iterations", c.map.em.max_iterations);
            er.get("mean_sweeps", c.map.em.mean_sweeps);
            if (const json* x = er.child("initial_xi"); x && !x->is_null()) {
                if (!x->is_number()) throw ConfigError("map.em.initial_xi: expected a number or null");
                c.map.em.initial_xi = x->get<double>();
            }
            er.finish();
        }
        r.finish();
    }

    if (const json* j = top.child("acquisition")) {
        ObjectReader r(*j, "acquisition");
        r.get("ei_xi", c.ei_xi);
        r.get("angle_threshold_deg", c.angle_threshold_deg);
        std::string mode = c.candidates == CandidateMode::Lattice ? "lattice" : "sensable";
        r.get("candidates", mode);
        if (mode == "lattice")
            c.candidates = CandidateMode::Lattice;
        else if (mode == "sensable")
            c.candidates = CandidateMode::Sensable;
        else
            throw ConfigError("acquisition.candidates must be \"lattice\" or \"sensable\"");
        r.finish();
    }

    if (const json* j = top.child("evaluation")) {
        ObjectReader r(*j, "evaluation");
        r.get("shape", c.evaluation_shape);
        r.get("enabled", c.evaluate);
        r.finish();
    }

    top.get("planners", c.planners);
    top.get("budget", c.budget);
    if (const json* s = top.child("seeds")) {
        if (!s->is_array()) throw ConfigError("config.seeds: expected an array");
        c.seeds.clear();
        for (const auto& v : *s) {
            if (!v.is_number_unsigned()) throw ConfigError("config.seeds: entries must be non-negative integers");
            c.seeds.push_back(v.get<std::uint64_t>());
        }
    }
    top.get("detection_threshold", c.detection_threshold);
    top.get("stop_at_detection", c.stop_at_detection);
    top.get("threads", c.threads);
    top.finish();
    c.validate();
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    RunConfig c = run_config_from_json(doc);
    if (c.scenario.cloud_path && c.scenario.cloud_path->is_relative())
        c.scenario.cloud_path = fs::absolute(path).parent_path() / *c.scenario.cloud_path;
    return c;
}

json make_manifest(const RunConfig& config) {
    return json{{"version", kVersion},
                {"rng", Rng::kAlgorithm},
                {"auprc_interpolation", "trapezoid"},
                {"floating_point", "IEEE-754 binary64, no fast-math"},
                {"layout", "<run_id>/<planner>/<seed>/{trace.csv,metrics.json}"},
                {"config", to_json(config)}};
}

TrialSetup make_trial_setup(const RunConfig& config, std::uint64_t seed) {
    Scenario scenario = build_scenario(config.scenario, seed);
    ConeSensor sensor = config.sensor;
    sensor.depth = config.sensor_depth.value_or(scenario.surface_top - scenario.anatomy.bounds().lo.z());
    sensor.validate();
    EvaluationSet evaluation = make_evaluation_set(scenario.anatomy, config.evaluation_shape);
    AcquisitionConfig acquisition;
    acquisition.ei_xi = config.ei_xi;
    acquisition.angle_threshold = deg_to_rad(config.angle_threshold_deg);
    acquisition.candidate_points = config.candidates == CandidateMode::Lattice
                                       ? evaluation.points
                                       : sensable_points(evaluation.points, scenario.workspace, sensor);
    if (acquisition.candidate_points.empty()) throw ConfigError("no evaluation point lies inside any sensing cone");
    return TrialSetup{std::move(scenario), sensor, std::move(evaluation), std::move(acquisition)};
}

PlanTrace run_trial(const RunConfig& config, const TrialSetup& setup, const std::string& planner, std::uint64_t seed) {
    const PlanProblem problem{setup.scenario.anatomy, setup.scenario.workspace, setup.sensor, config.map};
    PlanOptions options;
    options.budget = config.budget;
    options.seed = seed;
    options.detection_threshold = config.detection_threshold;
    options.stop_at_detection = config.stop_at_detection;
    options.evaluation = config.evaluate ? &setup.evaluation : nullptr;
    options.keep_readings = false;
    options.threads = config.threads;
    if (planner == "bo") return plan(problem, setup.acquisition, options);
    if (planner == "random") return plan_random(problem, options);
    if (planner == "multires") return plan_multiresolution(problem, options);
    throw ConfigError("unknown planner '" + planner + "'");
}

void write_trace_csv(const PlanTrace& trace, const fs::path& path) {
    auto out = open_out(path);
    out << "iteration,pose_index,x,y,z,ox,oy,oz,query_index,repeat,samples,coverage,auprc\n";
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        const IterationRecord& r = trace.records[i];
        const Vec3& p = trace.poses[i].position();
        const Vec3& o = trace.poses[i].orientation();
        out << r.iteration << ',' << r.pose_index;
        for (int k = 0; k < 3; ++k) out << ',' << format_double(p[k]);
        for (int k = 0; k < 3; ++k) out << ',' << format_double(o[k]);
        out << ',' << (r.query_index ? std::to_string(*r.query_index) : std::string()) << ',' << (r.repeat ? 1 : 0)
            << ',' << r.samples << ',' << format_double(r.coverage) << ','
            << (r.auprc ? format_double(*r.auprc) : std::string()) << '\n';
    }
}

void write_pr_curve_csv(const PRCurve& curve, const fs::path& path) {
    auto out = open_out(path);
    out << "threshold,recall,precision\n";
    for (const auto& p : curve.points)
        out << (std::isinf(p.threshold) ? std::string("inf") : format_double(p.threshold)) << ','
            << format_double(p.recall) << ',' << format_double(p.precision) << '\n';
}

json trace_metrics(const PlanTrace& trace) {
    json auprc = json::array(), coverage = json::array();
    for (const auto& r : trace.records) {
        coverage.push_back(r.coverage);
        if (r.auprc) auprc.push_back(*r.auprc);
    }
    return json{{"planner", trace.planner},
                {"iterations", trace.iterations()},
                {"initial_auprc", trace.initial_auprc ? json(*trace.initial_auprc) : json(nullptr)},
                {"auprc_by_iteration", auprc},
                {"coverage_by_iteration", coverage},
                {"poses_to_detection", trace.poses_to_detection ? json(*trace.poses_to_detection) : json(nullptr)},
                {"repeats", trace.repeats}};
}

json summarize(const RunConfig& config, const std::vector<CellResult>& cells) {
    json planners = json::object();
    json failures = json::array();
    for (const auto& cell : cells)
        if (!cell.ok) failures.push_back({{"planner", cell.planner}, {"seed", cell.seed}, {"error", cell.error}});

    for (const auto& name : config.planners) {
        std::vector<double> detections, final_auprc, initial_auprc;
        std::vector<std::vector<double>> auprc_series, coverage_series;
        std::size_t ok = 0, failed = 0, undetected = 0;
        for (const auto& cell : cells) {
            if (cell.planner != name) continue;
            if (!cell.ok) {
                ++failed;
                continue;
            }
            ++ok;
            const json& m = cell.metrics;
            if (m.at("poses_to_detection").is_null())
                ++undetected;
            else
                detections.push_back(m.at("poses_to_detection").get<double>());
            auto a = m.at("auprc_by_iteration").get<std::vector<double>>();
            if (!a.empty()) final_auprc.push_back(a.back());
            auprc_series.push_back(std::move(a));
            coverage_series.push_back(m.at("coverage_by_iteration").get<std::vector<double>>());
            if (!m.at("initial_auprc").is_null()) initial_auprc.push_back(m.at("initial_auprc").get<double>());
        }

        std::vector<double> ranked = detections;
        ranked.insert(ranked.end(), undetected, std::numeric_limits<double>::infinity());
        std::sort(ranked.begin(), ranked.end());
        json median = nullptr;
        if (!ranked.empty()) {
            const std::size_t n = ranked.size();
            const double m = n % 2 ? ranked[n / 2] : 0.5 * (ranked[n / 2 - 1] + ranked[n / 2]);
            if (std::isfinite(m)) median = m;
        }
        json det = stats_json(detections);
        det["undetected"] = undetected;
        det["median"] = median;

        planners[name] = json{{"cells", ok + failed},
                              {"failed", failed},
                              {"poses_to_detection", det},
                              {"initial_auprc", stats_json(initial_auprc)},
                              {"final_auprc", stats_json(final_auprc)},
                              {"auprc_by_iteration", series_stats(auprc_series)},
                              {"coverage_by_iteration", series_stats(coverage_series)}};
    }
    return json{{"run_id", config.run_id},
                {"detection_threshold", config.detection_threshold},
                {"planners", planners},
                {"failures", failures}};
}

CampaignResult run_campaign(const RunConfig& config, const fs::path& out) {
    config.validate();
    CampaignResult result;
    result.root = out / config.run_id;
    fs::create_directories(result.root);
    write_json(make_manifest(config), result.root / "manifest.json");

    for (const std::uint64_t seed : config.seeds) {
        std::optional<TrialSetup> setup;
        std::string setup_error;
        try {
            setup.emplace(make_trial_setup(config, seed));
        } catch (const std::exception& e) {
            setup_error = e.what();
        }
        for (const auto& name : config.planners) {
            CellResult cell;
            cell.planner = name;
            cell.seed = seed;
            const fs::path dir = result.root / name / std::to_string(seed);
            try {
                if (!setup) throw std::runtime_error("scenario setup failed: " + setup_error);
                const PlanTrace trace = run_trial(config, *setup, name, seed);
                fs::create_directories(dir);
                write_trace_csv(trace, dir / "trace.csv");
                cell.metrics = trace_metrics(trace);
                write_json(cell.metrics, dir / "metrics.json");
                if (trace.posterior) {
                    const HingeGrid grid = config.map.make_grid(setup->scenario.anatomy.bounds());
                    write_json(posterior_snapshot(*trace.posterior, grid), dir / "posterior.json");
                    if (config.evaluate)
                        write_pr_curve_csv(evaluate_map(*trace.posterior, grid, setup->evaluation), dir / "pr_curve.csv");
                }
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
            result.cells.push_back(std::move(cell));
        }
    }
    result.summary = summarize(config, result.cells);
    write_json(result.summary, result.root / "summary.json");
    return result;
}

OccupancySlice occupancy_slice(const WeightPosterior& posterior, const HingeGrid& grid, const Box& box,
                               const SlicePlane& plane, int res_u, int res_v) {
    if (plane.axis < 0 || plane.axis > 2) throw ConfigError("slice axis must be x, y or z");
    if (res_u < 2 || res_v < 2) throw ConfigError("slice resolution must be >= 2");
    if (!(plane.offset >= box.lo[plane.axis] && plane.offset <= box.hi[plane.axis]))
        throw ConfigError("slice plane does not intersect the search box");
    static constexpr int kInPlane[3][2] = {{1, 2}, {0, 2}, {0, 1}};
    const int a = kInPlane[plane.axis][0], b = kInPlane[plane.axis][1];

    OccupancySlice slice;
    slice.plane = plane;
    auto axis_values = [](double lo, double hi, int n) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
        return v;
    };
    slice.u = axis_values(box.lo[a], box.hi[a], res_u);
    slice.v = axis_values(box.lo[b], box.hi[b], res_v);

    std::vector<Vec3> points;
    points.reserve(slice.u.size() * slice.v.size());
    for (double v : slice.v)
        for (double u : slice.u) {
            Vec3 p;
            p[plane.axis] = plane.offset;
            p[a] = u;
            p[b] = v;
            points.push_back(p);
        }
    for (const auto& e : query_grid(posterior, grid, points)) slice.probability.push_back(e.probability);
    return slice;
}

void emit_occupancy_slices(const OccupancySlice& slice, const fs::path& path) {
    static constexpr const char* kNames[3] = {"x", "y", "z"};
    static constexpr int kInPlane[3][2] = {{1, 2}, {0, 2}, {0, 1}};
    auto out = open_out(path);
    out << kNames[kInPlane[slice.plane.axis][1]] << '\\' << kNames[kInPlane[slice.plane.axis][0]];
    for (double u : slice.u) out << ',' << format_double(u);
    out << '\n';
    for (std::size_t r = 0; r < slice.v.size(); ++r) {
        out << format_double(slice.v[r]);
        for (std::size_t c = 0; c < slice.u.size(); ++c)
            out << ',' << format_double(slice.probability[r * slice.u.size() + c]);
        out << '\n';
    }
}

}  // namespace subscan
