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


#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "subscan/campaign.hpp"

namespace fs = std::filesystem;
using namespace subscan;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

RunConfig base_config(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

SlicePlane parse_slice(const std::string& text) {
    const auto colon = text.find(':');
    if (colon != 1 || text.size() < 3) throw ConfigError("slice must look like z:-1.5");
    SlicePlane plane;
    switch (text[0]) {
        case 'x': plane.axis = 0; break;
        case 'y': plane.axis = 1; break;
        case 'z': plane.axis = 2; break;
        default: throw ConfigError("slice axis must be x, y or z");
    }
    try {
        std::size_t used = 0;
        plane.offset = std::stod(text.substr(2), &used);
        if (used != text.size() - 2) throw std::invalid_argument(text);
    } catch (const std::logic_error&) {
        throw ConfigError("bad slice offset in '" + text + "'");
    }
    return plane;
}

int cmd_generate(const std::string& config_path, std::uint64_t seed, bool organ, double spacing,
                 double tumor_spacing, const fs::path& out) {
    fs::create_directories(out);
    if (organ) {
        const AnatomyModel cloud = synthesize_organ_cloud(seed, spacing, tumor_spacing);
        save_labeled_point_cloud(cloud, out / "organ_cloud.csv", CloudFormat::Csv);
        std::cout << "organ cloud: " << cloud.size() << " points, " << cloud.tumor_indices().size() << " tumor\n";
        return 0;
    }
    const RunConfig config = base_config(config_path);
    const TrialSetup setup = make_trial_setup(config, seed);
    const Scenario& s = setup.scenario;
    save_labeled_point_cloud(s.anatomy, out / "anatomy.csv", CloudFormat::Csv);
    {
        std::ofstream ws(out / "workspace.csv", std::ios::binary);
        ws << "x,y,z,ox,oy,oz\n";
        ws.precision(17);
        for (const auto& pose : s.workspace.poses) {
            const Vec3& p = pose.position();
            const Vec3& o = pose.orientation();
            ws << p.x() << ',' << p.y() << ',' << p.z() << ',' << o.x() << ',' << o.y() << ',' << o.z() << '\n';
        }
    }
    const Box& b = s.anatomy.bounds();
    const nlohmann::json info{{"seed", seed},
                              {"points", s.anatomy.size()},
                              {"tumor_points", s.anatomy.tumor_indices().size()},
                              {"poses", s.workspace.size()},
                              {"bounds", {{"lo", {b.lo.x(), b.lo.y(), b.lo.z()}}, {"hi", {b.hi.x(), b.hi.y(), b.hi.z()}}}},
                              {"surface_top", s.surface_top},
                              {"sensor_depth", setup.sensor.depth},
                              {"evaluation_positive_ratio", setup.evaluation.positive_ratio()},
                              {"config", to_json(config)}};
    write_text(out / "scenario.json", info.dump(2) + "\n");
    std::cout << "scenario: " << s.anatomy.size() << " points, " << s.workspace.size() << " poses\n";
    return 0;
}

int cmd_plan(RunConfig config, const std::string& planner, std::optional<int> budget, std::optional<std::uint64_t> seed,
             const fs::path& out) {
    config.planners = {planner};
    if (budget) config.budget = *budget;
    if (seed) config.seeds = {*seed};
    config.seeds.resize(1);
    config.validate();
    const std::uint64_t s = config.seeds.front();

    fs::create_directories(out);
    write_text(out / "manifest.json", make_manifest(config).dump(2) + "\n");
    const TrialSetup setup = make_trial_setup(config, s);
    const PlanTrace trace = run_trial(config, setup, planner, s);
    write_trace_csv(trace, out / "trace.csv");
    const nlohmann::json metrics = trace_metrics(trace);
    write_text(out / "metrics.json", metrics.dump(2) + "\n");
    if (trace.posterior) {
        const HingeGrid grid = config.map.make_grid(setup.scenario.anatomy.bounds());
        write_text(out / "posterior.json", posterior_snapshot(*trace.posterior, grid).dump(2) + "\n");
        if (config.evaluate) write_pr_curve_csv(evaluate_map(*trace.posterior, grid, setup.evaluation), out / "pr_curve.csv");
    }
    std::cout << planner << " seed " << s << ": " << trace.iterations() << " poses, coverage "
              << trace.records.back().coverage;
    if (trace.poses_to_detection) std::cout << ", detection at " << *trace.poses_to_detection;
    if (trace.records.back().auprc) std::cout << ", final AUPRC " << *trace.records.back().auprc;
    std::cout << '\n';
    return 0;
}

int cmd_campaign(RunConfig config, const std::vector<std::string>& planners, std::optional<int> budget,
                 const std::vector<std::uint64_t>& seeds, const std::string& run_id, const fs::path& out) {
    if (!planners.empty()) config.planners = planners;
    if (budget) config.budget = *budget;
    if (!seeds.empty()) config.seeds = seeds;
    if (!run_id.empty()) config.run_id = run_id;
    config.validate();
    const CampaignResult result = run_campaign(config, out);
    std::size_t failed = 0;
    for (const auto& cell : result.cells) failed += cell.ok ? 0 : 1;
    for (const auto& name : config.planners) {
        const auto& p = result.summary.at("planners").at(name);
        std::cout << name << ": median poses-to-detection " << p.at("poses_to_detection").at("median").dump()
                  << ", mean final AUPRC " << p.at("final_auprc").at("mean").dump() << '\n';
    }
    std::cout << "wrote " << result.root.string() << " (" << result.cells.size() << " cells, " << failed
              << " failed)\n";
    return failed == result.cells.size() ? 1 : 0;
}

int cmd_eval(const fs::path& posterior_path, RunConfig config, std::optional<std::uint64_t> seed,
             const std::vector<std::string>& slices, int slice_res, const fs::path& out) {
    std::ifstream in(posterior_path);
    if (!in) throw ConfigError("cannot open posterior " + posterior_path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(posterior_path.string() + ": " + e.what());
    }
    const MapSnapshot snap = load_posterior_snapshot(doc);
    const std::uint64_t s = seed.value_or(config.seeds.front());
    const Scenario scenario = build_scenario(config.scenario, s);
    const EvaluationSet evaluation = make_evaluation_set(scenario.anatomy, config.evaluation_shape);

    fs::create_directories(out);
    const PRCurve curve = evaluate_map(snap.posterior, snap.grid, evaluation);
    write_pr_curve_csv(curve, out / "pr_curve.csv");
    const nlohmann::json result{{"auprc", curve.auprc},
                                {"positives", evaluation.positives()},
                                {"positive_ratio", evaluation.positive_ratio()},
                                {"seed", s}};
    write_text(out / "eval.json", result.dump(2) + "\n");
    for (const auto& text : slices) {
        const OccupancySlice slice =
            occupancy_slice(snap.posterior, snap.grid, scenario.anatomy.bounds(), parse_slice(text), slice_res, slice_res);
        std::string name = "slice_" + text + ".csv";
        std::replace(name.begin(), name.end(), ':', '_');
        emit_occupancy_slices(slice, out / name);
    }
    std::cout << "AUPRC " << curve.auprc << " (positive ratio " << evaluation.positive_ratio() << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Subsurface tumor localization by expected-improvement sensor planning"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, planner = "bo", run_id, posterior_path;
    std::string out = "runs";
    std::optional<int> budget;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> planners, slices;
    std::vector<std::uint64_t> seeds;
    bool organ = false;
    double spacing = 0.2, tumor_spacing = 0.1;
    int slice_res = 60;

    auto* gen = app.add_subcommand("generate", "Write a scenario (or the bundled organ cloud) to files");
    gen->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
    gen->add_option("--seed", seed, "Scenario seed");
    gen->add_option("--out", out, "Output directory")->required();
    gen->add_flag("--organ", organ, "Synthesize the organ surrogate cloud instead");
    gen->add_option("--spacing", spacing, "Organ lattice spacing");
    gen->add_option("--tumor-spacing", tumor_spacing, "Organ tumor lattice spacing");

    auto* pl = app.add_subcommand("plan", "Run one planner for one seed");
    pl->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
    pl->add_option("--planner", planner, "bo, random or multires");
    pl->add_option("--budget", budget, "Maximum number of sensing actions");
    pl->add_option("--seed", seed, "Trial seed");
    pl->add_option("--out", out, "Output directory")->required();

    auto* cp = app.add_subcommand("campaign", "Run every (planner, seed) cell of a config");
    cp->add_option("--config", config_path, "Run config JSON or manifest")->check(CLI::ExistingFile);
    cp->add_option("--planner", planners, "Override the planner list");
    cp->add_option("--budget", budget, "Maximum number of sensing actions");
    cp->add_option("--seed", seeds, "Override the seed list");
    cp->add_option("--run-id", run_id, "Output subdirectory name");
    cp->add_option("--out", out, "Output root");

    auto* ev = app.add_subcommand("eval", "Metrics and occupancy slices from a saved posterior");
    ev->add_option("--posterior", posterior_path, "posterior.json from plan or campaign")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--config", config_path, "Run config used for the scenario")->check(CLI::ExistingFile);
    ev->add_option("--seed", seed, "Scenario seed");
    ev->add_option("--slice", slices, "Slice plane such as z:-1.5 (repeatable)");
    ev->add_option("--slice-res", slice_res, "Slice lattice resolution per axis");
    ev->add_option("--out", out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_generate(config_path, seed.value_or(organ ? 2026 : 0), organ, spacing, tumor_spacing, out);
        if (pl->parsed()) return cmd_plan(base_config(config_path), planner, budget, seed, out);
        if (cp->parsed()) return cmd_campaign(base_config(config_path), planners, budget, seeds, run_id, out);
        if (ev->parsed()) return cmd_eval(posterior_path, base_config(config_path), seed, slices, slice_res, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
