// Command-line front end: simulate passes, build a terrain map, localize a
// live pass and evaluate the result.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tbl/evaluation.hpp"
#include "tbl/file_io.hpp"
#include "tbl/map_io.hpp"
#include "tbl/scenario.hpp"
#include "tbl/text_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

tbl::ScenarioConfig load_config(const Options& o) {
    tbl::ScenarioConfig c;
    if (o.config_path) {
        json j;
        try {
            j = json::parse(tbl::read_file(*o.config_path));
        } catch (const json::parse_error& e) {
            throw tbl::Error(tbl::ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
        }
        c = tbl::scenario_from_json(j);
    }
    if (o.seed) c.seed = *o.seed;
    if (o.out) c.output_dir = *o.out;
    c.validate();
    return c;
}

fs::path prepare_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    tbl::require(!ec && fs::is_directory(dir), tbl::ErrorKind::io, "cannot create output directory " + dir.string());
    return dir;
}

void write(const fs::path& path, const std::string& text) { tbl::write_file_atomic(path, text); }

struct PassFiles {
    std::array<tbl::SensorStream, 4> streams;
    tbl::GpsTrace gps;
};

PassFiles read_pass(const fs::path& dir) {
    PassFiles p;
    for (std::size_t k = 0; k < 4; ++k) {
        p.streams[k] = tbl::parse_sensor_stream(tbl::read_file(dir / (std::string(tbl::corner_names[k]) + ".csv")));
    }
    p.gps = tbl::parse_gps_trace(tbl::read_file(dir / "gps.csv"));
    return p;
}

void write_pass(const fs::path& dir, const tbl::PassRecording& rec) {
    prepare_dir(dir);
    for (std::size_t k = 0; k < 4; ++k) {
        write(dir / (std::string(tbl::corner_names[k]) + ".csv"), tbl::format_sensor_stream(rec.corners[k]));
    }
    write(dir / "gps.csv", tbl::format_gps_trace(rec.gps));
    write(dir / "truth.csv", tbl::format_truth(rec.truth));
}

json summary_json(const tbl::ErrorSummary& s) {
    return {{"samples", s.samples},
            {"fraction_below_0.1m", s.below_0_1},
            {"fraction_below_0.5m", s.below_0_5},
            {"fraction_below_1.0m", s.below_1_0},
            {"max_error_m", s.max_error()}};
}

int cmd_simulate(const Options& o) {
    const auto c = load_config(o);
    const fs::path out = prepare_dir(c.output_dir);
    const auto world = tbl::make_world(c);
    write(out / "scenario.json", tbl::to_json(c).dump(2) + "\n");
    write(out / "road_left.csv", tbl::format_road(world.left));
    write(out / "road_right.csv", tbl::format_road(world.right));
    json passes = json::array();
    for (int p = 0; p <= c.mapping_passes; ++p) {
        const auto rec = tbl::simulate_pass(c, world, p);
        const std::string name = p < c.mapping_passes ? "pass_" + std::to_string(p + 1) : "live";
        write_pass(out / name, rec);
        passes.push_back({{"name", name},
                          {"records", rec.corners[0].size()},
                          {"duration_s", rec.corners[0].records.back().time},
                          {"start_position_m", rec.start_position}});
    }
    std::cout << json{{"output_dir", out.string()}, {"passes", passes}}.dump(2) << "\n";
    return 0;
}

int cmd_build_map(const Options& o, const std::vector<std::string>& pass_dirs, const std::string& map_name) {
    const auto c = load_config(o);
    tbl::require(!pass_dirs.empty(), tbl::ErrorKind::precondition, "build-map needs at least one pass directory");
    const fs::path out = prepare_dir(c.output_dir);
    auto map = tbl::make_empty_map(c);
    tbl::MergeReport report;
    for (std::size_t i = 0; i < pass_dirs.size(); ++i) {
        const auto files = read_pass(pass_dirs[i]);
        const auto pass = tbl::process_pass(files.streams, files.gps, c);
        tbl::merge_pass(map, pass, int(i) + 1, c, report);
    }
    tbl::save_map(map, out / map_name);

    std::string csv = "pass,stretch,start_distance,status,ratio,discrepancy\n";
    for (const auto& r : report.rows) {
        csv += std::to_string(r.pass) + ',' + std::to_string(r.stretch) + ',' + tbl::csv::fmt(r.start_distance) + ',' +
               tbl::to_string(r.status) + ',' + (r.ratio ? tbl::csv::fmt(*r.ratio) : std::string()) + ',' +
               tbl::csv::fmt(r.discrepancy) + '\n';
    }
    write(out / "merge_report.csv", csv);

    json per_pass = json::array();
    for (std::size_t i = 0; i < pass_dirs.size(); ++i) {
        per_pass.push_back({{"pass", i + 1},
                            {"matched_fraction", report.matched_fraction(int(i) + 1)},
                            {"path_offset_m", report.path_offsets[i]}});
    }
    std::cout << json{{"map", (out / map_name).string()},
                      {"stretches", report.rows.size()},
                      {"quarantined", report.quarantined},
                      {"initialized_fraction", map.initialized_fraction(0, std::size_t(map.total_cells()))},
                      {"passes", per_pass}}
                     .dump(2)
              << "\n";
    return 0;
}

int cmd_localize(const Options& o, const std::string& map_path, const std::string& live_dir, bool disable_matching,
                 const std::vector<double>& snapshots) {
    const auto c = load_config(o);
    const fs::path out = prepare_dir(c.output_dir);
    const auto map = tbl::load_map(map_path);
    tbl::require(std::abs(map.spacing() - c.map.spacing) <= 1e-12, tbl::ErrorKind::misaligned,
                 "map spacing differs from the configured spacing");
    const auto files = read_pass(live_dir);
    const auto truth = tbl::parse_truth(tbl::read_file(fs::path(live_dir) / "truth.csv"));
    const auto live = tbl::process_pass(files.streams, files.gps, c);
    tbl::require(map.initialized_fraction(0, std::size_t(map.total_cells())) > 0.0, tbl::ErrorKind::precondition,
                 "map does not cover the route");

    std::vector<double> pending = snapshots;
    std::sort(pending.begin(), pending.end(), std::greater<>());
    const double buffer_cells = std::round(c.localizer.buffer_length / map.spacing());
    tbl::SnapshotObserver observer;
    if (!pending.empty()) {
        observer = [&](const tbl::EstimateRecord& rec, const tbl::LocalizeOutcome& outcome, double window_start) {
            while (!pending.empty() && rec.travel >= pending.back()) {
                const double at = pending.back();
                pending.pop_back();
                const double first_tail = window_start + (buffer_cells - 1.0) * map.spacing();
                write(out / ("snapshot_" + tbl::csv::fmt(at, 10) + ".csv"),
                      "# travel_distance=" + tbl::csv::fmt(rec.travel) + "\n# status=" + tbl::to_string(rec.status) +
                          "\n" + tbl::format_correlation_snapshot(outcome.correlation.sequence, first_tail, map.spacing()));
            }
        };
    }
    const auto run = tbl::localize_pass(map, live, truth, c, disable_matching, observer);

    auto log = run.log;
    for (std::size_t i = 0; i < log.size(); ++i) log[i].estimate = run.geographic[i];
    write(out / "estimates.csv", tbl::format_estimate_log(log));
    write(out / "error_cdf.csv", tbl::format_error_cdf(run.errors));
    std::cout << json{{"updates", run.log.size()},
                      {"matched_fraction", run.matched_fraction(c.localizer.ratio_threshold)},
                      {"errors", summary_json(run.errors)}}
                     .dump(2)
              << "\n";
    return 0;
}

int cmd_evaluate(const Options& o, const std::string& estimates_path, const std::string& truth_path, double stride,
                 std::optional<double> period) {
    const auto c = load_config(o);
    const fs::path out = prepare_dir(c.output_dir);
    const auto log = tbl::parse_estimate_log(tbl::read_file(estimates_path));
    const auto truth = tbl::parse_truth(tbl::read_file(truth_path));
    std::vector<double> travel, estimate, reference;
    for (const auto& e : log) {
        travel.push_back(e.travel);
        estimate.push_back(e.estimate);
        reference.push_back(truth.value_at(e.travel));
    }
    const auto summary = tbl::evaluate_errors(travel, estimate, reference, stride, period);
    write(out / "error_cdf.csv", tbl::format_error_cdf(summary));
    std::cout << summary_json(summary).dump(2) << "\n";
    return 0;
}

int cmd_inspect_map(const std::string& map_path) {
    const auto map = tbl::load_map(map_path);
    json segs = json::array();
    for (std::size_t i = 0; i < map.segments().size(); ++i) {
        const auto& s = map.graph().segments[i];
        const auto& p = map.segments()[i];
        std::size_t init = 0;
        for (const auto& cell : p.cells) init += cell.weight > 0 ? 1 : 0;
        segs.push_back({{"id", s.id},
                        {"from", s.from},
                        {"to", s.to},
                        {"length_m", s.length},
                        {"cells", p.cells.size()},
                        {"initialized_cells", init},
                        {"anchor_m", p.anchor}});
    }
    std::cout << json{{"version", tbl::map_format_version},
                      {"spacing_m", map.spacing()},
                      {"closed", map.closed()},
                      {"nodes", map.graph().nodes.size()},
                      {"route_length_m", map.route_length()},
                      {"total_cells", map.total_cells()},
                      {"initialized_fraction", map.initialized_fraction(0, std::size_t(map.total_cells()))},
                      {"segments", segs}}
                     .dump(2)
              << "\n";
    return 0;
}

void report_error(std::string_view kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Terrain-based localization toolkit"};
    app.require_subcommand(1);
    Options opts;
    app.add_option("--config", opts.config_path, "Scenario config (JSON)");
    app.add_option("--seed", opts.seed, "Override the scenario seed");
    app.add_option("--out", opts.out, "Output directory");

    auto* simulate = app.add_subcommand("simulate", "Simulate mapping passes and a live pass");

    auto* build = app.add_subcommand("build-map", "Build a terrain map from pass directories");
    std::vector<std::string> pass_dirs;
    std::string map_name = "map.tbl";
    build->add_option("passes", pass_dirs, "Pass directories, merged in order")->required();
    build->add_option("--map-name", map_name, "File name of the map inside the output directory");

    auto* localize = app.add_subcommand("localize", "Localize a live pass against a map");
    std::string map_path, live_dir;
    bool disable_matching = false;
    std::vector<double> snapshots;
    localize->add_option("--map", map_path, "Map file")->required();
    localize->add_option("live", live_dir, "Live pass directory")->required();
    localize->add_flag("--disable-matching", disable_matching, "Dead reckoning only");
    localize->add_option("--snapshot-at", snapshots, "Travel distances (m) at which to dump correlation traces");

    auto* evaluate = app.add_subcommand("evaluate", "Error CDF of an estimate log against ground truth");
    std::string estimates_path, truth_path;
    double stride = 10.0;
    std::optional<double> period;
    evaluate->add_option("estimates", estimates_path, "Estimate log")->required();
    evaluate->add_option("truth", truth_path, "Ground truth file")->required();
    evaluate->add_option("--stride", stride, "Sampling stride in meters of travel");
    evaluate->add_option("--period", period, "Route length for wrapping errors on a loop");

    auto* inspect = app.add_subcommand("inspect-map", "Summarize a map file");
    std::string inspect_path;
    inspect->add_option("map", inspect_path, "Map file")->required();

    for (auto* sub : {simulate, build, localize, evaluate, inspect}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*simulate) return cmd_simulate(opts);
        if (*build) return cmd_build_map(opts, pass_dirs, map_name);
        if (*localize) return cmd_localize(opts, map_path, live_dir, disable_matching, snapshots);
        if (*evaluate) return cmd_evaluate(opts, estimates_path, truth_path, stride, period);
        if (*inspect) return cmd_inspect_map(inspect_path);
    } catch (const tbl::Error& e) {
        report_error(tbl::error_class_name(e.kind()), e.what());
        return 1;
    } catch (const std::exception& e) {
        report_error("internal_error", e.what());
        return 1;
    }
    return 1;
}
