#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "tbl/file_io.hpp"
#include "tbl/map_io.hpp"
#include "tbl/scenario.hpp"
#include "tbl/text_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path scratch() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("tbl_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

struct ScratchCleanup {
    ~ScratchCleanup() {
        std::error_code ec;
        fs::remove_all(fs::temp_directory_path() / ("tbl_cli_test_" + std::to_string(::getpid())), ec);
    }
} cleanup;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Result run(const std::string& args) {
    static int counter = 0;
    const auto out = scratch() / ("stdout_" + std::to_string(counter));
    const auto err = scratch() / ("stderr_" + std::to_string(counter++));
    const std::string cmd = std::string(TBL_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

// A 1.3 km loop with two mapping passes keeps the CLI round trips fast.
tbl::ScenarioConfig small_config() {
    tbl::ScenarioConfig c;
    c.route.loop_width = 400.0;
    c.route.loop_height = 250.0;
    c.route.segments_per_side = 2;
    c.mapping_passes = 2;
    c.localizer.window_length = 600.0;
    return c;
}

fs::path config_file() {
    static const fs::path p = [] {
        const auto path = scratch() / "small.json";
        std::ofstream(path) << tbl::to_json(small_config()).dump(2);
        return path;
    }();
    return p;
}

std::string base_args(const fs::path& out) { return "--config " + config_file().string() + " --out " + out.string(); }

// Simulated passes and map shared by the tests below.
const fs::path& simulated() {
    static const fs::path dir = [] {
        const auto d = scratch() / "sim";
        const auto r = run(base_args(d) + " simulate");
        EXPECT_EQ(r.code, 0) << r.err;
        return d;
    }();
    return dir;
}

const fs::path& built_map() {
    static const fs::path map = [] {
        const auto d = scratch() / "build";
        const auto& sim = simulated();
        const auto r = run(base_args(d) + " build-map " + (sim / "pass_1").string() + " " + (sim / "pass_2").string());
        EXPECT_EQ(r.code, 0) << r.err;
        return d / "map.tbl";
    }();
    return map;
}

json error_json(const Result& r) {
    EXPECT_EQ(r.code, 1);
    EXPECT_TRUE(r.out.empty()) << r.out;
    return json::parse(r.err);
}

}  // namespace

TEST(Cli, SimulateWritesEveryPass) {
    const auto& sim = simulated();
    for (const char* pass : {"pass_1", "pass_2", "live"}) {
        for (const char* file : {"fl.csv", "fr.csv", "rl.csv", "rr.csv", "gps.csv", "truth.csv"}) {
            EXPECT_TRUE(fs::exists(sim / pass / file)) << pass << "/" << file;
        }
    }
    EXPECT_TRUE(fs::exists(sim / "road_left.csv"));
    const auto echoed = tbl::scenario_from_json(json::parse(slurp(sim / "scenario.json")));
    EXPECT_EQ(echoed.route.loop_width, 400.0);
    EXPECT_EQ(echoed.output_dir, sim.string());
}

TEST(Cli, SimulateIsByteIdenticalForTheSameSeed) {
    const auto again = scratch() / "sim_again";
    ASSERT_EQ(run(base_args(again) + " simulate").code, 0);
    for (const char* file : {"live/fl.csv", "live/gps.csv", "pass_2/rr.csv", "pass_1/truth.csv", "road_right.csv"}) {
        EXPECT_EQ(slurp(simulated() / file), slurp(again / file)) << file;
    }
    const auto other = scratch() / "sim_seed";
    ASSERT_EQ(run(base_args(other) + " --seed 99 simulate").code, 0);
    EXPECT_NE(slurp(simulated() / "live/fl.csv"), slurp(other / "live/fl.csv"));
}

TEST(Cli, BuildMapEqualsTheLibraryPipeline) {
    const auto c = small_config();
    auto map = tbl::make_empty_map(c);
    tbl::MergeReport report;
    for (int p = 1; p <= 2; ++p) {
        const auto dir = simulated() / ("pass_" + std::to_string(p));
        std::array<tbl::SensorStream, 4> streams;
        for (std::size_t k = 0; k < 4; ++k) {
            streams[k] = tbl::parse_sensor_stream(slurp(dir / (std::string(tbl::corner_names[k]) + ".csv")));
        }
        const auto gps = tbl::parse_gps_trace(slurp(dir / "gps.csv"));
        tbl::merge_pass(map, tbl::process_pass(streams, gps, c), p, c, report);
    }
    EXPECT_EQ(slurp(built_map()), tbl::serialize_map(map));
    const auto csv = slurp(built_map().parent_path() / "merge_report.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "pass,stretch,start_distance,status,ratio,discrepancy");
}

TEST(Cli, InspectMap) {
    const auto r = run("inspect-map " + built_map().string());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j.at("total_cells").get<long long>(), 13000);
    EXPECT_NEAR(j.at("route_length_m").get<double>(), 1300.0, 1e-9);
    EXPECT_EQ(j.at("segments").size(), 8u);
    EXPECT_TRUE(j.at("closed").get<bool>());
    EXPECT_DOUBLE_EQ(j.at("initialized_fraction").get<double>(), 1.0);
}

TEST(Cli, LocalizeThenEvaluate) {
    const auto out = scratch() / "loc";
    const auto r = run(base_args(out) + " localize --map " + built_map().string() + " " +
                       (simulated() / "live").string() + " --snapshot-at 500");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = json::parse(r.out);
    std::cout << "[ info ] localize: " << summary.dump() << "\n";
    EXPECT_GE(summary.at("matched_fraction").get<double>(), 0.9);
    EXPECT_GE(summary.at("errors").at("fraction_below_1.0m").get<double>(), 0.8);
    EXPECT_TRUE(fs::exists(out / "error_cdf.csv"));
    bool snapshot = false;
    for (const auto& e : fs::directory_iterator(out)) snapshot |= e.path().filename().string().starts_with("snapshot_");
    EXPECT_TRUE(snapshot);

    // Re-evaluating the written log reproduces the same summary.
    const auto eval_out = scratch() / "eval";
    const auto e = run(base_args(eval_out) + " evaluate " + (out / "estimates.csv").string() + " " +
                       (simulated() / "live" / "truth.csv").string() + " --period 1300");
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_EQ(json::parse(e.out), summary.at("errors"));
    EXPECT_EQ(slurp(eval_out / "error_cdf.csv"), slurp(out / "error_cdf.csv"));
}

TEST(Cli, DisablingMatchingDegradesTheCdf) {
    const auto on = scratch() / "loc_on";
    const auto off = scratch() / "loc_off";
    const std::string tail = " localize --map " + built_map().string() + " " + (simulated() / "live").string();
    const auto a = run(base_args(on) + tail);
    const auto b = run(base_args(off) + tail + " --disable-matching");
    ASSERT_EQ(a.code, 0) << a.err;
    ASSERT_EQ(b.code, 0) << b.err;
    const auto ja = json::parse(a.out), jb = json::parse(b.out);
    EXPECT_EQ(jb.at("matched_fraction").get<double>(), 0.0);
    EXPECT_LT(jb.at("errors").at("fraction_below_0.5m").get<double>(),
              ja.at("errors").at("fraction_below_0.5m").get<double>());
    EXPECT_GT(jb.at("errors").at("max_error_m").get<double>(), ja.at("errors").at("max_error_m").get<double>());
}

TEST(Cli, ErrorsAreReportedAsJson) {
    auto j = error_json(run("--config " + (scratch() / "missing.json").string() + " simulate"));
    EXPECT_EQ(j.at("error"), "io_error");
    EXPECT_FALSE(j.at("message").get<std::string>().empty());

    const auto bad = scratch() / "bad.json";
    std::ofstream(bad) << R"({"seed": 1, "unknown": true})";
    j = error_json(run("--config " + bad.string() + " simulate"));
    EXPECT_EQ(j.at("error"), "config_error");

    const auto broken = scratch() / "broken.json";
    std::ofstream(broken) << "{ not json";
    EXPECT_EQ(error_json(run("--config " + broken.string() + " simulate")).at("error"), "config_error");

    auto bytes = slurp(built_map());
    bytes[bytes.size() / 2] ^= 0x10;
    const auto corrupt = scratch() / "corrupt.tbl";
    std::ofstream(corrupt, std::ios::binary) << bytes;
    EXPECT_EQ(error_json(run("inspect-map " + corrupt.string())).at("error"), "checksum_error");

    EXPECT_EQ(error_json(run("inspect-map " + (scratch() / "nope.tbl").string())).at("error"), "io_error");
}

TEST(Cli, UsageErrorsExitNonZero) {
    EXPECT_NE(run("").code, 0);
    EXPECT_NE(run("localize").code, 0);
    EXPECT_NE(run("frobnicate").code, 0);
}
