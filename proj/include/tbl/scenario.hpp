#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tbl/error.hpp"
#include "tbl/evaluation.hpp"
#include "tbl/geo.hpp"
#include "tbl/localizer.hpp"
#include "tbl/pitch.hpp"
#include "tbl/quarter_car.hpp"
#include "tbl/reconstruction.hpp"
#include "tbl/resample.hpp"
#include "tbl/road.hpp"
#include "tbl/terrain_map.hpp"

namespace tbl {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct RouteConfig {
    double loop_width = 1300.0;  // m
    double loop_height = 800.0;  // m
    int segments_per_side = 4;
    double origin_latitude = 48.137;  // degrees
    double origin_longitude = 11.575;
    RoughnessClass roughness = RoughnessClass::C;
    double road_spacing = 0.05;  // m
    RoadBand band;
};

struct DriveConfig {
    double mean_speed = 10.0;       // m/s
    double speed_variation = 1.0;   // m/s, sinusoid amplitude
    double speed_period = 60.0;     // s
    double lead_in = 150.0;         // m driven before the loop start
    double tail = 30.0;             // m driven past one full lap
    double integration_step = 1e-3;  // s
    std::size_t output_decimation = 2;
};

struct NoiseConfig {
    SensorNoise sensor{0.05, 1e-4, 1e-3, 0.0, 0.02};
    double gps_sigma = 3.0;   // m, per axis
    double gps_period = 1.0;  // s
};

struct MapBuildConfig {
    double spacing = 0.1;  // m
    StretchSettings stretch;
    StretchMatchSettings match;
    MergeSettings merge;
    double path_inlier_band = 20.0;  // m
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    RouteConfig route;
    QuarterCarParams vehicle;
    VehicleGeometry geometry;
    DriveConfig drive;
    NoiseConfig noise;
    int mapping_passes = 3;
    double highpass_cutoff = 0.5;  // Hz
    MapBuildConfig map;
    LocalizerConfig localizer;
    /// Travel-distance ranges [from, to) of the live pass with matching off.
    std::vector<std::pair<double, double>> matching_disabled;
    double evaluation_stride = 10.0;  // m
    std::string output_dir = "out";

    /// Same scenario with every noise source switched off.
    ScenarioConfig noiseless() const {
        ScenarioConfig c = *this;
        c.noise.sensor = {};
        c.noise.gps_sigma = 0.0;
        return c;
    }

    void validate() const {
        try {
            vehicle.validate();
            geometry.validate();
            localizer.validate();
        } catch (const Error& e) {
            throw Error(ErrorKind::config, e.what());
        }
        require(mapping_passes >= 1, ErrorKind::config, "at least one mapping pass is required");
        require(drive.mean_speed > drive.speed_variation && drive.speed_variation >= 0.0, ErrorKind::config,
                "speed must stay positive");
        require(drive.speed_period > 0.0 && drive.output_decimation >= 1, ErrorKind::config,
                "invalid drive timing");
        require(drive.lead_in >= 5.0 / highpass_cutoff * (drive.mean_speed + drive.speed_variation),
                ErrorKind::config, "lead-in must cover the reconstruction filter warm-up");
        require(noise.gps_sigma >= 0.0 && noise.gps_period > 0.0, ErrorKind::config, "invalid GPS noise settings");
        require(map.spacing > 0.0 && evaluation_stride > 0.0, ErrorKind::config, "spacings must be positive");
        require(std::abs(route.road_spacing * std::round(map.spacing / route.road_spacing) - map.spacing) < 1e-12,
                ErrorKind::config, "map spacing must be a multiple of the road spacing");
        for (const auto& [a, b] : matching_disabled) {
            require(b > a, ErrorKind::config, "disabled matching ranges must have positive length");
        }
    }
};

namespace detail {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
    require(j.is_object(), ErrorKind::config, std::string(where) + " must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        require(ok, ErrorKind::config, "unknown key '" + key + "' in " + where);
    }
}

}  // namespace detail

inline nlohmann::json to_json(const ScenarioConfig& c) {
    using nlohmann::json;
    json disabled = json::array();
    for (const auto& [a, b] : c.matching_disabled) disabled.push_back({a, b});
    return json{
        {"seed", c.seed},
        {"route",
         {{"loop_width_m", c.route.loop_width},
          {"loop_height_m", c.route.loop_height},
          {"segments_per_side", c.route.segments_per_side},
          {"origin_latitude_deg", c.route.origin_latitude},
          {"origin_longitude_deg", c.route.origin_longitude},
          {"roughness_class", to_string(c.route.roughness)},
          {"road_spacing_m", c.route.road_spacing},
          {"min_frequency_cycles_per_m", c.route.band.min_frequency},
          {"max_frequency_cycles_per_m", c.route.band.max_frequency}}},
        {"vehicle",
         {{"body_mass_kg", c.vehicle.body_mass},
          {"wheel_mass_kg", c.vehicle.wheel_mass},
          {"spring_rate_n_per_m", c.vehicle.spring_rate},
          {"tire_rate_n_per_m", c.vehicle.tire_rate},
          {"damping_n_s_per_m", c.vehicle.damping},
          {"actuator_force_limit_n", c.vehicle.actuator_force_limit},
          {"wheelbase_m", c.geometry.wheelbase}}},
        {"drive",
         {{"mean_speed_m_per_s", c.drive.mean_speed},
          {"speed_variation_m_per_s", c.drive.speed_variation},
          {"speed_period_s", c.drive.speed_period},
          {"lead_in_m", c.drive.lead_in},
          {"tail_m", c.drive.tail},
          {"integration_step_s", c.drive.integration_step},
          {"output_decimation", c.drive.output_decimation}}},
        {"noise",
         {{"wheel_acceleration_m_per_s2", c.noise.sensor.wheel_acceleration},
          {"shock_displacement_m", c.noise.sensor.shock_displacement},
          {"shock_velocity_m_per_s", c.noise.sensor.shock_velocity},
          {"force_n", c.noise.sensor.force},
          {"speed_m_per_s", c.noise.sensor.speed},
          {"gps_sigma_m", c.noise.gps_sigma},
          {"gps_period_s", c.noise.gps_period}}},
        {"mapping_passes", c.mapping_passes},
        {"highpass_cutoff_hz", c.highpass_cutoff},
        {"map",
         {{"spacing_m", c.map.spacing},
          {"stretch_length_m", c.map.stretch.length},
          {"stretch_min_length_m", c.map.stretch.min_length},
          {"match_margin_m", c.map.match.margin},
          {"ratio_threshold", c.map.match.ratio_threshold},
          {"exclusion_halfwidth_cells", c.map.match.exclusion_halfwidth},
          {"min_initialized_fraction", c.map.match.min_initialized_fraction},
          {"weight_cap", c.map.merge.weight_cap},
          {"anchor_gain", c.map.merge.anchor_gain},
          {"path_inlier_band_m", c.map.path_inlier_band}}},
        {"localizer",
         {{"buffer_length_m", c.localizer.buffer_length},
          {"window_length_m", c.localizer.window_length},
          {"subbuffer_length_m", c.localizer.subbuffer_length},
          {"subwindow_length_m", c.localizer.subwindow_length},
          {"ratio_threshold", c.localizer.ratio_threshold},
          {"update_stride_m", c.localizer.update_stride},
          {"exclusion_halfwidth_cells", c.localizer.exclusion_halfwidth},
          {"search_widening", c.localizer.search_widening},
          {"dead_reckoning_limit_m", c.localizer.dead_reckoning_limit},
          {"min_window_initialized_fraction", c.localizer.min_window_initialized},
          {"matching_enabled", c.localizer.matching_enabled}}},
        {"matching_disabled_ranges_m", disabled},
        {"evaluation_stride_m", c.evaluation_stride},
        {"output_dir", c.output_dir},
    };
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    using detail::read_key;
    ScenarioConfig c;
    try {
        detail::reject_unknown(j,
                               {"seed", "route", "vehicle", "drive", "noise", "mapping_passes", "highpass_cutoff_hz",
                                "map", "localizer", "matching_disabled_ranges_m", "evaluation_stride_m", "output_dir"},
                               "scenario");
        read_key(j, "seed", c.seed);
        if (j.contains("route")) {
            const auto& r = j.at("route");
            detail::reject_unknown(r,
                                   {"loop_width_m", "loop_height_m", "segments_per_side", "origin_latitude_deg",
                                    "origin_longitude_deg", "roughness_class", "road_spacing_m",
                                    "min_frequency_cycles_per_m", "max_frequency_cycles_per_m"},
                                   "route");
            read_key(r, "loop_width_m", c.route.loop_width);
            read_key(r, "loop_height_m", c.route.loop_height);
            read_key(r, "segments_per_side", c.route.segments_per_side);
            read_key(r, "origin_latitude_deg", c.route.origin_latitude);
            read_key(r, "origin_longitude_deg", c.route.origin_longitude);
            if (r.contains("roughness_class")) c.route.roughness = parse_roughness(r.at("roughness_class").get<std::string>());
            read_key(r, "road_spacing_m", c.route.road_spacing);
            read_key(r, "min_frequency_cycles_per_m", c.route.band.min_frequency);
            read_key(r, "max_frequency_cycles_per_m", c.route.band.max_frequency);
        }
        if (j.contains("vehicle")) {
            const auto& v = j.at("vehicle");
            detail::reject_unknown(v,
                                   {"body_mass_kg", "wheel_mass_kg", "spring_rate_n_per_m", "tire_rate_n_per_m",
                                    "damping_n_s_per_m", "actuator_force_limit_n", "wheelbase_m"},
                                   "vehicle");
            read_key(v, "body_mass_kg", c.vehicle.body_mass);
            read_key(v, "wheel_mass_kg", c.vehicle.wheel_mass);
            read_key(v, "spring_rate_n_per_m", c.vehicle.spring_rate);
            read_key(v, "tire_rate_n_per_m", c.vehicle.tire_rate);
            read_key(v, "damping_n_s_per_m", c.vehicle.damping);
            read_key(v, "actuator_force_limit_n", c.vehicle.actuator_force_limit);
            read_key(v, "wheelbase_m", c.geometry.wheelbase);
        }
        if (j.contains("drive")) {
            const auto& d = j.at("drive");
            detail::reject_unknown(d,
                                   {"mean_speed_m_per_s", "speed_variation_m_per_s", "speed_period_s", "lead_in_m",
                                    "tail_m", "integration_step_s", "output_decimation"},
                                   "drive");
            read_key(d, "mean_speed_m_per_s", c.drive.mean_speed);
            read_key(d, "speed_variation_m_per_s", c.drive.speed_variation);
            read_key(d, "speed_period_s", c.drive.speed_period);
            read_key(d, "lead_in_m", c.drive.lead_in);
            read_key(d, "tail_m", c.drive.tail);
            read_key(d, "integration_step_s", c.drive.integration_step);
            read_key(d, "output_decimation", c.drive.output_decimation);
        }
        if (j.contains("noise")) {
            const auto& n = j.at("noise");
            detail::reject_unknown(n,
                                   {"wheel_acceleration_m_per_s2", "shock_displacement_m", "shock_velocity_m_per_s",
                                    "force_n", "speed_m_per_s", "gps_sigma_m", "gps_period_s"},
                                   "noise");
            read_key(n, "wheel_acceleration_m_per_s2", c.noise.sensor.wheel_acceleration);
            read_key(n, "shock_displacement_m", c.noise.sensor.shock_displacement);
            read_key(n, "shock_velocity_m_per_s", c.noise.sensor.shock_velocity);
            read_key(n, "force_n", c.noise.sensor.force);
            read_key(n, "speed_m_per_s", c.noise.sensor.speed);
            read_key(n, "gps_sigma_m", c.noise.gps_sigma);
            read_key(n, "gps_period_s", c.noise.gps_period);
        }
        read_key(j, "mapping_passes", c.mapping_passes);
        read_key(j, "highpass_cutoff_hz", c.highpass_cutoff);
        if (j.contains("map")) {
            const auto& m = j.at("map");
            detail::reject_unknown(m,
                                   {"spacing_m", "stretch_length_m", "stretch_min_length_m", "match_margin_m",
                                    "ratio_threshold", "exclusion_halfwidth_cells", "min_initialized_fraction",
                                    "weight_cap", "anchor_gain", "path_inlier_band_m"},
                                   "map");
            read_key(m, "spacing_m", c.map.spacing);
            read_key(m, "stretch_length_m", c.map.stretch.length);
            read_key(m, "stretch_min_length_m", c.map.stretch.min_length);
            read_key(m, "match_margin_m", c.map.match.margin);
            read_key(m, "ratio_threshold", c.map.match.ratio_threshold);
            read_key(m, "exclusion_halfwidth_cells", c.map.match.exclusion_halfwidth);
            read_key(m, "min_initialized_fraction", c.map.match.min_initialized_fraction);
            read_key(m, "weight_cap", c.map.merge.weight_cap);
            read_key(m, "anchor_gain", c.map.merge.anchor_gain);
            read_key(m, "path_inlier_band_m", c.map.path_inlier_band);
        }
        if (j.contains("localizer")) {
            const auto& l = j.at("localizer");
            detail::reject_unknown(l,
                                   {"buffer_length_m", "window_length_m", "subbuffer_length_m", "subwindow_length_m",
                                    "ratio_threshold", "update_stride_m", "exclusion_halfwidth_cells",
                                    "search_widening", "dead_reckoning_limit_m", "min_window_initialized_fraction",
                                    "matching_enabled"},
                                   "localizer");
            read_key(l, "buffer_length_m", c.localizer.buffer_length);
            read_key(l, "window_length_m", c.localizer.window_length);
            read_key(l, "subbuffer_length_m", c.localizer.subbuffer_length);
            read_key(l, "subwindow_length_m", c.localizer.subwindow_length);
            read_key(l, "ratio_threshold", c.localizer.ratio_threshold);
            read_key(l, "update_stride_m", c.localizer.update_stride);
            read_key(l, "exclusion_halfwidth_cells", c.localizer.exclusion_halfwidth);
            read_key(l, "search_widening", c.localizer.search_widening);
            read_key(l, "dead_reckoning_limit_m", c.localizer.dead_reckoning_limit);
            read_key(l, "min_window_initialized_fraction", c.localizer.min_window_initialized);
            read_key(l, "matching_enabled", c.localizer.matching_enabled);
        }
        if (j.contains("matching_disabled_ranges_m")) {
            c.matching_disabled.clear();
            for (const auto& r : j.at("matching_disabled_ranges_m")) {
                require(r.is_array() && r.size() == 2, ErrorKind::config,
                        "matching_disabled_ranges_m entries must be [from, to] pairs");
                c.matching_disabled.emplace_back(r[0].get<double>(), r[1].get<double>());
            }
        }
        read_key(j, "evaluation_stride_m", c.evaluation_stride);
        read_key(j, "output_dir", c.output_dir);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::config, std::string("invalid scenario config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// Independent 64-bit seed for a named sub-stream of the scenario.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream, std::uint32_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream, index};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (std::uint64_t(out[0]) << 32) | out[1];
}

enum SeedStream : std::uint32_t { road_stream = 1, pass_stream, sensor_stream, speed_stream, gps_stream };

/// Loop geometry plus the left and right wheel tracks, periodic in the
/// route length.
struct ScenarioWorld {
    GraphMap graph;
    double route_length = 0.0;
    RoadInput left;
    RoadInput right;
};

inline ScenarioWorld make_world(const ScenarioConfig& c) {
    ScenarioWorld w;
    w.graph = make_rectangular_loop(c.route.origin_latitude, c.route.origin_longitude, c.route.loop_width,
                                    c.route.loop_height, c.route.segments_per_side);
    w.route_length = TerrainMap(w.graph, c.map.spacing).route_length();
    w.left = generate_road(w.route_length, c.route.road_spacing, c.route.roughness, derive_seed(c.seed, road_stream, 0),
                           c.route.band);
    w.right = generate_road(w.route_length, c.route.road_spacing, c.route.roughness,
                            derive_seed(c.seed, road_stream, 1), c.route.band);
    return w;
}

enum Corner : std::size_t { front_left = 0, front_right, rear_left, rear_right };
inline constexpr std::array<const char*, 4> corner_names = {"fl", "fr", "rl", "rr"};

/// Raw outputs of one drive around the loop.
struct PassRecording {
    std::array<SensorStream, 4> corners;
    GpsTrace gps;
    /// True route position of the front axle on the odometer grid.
    DistanceProfile truth;
    double start_position = 0.0;  // route position of the front axle at t = 0
};

/// Odometer at each record: trapezoidal integral of the reported speed.
inline std::vector<double> odometer(const SensorStream& s) {
    std::vector<double> d(s.size(), 0.0);
    for (std::size_t i = 1; i < s.size(); ++i) {
        d[i] = d[i - 1] + 0.5 * (s.records[i - 1].speed + s.records[i].speed) * (s.records[i].time - s.records[i - 1].time);
    }
    return d;
}

inline PassRecording simulate_pass(const ScenarioConfig& c, const ScenarioWorld& world, int pass) {
    const auto idx = static_cast<std::uint32_t>(pass);
    std::mt19937_64 rng(derive_seed(c.seed, pass_stream, idx));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double jitter = unit(rng) * c.map.spacing;
    const double phase = unit(rng) * 2.0 * std::numbers::pi;

    const auto& d = c.drive;
    const double omega = 2.0 * std::numbers::pi / d.speed_period;
    auto speed = [=](double t) { return d.mean_speed + d.speed_variation * std::sin(omega * t + phase); };
    auto travelled = [=](double t) {
        return d.mean_speed * t - d.speed_variation / omega * (std::cos(omega * t + phase) - std::cos(phase));
    };
    const double needed = d.lead_in + world.route_length + d.tail;
    double duration = needed / d.mean_speed;
    for (int k = 0; k < 20; ++k) duration += (needed - travelled(duration)) / d.mean_speed;
    duration = std::ceil(duration / (d.integration_step * double(d.output_decimation))) * d.integration_step *
               double(d.output_decimation);

    PassRecording rec;
    rec.start_position = -d.lead_in + jitter;
    const double lb = c.geometry.wheelbase;
    const double from = rec.start_position - lb - 5.0;
    const double to = rec.start_position + travelled(duration) + 5.0;
    const RoadInput left = tile_periodic_road(world.left, from, to);
    const RoadInput right = tile_periodic_road(world.right, from, to);

    SimulationOptions opts;
    opts.dt = d.integration_step;
    opts.output_decimation = d.output_decimation;
    opts.speed_noise_seed = derive_seed(c.seed, speed_stream, idx);
    std::vector<double> front_truth;
    for (std::size_t k = 0; k < 4; ++k) {
        const bool rear = k == rear_left || k == rear_right;
        const bool is_left = k == front_left || k == rear_left;
        opts.start_distance = rec.start_position - (rear ? lb : 0.0);
        auto sim = simulate_run(is_left ? left : right, c.vehicle, speed, duration, c.noise.sensor,
                                derive_seed(c.seed, sensor_stream, idx * 4 + static_cast<std::uint32_t>(k)), opts);
        if (k == front_left) front_truth = std::move(sim.truth.distance);
        rec.corners[k] = std::move(sim.stream);
    }

    const auto& fl = rec.corners[front_left];
    std::vector<double> t(fl.size()), v(fl.size());
    for (std::size_t i = 0; i < fl.size(); ++i) {
        t[i] = fl.records[i].time;
        v[i] = fl.records[i].speed;
    }
    rec.truth = resample_series(t, v, front_truth, c.map.spacing);

    const auto odo = odometer(fl);
    const TerrainMap geometry(world.graph, c.map.spacing);
    const auto proj = world.graph.projection();
    std::mt19937_64 gps_rng(derive_seed(c.seed, gps_stream, idx));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double record_period = d.integration_step * double(d.output_decimation);
    const auto step = static_cast<std::size_t>(std::max(1LL, std::llround(c.noise.gps_period / record_period)));
    std::vector<std::size_t> fix_records;
    for (std::size_t i = 0; i < fl.size(); i += step) fix_records.push_back(i);
    if (fix_records.back() + 1 != fl.size()) fix_records.push_back(fl.size() - 1);
    for (std::size_t i : fix_records) {
        auto p = proj.to_plane(geometry.point_at(front_truth[i]));
        if (c.noise.gps_sigma > 0.0) {
            p.x += c.noise.gps_sigma * gauss(gps_rng);
            p.y += c.noise.gps_sigma * gauss(gps_rng);
        }
        auto g = proj.to_geo(p);
        g.noise_std = c.noise.gps_sigma;
        rec.gps.push_back({odo[i], g});
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Per-pass processing
// ---------------------------------------------------------------------------

/// Reconstructed profiles of one pass on the odometer grid.
struct ProcessedPass {
    CornerProfiles corners;   // vehicle-distance indexed, full length
    DistanceProfile heights;  // axle-mean road heights, filter warm-up removed
    DistanceProfile pitch;    // pitch derived from `heights`
    GpsTrace gps;
};

inline ProcessedPass process_pass(const std::array<SensorStream, 4>& streams, const GpsTrace& gps,
                                  const ScenarioConfig& c) {
    ReconstructionConfig rc;
    rc.highpass_cutoff = c.highpass_cutoff;
    rc.params = c.vehicle;
    std::array<DistanceProfile, 4> prof;
    double transient_end = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        const auto tp = estimate_road_profile(streams[k], rc);
        transient_end = tp.transient_end;
        prof[k] = convert_time_to_distance(tp, c.map.spacing);
    }
    ProcessedPass out;
    out.corners = align_corners({prof[0], prof[1], prof[2], prof[3]});
    out.gps = gps;

    const auto& fl = streams[front_left];
    const auto odo = odometer(fl);
    double cut = odo.back();
    for (std::size_t i = 0; i < fl.size(); ++i) {
        if (fl.records[i].time >= transient_end) {
            cut = odo[i];
            break;
        }
    }
    const auto axle = axle_height_profile(out.corners, c.geometry);
    const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(cut / c.map.spacing - 1e-9)));
    require(first + 2 < axle.size(), ErrorKind::empty_profile, "pass is shorter than the filter warm-up");
    out.heights = slice(axle, first, axle.size() - first);
    out.pitch = pitch_from_heights(out.heights, c.geometry);
    return out;
}

// ---------------------------------------------------------------------------
// Map building
// ---------------------------------------------------------------------------

struct MergeReportRow {
    int pass = 0;
    std::size_t stretch = 0;
    double start_distance = 0.0;  // odometer, m
    StretchMatchStatus status = StretchMatchStatus::rejected;
    std::optional<double> ratio;
    double discrepancy = 0.0;  // m
};

struct MergeReport {
    std::vector<MergeReportRow> rows;
    std::vector<double> path_offsets;  // per pass, m
    std::size_t quarantined = 0;
    double dropped_length = 0.0;

    /// Fraction of a pass's stretches that were matched by correlation.
    double matched_fraction(int pass) const {
        std::size_t n = 0, m = 0;
        for (const auto& r : rows) {
            if (r.pass != pass) continue;
            ++n;
            if (r.status == StretchMatchStatus::matched) ++m;
        }
        return n ? double(m) / double(n) : 0.0;
    }
};

inline TerrainMap make_empty_map(const ScenarioConfig& c) {
    return TerrainMap(make_rectangular_loop(c.route.origin_latitude, c.route.origin_longitude, c.route.loop_width,
                                            c.route.loop_height, c.route.segments_per_side),
                      c.map.spacing);
}

/// One pass of the map creation loop: place the driven path, cut stretches,
/// match each against the current master and merge it.
inline void merge_pass(TerrainMap& map, const ProcessedPass& pass, int pass_number, const ScenarioConfig& c,
                       MergeReport& report) {
    const auto path = match_path(pass.gps, map, c.map.path_inlier_band);
    report.path_offsets.push_back(path.offset);
    auto extraction = extract_stretches(pass.heights, path.snapped, pass_number, c.map.stretch);
    report.dropped_length += extraction.dropped_length;
    for (std::size_t i = 0; i < extraction.stretches.size(); ++i) {
        auto& s = extraction.stretches[i];
        // Interpolating between fixes cuts corners; place the points on the road.
        s.start_gps = map.point_at(s.start_distance() + path.offset);
        s.center_gps = map.point_at(s.center_distance() + path.offset);
        s.end_gps = map.point_at(s.end_distance() + path.offset);
        const auto m = match_stretch(s, map, c.geometry, c.map.match);
        report.rows.push_back({pass_number, i, s.start_distance(), m.status, m.ratio, m.discrepancy});
        if (m.status == StretchMatchStatus::rejected) {
            ++report.quarantined;
            continue;
        }
        merge_stretch(s, m, map, c.map.merge);
    }
}

struct MapBuild {
    TerrainMap map;
    MergeReport report;
};

inline MapBuild build_map(const std::vector<ProcessedPass>& passes, const ScenarioConfig& c) {
    MapBuild out{make_empty_map(c), {}};
    for (std::size_t p = 0; p < passes.size(); ++p) merge_pass(out.map, passes[p], int(p) + 1, c, out.report);
    return out;
}

// ---------------------------------------------------------------------------
// Localization run
// ---------------------------------------------------------------------------

struct LocalizationRun {
    std::vector<EstimateRecord> log;  // master positions
    std::vector<double> geographic;   // route positions of the estimates
    std::vector<double> truth;        // true route positions at each update
    ErrorSummary errors;
    double prior = 0.0;

    double matched_fraction(double threshold) const {
        if (log.empty()) return 0.0;
        std::size_t m = 0;
        for (const auto& e : log) {
            if (e.status == LocalizationStatus::matched && e.ratio && *e.ratio < threshold) ++m;
        }
        return double(m) / double(log.size());
    }
};

using SnapshotObserver = std::function<void(const EstimateRecord&, const LocalizeOutcome&, double)>;

inline LocalizationRun localize_pass(const TerrainMap& map, const ProcessedPass& live, const DistanceProfile& truth,
                                     const ScenarioConfig& c, bool disable_matching = false,
                                     SnapshotObserver observer = {}) {
    require(std::abs(live.pitch.spacing - map.spacing()) <= 1e-9 * map.spacing(), ErrorKind::misaligned,
            "live pass spacing differs from the map spacing");
    const MasterPitchTrack track(map, c.geometry);
    LocalizationRun run;
    run.prior = map.master_position(interpolate_gps(live.gps, live.pitch.start_offset));
    LocalizerConfig lc = c.localizer;
    if (disable_matching) lc.matching_enabled = false;
    Localizer loc(track, lc, run.prior);
    if (!c.matching_disabled.empty()) {
        loc.set_matching_mask([ranges = c.matching_disabled](double travel) {
            for (const auto& [a, b] : ranges) {
                if (travel >= a && travel < b) return true;
            }
            return false;
        });
    }
    if (observer) loc.set_observer(std::move(observer));
    run.log = loc.run(live.pitch);

    std::optional<double> period;
    if (map.closed()) period.emplace(map.route_length());
    std::vector<double> travel;
    for (const auto& e : run.log) {
        travel.push_back(e.travel);
        run.geographic.push_back(map.geographic_position(e.estimate));
        run.truth.push_back(truth.value_at(e.travel));
    }
    run.errors = evaluate_errors(travel, run.geographic, run.truth, c.evaluation_stride, period);
    return run;
}

// ---------------------------------------------------------------------------
// End to end
// ---------------------------------------------------------------------------

struct ScenarioResult {
    MapBuild build;
    LocalizationRun live;
    std::vector<PassRecording> recordings;  // mapping passes then the live pass
};

/// Simulate `mapping_passes` passes plus one live pass, build the map, and
/// localize the live pass. `live_pass` overrides which pass index is
/// replayed as the live drive.
inline ScenarioResult run_scenario(const ScenarioConfig& c, bool keep_recordings = false,
                                   std::optional<int> live_pass = std::nullopt) {
    c.validate();
    const auto world = make_world(c);
    ScenarioResult out;
    std::vector<ProcessedPass> passes;
    for (int p = 0; p < c.mapping_passes; ++p) {
        auto rec = simulate_pass(c, world, p);
        passes.push_back(process_pass(rec.corners, rec.gps, c));
        if (keep_recordings) out.recordings.push_back(std::move(rec));
    }
    out.build = build_map(passes, c);
    auto live = simulate_pass(c, world, live_pass.value_or(c.mapping_passes));
    const auto processed = process_pass(live.corners, live.gps, c);
    out.live = localize_pass(out.build.map, processed, live.truth, c);
    if (keep_recordings) out.recordings.push_back(std::move(live));
    return out;
}

}  // namespace tbl
