#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tbl/error.hpp"
#include "tbl/evaluation.hpp"
#include "tbl/file_io.hpp"
#include "tbl/geo.hpp"
#include "tbl/localizer.hpp"
#include "tbl/quarter_car.hpp"
#include "tbl/reconstruction.hpp"
#include "tbl/resample.hpp"
#include "tbl/road.hpp"

namespace tbl {

// Comma-separated text. Lines starting with '#' carry metadata as
// `# key=value` and are otherwise ignored. Sensor streams use 9 significant
// digits; everything else is written round-trip exact.

namespace csv {

inline std::string fmt(double v, int digits = 17) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline double parse_double(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && ptr == s.data() + s.size(), ErrorKind::format,
            "cannot parse number '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

struct Table {
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::string> meta(const std::string& key) const {
        for (const auto& [k, v] : metadata) {
            if (k == key) return v;
        }
        return std::nullopt;
    }
};

inline Table parse(const std::string& text, std::string_view expected_header) {
    Table t;
    std::istringstream in(text);
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            std::string_view body(line);
            body.remove_prefix(1);
            while (!body.empty() && body.front() == ' ') body.remove_prefix(1);
            const auto eq = body.find('=');
            if (eq != std::string_view::npos) t.metadata.emplace_back(body.substr(0, eq), body.substr(eq + 1));
            continue;
        }
        if (!have_header) {
            require(line == expected_header, ErrorKind::format,
                    "unexpected header '" + line + "', wanted '" + std::string(expected_header) + "'");
            for (auto f : split(line)) t.header.emplace_back(f);
            have_header = true;
            continue;
        }
        std::vector<std::string> row;
        for (auto f : split(line)) row.emplace_back(f);
        require(row.size() == t.header.size(), ErrorKind::format, "wrong field count in line '" + line + "'");
        t.rows.push_back(std::move(row));
    }
    require(have_header, ErrorKind::format, "missing header line");
    return t;
}

}  // namespace csv

// --- sensor streams --------------------------------------------------------

inline constexpr std::string_view sensor_header = "t,accel,sd,sv,f,v";

inline std::string format_sensor_stream(const SensorStream& s) {
    std::string out(sensor_header);
    out += '\n';
    for (const auto& r : s.records) {
        out += csv::fmt(r.time, 9) + ',' + csv::fmt(r.wheel_acceleration, 9) + ',' +
               csv::fmt(r.shock_displacement, 9) + ',' + csv::fmt(r.shock_velocity, 9) + ',' + csv::fmt(r.force, 9) +
               ',' + csv::fmt(r.speed, 9) + '\n';
    }
    return out;
}

inline SensorStream parse_sensor_stream(const std::string& text) {
    const auto t = csv::parse(text, sensor_header);
    SensorStream s;
    s.records.reserve(t.rows.size());
    for (const auto& r : t.rows) {
        s.records.push_back({csv::parse_double(r[0]), csv::parse_double(r[1]), csv::parse_double(r[2]),
                             csv::parse_double(r[3]), csv::parse_double(r[4]), csv::parse_double(r[5])});
    }
    return s;
}

// --- roads -------------------------------------------------------------------

inline constexpr std::string_view road_header = "distance,height";

inline std::string format_road(const RoadInput& road) {
    std::string out(road_header);
    out += '\n';
    for (std::size_t i = 0; i < road.heights.size(); ++i) {
        out += csv::fmt(road.start + double(i) * road.spacing) + ',' + csv::fmt(road.heights[i]) + '\n';
    }
    return out;
}

inline RoadInput parse_road(const std::string& text) {
    const auto t = csv::parse(text, road_header);
    require(t.rows.size() >= 2, ErrorKind::format, "road needs at least two samples");
    RoadInput road;
    road.start = csv::parse_double(t.rows[0][0]);
    road.spacing = csv::parse_double(t.rows[1][0]) - road.start;
    for (const auto& r : t.rows) road.heights.push_back(csv::parse_double(r[1]));
    road.validate();
    return road;
}

// --- time profiles -----------------------------------------------------------

inline constexpr std::string_view time_profile_header = "t,r_hat,v";

inline std::string format_time_profile(const TimeProfile& p) {
    std::string out = "# highpass_stages=" + std::to_string(p.highpass_stages) + '\n' +
                      "# transient_end=" + csv::fmt(p.transient_end) + '\n' + std::string(time_profile_header) + '\n';
    for (const auto& r : p.records) out += csv::fmt(r.time) + ',' + csv::fmt(r.value) + ',' + csv::fmt(r.speed) + '\n';
    return out;
}

inline TimeProfile parse_time_profile(const std::string& text) {
    const auto t = csv::parse(text, time_profile_header);
    TimeProfile p;
    if (auto v = t.meta("highpass_stages")) p.highpass_stages = std::stoi(*v);
    if (auto v = t.meta("transient_end")) p.transient_end = csv::parse_double(*v);
    for (const auto& r : t.rows) {
        p.records.push_back({csv::parse_double(r[0]), csv::parse_double(r[1]), csv::parse_double(r[2])});
    }
    return p;
}

// --- distance profiles -------------------------------------------------------

inline constexpr std::string_view distance_profile_header = "start_offset,spacing,count,units";

inline std::string format_distance_profile(const DistanceProfile& p) {
    std::string out(distance_profile_header);
    out += '\n' + csv::fmt(p.start_offset) + ',' + csv::fmt(p.spacing) + ',' + std::to_string(p.size()) + ',' +
           std::string(units_tag(p.units)) + '\n';
    for (double v : p.values) out += csv::fmt(v) + '\n';
    return out;
}

inline DistanceProfile parse_distance_profile(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    auto next_line = [&]() {
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty() && line.front() != '#') return true;
        }
        return false;
    };
    require(next_line() && line == distance_profile_header, ErrorKind::format, "missing distance profile header");
    require(next_line(), ErrorKind::format, "missing distance profile description");
    const auto f = csv::split(line);
    require(f.size() == 4, ErrorKind::format, "malformed distance profile description");
    DistanceProfile p;
    p.start_offset = csv::parse_double(f[0]);
    p.spacing = csv::parse_double(f[1]);
    const auto count = static_cast<std::size_t>(csv::parse_double(f[2]));
    p.units = parse_units(f[3]);
    p.values.reserve(count);
    while (next_line()) p.values.push_back(csv::parse_double(line));
    require(p.values.size() == count, ErrorKind::format, "distance profile is truncated");
    return p;
}

// --- GPS traces --------------------------------------------------------------

inline constexpr std::string_view gps_header = "distance,lat,lon";

inline std::string format_gps_trace(const GpsTrace& trace) {
    std::string out(gps_header);
    out += '\n';
    for (const auto& f : trace) {
        out += csv::fmt(f.distance) + ',' + csv::fmt(f.point.latitude) + ',' + csv::fmt(f.point.longitude) + '\n';
    }
    return out;
}

inline GpsTrace parse_gps_trace(const std::string& text) {
    const auto t = csv::parse(text, gps_header);
    GpsTrace trace;
    for (const auto& r : t.rows) {
        GpsFix f{csv::parse_double(r[0]), {csv::parse_double(r[1]), csv::parse_double(r[2]), 0.0}};
        f.point.validate();
        trace.push_back(f);
    }
    return trace;
}

// --- localization outputs ----------------------------------------------------

inline constexpr std::string_view estimate_header = "travel_distance,estimate,status,ratio";

inline std::string format_estimate_log(const std::vector<EstimateRecord>& log) {
    std::string out(estimate_header);
    out += '\n';
    for (const auto& e : log) {
        out += csv::fmt(e.travel) + ',' + csv::fmt(e.estimate) + ',' + to_string(e.status) + ',' +
               (e.ratio ? csv::fmt(*e.ratio) : std::string()) + '\n';
    }
    return out;
}

inline std::vector<EstimateRecord> parse_estimate_log(const std::string& text) {
    const auto t = csv::parse(text, estimate_header);
    std::vector<EstimateRecord> log;
    for (const auto& r : t.rows) {
        EstimateRecord e{csv::parse_double(r[0]), csv::parse_double(r[1]), parse_status(r[2]), std::nullopt};
        if (!r[3].empty()) e.ratio = csv::parse_double(r[3]);
        log.push_back(e);
    }
    return log;
}

/// Ground-truth route position against travel distance.
inline constexpr std::string_view truth_header = "travel_distance,true_position";

inline std::string format_truth(const DistanceProfile& truth) {
    std::string out(truth_header);
    out += '\n';
    for (std::size_t i = 0; i < truth.size(); ++i) out += csv::fmt(truth.position(i)) + ',' + csv::fmt(truth.values[i]) + '\n';
    return out;
}

inline DistanceProfile parse_truth(const std::string& text) {
    const auto t = csv::parse(text, truth_header);
    require(t.rows.size() >= 2, ErrorKind::format, "truth file needs at least two rows");
    DistanceProfile p;
    p.start_offset = csv::parse_double(t.rows[0][0]);
    p.spacing = csv::parse_double(t.rows[1][0]) - p.start_offset;
    for (const auto& r : t.rows) p.values.push_back(csv::parse_double(r[1]));
    return p;
}

inline std::string format_error_cdf(const ErrorSummary& s) {
    std::string out = "# samples=" + std::to_string(s.samples) + "\n# below_0.1m=" + csv::fmt(s.below_0_1) +
                      "\n# below_0.5m=" + csv::fmt(s.below_0_5) + "\n# below_1.0m=" + csv::fmt(s.below_1_0) +
                      "\nerror,fraction\n";
    for (std::size_t i = 0; i < s.sorted_errors.size(); ++i) {
        out += csv::fmt(s.sorted_errors[i]) + ',' + csv::fmt(double(i + 1) / double(s.sorted_errors.size())) + '\n';
    }
    return out;
}

/// Correlation trace with the master position each lag puts the buffer tail at.
inline std::string format_correlation_snapshot(const std::vector<double>& sequence, double first_tail_position,
                                               double spacing) {
    std::string out = "lag,tail_position,value\n";
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        out += std::to_string(i) + ',' + csv::fmt(first_tail_position + double(i) * spacing) + ',' +
               csv::fmt(sequence[i]) + '\n';
    }
    return out;
}

}  // namespace tbl
