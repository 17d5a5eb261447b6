#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tbl/error.hpp"
#include "tbl/reconstruction.hpp"

namespace tbl {

enum class ProfileUnits { meters, radians, radians_per_meter, radians_per_meter2 };

inline std::string_view units_tag(ProfileUnits u) {
    switch (u) {
        case ProfileUnits::meters: return "m";
        case ProfileUnits::radians: return "rad";
        case ProfileUnits::radians_per_meter: return "rad_per_m";
        case ProfileUnits::radians_per_meter2: return "rad_per_m2";
    }
    return "m";
}

inline ProfileUnits parse_units(std::string_view tag) {
    if (tag == "m") return ProfileUnits::meters;
    if (tag == "rad") return ProfileUnits::radians;
    if (tag == "rad_per_m") return ProfileUnits::radians_per_meter;
    if (tag == "rad_per_m2") return ProfileUnits::radians_per_meter2;
    throw Error(ErrorKind::format, "unknown profile units tag '" + std::string(tag) + "'");
}

/// Uniformly distance-sampled sequence; values[i] sits at
/// start_offset + i * spacing.
struct DistanceProfile {
    double start_offset = 0.0;  // m
    double spacing = 0.1;       // m
    std::vector<double> values;
    ProfileUnits units = ProfileUnits::meters;

    std::size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }
    double position(std::size_t i) const { return start_offset + double(i) * spacing; }
    /// Distance covered by the cells, size() * spacing.
    double length() const { return double(values.size()) * spacing; }
    double last_position() const { return position(values.empty() ? 0 : values.size() - 1); }

    /// Index of the cell nearest to `s`, unchecked.
    long long index_of(double s) const { return std::llround((s - start_offset) / spacing); }

    /// Linear interpolation; throws outside [start_offset, last_position].
    double value_at(double s) const {
        const double u = (s - start_offset) / spacing;
        require(values.size() >= 2 && u >= -1e-9 && u <= double(values.size() - 1) + 1e-9, ErrorKind::out_of_range,
                "profile does not cover " + std::to_string(s) + " m");
        const auto i = std::min<std::size_t>(static_cast<std::size_t>(std::max(0.0, std::floor(u))), values.size() - 2);
        const double frac = u - double(i);
        return values[i] + (values[i + 1] - values[i]) * frac;
    }
};

/// Streaming time-to-distance conversion. Distance is the trapezoidal
/// integral of speed between consecutive moving records; every grid point
/// d_map = k * spacing reached inside (d_old, d_new] receives the linear
/// interpolation between the two records. Records with v <= 0 are ignored
/// entirely. Grid point 0 is the first moving record.
class DistanceResampler {
public:
    explicit DistanceResampler(double spacing) : spacing_(spacing) {
        require(spacing > 0.0, ErrorKind::precondition, "resampling spacing must be positive");
    }

    /// Feed one record; `emit(value)` is called for every grid point passed.
    template <typename Emit>
    void push(double t, double v, double r, Emit&& emit) {
        if (!(v > 0.0)) return;
        if (!started_) {
            started_ = true;
            t_old_ = t;
            v_old_ = v;
            r_old_ = r;
            emit(r);
            next_ = 1;
            return;
        }
        require(t > t_old_, ErrorKind::precondition, "resampler: timestamps must increase");
        const double d_old = d_new_;
        d_new_ += 0.5 * (v_old_ + v) * (t - t_old_);
        const double eps = 1e-9 * spacing_;
        for (double d_map = double(next_) * spacing_; d_map <= d_new_ + eps; d_map = double(next_) * spacing_) {
            emit((r - r_old_) * (d_map - d_old) / (d_new_ - d_old) + r_old_);
            ++next_;
        }
        t_old_ = t;
        v_old_ = v;
        r_old_ = r;
    }

    double distance() const { return d_new_; }
    std::size_t emitted() const { return next_; }
    double spacing() const { return spacing_; }

private:
    double spacing_;
    bool started_ = false;
    double t_old_ = 0.0;
    double v_old_ = 0.0;
    double r_old_ = 0.0;
    double d_new_ = 0.0;
    std::size_t next_ = 0;
};

/// Batch form over parallel series (time, speed, value).
inline DistanceProfile resample_series(std::span<const double> time, std::span<const double> speed,
                                       std::span<const double> value, double spacing,
                                       ProfileUnits units = ProfileUnits::meters) {
    require(time.size() == speed.size() && time.size() == value.size(), ErrorKind::precondition,
            "resample_series: series lengths differ");
    DistanceResampler resampler(spacing);
    DistanceProfile out;
    out.spacing = spacing;
    out.units = units;
    std::size_t moving = 0;
    for (std::size_t i = 0; i < time.size(); ++i) {
        if (speed[i] > 0.0) ++moving;
        resampler.push(time[i], speed[i], value[i], [&](double r) { out.values.push_back(r); });
    }
    require(moving >= 2, ErrorKind::empty_profile, "at least two records with v > 0 are required");
    require(resampler.distance() >= spacing, ErrorKind::empty_profile,
            "total distance is shorter than one grid spacing");
    return out;
}

inline DistanceProfile convert_time_to_distance(const TimeProfile& profile, double spacing) {
    std::vector<double> t(profile.size()), v(profile.size()), r(profile.size());
    for (std::size_t i = 0; i < profile.size(); ++i) {
        t[i] = profile.records[i].time;
        v[i] = profile.records[i].speed;
        r[i] = profile.records[i].value;
    }
    return resample_series(t, v, r, spacing);
}

/// Sub-profile covering [start, start + length), snapped to the grid.
inline DistanceProfile crop(const DistanceProfile& profile, double start, double length) {
    const long long first = profile.index_of(start);
    const long long count = std::llround(length / profile.spacing);
    if (first < 0 || count < 1 || first + count > static_cast<long long>(profile.size())) {
        throw Error(ErrorKind::out_of_range, "crop [" + std::to_string(start) + ", +" + std::to_string(length) +
                                                 ") is outside the profile extent");
    }
    DistanceProfile out;
    out.spacing = profile.spacing;
    out.units = profile.units;
    out.start_offset = profile.position(static_cast<std::size_t>(first));
    out.values.assign(profile.values.begin() + first, profile.values.begin() + first + count);
    return out;
}

/// Cells [first, first + count) by index.
inline DistanceProfile slice(const DistanceProfile& profile, std::size_t first, std::size_t count) {
    require(first + count <= profile.size(), ErrorKind::out_of_range, "slice outside the profile extent");
    DistanceProfile out;
    out.spacing = profile.spacing;
    out.units = profile.units;
    out.start_offset = profile.position(first);
    out.values.assign(profile.values.begin() + static_cast<long>(first),
                      profile.values.begin() + static_cast<long>(first + count));
    return out;
}

}  // namespace tbl
