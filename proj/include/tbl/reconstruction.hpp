#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tbl/error.hpp"
#include "tbl/quarter_car.hpp"

namespace tbl {

/// First-order recursive high-pass, y[n] = a (y[n-1] + x[n] - x[n-1]) with
/// a = 1 / (1 + 2 pi fc T). Starts from rest (y[-1] = 0, x[-1] = x[0]).
inline std::vector<double> highpass(std::span<const double> x, double period, double cutoff) {
    const double a = 1.0 / (1.0 + 2.0 * std::numbers::pi * cutoff * period);
    std::vector<double> y(x.size());
    double prev_x = x.empty() ? 0.0 : x[0];
    double prev_y = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        prev_y = a * (prev_y + x[n] - prev_x);
        prev_x = x[n];
        y[n] = prev_y;
    }
    return y;
}

/// Cumulative trapezoidal integral starting at zero.
inline std::vector<double> integrate_trapezoid(std::span<const double> x, double period) {
    std::vector<double> y(x.size());
    double acc = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        if (n > 0) acc += 0.5 * period * (x[n] + x[n - 1]);
        y[n] = acc;
    }
    return y;
}

/// Wheel position from wheel acceleration: trapezoidal integration twice,
/// high-pass after each stage.
inline std::vector<double> double_integrate_highpass(std::span<const double> acceleration, double period,
                                                     double cutoff) {
    require(period > 0.0, ErrorKind::precondition, "sample period must be positive");
    require(cutoff > 0.0 && cutoff < 0.5 / period, ErrorKind::precondition,
            "high-pass cutoff must be positive and below Nyquist");
    const auto velocity = highpass(integrate_trapezoid(acceleration, period), period, cutoff);
    return highpass(integrate_trapezoid(velocity, period), period, cutoff);
}

/// Variant that checks the timestamps first.
inline std::vector<double> double_integrate_highpass(std::span<const double> acceleration,
                                                     std::span<const double> times, double cutoff) {
    require(acceleration.size() == times.size() && times.size() >= 2, ErrorKind::precondition,
            "acceleration and time series must have equal length >= 2");
    const double period = (times.back() - times.front()) / double(times.size() - 1);
    for (std::size_t i = 1; i < times.size(); ++i) {
        const double step = times[i] - times[i - 1];
        if (!(step > 0.0) || std::abs(step - period) > 1e-6 * period + 1e-12) {
            throw Error(ErrorKind::non_uniform, "non-uniform sampling at index " + std::to_string(i));
        }
    }
    return double_integrate_highpass(acceleration, period, cutoff);
}

enum class IntegrationMethod { trapezoid_highpass_per_stage };

struct ReconstructionConfig {
    double highpass_cutoff = 0.5;  // Hz
    IntegrationMethod method = IntegrationMethod::trapezoid_highpass_per_stage;
    QuarterCarParams params;

    /// Output before this time is filter warm-up and is not used for maps.
    double transient_duration() const { return 5.0 / highpass_cutoff; }
};

struct TimeProfileRecord {
    double time = 0.0;
    double value = 0.0;  // estimated road height r_hat, m
    double speed = 0.0;  // m/s
};

struct TimeProfile {
    std::vector<TimeProfileRecord> records;
    /// Records before this time are filter warm-up.
    double transient_end = 0.0;
    /// Number of high-pass stages applied to the wheel position estimate.
    int highpass_stages = 2;

    std::size_t size() const { return records.size(); }
};

namespace detail {
inline TimeProfile estimate_with_wheel_position(const SensorStream& stream, const QuarterCarParams& p,
                                                std::span<const double> wheel_position) {
    TimeProfile out;
    out.records.reserve(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const auto& rec = stream.records[i];
        const double r_hat = (p.wheel_mass * rec.wheel_acceleration - p.spring_rate * rec.shock_displacement -
                              p.damper_force(rec.shock_velocity) + rec.force) /
                                 p.tire_rate +
                             wheel_position[i];
        out.records.push_back({rec.time, r_hat, rec.speed});
    }
    return out;
}
}  // namespace detail

/// r_hat = (m_w a - k_s s_d - b_s(s_v) + f) / k_t + x3_hat, with x3_hat from
/// the drift-filtered double integral of the wheel acceleration.
inline TimeProfile estimate_road_profile(const SensorStream& stream, const ReconstructionConfig& config) {
    config.params.validate();
    require(stream.size() >= 2, ErrorKind::precondition, "sensor stream is missing records");
    const double period = stream.sample_period();
    require(config.highpass_cutoff > 0.0 && config.highpass_cutoff < 0.5 / period, ErrorKind::precondition,
            "high-pass cutoff must be positive and below the stream Nyquist frequency");
    std::vector<double> accel(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) accel[i] = stream.records[i].wheel_acceleration;
    const auto x3_hat = double_integrate_highpass(accel, period, config.highpass_cutoff);
    auto out = detail::estimate_with_wheel_position(stream, config.params, x3_hat);
    out.transient_end = stream.records.front().time + config.transient_duration();
    out.highpass_stages = 2;
    return out;
}

/// Same estimator with a known wheel position series in place of the
/// integrated one (no filtering, no transient).
inline TimeProfile estimate_road_profile(const SensorStream& stream, const ReconstructionConfig& config,
                                         std::span<const double> wheel_position) {
    config.params.validate();
    require(wheel_position.size() == stream.size(), ErrorKind::precondition,
            "wheel position series length must match the stream");
    auto out = detail::estimate_with_wheel_position(stream, config.params, wheel_position);
    out.transient_end = stream.empty() ? 0.0 : stream.records.front().time;
    out.highpass_stages = 0;
    return out;
}

}  // namespace tbl
