#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tbl/error.hpp"
#include "tbl/road.hpp"

namespace tbl {

/// Physical coefficients of one suspension corner.
struct QuarterCarParams {
    double body_mass = 400.0;         // m_b, kg
    double wheel_mass = 50.0;         // m_w, kg
    double spring_rate = 2.0e4;       // k_s, N/m
    double tire_rate = 2.0e5;         // k_t, N/m
    double damping = 1.5e3;           // b_s, N s/m (linearized)
    double actuator_force_limit = 5.0e3;  // N
    /// Optional nonlinear damper force as a function of shock velocity.
    /// When empty the damper force is damping * s_v.
    std::function<double(double)> damping_curve;

    double damper_force(double shock_velocity) const {
        return damping_curve ? damping_curve(shock_velocity) : damping * shock_velocity;
    }

    void validate() const {
        require(body_mass > 0 && wheel_mass > 0 && spring_rate > 0 && tire_rate > 0, ErrorKind::precondition,
                "quarter-car masses and rates must be strictly positive");
        require(damping >= 0, ErrorKind::precondition, "damping coefficient must be non-negative");
        require(actuator_force_limit >= 0, ErrorKind::precondition, "actuator force limit must be non-negative");
    }
};

/// Body position/velocity (x1, x2) and wheel position/velocity (x3, x4).
struct QuarterCarState {
    double body_position = 0.0;
    double body_velocity = 0.0;
    double wheel_position = 0.0;
    double wheel_velocity = 0.0;

    double shock_displacement() const { return body_position - wheel_position; }
    double shock_velocity() const { return body_velocity - wheel_velocity; }

    bool finite() const {
        return std::isfinite(body_position) && std::isfinite(body_velocity) && std::isfinite(wheel_position) &&
               std::isfinite(wheel_velocity);
    }

    bool operator==(const QuarterCarState&) const = default;
};

/// Time derivative of the state.
inline QuarterCarState derivative(const QuarterCarState& x, const QuarterCarParams& p, double road_height,
                                  double force) {
    const double sd = x.shock_displacement();
    const double suspension = p.spring_rate * sd + p.damper_force(x.shock_velocity());
    return {
        x.body_velocity,
        -(suspension - force) / p.body_mass,
        x.wheel_velocity,
        (suspension - p.tire_rate * (x.wheel_position - road_height) - force) / p.wheel_mass,
    };
}

/// Road height at the start, middle and end of one integration step.
struct StepRoad {
    double start = 0.0;
    double mid = 0.0;
    double end = 0.0;
};

namespace detail {
inline QuarterCarState axpy(const QuarterCarState& x, double a, const QuarterCarState& k) {
    return {x.body_position + a * k.body_position, x.body_velocity + a * k.body_velocity,
            x.wheel_position + a * k.wheel_position, x.wheel_velocity + a * k.wheel_velocity};
}
}  // namespace detail

/// One classical RK4 step. The actuator force is clamped to the actuator
/// limit and held over the step.
inline QuarterCarState step_dynamics(const QuarterCarState& x, const QuarterCarParams& p, const StepRoad& road,
                                     double force, double dt) {
    require(dt > 0.0 && dt <= 0.01, ErrorKind::precondition, "step_dynamics: dt must be in (0, 0.01] s");
    require(x.finite() && std::isfinite(road.start) && std::isfinite(road.mid) && std::isfinite(road.end) &&
                std::isfinite(force),
            ErrorKind::precondition, "step_dynamics: non-finite input");
    const double f = std::clamp(force, -p.actuator_force_limit, p.actuator_force_limit);
    const auto k1 = derivative(x, p, road.start, f);
    const auto k2 = derivative(detail::axpy(x, 0.5 * dt, k1), p, road.mid, f);
    const auto k3 = derivative(detail::axpy(x, 0.5 * dt, k2), p, road.mid, f);
    const auto k4 = derivative(detail::axpy(x, dt, k3), p, road.end, f);
    QuarterCarState next{
        x.body_position + dt / 6.0 * (k1.body_position + 2 * k2.body_position + 2 * k3.body_position + k4.body_position),
        x.body_velocity + dt / 6.0 * (k1.body_velocity + 2 * k2.body_velocity + 2 * k3.body_velocity + k4.body_velocity),
        x.wheel_position + dt / 6.0 * (k1.wheel_position + 2 * k2.wheel_position + 2 * k3.wheel_position + k4.wheel_position),
        x.wheel_velocity + dt / 6.0 * (k1.wheel_velocity + 2 * k2.wheel_velocity + 2 * k3.wheel_velocity + k4.wheel_velocity),
    };
    if (!next.finite()) {
        throw Error(ErrorKind::numerical, "step_dynamics: non-finite state (dt too large for the stiffness?)");
    }
    return next;
}

/// Road height held constant over the step.
inline QuarterCarState step_dynamics(const QuarterCarState& x, const QuarterCarParams& p, double road_height,
                                     double force, double dt) {
    return step_dynamics(x, p, StepRoad{road_height, road_height, road_height}, force, dt);
}

/// Kinetic plus spring and tire potential energy, J.
inline double mechanical_energy(const QuarterCarState& x, const QuarterCarParams& p, double road_height) {
    const double sd = x.shock_displacement();
    const double tire = x.wheel_position - road_height;
    return 0.5 * p.body_mass * x.body_velocity * x.body_velocity +
           0.5 * p.wheel_mass * x.wheel_velocity * x.wheel_velocity + 0.5 * p.spring_rate * sd * sd +
           0.5 * p.tire_rate * tire * tire;
}

// ---------------------------------------------------------------------------
// Sensor streams
// ---------------------------------------------------------------------------

struct SensorRecord {
    double time = 0.0;                // s
    double wheel_acceleration = 0.0;  // m/s^2
    double shock_displacement = 0.0;  // m
    double shock_velocity = 0.0;      // m/s
    double force = 0.0;               // N
    double speed = 0.0;               // m/s
};

/// Additive white Gaussian noise, one standard deviation per channel.
struct SensorNoise {
    double wheel_acceleration = 0.0;
    double shock_displacement = 0.0;
    double shock_velocity = 0.0;
    double force = 0.0;
    double speed = 0.0;
};

struct SensorStream {
    std::vector<SensorRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    /// Constant sample period; throws if timestamps are not uniform.
    double sample_period() const {
        require(records.size() >= 2, ErrorKind::precondition, "sensor stream needs at least two records");
        const double period = (records.back().time - records.front().time) / double(records.size() - 1);
        require(period > 0.0, ErrorKind::non_uniform, "sensor stream timestamps must be increasing");
        for (std::size_t i = 1; i < records.size(); ++i) {
            const double step = records[i].time - records[i - 1].time;
            if (!(step > 0.0) || std::abs(step - period) > 1e-6 * period + 1e-12) {
                throw Error(ErrorKind::non_uniform,
                            "sensor stream sampling is not uniform at record " + std::to_string(i));
            }
        }
        return period;
    }
};

/// Ground-truth companions of a simulated stream, one entry per record.
struct SimulationTruth {
    std::vector<double> distance;        // wheel contact position along the road, m
    std::vector<double> road_height;     // r at the contact point, m
    std::vector<double> wheel_position;  // x3, m
    std::vector<double> body_position;   // x1, m
};

struct SimulationResult {
    SensorStream stream;
    SimulationTruth truth;
};

struct SimulationOptions {
    double dt = 1e-3;                  // integration step, s
    std::size_t output_decimation = 1;  // record every n-th step
    double start_distance = 0.0;       // contact position at t = 0, m
    bool start_at_equilibrium = true;  // x1 = x3 = r(start) instead of zeros
    std::function<double(double)> force_profile;  // actuator force vs time; zero when empty
    /// Seed for the speed channel noise. Corners of one vehicle share a
    /// speed signal, so they pass the same value here.
    std::optional<std::uint64_t> speed_noise_seed;
};

/// Drive one corner over `road`. The contact point advances with the
/// integral of `speed_profile`; duration is rounded to whole steps.
inline SimulationResult simulate_run(const RoadInput& road, const QuarterCarParams& params,
                                     const std::function<double(double)>& speed_profile, double duration,
                                     const SensorNoise& noise, std::uint64_t seed,
                                     const SimulationOptions& options = {}) {
    params.validate();
    road.validate();
    require(duration > 0.0, ErrorKind::precondition, "simulate_run: duration must be positive");
    require(options.output_decimation >= 1, ErrorKind::precondition, "simulate_run: decimation must be >= 1");
    const double dt = options.dt;
    const auto steps = static_cast<std::size_t>(std::llround(duration / dt));

    std::mt19937_64 sensor_rng(seed);
    std::mt19937_64 speed_rng(options.speed_noise_seed.value_or(seed ^ 0x9e3779b97f4a7c15ULL));
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto noisy = [&](std::mt19937_64& rng, double sigma) { return sigma > 0.0 ? sigma * gauss(rng) : 0.0; };

    auto force_at = [&](double t) { return options.force_profile ? options.force_profile(t) : 0.0; };
    auto speed_at = [&](double t) {
        const double v = speed_profile(t);
        require(v >= 0.0 && std::isfinite(v), ErrorKind::precondition, "speed profile must be finite and >= 0");
        return v;
    };

    QuarterCarState x;
    double s = options.start_distance;
    if (options.start_at_equilibrium) {
        const double r0 = road.height_at(s);
        x.body_position = r0;
        x.wheel_position = r0;
    }

    SimulationResult result;
    const std::size_t expected = steps / options.output_decimation + 1;
    result.stream.records.reserve(expected);
    result.truth.distance.reserve(expected);
    result.truth.road_height.reserve(expected);
    result.truth.wheel_position.reserve(expected);
    result.truth.body_position.reserve(expected);

    auto record = [&](double t, double v, double r) {
        const double f = std::clamp(force_at(t), -params.actuator_force_limit, params.actuator_force_limit);
        const auto dx = derivative(x, params, r, f);
        result.stream.records.push_back({
            t,
            dx.wheel_velocity + noisy(sensor_rng, noise.wheel_acceleration),
            x.shock_displacement() + noisy(sensor_rng, noise.shock_displacement),
            x.shock_velocity() + noisy(sensor_rng, noise.shock_velocity),
            f + noisy(sensor_rng, noise.force),
            v + noisy(speed_rng, noise.speed),
        });
        result.truth.distance.push_back(s);
        result.truth.road_height.push_back(r);
        result.truth.wheel_position.push_back(x.wheel_position);
        result.truth.body_position.push_back(x.body_position);
    };

    double v0 = speed_at(0.0);
    double r0 = road.height_at(s);
    record(0.0, v0, r0);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = double(k) * dt;
        const double v_mid = speed_at(t + 0.5 * dt);
        const double v1 = speed_at(t + dt);
        const double s_mid = s + 0.25 * dt * (v0 + v_mid);
        const double s1 = s + dt / 6.0 * (v0 + 4.0 * v_mid + v1);
        const StepRoad r{r0, road.height_at(s_mid), road.height_at(s1)};
        x = step_dynamics(x, params, r, force_at(t), dt);
        s = s1;
        v0 = v1;
        r0 = r.end;
        if ((k + 1) % options.output_decimation == 0) {
            record(double(k + 1) * dt, v1, r0);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Parameter identification
// ---------------------------------------------------------------------------

struct IdentificationOptions {
    /// Every signal of the regression passes through the same two-stage
    /// high-pass so that the double-integrated wheel position loses its drift
    /// without breaking the linear relation.
    double highpass_cutoff = 2.0;  // Hz
    double start_distance = 0.0;   // wheel contact position at the first record, m
    /// Condition-number limit of the column-scaled regression matrix.
    double max_condition = 1e8;
};

struct IdentifiedParameters {
    double spring_rate = 0.0;
    double damping = 0.0;
    double tire_rate = 0.0;
    double residual_rms = 0.0;  // N
    std::size_t samples = 0;
};

}  // namespace tbl
