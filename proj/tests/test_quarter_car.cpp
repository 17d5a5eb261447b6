#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "test_support.hpp"
#include "tbl/identification.hpp"
#include "tbl/quarter_car.hpp"
#include "tbl/road.hpp"
#include "tbl/text_io.hpp"

using namespace tbl;
namespace ts = testing_support;

namespace {

RoadInput flat_road(double length, double height = 0.0) {
    RoadInput r;
    r.spacing = 0.1;
    r.heights.assign(static_cast<std::size_t>(length / r.spacing) + 1, height);
    return r;
}

// |X1/R| from the Laplace-domain equations of the two masses.
double body_gain(const QuarterCarParams& p, double omega) {
    const std::complex<double> s(0.0, omega);
    const auto c = p.spring_rate + p.damping * s;
    const auto num = c * p.tire_rate;
    const auto den = (p.body_mass * s * s + c) * (p.wheel_mass * s * s + c + p.tire_rate) - c * c;
    return std::abs(num / den);
}

QuarterCarState integrate(QuarterCarState x, const QuarterCarParams& p, double dt, double duration) {
    const auto steps = static_cast<int>(std::llround(duration / dt));
    for (int k = 0; k < steps; ++k) x = step_dynamics(x, p, 0.0, 0.0, dt);
    return x;
}

}  // namespace

TEST(StepDynamics, ZeroStateIsEquilibrium) {
    const QuarterCarParams p;
    const QuarterCarState zero;
    EXPECT_EQ(step_dynamics(zero, p, 0.0, 0.0, 1e-3), zero);
}

TEST(StepDynamics, ConstantRoadSettlesOnTheRoad) {
    const QuarterCarParams p;
    const double h = 0.05;
    QuarterCarState x;
    for (int k = 0; k < 30000; ++k) x = step_dynamics(x, p, h, 0.0, 1e-3);
    EXPECT_LT(std::abs(x.body_position - h), 1e-6);
    EXPECT_LT(std::abs(x.wheel_position - h), 1e-6);
    EXPECT_LT(std::abs(x.body_velocity), 1e-6);
    EXPECT_LT(std::abs(x.wheel_velocity), 1e-6);
}

TEST(StepDynamics, SinusoidalRoadMatchesFrequencyResponse) {
    const QuarterCarParams p;
    const double amp = 0.02, freq = 2.0, dt = 1e-3;
    const double omega = 2.0 * std::numbers::pi * freq;
    QuarterCarState x;
    double peak = 0.0;
    const int steps = 20000;
    for (int k = 0; k < steps; ++k) {
        const double t = k * dt;
        const StepRoad r{amp * std::sin(omega * t), amp * std::sin(omega * (t + 0.5 * dt)),
                         amp * std::sin(omega * (t + dt))};
        x = step_dynamics(x, p, r, 0.0, dt);
        if (k > steps - 2000) peak = std::max(peak, std::abs(x.body_position));
    }
    const double expected = amp * body_gain(p, omega);
    EXPECT_NEAR(peak, expected, 0.005 * expected);
}

TEST(StepDynamics, RejectsBadStep) {
    const QuarterCarParams p;
    EXPECT_THROW(step_dynamics({}, p, 0.0, 0.0, 0.0), Error);
    EXPECT_THROW(step_dynamics({}, p, 0.0, 0.0, 0.02), Error);
    EXPECT_THROW(step_dynamics({}, p, std::nan(""), 0.0, 1e-3), Error);
}

TEST(StepDynamics, BlowUpIsReported) {
    QuarterCarParams p;
    p.tire_rate = 1e12;
    QuarterCarState x{0.0, 0.0, 0.1, 0.0};
    try {
        for (int k = 0; k < 10000; ++k) x = step_dynamics(x, p, 0.0, 0.0, 0.01);
        FAIL() << "expected a numerical error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numerical);
    }
}

TEST(StepDynamics, RichardsonRatioShowsFourthOrder) {
    const QuarterCarParams p;
    const QuarterCarState x0{0.02, 0.0, -0.01, 0.3};
    const double dt = 0.008, duration = 1.0;
    const auto a = integrate(x0, p, dt, duration);
    const auto b = integrate(x0, p, dt / 2, duration);
    const auto c = integrate(x0, p, dt / 4, duration);
    const double ratio = (a.wheel_position - b.wheel_position) / (b.wheel_position - c.wheel_position);
    EXPECT_GT(ratio, 16.0 * 0.7);
    EXPECT_LT(ratio, 16.0 * 1.3);
}

TEST(StepDynamics, EnergyDoesNotGrowOnFlatRoad) {
    const QuarterCarParams p;
    auto road = generate_road(200, 0.05, RoughnessClass::D, 3);
    // Excite for 100 m, then continue on a flat road.
    for (std::size_t i = road.heights.size() / 2; i < road.heights.size(); ++i) road.heights[i] = 0.0;
    QuarterCarState x;
    const double dt = 1e-3, v = 10.0;
    double prev = -1.0;
    for (int k = 0; k < 19000; ++k) {
        const double s = v * k * dt;
        x = step_dynamics(x, p, {road.height_at(s), road.height_at(s + 0.5 * v * dt), road.height_at(s + v * dt)}, 0.0,
                          dt);
        if (s > 100.5) {
            const double e = mechanical_energy(x, p, 0.0);
            if (prev >= 0.0) {
                EXPECT_LE(e, prev * (1.0 + 1e-6));
            }
            prev = e;
        }
    }
    EXPECT_GT(prev, 0.0);
}

TEST(SimulateRun, FlatRoadIsQuiet) {
    const auto sim = simulate_run(flat_road(200), {}, [](double) { return 10.0; }, 10.0, {}, 1);
    for (const auto& r : sim.stream.records) {
        EXPECT_EQ(r.wheel_acceleration, 0.0);
        EXPECT_EQ(r.shock_displacement, 0.0);
    }
}

TEST(SimulateRun, Deterministic) {
    const auto road = generate_road(300, 0.05, RoughnessClass::C, 5);
    SensorNoise n{0.05, 1e-4, 1e-3, 1.0, 0.02};
    auto speed = [](double t) { return 10.0 + std::sin(t); };
    const auto a = simulate_run(road, {}, speed, 20.0, n, 42);
    const auto b = simulate_run(road, {}, speed, 20.0, n, 42);
    EXPECT_EQ(format_sensor_stream(a.stream), format_sensor_stream(b.stream));
    const auto c = simulate_run(road, {}, speed, 20.0, n, 43);
    EXPECT_NE(format_sensor_stream(a.stream), format_sensor_stream(c.stream));
}

TEST(SimulateRun, ZeroNoiseStreamEqualsInternals) {
    const QuarterCarParams p;
    const auto road = generate_road(300, 0.05, RoughnessClass::C, 5);
    const auto sim = simulate_run(road, p, [](double) { return 10.0; }, 20.0, {}, 1);
    for (std::size_t i = 0; i < sim.stream.size(); i += 97) {
        const auto& r = sim.stream.records[i];
        EXPECT_EQ(r.shock_displacement, sim.truth.body_position[i] - sim.truth.wheel_position[i]);
        EXPECT_DOUBLE_EQ(r.speed, 10.0);
    }
}

TEST(SimulateRun, AccelerationNoiseHasConfiguredVariance) {
    const auto road = generate_road(500, 0.05, RoughnessClass::C, 5);
    auto speed = [](double) { return 10.0; };
    const auto clean = simulate_run(road, {}, speed, 30.0, {}, 9);
    SensorNoise n;
    n.wheel_acceleration = 0.05;
    const auto noisy = simulate_run(road, {}, speed, 30.0, n, 9);
    ASSERT_GE(clean.stream.size(), 10000u);
    std::vector<double> diff;
    for (std::size_t i = 0; i < clean.stream.size(); ++i) {
        diff.push_back(noisy.stream.records[i].wheel_acceleration - clean.stream.records[i].wheel_acceleration);
    }
    EXPECT_NEAR(ts::variance(diff), 0.05 * 0.05, 0.1 * 0.05 * 0.05);
}

TEST(SimulateRun, RoadTooShortIsAnError) {
    try {
        simulate_run(flat_road(50), {}, [](double) { return 10.0; }, 10.0, {}, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::out_of_range);
    }
}

TEST(SimulateRun, NegativeSpeedIsRejected) {
    EXPECT_THROW(simulate_run(flat_road(50), {}, [](double) { return -1.0; }, 1.0, {}, 1), Error);
}

TEST(GenerateRoad, SampleCount) {
    EXPECT_EQ(generate_road(1000, 0.1, RoughnessClass::A, 1).heights.size(), 10000u);
}

TEST(GenerateRoad, RougherClassHasLargerRms) {
    const auto a = generate_road(1000, 0.1, RoughnessClass::A, 11);
    const auto d = generate_road(1000, 0.1, RoughnessClass::D, 11);
    EXPECT_GT(rms(d.heights), rms(a.heights));
    EXPECT_NEAR(rms(d.heights) / rms(a.heights), 8.0, 1e-9);
}

TEST(GenerateRoad, ZeroMeanAndReproducible) {
    const auto a = generate_road(1000, 0.1, RoughnessClass::C, 4);
    const auto b = generate_road(1000, 0.1, RoughnessClass::C, 4);
    EXPECT_EQ(a.heights, b.heights);
    EXPECT_LT(std::abs(ts::mean(a.heights)), 1e-12);
}

TEST(GenerateRoad, PeriodogramSlopeIsInverseSquare) {
    const double spacing = 0.1;
    const auto road = generate_road(4096 * 0.1 * 8, spacing, RoughnessClass::C, 21);
    const std::size_t seg = 1024;
    // 0.02 .. 1.5 cycles/m
    const auto est = ts::welch(road.heights, road.heights, seg, 3, 150, spacing);
    const double slope = ts::loglog_slope(est.frequency, est.pxx);
    EXPECT_GT(slope, -2.2);
    EXPECT_LT(slope, -1.8);
}

TEST(GenerateRoad, Preconditions) {
    EXPECT_THROW(generate_road(0.05, 0.1, RoughnessClass::A, 1), Error);
    EXPECT_THROW(generate_road(10, 0.0, RoughnessClass::A, 1), Error);
}

TEST(Identification, NoiselessRecoversParameters) {
    const QuarterCarParams p;
    const auto road = generate_road(1000, 0.05, RoughnessClass::C, 7);
    const auto sim = simulate_run(road, p, [](double t) { return 10.0 + std::sin(t); }, 60.0, {}, 3);
    const auto id = identify_parameters(sim.stream, road, p.wheel_mass);
    EXPECT_NEAR(id.spring_rate, p.spring_rate, 1e-3 * p.spring_rate);
    EXPECT_NEAR(id.damping, p.damping, 1e-3 * p.damping);
    EXPECT_NEAR(id.tire_rate, p.tire_rate, 1e-3 * p.tire_rate);
}

TEST(Identification, FlatRoadIsRankDeficient) {
    const auto sim = simulate_run(flat_road(700), {}, [](double) { return 10.0; }, 60.0, {}, 3);
    try {
        identify_parameters(sim.stream, flat_road(700), 50.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::rank_deficient);
    }
}

TEST(Identification, NoisyStreamWithinFivePercent) {
    const QuarterCarParams p;
    const auto road = generate_road(1000, 0.05, RoughnessClass::C, 8);
    SensorNoise n;
    n.wheel_acceleration = 0.1;
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto sim = simulate_run(road, p, [](double t) { return 10.0 + std::sin(t); }, 60.0, n, seed);
        const auto id = identify_parameters(sim.stream, road, p.wheel_mass);
        EXPECT_NEAR(id.spring_rate, p.spring_rate, 0.05 * p.spring_rate);
        EXPECT_NEAR(id.damping, p.damping, 0.05 * p.damping);
        EXPECT_NEAR(id.tire_rate, p.tire_rate, 0.05 * p.tire_rate);
    }
}

TEST(SensorStreamText, RoundTripsAtNineDigits) {
    const auto road = generate_road(200, 0.05, RoughnessClass::C, 5);
    const auto sim = simulate_run(road, {}, [](double) { return 10.0; }, 5.0, {0.05, 0, 0, 0, 0}, 1);
    const auto text = format_sensor_stream(sim.stream);
    EXPECT_EQ(text.substr(0, text.find('\n')), "t,accel,sd,sv,f,v");
    const auto back = parse_sensor_stream(text);
    ASSERT_EQ(back.size(), sim.stream.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_NEAR(back.records[i].wheel_acceleration, sim.stream.records[i].wheel_acceleration,
                    1e-8 * std::abs(sim.stream.records[i].wheel_acceleration) + 1e-300);
    }
    EXPECT_EQ(format_sensor_stream(back), text);
}

TEST(SensorStream, NonUniformSamplingIsDetected) {
    SensorStream s;
    s.records = {{0.0, 0, 0, 0, 0, 1}, {0.01, 0, 0, 0, 0, 1}, {0.025, 0, 0, 0, 0, 1}};
    try {
        s.sample_period();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::non_uniform);
    }
}

TEST(RoadText, RoundTrip) {
    const auto road = generate_road(20, 0.05, RoughnessClass::B, 2);
    const auto back = parse_road(format_road(road));
    EXPECT_EQ(back.heights, road.heights);
    EXPECT_DOUBLE_EQ(back.spacing, road.spacing);
}
