// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "test_support.hpp"
#include "tbl/identification.hpp"
#include "tbl/map_io.hpp"
#include "tbl/matching.hpp"
#include "tbl/quarter_car.hpp"
#include "tbl/reconstruction.hpp"
#include "tbl/resample.hpp"
#include "tbl/road.hpp"
#include "tbl/scenario.hpp"

using namespace tbl;
namespace ts = testing_support;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double wrapped(double d, double period) { return d - period * std::round(d / period); }

// Direct correlation with four independent accumulators.
std::vector<double> direct_correlation(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t m = x.size();
    std::vector<double> out(y.size() - m + 1);
    for (std::size_t lag = 0; lag < out.size(); ++lag) {
        const double* w = y.data() + lag;
        double a0 = 0, a1 = 0, a2 = 0, a3 = 0;
        std::size_t n = 0;
        for (; n + 4 <= m; n += 4) {
            a0 += x[n] * w[n];
            a1 += x[n + 1] * w[n + 1];
            a2 += x[n + 2] * w[n + 2];
            a3 += x[n + 3] * w[n + 3];
        }
        for (; n < m; ++n) a0 += x[n] * w[n];
        out[lag] = (a0 + a1) + (a2 + a3);
    }
    return out;
}

Outcome oracle_equivalence() {
    Outcome o;
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> log_len(std::log(10.0), std::log(2000.0));
    std::uniform_int_distribution<std::size_t> stream_len(2000, 50000);
    double worst = 0.0, fast_seconds = 0.0;
    std::size_t largest = 0;
    const auto t0 = Clock::now();
    for (int k = 0; k < 1000; ++k) {
        const auto m = static_cast<std::size_t>(std::llround(std::exp(log_len(rng))));
        const std::size_t n = std::max(m, stream_len(rng));
        largest = std::max(largest, n);
        const auto x = ts::random_normal(m, rng());
        const auto y = ts::random_normal(n, rng());
        const auto t1 = Clock::now();
        const auto fast = fast_cross_correlation(x, y);
        fast_seconds += seconds_since(t1);
        const auto ref = direct_correlation(x, y);
        // Relative to the Cauchy-Schwarz bound of each lag.
        double xx = 0.0;
        for (double v : x) xx += v * v;
        std::vector<long double> prefix(n + 1, 0.0L);
        for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + (long double)y[i] * y[i];
        for (std::size_t lag = 0; lag < ref.size(); ++lag) {
            const double yy = double(prefix[lag + m] - prefix[lag]);
            const double scale = std::sqrt(xx * yy);
            worst = std::max(worst, std::abs(fast[lag] - ref[lag]) / scale);
        }
    }
    const double total = seconds_since(t0);
    o.detail << "1000 pairs, snippets 10..2000, streams up to " << largest << ", worst relative error " << worst
             << ", fast path " << fast_seconds << " s, total " << total << " s";
    o.check(worst <= 1e-9, "relative error above 1e-9");
    o.check(total < 60.0, "runtime over 1 min");
    return o;
}

Outcome reconstruction_fidelity() {
    Outcome o;
    SimulationOptions opt;
    opt.output_decimation = 2;
    const auto road = generate_road(2600, 0.05, RoughnessClass::C, 15);
    const auto sim = simulate_run(road, {}, [](double) { return 10.0; }, 255.0, {}, 1, opt);
    const auto prof = estimate_road_profile(sim.stream, {});
    const double spacing = 0.1;
    const auto dist = convert_time_to_distance(prof, spacing);
    const auto skip = static_cast<std::size_t>(10.0 * prof.transient_end / spacing);
    std::vector<double> est, truth;
    for (std::size_t i = skip; i < dist.size(); ++i) {
        est.push_back(dist.values[i]);
        truth.push_back(road.height_at(dist.position(i)));
    }
    // 250 m segments: bin 5 is a 50 m wavelength, bin 250 is 1 m.
    const auto w = ts::welch(est, truth, 2500, 5, 250, spacing);
    double min_coherence = 1.0;
    for (std::size_t i = 0; i < w.frequency.size(); ++i) min_coherence = std::min(min_coherence, w.coherence(i));

    opt.output_decimation = 1;
    const auto exact = simulate_run(generate_road(400, 0.05, RoughnessClass::C, 12), {},
                                    [](double) { return 10.0; }, 30.0, {}, 1, opt);
    const auto inverse = estimate_road_profile(exact.stream, {}, exact.truth.wheel_position);
    double worst = 0.0;
    for (std::size_t i = 0; i < inverse.size(); ++i) {
        worst = std::max(worst, std::abs(inverse.records[i].value - exact.truth.road_height[i]));
    }
    o.detail << "min coherence " << min_coherence << " over 1..50 m wavelengths, algebraic inverse max error "
             << worst << " m";
    o.check(min_coherence > 0.95, "coherence");
    o.check(worst < 1e-9, "inverse error");
    return o;
}

Outcome resampling_exactness() {
    Outcome o;
    double worst = 0.0;
    bool idle_identical = true;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> speed(0.2, 30.0), dt(0.005, 0.05);
        std::vector<double> t{0.0}, v{speed(rng)}, d{0.0};
        for (int i = 1; i < 500; ++i) {
            t.push_back(t.back() + dt(rng));
            v.push_back(speed(rng));
            d.push_back(d.back() + 0.5 * (v[i] + v[i - 1]) * (t[i] - t[i - 1]));
        }
        std::vector<double> r;
        for (double x : d) r.push_back(-0.4 + 0.0173 * x);
        const auto out = resample_series(t, v, r, 0.1);
        for (std::size_t k = 0; k < out.size(); ++k) {
            worst = std::max(worst, std::abs(out.values[k] - (-0.4 + 0.0173 * 0.1 * double(k))));
        }

        std::bernoulli_distribution insert(0.3);
        std::vector<double> ti, vi, ri;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (i > 0 && insert(rng)) {
                ti.push_back(0.5 * (t[i - 1] + t[i]));
                vi.push_back(0.0);
                ri.push_back(1e3);
            }
            ti.push_back(t[i]);
            vi.push_back(v[i]);
            ri.push_back(r[i]);
        }
        idle_identical = idle_identical && resample_series(ti, vi, ri, 0.1).values == out.values;
    }
    o.detail << "50 random speed profiles, affine max error " << worst << ", idle records "
             << (idle_identical ? "change nothing" : "CHANGE the output");
    o.check(worst <= 1e-12, "affine error");
    o.check(idle_identical, "idle records");
    return o;
}

Outcome map_convergence() {
    Outcome o;
    const auto truth = generate_road(4200.0, 0.1, RoughnessClass::C, 3).heights;
    TerrainMap map(make_rectangular_loop(48.137, 11.575, 1300.0, 800.0, 4), 0.1);
    const double sigma = 0.002;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> gps_error(-3.0, 3.0);
    double single = 0.0;
    std::size_t matched = 0, misplaced = 0, attempted = 0;
    for (int pass = 0; pass < 9; ++pass) {
        const auto noise = ts::random_normal(truth.size(), 100 + pass, sigma);
        for (long long first = 0; first < map.total_cells(); first += 1000) {
            Stretch s;
            s.profile.values.resize(1000);
            for (std::size_t i = 0; i < 1000; ++i) s.profile.values[i] = truth[first + i] + noise[first + i];
            // The first pass defines the registration; later ones rely on correlation.
            const double e = pass == 0 ? 0.0 : gps_error(rng);
            const double start = double(first) * 0.1;
            s.start_gps = map.point_at(start + e);
            s.center_gps = map.point_at(start + 49.95 + e);
            s.end_gps = map.point_at(start + 99.9 + e);
            const auto m = match_stretch(s, map, {});
            if (pass > 0) {
                ++attempted;
                if (m.status == StretchMatchStatus::matched) ++(m.master_start_cell == first ? matched : misplaced);
            }
            if (m.status != StretchMatchStatus::rejected) merge_stretch(s, m, map);
        }
        if (pass == 0) {
            std::vector<double> err;
            for (long long i = 0; i < map.total_cells(); ++i) err.push_back(map.cell(i)->value - truth[i]);
            single = rms(err);
        }
    }
    std::vector<double> err;
    for (long long i = 0; i < map.total_cells(); ++i) err.push_back(map.cell(i)->value - truth[i]);
    const double ratio = rms(err) / single;

    // Bookkeeping: k merges into an empty cell give the mean and weight k.
    TerrainMap empty(make_rectangular_loop(48.137, 11.575, 1300.0, 800.0, 4), 0.1);
    const auto values = ts::random_normal(32, 5);
    Stretch one;
    one.profile.values = {0.0};
    StretchMatch at;
    at.status = StretchMatchStatus::bootstrap;
    at.master_start_cell = 4321;
    at.cell_count = 1;
    long double sum = 0.0L;
    double mean_error = 0.0;
    bool weights_ok = true;
    for (std::size_t k = 0; k < values.size(); ++k) {
        one.profile.values[0] = values[k];
        merge_stretch(one, at, empty);
        sum += values[k];
        mean_error = std::max(mean_error, std::abs(empty.cell(4321)->value - double(sum / (k + 1))));
        weights_ok = weights_ok && empty.cell(4321)->weight == k + 1;
    }
    o.detail << "9 passes at 2 mm: master/single RMS " << ratio << " (single " << single << " m), " << matched << "/"
             << attempted << " later stretches matched in place, " << misplaced << " out of place, "
             << attempted - matched - misplaced << " rejected as ambiguous; running mean error " << mean_error
             << ", weights " << (weights_ok ? "exact" : "WRONG");
    o.check(ratio <= 0.45, "RMS ratio");
    o.check(misplaced == 0, "stretch alignment");
    o.check(mean_error < 1e-15 && weights_ok, "bookkeeping");
    return o;
}

// Shared by criteria 5 and 6: the reference scenario over 10 seeds.
struct SeedRun {
    double matched_fraction = 0.0;
    ErrorSummary errors;
    double seconds = 0.0;
};

const std::vector<SeedRun>& reference_runs() {
    static const std::vector<SeedRun> runs = [] {
        std::vector<SeedRun> out;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            ScenarioConfig c;
            c.seed = seed;
            const auto t0 = Clock::now();
            const auto r = run_scenario(c);
            out.push_back({r.live.matched_fraction(c.localizer.ratio_threshold), r.live.errors, seconds_since(t0)});
        }
        return out;
    }();
    return runs;
}

Outcome match_clarity() {
    Outcome o;
    double worst = 1.0, slowest = 0.0;
    o.detail << "matched with ratio < 0.6 per seed:";
    for (const auto& r : reference_runs()) {
        worst = std::min(worst, r.matched_fraction);
        slowest = std::max(slowest, r.seconds);
        o.detail << ' ' << r.matched_fraction;
    }
    o.detail << "; slowest seed " << slowest << " s";
    o.check(worst >= 0.95, "matched fraction");
    o.check(slowest < 300.0, "runtime per seed");
    return o;
}

Outcome error_cdf() {
    Outcome o;
    double below1 = 1.0, below05 = 1.0;
    for (const auto& r : reference_runs()) {
        below1 = std::min(below1, r.errors.below_1_0);
        below05 = std::min(below05, r.errors.below_0_5);
    }
    const auto c = ScenarioConfig{}.noiseless();
    const auto clean = run_scenario(c).live.errors;
    o.detail << "10 seeds, worst fraction(<1 m) " << below1 << ", worst fraction(<0.5 m) " << below05
             << "; noiseless: " << clean.samples << " samples, fraction(<=0.1 m) "
             << clean.fraction_below(c.map.spacing + 1e-12) << ", max " << clean.max_error() << " m";
    o.check(below1 >= 0.8, "fraction below 1 m");
    o.check(below05 >= 0.5, "fraction below 0.5 m");
    o.check(clean.max_error() <= c.map.spacing, "noiseless max error");
    return o;
}

Outcome dead_reckoning_recovery() {
    Outcome o;
    auto c = ScenarioConfig{}.noiseless();
    const double from = 2000.0, to = 2500.0;
    c.matching_disabled = {{from, to}};
    const auto r = run_scenario(c).live;
    const double period = 4200.0;
    double worst_delta = 0.0;
    std::size_t in_stripe = 0;
    bool statuses_ok = true;
    std::optional<double> recovery_error;
    double recovered_at = 0.0;
    for (std::size_t i = 1; i < r.log.size(); ++i) {
        const auto& e = r.log[i];
        if (e.travel >= from && e.travel < to) {
            ++in_stripe;
            statuses_ok = statuses_ok && e.status == LocalizationStatus::dead_reckoning;
            const double delta = (e.estimate - r.log[i - 1].estimate) - (e.travel - r.log[i - 1].travel);
            worst_delta = std::max(worst_delta, std::abs(delta));
        } else if (e.travel >= to && !recovery_error && e.status == LocalizationStatus::matched) {
            recovery_error = std::abs(wrapped(r.geographic[i] - r.truth[i], period));
            recovered_at = e.travel;
        }
    }
    o.detail << in_stripe << " updates dead-reckoned over [" << from << ", " << to << ") m, worst |delta - odometer "
             << "delta| " << worst_delta;
    if (recovery_error) {
        o.detail << ", first fix after the stripe at " << recovered_at << " m with error " << *recovery_error << " m";
    }
    o.check(in_stripe > 0 && statuses_ok, "stripe statuses");
    o.check(worst_delta <= 1e-9, "continuity");
    o.check(recovery_error && *recovery_error <= c.map.spacing, "recovery within one cell");
    o.check(recovery_error && recovered_at < to + 2.0 * c.localizer.update_stride, "immediate recovery");
    return o;
}

Outcome simulator_correctness() {
    Outcome o;
    const QuarterCarParams p;
    auto integrate = [&](double dt) {
        QuarterCarState x{0.02, 0.0, -0.01, 0.3};
        const auto steps = static_cast<int>(std::llround(1.0 / dt));
        for (int k = 0; k < steps; ++k) x = step_dynamics(x, p, 0.0, 0.0, dt);
        return x.wheel_position;
    };
    const double a = integrate(0.008), b = integrate(0.004), c = integrate(0.002);
    const double ratio = (a - b) / (b - c);

    QuarterCarState x;
    const double h = 0.05;
    for (int k = 0; k < 30000; ++k) x = step_dynamics(x, p, h, 0.0, 1e-3);
    const double tracking = std::max(std::abs(x.body_position - h), std::abs(x.wheel_position - h));

    const auto road = generate_road(1000, 0.05, RoughnessClass::C, 7);
    auto speed = [](double t) { return 10.0 + std::sin(t); };
    auto rel = [&](const IdentifiedParameters& id) {
        return std::max({std::abs(id.spring_rate / p.spring_rate - 1.0), std::abs(id.damping / p.damping - 1.0),
                         std::abs(id.tire_rate / p.tire_rate - 1.0)});
    };
    const double clean = rel(identify_parameters(simulate_run(road, p, speed, 60.0, {}, 3).stream, road, p.wheel_mass));
    SensorNoise n;
    n.wheel_acceleration = 0.1;
    double noisy = 0.0;
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        noisy = std::max(noisy, rel(identify_parameters(simulate_run(road, p, speed, 60.0, n, seed).stream, road,
                                                        p.wheel_mass)));
    }
    o.detail << "Richardson ratio " << ratio << ", step tracking error " << tracking
             << " m, identification error " << 100.0 * clean << "% noiseless, " << 100.0 * noisy
             << "% worst of 5 seeds at 0.1 m/s^2";
    o.check(ratio > 16.0 * 0.7 && ratio < 16.0 * 1.3, "RK4 order");
    o.check(tracking < 1e-6, "steady state");
    o.check(clean < 1e-3, "noiseless identification");
    o.check(noisy < 0.05, "noisy identification");
    return o;
}

Outcome persistence() {
    Outcome o;
    TerrainMap map(make_rectangular_loop(48.137, 11.575, 1300.0, 800.0, 4), 0.1);
    const auto heights = generate_road(4200.0, 0.1, RoughnessClass::C, 9).heights;
    std::mt19937_64 rng(3);
    for (long long i = 0; i < map.total_cells(); ++i) {
        *map.cell(i) = {heights[static_cast<std::size_t>(i)], static_cast<std::uint32_t>(rng() % 33)};
    }
    for (auto& s : map.segments()) s.anchor = ts::random_normal(1, rng())[0];

    const auto dir = std::filesystem::temp_directory_path() / ("tbl_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    save_map(map, dir / "map.tbl");
    const auto t0 = Clock::now();
    const auto back = load_map(dir / "map.tbl");
    const double load_seconds = seconds_since(t0);
    const auto bytes = serialize_map(map);
    const bool exact = back == map && serialize_map(back) == bytes;

    // Flip one bit past the header, or truncate; each must fail the checksum.
    std::size_t rejected = 0, trials = 0;
    std::uniform_int_distribution<std::size_t> where(12, bytes.size() - 1);
    for (int k = 0; k < 200; ++k, ++trials) {
        auto bad = bytes;
        if (k % 4 == 3) {
            bad.resize(bytes.size() - 1 - where(rng) % 1000);
        } else {
            bad[where(rng)] ^= static_cast<char>(1u << (rng() % 8));
        }
        try {
            deserialize_map(bad);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::checksum) ++rejected;
        }
    }
    std::filesystem::remove_all(dir);
    o.detail << map.total_cells() << "-cell map (" << bytes.size() << " bytes) round trip "
             << (exact ? "bit-exact" : "DIFFERS") << ", " << rejected << "/" << trials
             << " corruptions rejected by checksum, load " << load_seconds << " s";
    o.check(exact, "round trip");
    o.check(rejected == trials, "corruption");
    o.check(load_seconds < 1.0, "load time");
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"oracle equivalence", oracle_equivalence},
        {"reconstruction fidelity", reconstruction_fidelity},
        {"resampling exactness", resampling_exactness},
        {"map convergence", map_convergence},
        {"match clarity", match_clarity},
        {"error CDF", error_cdf},
        {"dead reckoning and recovery", dead_reckoning_recovery},
        {"simulator correctness", simulator_correctness},
        {"persistence", persistence},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "threw: " << e.what();
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s %zu %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                    o.detail.str().c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
