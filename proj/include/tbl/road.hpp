#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "tbl/error.hpp"
#include "tbl/fft.hpp"

namespace tbl {

/// Road height sampled along distance. Heights between samples are linearly
/// interpolated, so the represented road is piecewise linear.
struct RoadInput {
    double start = 0.0;    // distance of heights[0], meters
    double spacing = 0.1;  // meters
    std::vector<double> heights;

    std::size_t size() const { return heights.size(); }
    double end() const { return heights.empty() ? start : start + spacing * double(heights.size() - 1); }

    double height_at(double s) const {
        const double u = (s - start) / spacing;
        // Tolerate round-off at the last sample.
        if (heights.size() < 2 || u < -1e-9 || u > double(heights.size() - 1) + 1e-9) {
            throw Error(ErrorKind::out_of_range,
                        "road does not cover distance " + std::to_string(s) + " m (covers [" +
                            std::to_string(start) + ", " + std::to_string(end()) + "])");
        }
        const auto last = heights.size() - 1;
        const auto i = std::min<std::size_t>(static_cast<std::size_t>(std::max(0.0, std::floor(u))), last - 1);
        const double frac = u - double(i);
        return heights[i] + (heights[i + 1] - heights[i]) * frac;
    }

    void validate() const {
        require(spacing > 0.0 && std::isfinite(spacing), ErrorKind::precondition, "road spacing must be positive");
        for (double h : heights) {
            require(std::isfinite(h), ErrorKind::precondition, "road heights must be finite");
        }
    }
};

/// Roughness classes with an inverse-square displacement PSD,
/// Gd(n) = Gd(n0) * (n / n0)^-2 with n0 = 0.1 cycles/m (ISO 8608 style).
enum class RoughnessClass { A, B, C, D };

/// Geometric-mean Gd(n0) for each class, m^3.
inline double reference_psd(RoughnessClass c) {
    switch (c) {
        case RoughnessClass::A: return 16e-6;
        case RoughnessClass::B: return 64e-6;
        case RoughnessClass::C: return 256e-6;
        case RoughnessClass::D: return 1024e-6;
    }
    return 0.0;
}

inline RoughnessClass parse_roughness(const std::string& s) {
    if (s == "A") return RoughnessClass::A;
    if (s == "B") return RoughnessClass::B;
    if (s == "C") return RoughnessClass::C;
    if (s == "D") return RoughnessClass::D;
    throw Error(ErrorKind::config, "unknown roughness class '" + s + "'");
}

inline std::string to_string(RoughnessClass c) {
    return std::string(1, char('A' + static_cast<int>(c)));
}

/// Spatial frequency band (cycles/m) that receives energy. Wavelengths
/// shorter than the upper limit are enveloped by the tire contact patch in
/// practice; the lower limit bounds long-wave grade content.
struct RoadBand {
    double min_frequency = 0.01;
    double max_frequency = 2.0;
};

/// Zero-mean road synthesized as a sum of harmonics of 1/length with
/// uniformly random phases. The result is periodic in `length`, which makes
/// it usable for closed loops.
inline RoadInput generate_road(double length, double spacing, RoughnessClass roughness, std::uint64_t seed,
                               RoadBand band = {}) {
    require(spacing > 0.0 && length > spacing, ErrorKind::precondition, "generate_road requires length > spacing > 0");
    const auto n = static_cast<std::size_t>(std::llround(length / spacing));
    const double span = double(n) * spacing;
    const double dn = 1.0 / span;
    const double nyquist = 0.5 / spacing;
    const double g0 = reference_psd(roughness);
    constexpr double n0 = 0.1;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);

    const std::size_t bins = n / 2 + 1;
    auto spectrum_buf = fft::alloc_complex(bins);
    auto out_buf = fft::alloc_real(n);
    fftw_complex* spectrum = spectrum_buf.get();
    double* out = out_buf.get();

    for (std::size_t k = 0; k < bins; ++k) {
        // Draw a phase for every bin so the band limits do not shift the
        // random sequence seen by the bins inside the band.
        const double phase = phase_dist(rng);
        const double freq = double(k) * dn;
        double amplitude = 0.0;
        if (k > 0 && freq >= band.min_frequency && freq <= band.max_frequency && freq < nyquist) {
            const double gd = g0 * (n0 / freq) * (n0 / freq);
            amplitude = std::sqrt(2.0 * gd * dn);
        }
        spectrum[k][0] = 0.5 * amplitude * std::cos(phase);
        spectrum[k][1] = 0.5 * amplitude * std::sin(phase);
    }

    fft::workspace_for(n).inverse(spectrum, out);

    RoadInput road;
    road.start = 0.0;
    road.spacing = spacing;
    road.heights.assign(out, out + n);
    return road;
}

/// Repeat a periodic road so that it covers [from, to]. The period is
/// heights.size() * spacing.
inline RoadInput tile_periodic_road(const RoadInput& base, double from, double to) {
    require(!base.heights.empty() && to > from, ErrorKind::precondition, "tile_periodic_road: empty input or range");
    const auto n = static_cast<long long>(base.heights.size());
    const long long first = static_cast<long long>(std::floor((from - base.start) / base.spacing));
    const long long last = static_cast<long long>(std::ceil((to - base.start) / base.spacing));
    RoadInput road;
    road.spacing = base.spacing;
    road.start = base.start + double(first) * base.spacing;
    road.heights.reserve(static_cast<std::size_t>(last - first + 1));
    for (long long i = first; i <= last; ++i) {
        road.heights.push_back(base.heights[static_cast<std::size_t>(((i % n) + n) % n)]);
    }
    return road;
}

inline double rms(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return v.empty() ? 0.0 : std::sqrt(s / double(v.size()));
}

}  // namespace tbl
