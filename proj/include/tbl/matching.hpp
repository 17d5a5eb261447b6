#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "tbl/error.hpp"
#include "tbl/fft.hpp"

namespace tbl {

// For jointly stationary x[n], y[n] the cross-correlation sequence is
// R_xy[m] = E{x[n+m] y*[n]}. Only its finite, unnormalized estimate is
// computed here, and only over lags where the snippet lies entirely inside
// the stream: R[m] = sum_n snippet[n] * stream[n + m], m = 0 .. N - M.

/// Direct O(N M) evaluation.
inline std::vector<double> raw_cross_correlation(std::span<const double> snippet, std::span<const double> stream) {
    require(!snippet.empty() && !stream.empty(), ErrorKind::precondition, "cross-correlation inputs must be non-empty");
    require(snippet.size() <= stream.size(), ErrorKind::precondition, "snippet longer than stream");
    const std::size_t lags = stream.size() - snippet.size() + 1;
    std::vector<double> out(lags);
    for (std::size_t m = 0; m < lags; ++m) {
        double acc = 0.0;
        for (std::size_t n = 0; n < snippet.size(); ++n) acc += snippet[n] * stream[n + m];
        out[m] = acc;
    }
    return out;
}

/// Same quantity through a real FFT: the stream convolved with the
/// time-reversed snippet.
inline std::vector<double> fast_cross_correlation(std::span<const double> snippet, std::span<const double> stream) {
    require(!snippet.empty() && !stream.empty(), ErrorKind::precondition, "cross-correlation inputs must be non-empty");
    require(snippet.size() <= stream.size(), ErrorKind::precondition, "snippet longer than stream");
    const std::size_t m = snippet.size();
    const std::size_t n = stream.size();
    // Circular wrap only pollutes indices below m - 1, which are discarded.
    const std::size_t size = fft::good_size(n);
    auto& plan = fft::workspace_for(size);
    const std::size_t bins = plan.bins();

    auto a = fft::alloc_real(size);
    auto b = fft::alloc_real(size);
    auto fa = fft::alloc_complex(bins);
    auto fb = fft::alloc_complex(bins);
    std::fill_n(a.get(), size, 0.0);
    std::fill_n(b.get(), size, 0.0);
    std::copy(stream.begin(), stream.end(), a.get());
    for (std::size_t i = 0; i < m; ++i) b[i] = snippet[m - 1 - i];

    plan.forward(a.get(), fa.get());
    plan.forward(b.get(), fb.get());
    for (std::size_t k = 0; k < bins; ++k) {
        const double re = fa[k][0] * fb[k][0] - fa[k][1] * fb[k][1];
        const double im = fa[k][0] * fb[k][1] + fa[k][1] * fb[k][0];
        fa[k][0] = re;
        fa[k][1] = im;
    }
    plan.inverse(fa.get(), a.get());

    const double scale = 1.0 / double(size);
    std::vector<double> out(n - m + 1);
    for (std::size_t lag = 0; lag < out.size(); ++lag) out[lag] = a[lag + m - 1] * scale;
    return out;
}

struct CorrelationResult {
    std::size_t best_lag = 0;
    double best_value = 0.0;
    /// Largest value farther than the exclusion half-width from best_lag.
    std::optional<double> second_best_value;
    /// max(second_best, 0) / best_value; empty when undefined (too few lags
    /// or a non-positive peak).
    std::optional<double> ratio;
    std::vector<double> sequence;  // kept only when requested

    bool clear(double threshold) const { return ratio.has_value() && *ratio < threshold; }
};

/// Argmax with ties toward the smallest lag, plus the strongest value
/// outside [best_lag - h, best_lag + h].
inline CorrelationResult find_peak_with_ratio(std::span<const double> sequence, std::size_t exclusion_halfwidth) {
    require(!sequence.empty(), ErrorKind::precondition, "correlation sequence is empty");
    require(exclusion_halfwidth >= 1, ErrorKind::precondition, "exclusion half-width must be >= 1");
    CorrelationResult res;
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        if (i == 0 || sequence[i] > res.best_value) {
            res.best_value = sequence[i];
            res.best_lag = i;
        }
    }
    if (sequence.size() < 2 * exclusion_halfwidth + 1) return res;
    std::optional<double> second;
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        const std::size_t dist = i > res.best_lag ? i - res.best_lag : res.best_lag - i;
        if (dist > exclusion_halfwidth && (!second || sequence[i] > *second)) second = sequence[i];
    }
    res.second_best_value = second;
    if (second && res.best_value > 0.0) res.ratio = std::max(*second, 0.0) / res.best_value;
    return res;
}

struct MatchSettings {
    std::size_t exclusion_halfwidth = 10;  // cells
    double ratio_threshold = 0.6;
    bool keep_sequence = false;
};

/// Locate `snippet` in `stream`: subtract the snippet mean, correlate, find
/// the peak.
inline CorrelationResult match_snippet(std::span<const double> snippet, std::span<const double> stream,
                                       const MatchSettings& settings = {}) {
    std::vector<double> centered(snippet.begin(), snippet.end());
    const double mean = centered.empty() ? 0.0
                                         : std::accumulate(centered.begin(), centered.end(), 0.0) /
                                               double(centered.size());
    for (double& v : centered) v -= mean;
    auto seq = fast_cross_correlation(centered, stream);
    auto res = find_peak_with_ratio(seq, settings.exclusion_halfwidth);
    if (settings.keep_sequence) res.sequence = std::move(seq);
    return res;
}

}  // namespace tbl
