#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "tbl/error.hpp"

namespace tbl {

struct ErrorSummary {
    std::size_t samples = 0;
    double below_0_1 = 0.0;  // fraction of samples with |error| < 0.1 m
    double below_0_5 = 0.0;
    double below_1_0 = 0.0;
    std::vector<double> sorted_errors;  // |error|, ascending; the empirical CDF

    double fraction_below(double threshold) const {
        if (sorted_errors.empty()) return 0.0;
        const auto it = std::lower_bound(sorted_errors.begin(), sorted_errors.end(), threshold);
        return double(it - sorted_errors.begin()) / double(sorted_errors.size());
    }
    double max_error() const { return sorted_errors.empty() ? 0.0 : sorted_errors.back(); }
};

/// Wrapped signed difference a - b on a loop of length `period`.
inline double wrapped_difference(double a, double b, std::optional<double> period) {
    const double d = a - b;
    const double p = period.value_or(0.0);
    if (!(p > 0.0)) return d;
    return d - p * std::round(d / p);
}

/// Longitudinal errors sampled every `stride` meters of travel, starting at
/// the first record.
inline ErrorSummary evaluate_errors(std::span<const double> travel, std::span<const double> estimate,
                                    std::span<const double> truth, double stride = 10.0,
                                    std::optional<double> period = std::nullopt) {
    require(travel.size() == estimate.size() && travel.size() == truth.size(), ErrorKind::precondition,
            "estimate and ground truth extents differ");
    require(stride > 0.0, ErrorKind::precondition, "evaluation stride must be positive");
    ErrorSummary out;
    if (travel.empty()) return out;
    double next = travel.front();
    for (std::size_t i = 0; i < travel.size(); ++i) {
        if (travel[i] + 1e-9 < next) continue;
        out.sorted_errors.push_back(std::abs(wrapped_difference(estimate[i], truth[i], period)));
        next += stride * std::floor((travel[i] - next) / stride + 1e-9) + stride;
    }
    std::sort(out.sorted_errors.begin(), out.sorted_errors.end());
    out.samples = out.sorted_errors.size();
    out.below_0_1 = out.fraction_below(0.1);
    out.below_0_5 = out.fraction_below(0.5);
    out.below_1_0 = out.fraction_below(1.0);
    return out;
}

}  // namespace tbl
