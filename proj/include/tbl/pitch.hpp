#pragma once

#include <algorithm>
#include <cmath>

#include "tbl/error.hpp"
#include "tbl/resample.hpp"

namespace tbl {

struct VehicleGeometry {
    double wheelbase = 2.968;  // m

    void validate() const { require(wheelbase > 0.0, ErrorKind::precondition, "wheelbase must be positive"); }
};

/// Road profiles of the four wheels, each indexed by the distance travelled
/// by the vehicle (not by road location): the rear wheels see the road
/// point that the front wheels saw one wheelbase earlier.
struct CornerProfiles {
    DistanceProfile front_left;
    DistanceProfile front_right;
    DistanceProfile rear_left;
    DistanceProfile rear_right;
};

namespace detail {
inline bool same_grid(const DistanceProfile& a, const DistanceProfile& b) {
    return std::abs(a.spacing - b.spacing) <= 1e-12 * a.spacing &&
           std::abs(a.start_offset - b.start_offset) <= 1e-6 * a.spacing;
}
}  // namespace detail

/// Trim the four profiles to their common extent. Start offsets must lie on
/// a common grid.
inline CornerProfiles align_corners(CornerProfiles c) {
    const double spacing = c.front_left.spacing;
    DistanceProfile* all[] = {&c.front_left, &c.front_right, &c.rear_left, &c.rear_right};
    double first = -1e300;
    double last = 1e300;
    for (auto* p : all) {
        require(std::abs(p->spacing - spacing) <= 1e-12 * spacing && !p->empty(), ErrorKind::misaligned,
                "corner profiles must share spacing and be non-empty");
        first = std::max(first, p->start_offset);
        last = std::min(last, p->last_position());
    }
    require(last >= first, ErrorKind::misaligned, "corner profiles do not overlap");
    const double length = std::floor((last - first) / spacing + 1e-6) * spacing + spacing;
    for (auto* p : all) {
        *p = crop(*p, first, length);
    }
    return c;
}

/// p(s) = atan((r_fl + r_fr - r_rl - r_rr) / (2 l_b)), element-wise.
inline DistanceProfile compute_pitch_profile(const CornerProfiles& c, const VehicleGeometry& geometry) {
    geometry.validate();
    const auto& fl = c.front_left;
    for (const auto* p : {&c.front_right, &c.rear_left, &c.rear_right}) {
        require(detail::same_grid(fl, *p), ErrorKind::misaligned, "corner profiles differ in spacing or offset");
        require(p->size() == fl.size(), ErrorKind::misaligned, "corner profiles differ in length");
    }
    DistanceProfile out;
    out.start_offset = fl.start_offset;
    out.spacing = fl.spacing;
    out.units = ProfileUnits::radians;
    out.values.resize(fl.size());
    const double denom = 2.0 * geometry.wheelbase;
    for (std::size_t i = 0; i < fl.size(); ++i) {
        out.values[i] =
            std::atan(((fl.values[i] + c.front_right.values[i]) - (c.rear_left.values[i] + c.rear_right.values[i])) / denom);
    }
    return out;
}

/// Pitch implied by a single road height profile indexed by road location:
/// front axle at x, rear axle at x - l_b. Equivalent to the four-corner
/// formula with h the mean of the left and right tracks. The value one
/// wheelbase back is linearly interpolated.
inline DistanceProfile pitch_from_heights(const DistanceProfile& heights, const VehicleGeometry& geometry) {
    geometry.validate();
    const double shift = geometry.wheelbase / heights.spacing;
    const auto first = static_cast<std::size_t>(std::ceil(shift - 1e-9));
    require(heights.size() > first + 1, ErrorKind::precondition, "height profile shorter than the wheelbase");
    DistanceProfile out;
    out.spacing = heights.spacing;
    out.units = ProfileUnits::radians;
    out.start_offset = heights.position(first);
    out.values.resize(heights.size() - first);
    // Rear sample sits at i - first + frac; the same weights at every index.
    const double frac = std::max(0.0, double(first) - shift);
    for (std::size_t i = first; i < heights.size(); ++i) {
        const auto j = std::min(i - first, heights.size() - 2);
        const double rear = heights.values[j] + (heights.values[j + 1] - heights.values[j]) * frac;
        out.values[i - first] = std::atan((heights.values[i] - rear) / geometry.wheelbase);
    }
    return out;
}

/// Road height profile from the four corners, indexed by the road location
/// under the front axle: the rear pair is shifted forward by one wheelbase
/// (linear interpolation) and averaged with the front pair. The last
/// wheelbase of travel has no rear observation yet and is dropped.
inline DistanceProfile axle_height_profile(const CornerProfiles& c, const VehicleGeometry& geometry) {
    geometry.validate();
    const auto& fl = c.front_left;
    for (const auto* p : {&c.front_right, &c.rear_left, &c.rear_right}) {
        require(detail::same_grid(fl, *p) && p->size() == fl.size(), ErrorKind::misaligned,
                "corner profiles are not aligned");
    }
    const double shift = geometry.wheelbase / fl.spacing;
    const auto reach = static_cast<std::size_t>(std::ceil(shift - 1e-9));
    require(fl.size() > reach + 1, ErrorKind::precondition, "corner profiles shorter than the wheelbase");
    DistanceProfile out;
    out.start_offset = fl.start_offset;
    out.spacing = fl.spacing;
    out.units = ProfileUnits::meters;
    const std::size_t n = fl.size() - reach;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = double(i) + shift;
        const auto j = std::min(static_cast<std::size_t>(std::floor(u)), fl.size() - 2);
        const double frac = u - double(j);
        auto at = [&](const DistanceProfile& p) { return p.values[j] + (p.values[j + 1] - p.values[j]) * frac; };
        const double front = 0.5 * (fl.values[i] + c.front_right.values[i]);
        const double rear = 0.5 * (at(c.rear_left) + at(c.rear_right));
        out.values[i] = 0.5 * (front + rear);
    }
    return out;
}

/// Central differences with respect to distance. Order 2 applies the first
/// derivative twice; `order` cells are dropped at each end.
inline DistanceProfile differentiate_profile(const DistanceProfile& profile, int order) {
    require(order == 1 || order == 2, ErrorKind::precondition, "derivative order must be 1 or 2");
    require(profile.size() > static_cast<std::size_t>(2 * order), ErrorKind::precondition,
            "profile too short to differentiate");
    DistanceProfile cur = profile;
    for (int k = 0; k < order; ++k) {
        DistanceProfile next;
        next.spacing = cur.spacing;
        next.start_offset = cur.start_offset + cur.spacing;
        next.values.resize(cur.size() - 2);
        const double inv = 1.0 / (2.0 * cur.spacing);
        for (std::size_t i = 1; i + 1 < cur.size(); ++i) {
            next.values[i - 1] = (cur.values[i + 1] - cur.values[i - 1]) * inv;
        }
        switch (cur.units) {
            case ProfileUnits::radians: next.units = ProfileUnits::radians_per_meter; break;
            case ProfileUnits::radians_per_meter: next.units = ProfileUnits::radians_per_meter2; break;
            default: next.units = cur.units; break;
        }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace tbl
