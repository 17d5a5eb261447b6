#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tbl/error.hpp"

namespace tbl {

struct GpsPoint {
    double latitude = 0.0;   // degrees
    double longitude = 0.0;  // degrees
    double noise_std = 0.0;  // m, informational for synthetic points

    void validate() const {
        require(std::isfinite(latitude) && std::isfinite(longitude) && std::abs(latitude) <= 90.0 &&
                    std::abs(longitude) <= 180.0,
                ErrorKind::precondition, "GPS point outside the valid latitude/longitude range");
    }
};

/// One GPS fix tagged with the odometer distance at which it was taken.
struct GpsFix {
    double distance = 0.0;  // m
    GpsPoint point;
};

using GpsTrace = std::vector<GpsFix>;

struct PlanarPoint {
    double x = 0.0;  // east, m
    double y = 0.0;  // north, m
};

/// Equirectangular projection about a reference point.
class LocalProjection {
public:
    static constexpr double earth_radius = 6371008.8;  // m

    LocalProjection() = default;
    LocalProjection(double lat0, double lon0)
        : lat0_(lat0), lon0_(lon0), cos_lat0_(std::cos(lat0 * std::numbers::pi / 180.0)) {}

    PlanarPoint to_plane(double lat, double lon) const {
        constexpr double deg = std::numbers::pi / 180.0;
        return {earth_radius * (lon - lon0_) * deg * cos_lat0_, earth_radius * (lat - lat0_) * deg};
    }
    PlanarPoint to_plane(const GpsPoint& p) const { return to_plane(p.latitude, p.longitude); }

    GpsPoint to_geo(const PlanarPoint& p) const {
        constexpr double deg = std::numbers::pi / 180.0;
        return {lat0_ + p.y / earth_radius / deg, lon0_ + p.x / (earth_radius * cos_lat0_) / deg, 0.0};
    }

    double lat0() const { return lat0_; }
    double lon0() const { return lon0_; }

private:
    double lat0_ = 0.0;
    double lon0_ = 0.0;
    double cos_lat0_ = 1.0;
};

struct SegmentProjection {
    double offset = 0.0;    // along the segment from its start, clamped to [0, length], m
    double distance = 0.0;  // from the point to the segment, m
};

/// Orthogonal projection of p onto the segment a-b.
inline SegmentProjection project_onto_segment(const PlanarPoint& p, const PlanarPoint& a, const PlanarPoint& b) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double u = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    const double qx = a.x + u * dx;
    const double qy = a.y + u * dy;
    return {u * std::sqrt(len2), std::hypot(p.x - qx, p.y - qy)};
}

/// Linear interpolation of the trace at an odometer distance.
inline GpsPoint interpolate_gps(const GpsTrace& trace, double distance) {
    require(!trace.empty(), ErrorKind::precondition, "GPS trace is empty");
    const double tol = 1e-6;
    require(distance >= trace.front().distance - tol && distance <= trace.back().distance + tol,
            ErrorKind::out_of_range, "GPS trace does not cover distance " + std::to_string(distance));
    if (trace.size() == 1) return trace.front().point;
    auto it = std::upper_bound(trace.begin(), trace.end(), distance,
                               [](double d, const GpsFix& f) { return d < f.distance; });
    if (it == trace.begin()) ++it;
    if (it == trace.end()) --it;
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double span = b.distance - a.distance;
    const double u = span > 0.0 ? (distance - a.distance) / span : 0.0;
    return {a.point.latitude + u * (b.point.latitude - a.point.latitude),
            a.point.longitude + u * (b.point.longitude - a.point.longitude),
            0.5 * (a.point.noise_std + b.point.noise_std)};
}

}  // namespace tbl
