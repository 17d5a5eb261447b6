#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tbl/error.hpp"
#include "tbl/geo.hpp"
#include "tbl/matching.hpp"
#include "tbl/pitch.hpp"
#include "tbl/resample.hpp"

namespace tbl {

struct MapNode {
    std::int64_t id = 0;
    double latitude = 0.0;
    double longitude = 0.0;

    bool operator==(const MapNode&) const = default;
};

/// Straight section between two adjacent nodes.
struct MapSegment {
    std::int64_t id = 0;
    std::int64_t from = 0;
    std::int64_t to = 0;
    double length = 0.0;  // m

    bool operator==(const MapSegment&) const = default;
};

/// Node/segment geometry of one way. Segments are listed in travel order and
/// chain head to tail; `closed` joins the last segment back to the first.
struct GraphMap {
    std::vector<MapNode> nodes;
    std::vector<MapSegment> segments;
    bool closed = false;

    bool operator==(const GraphMap&) const = default;

    /// Projection about the node centroid.
    LocalProjection projection() const {
        require(!nodes.empty(), ErrorKind::precondition, "graph map has no nodes");
        double lat = 0.0, lon = 0.0;
        for (const auto& n : nodes) {
            lat += n.latitude;
            lon += n.longitude;
        }
        return LocalProjection(lat / double(nodes.size()), lon / double(nodes.size()));
    }

    const MapNode& node(std::int64_t id) const {
        for (const auto& n : nodes) {
            if (n.id == id) return n;
        }
        throw Error(ErrorKind::precondition, "unknown node id " + std::to_string(id));
    }

    void validate() const {
        require(!segments.empty(), ErrorKind::precondition, "graph map has no segments");
        std::set<std::int64_t> ids;
        for (const auto& n : nodes) {
            require(ids.insert(n.id).second, ErrorKind::precondition, "duplicate node id " + std::to_string(n.id));
            GpsPoint{n.latitude, n.longitude}.validate();
        }
        std::set<std::int64_t> seg_ids;
        const auto proj = projection();
        for (std::size_t i = 0; i < segments.size(); ++i) {
            const auto& s = segments[i];
            require(seg_ids.insert(s.id).second, ErrorKind::precondition, "duplicate segment id " + std::to_string(s.id));
            const auto a = proj.to_plane(node(s.from).latitude, node(s.from).longitude);
            const auto b = proj.to_plane(node(s.to).latitude, node(s.to).longitude);
            const double planar = std::hypot(b.x - a.x, b.y - a.y);
            require(s.length > 0.0 && std::abs(planar - s.length) <= 0.01 * s.length, ErrorKind::precondition,
                    "segment " + std::to_string(s.id) + " length disagrees with its node coordinates");
            if (i + 1 < segments.size()) {
                require(s.to == segments[i + 1].from, ErrorKind::precondition, "segments do not chain");
            }
        }
        if (closed) {
            require(segments.back().to == segments.front().from, ErrorKind::precondition, "closed way does not close");
        }
    }
};

/// Rectangular closed loop around (lat0, lon0) with `per_side` equal
/// segments on each side; node coordinates come from the inverse of the
/// local projection, so the node centroid is the center.
inline GraphMap make_rectangular_loop(double lat0, double lon0, double width, double height, int per_side) {
    require(width > 0 && height > 0 && per_side >= 1, ErrorKind::precondition, "invalid loop dimensions");
    const LocalProjection proj(lat0, lon0);
    std::vector<PlanarPoint> corners = {
        {-width / 2, -height / 2}, {width / 2, -height / 2}, {width / 2, height / 2}, {-width / 2, height / 2}};
    GraphMap g;
    g.closed = true;
    std::int64_t id = 1;
    for (int side = 0; side < 4; ++side) {
        const auto& a = corners[static_cast<std::size_t>(side)];
        const auto& b = corners[static_cast<std::size_t>((side + 1) % 4)];
        for (int k = 0; k < per_side; ++k) {
            const double u = double(k) / per_side;
            const auto geo = proj.to_geo({a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)});
            g.nodes.push_back({id++, geo.latitude, geo.longitude});
        }
    }
    const auto n = static_cast<std::int64_t>(g.nodes.size());
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& a = g.nodes[static_cast<std::size_t>(i)];
        const auto& b = g.nodes[static_cast<std::size_t>((i + 1) % n)];
        const auto pa = proj.to_plane(a.latitude, a.longitude);
        const auto pb = proj.to_plane(b.latitude, b.longitude);
        // Side lengths are exact multiples of the spacing used here.
        const double len = std::round(std::hypot(pb.x - pa.x, pb.y - pa.y) * 1e6) / 1e6;
        g.segments.push_back({i + 1, a.id, b.id, len});
    }
    return g;
}

struct MapCell {
    double value = 0.0;      // m
    std::uint32_t weight = 0;  // observation count; 0 means uninitialized

    bool operator==(const MapCell&) const = default;
};

struct SegmentProfile {
    std::vector<MapCell> cells;
    /// Longitudinal registration of the cells: the geographic route position
    /// of master position x on this segment is x + anchor.
    double anchor = 0.0;

    bool operator==(const SegmentProfile&) const = default;
};

struct GpsProjection {
    std::size_t segment_index = 0;
    std::int64_t segment_id = 0;
    double offset = 0.0;    // along the segment, m
    double distance = 0.0;  // lateral, m
};

/// Nearest-segment orthogonal projection; ties go to the lower segment id.
inline GpsProjection project_gps(const GpsPoint& point, const GraphMap& map, double max_distance = 100.0) {
    point.validate();
    const auto proj = map.projection();
    const auto p = proj.to_plane(point);
    std::optional<GpsProjection> best;
    for (std::size_t i = 0; i < map.segments.size(); ++i) {
        const auto& s = map.segments[i];
        const auto& na = map.node(s.from);
        const auto& nb = map.node(s.to);
        const auto sp = project_onto_segment(p, proj.to_plane(na.latitude, na.longitude),
                                             proj.to_plane(nb.latitude, nb.longitude));
        const bool better = !best || sp.distance < best->distance - 1e-9 ||
                            (std::abs(sp.distance - best->distance) <= 1e-9 && s.id < best->segment_id);
        if (better) best = GpsProjection{i, s.id, sp.offset, sp.distance};
    }
    if (!best || best->distance > max_distance) {
        throw Error(ErrorKind::no_match, "GPS point is farther than " + std::to_string(max_distance) +
                                             " m from every segment");
    }
    return *best;
}

/// Road geometry plus the master height profile: one cell every `spacing`
/// meters along each segment, stitched in segment order into a single route
/// coordinate ("master position").
class TerrainMap {
public:
    TerrainMap() = default;
    TerrainMap(GraphMap graph, double spacing) : graph_(std::move(graph)), spacing_(spacing) {
        require(spacing > 0.0, ErrorKind::precondition, "map spacing must be positive");
        graph_.validate();
        segments_.resize(graph_.segments.size());
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            const auto count = static_cast<std::size_t>(std::llround(graph_.segments[i].length / spacing_));
            segments_[i].cells.assign(std::max<std::size_t>(count, 1), MapCell{});
        }
        reindex();
    }

    const GraphMap& graph() const { return graph_; }
    double spacing() const { return spacing_; }
    bool closed() const { return graph_.closed; }
    const std::vector<SegmentProfile>& segments() const { return segments_; }
    std::vector<SegmentProfile>& segments() { return segments_; }

    long long total_cells() const { return total_; }
    double route_length() const { return double(total_) * spacing_; }
    long long segment_first_cell(std::size_t seg) const { return first_[seg]; }

    bool operator==(const TerrainMap& o) const {
        return graph_ == o.graph_ && spacing_ == o.spacing_ && segments_ == o.segments_;
    }

    /// Must be called after the cell arrays are replaced wholesale.
    void reindex() {
        first_.assign(segments_.size(), 0);
        total_ = 0;
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            first_[i] = total_;
            total_ += static_cast<long long>(segments_[i].cells.size());
        }
    }

    /// Wraps for closed loops; nullopt outside an open route.
    std::optional<long long> normalize(long long cell) const {
        if (total_ == 0) return std::nullopt;
        if (closed()) return ((cell % total_) + total_) % total_;
        if (cell < 0 || cell >= total_) return std::nullopt;
        return cell;
    }

    std::size_t segment_of_cell(long long normalized) const {
        auto it = std::upper_bound(first_.begin(), first_.end(), normalized);
        return static_cast<std::size_t>(std::distance(first_.begin(), it) - 1);
    }

    const MapCell* cell(long long index) const {
        const auto n = normalize(index);
        if (!n) return nullptr;
        const auto seg = segment_of_cell(*n);
        return &segments_[seg].cells[static_cast<std::size_t>(*n - first_[seg])];
    }
    MapCell* cell(long long index) { return const_cast<MapCell*>(std::as_const(*this).cell(index)); }

    std::size_t segment_at(double master_position) const {
        const auto n = normalize(static_cast<long long>(std::floor(master_position / spacing_)));
        if (!n) return master_position < 0 ? 0 : segments_.size() - 1;
        return segment_of_cell(*n);
    }

    double anchor_at(double master_position) const { return segments_[segment_at(master_position)].anchor; }

    /// Geographic route position of a projection (cell coordinates, no anchor).
    double route_position(const GpsProjection& p) const {
        const auto& seg = graph_.segments[p.segment_index];
        const double scale = double(segments_[p.segment_index].cells.size()) * spacing_ / seg.length;
        return double(first_[p.segment_index]) * spacing_ + p.offset * scale;
    }

    /// Master position that a GPS point refers to, anchor applied.
    double master_position(const GpsPoint& point) const {
        const auto p = project_gps(point, graph_);
        const double g = route_position(p);
        return g - segments_[p.segment_index].anchor;
    }

    double geographic_position(double master_position) const { return master_position + anchor_at(master_position); }

    /// Point on the road at a geographic route position.
    GpsPoint point_at(double route_position) const {
        double pos = route_position;
        if (closed()) pos = std::fmod(std::fmod(pos, this->route_length()) + this->route_length(), this->route_length());
        pos = std::clamp(pos, 0.0, this->route_length());
        std::size_t seg = segment_of_cell(std::min<long long>(static_cast<long long>(pos / spacing_), total_ - 1));
        const double local = (pos - double(first_[seg]) * spacing_) /
                             (double(segments_[seg].cells.size()) * spacing_) * graph_.segments[seg].length;
        const auto proj = graph_.projection();
        const auto& s = graph_.segments[seg];
        const auto a = proj.to_plane(graph_.node(s.from).latitude, graph_.node(s.from).longitude);
        const auto b = proj.to_plane(graph_.node(s.to).latitude, graph_.node(s.to).longitude);
        const double u = local / s.length;
        return proj.to_geo({a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)});
    }

    /// Heights of cells [first, first + count); uninitialized and out-of-route
    /// cells read as 0 and are reported in `initialized`.
    DistanceProfile heights(long long first, std::size_t count, std::vector<bool>* initialized = nullptr) const {
        DistanceProfile out;
        out.spacing = spacing_;
        out.start_offset = double(first) * spacing_;
        out.units = ProfileUnits::meters;
        out.values.resize(count);
        if (initialized) initialized->assign(count, false);
        for (std::size_t i = 0; i < count; ++i) {
            const auto* c = cell(first + static_cast<long long>(i));
            if (c && c->weight > 0) {
                out.values[i] = c->value;
                if (initialized) (*initialized)[i] = true;
            }
        }
        return out;
    }

    double initialized_fraction(long long first, std::size_t count) const {
        if (count == 0) return 0.0;
        std::size_t init = 0;
        for (std::size_t i = 0; i < count; ++i) {
            const auto* c = cell(first + static_cast<long long>(i));
            if (c && c->weight > 0) ++init;
        }
        return double(init) / double(count);
    }

private:
    GraphMap graph_;
    double spacing_ = 0.1;
    std::vector<SegmentProfile> segments_;
    std::vector<long long> first_;
    long long total_ = 0;
};

// ---------------------------------------------------------------------------
// Stretches
// ---------------------------------------------------------------------------

struct Stretch {
    DistanceProfile profile;  // heights, start_offset in odometer meters
    GpsPoint start_gps;
    GpsPoint center_gps;
    GpsPoint end_gps;
    int source_run = 0;

    double start_distance() const { return profile.start_offset; }
    double center_distance() const { return profile.start_offset + 0.5 * double(profile.size() - 1) * profile.spacing; }
    double end_distance() const { return profile.last_position(); }
};

struct StretchSettings {
    double length = 100.0;     // m
    double min_length = 50.0;  // trailing pieces shorter than this are dropped
};

struct StretchExtraction {
    std::vector<Stretch> stretches;
    double dropped_length = 0.0;  // trailing remainder, m
};

/// Consecutive non-overlapping slices of `length`; the trailing piece is kept
/// when it is at least `min_length` long.
inline StretchExtraction extract_stretches(const DistanceProfile& live, const GpsTrace& trace, int source_run = 0,
                                           const StretchSettings& settings = {}) {
    require(!live.empty(), ErrorKind::precondition, "live profile is empty");
    const auto per = static_cast<std::size_t>(std::llround(settings.length / live.spacing));
    const auto min_cells = static_cast<std::size_t>(std::llround(settings.min_length / live.spacing));
    StretchExtraction out;
    for (std::size_t first = 0; first < live.size(); first += per) {
        const std::size_t count = std::min(per, live.size() - first);
        if (count < min_cells) {
            out.dropped_length = double(count) * live.spacing;
            break;
        }
        Stretch s;
        s.profile = slice(live, first, count);
        s.source_run = source_run;
        s.start_gps = interpolate_gps(trace, s.start_distance());
        s.center_gps = interpolate_gps(trace, s.center_distance());
        s.end_gps = interpolate_gps(trace, s.end_distance());
        out.stretches.push_back(std::move(s));
    }
    return out;
}

/// Driven-path matching: the odometer-to-route offset that best explains
/// the GPS fixes (mean of the per-fix offsets near their median, unwrapped
/// on closed loops), and the trace moved onto the road at that offset.
struct PathMatch {
    double offset = 0.0;  // geographic route position minus odometer distance, m
    std::size_t fixes_used = 0;
    GpsTrace snapped;
};

inline PathMatch match_path(const GpsTrace& trace, const TerrainMap& map, double inlier_band = 20.0) {
    require(!trace.empty(), ErrorKind::precondition, "GPS trace is empty");
    const double period = map.route_length();
    std::vector<double> offsets;
    offsets.reserve(trace.size());
    for (const auto& fix : trace) {
        try {
            offsets.push_back(map.route_position(project_gps(fix.point, map.graph())) - fix.distance);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::no_match) throw;
        }
    }
    require(!offsets.empty(), ErrorKind::no_match, "no GPS fix projects onto the map");
    auto wrap = [&](double d) {
        if (!map.closed()) return d;
        return d - period * std::round(d / period);
    };
    const double ref = offsets.front();
    for (double& o : offsets) o = ref + wrap(o - ref);
    std::vector<double> sorted = offsets;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    const double median = sorted[sorted.size() / 2];
    double sum = 0.0;
    std::size_t used = 0;
    for (double o : offsets) {
        if (std::abs(o - median) <= inlier_band) {
            sum += o;
            ++used;
        }
    }
    PathMatch out;
    out.offset = sum / double(used);
    out.fixes_used = used;
    out.snapped.reserve(trace.size());
    for (const auto& fix : trace) {
        out.snapped.push_back({fix.distance, map.point_at(fix.distance + out.offset)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matching and merging
// ---------------------------------------------------------------------------

struct StretchMatchSettings {
    double margin = 50.0;                   // extended stretch beyond each end, m
    double ratio_threshold = 0.6;
    std::size_t exclusion_halfwidth = 10;   // cells
    double min_initialized_fraction = 0.5;  // below this the region bootstraps
};

enum class StretchMatchStatus { matched, bootstrap, rejected };

inline const char* to_string(StretchMatchStatus s) {
    switch (s) {
        case StretchMatchStatus::matched: return "matched";
        case StretchMatchStatus::bootstrap: return "bootstrap";
        case StretchMatchStatus::rejected: return "rejected";
    }
    return "unknown";
}

struct StretchMatch {
    StretchMatchStatus status = StretchMatchStatus::rejected;
    long long master_start_cell = 0;  // where stretch cell 0 lands (unwrapped)
    std::size_t cell_count = 0;
    double predicted_start = 0.0;     // from GPS, master meters
    double discrepancy = 0.0;         // predicted - matched start, m
    std::optional<double> ratio;
};

/// Twice-differentiated pitch derived from a height profile.
inline DistanceProfile matching_signal(const DistanceProfile& heights, const VehicleGeometry& geometry) {
    return differentiate_profile(pitch_from_heights(heights, geometry), 2);
}

/// Precise alignment of a stretch inside the extended stretch centered on
/// its GPS center.
inline StretchMatch match_stretch(const Stretch& stretch, const TerrainMap& map, const VehicleGeometry& geometry,
                                  const StretchMatchSettings& settings = {}) {
    const double dd = map.spacing();
    require(std::abs(stretch.profile.spacing - dd) <= 1e-9 * dd, ErrorKind::misaligned,
            "stretch spacing differs from the map spacing");
    const std::size_t n = stretch.profile.size();
    StretchMatch out;
    out.cell_count = n;
    const double center = map.master_position(stretch.center_gps);
    out.predicted_start = center - 0.5 * double(n - 1) * dd;
    const long long predicted_cell = std::llround(out.predicted_start / dd);

    if (map.initialized_fraction(predicted_cell, n) < settings.min_initialized_fraction) {
        out.status = StretchMatchStatus::bootstrap;
        out.master_start_cell = predicted_cell;
        return out;
    }

    const long long margin = std::llround(settings.margin / dd);
    long long first = predicted_cell - margin;
    long long last = predicted_cell + static_cast<long long>(n) + margin;  // exclusive
    if (!map.closed()) {
        first = std::max(first, 0LL);
        last = std::min(last, map.total_cells());
    }
    if (last - first < static_cast<long long>(n)) {
        out.status = StretchMatchStatus::rejected;
        return out;
    }
    const auto extended = map.heights(first, static_cast<std::size_t>(last - first));
    const auto snippet = matching_signal(stretch.profile, geometry);
    const auto stream = matching_signal(extended, geometry);
    const auto res = match_snippet(snippet.values, stream.values,
                                   {settings.exclusion_halfwidth, settings.ratio_threshold, false});
    out.ratio = res.ratio;
    out.master_start_cell = first + static_cast<long long>(res.best_lag);
    out.discrepancy = out.predicted_start - double(out.master_start_cell) * dd;
    out.status = res.clear(settings.ratio_threshold) ? StretchMatchStatus::matched : StretchMatchStatus::rejected;
    return out;
}

struct MergeSettings {
    std::uint32_t weight_cap = 32;
    double anchor_gain = 0.25;
};

/// Count-weighted running mean into the matched (or bootstrap) interval; a
/// matched stretch also nudges the registration anchor of the segment under
/// its center by a fraction of the GPS-versus-correlation discrepancy.
inline void merge_stretch(const Stretch& stretch, const StretchMatch& match, TerrainMap& map,
                          const MergeSettings& settings = {}) {
    require(match.status != StretchMatchStatus::rejected, ErrorKind::precondition, "cannot merge a rejected stretch");
    require(match.cell_count == stretch.profile.size(), ErrorKind::precondition,
            "matched interval length differs from the stretch length");
    for (std::size_t i = 0; i < stretch.profile.size(); ++i) {
        MapCell* c = map.cell(match.master_start_cell + static_cast<long long>(i));
        if (!c) continue;
        const double live = stretch.profile.values[i];
        if (c->weight == 0) {
            c->value = live;
            c->weight = 1;
            continue;
        }
        const double w = double(std::min(c->weight, settings.weight_cap));
        c->value = (w * c->value + live) / (w + 1.0);
        c->weight = std::min(c->weight + 1, settings.weight_cap);
    }
    if (match.status == StretchMatchStatus::matched) {
        const double center = (double(match.master_start_cell) + 0.5 * double(match.cell_count - 1)) * map.spacing();
        map.segments()[map.segment_at(center)].anchor += settings.anchor_gain * match.discrepancy;
    }
}


/// One mutex per segment. Writers lock every segment an interval touches, in
/// index order; readers that need a consistent view of an interval take the
/// same locks.
class SegmentLocks {
public:
    explicit SegmentLocks(const TerrainMap& map) : mutexes_(map.segments().size()) {}

    std::vector<std::unique_lock<std::mutex>> lock_interval(const TerrainMap& map, long long first,
                                                            std::size_t count) {
        std::set<std::size_t> touched;
        for (std::size_t i = 0; i < count; ++i) {
            if (const auto n = map.normalize(first + static_cast<long long>(i))) touched.insert(map.segment_of_cell(*n));
        }
        std::vector<std::unique_lock<std::mutex>> held;
        held.reserve(touched.size());
        for (std::size_t seg : touched) held.emplace_back(mutexes_[seg]);
        return held;
    }

private:
    std::vector<std::mutex> mutexes_;
};

inline void merge_stretch(const Stretch& stretch, const StretchMatch& match, TerrainMap& map, SegmentLocks& locks,
                          const MergeSettings& settings = {}) {
    const auto held = locks.lock_interval(map, match.master_start_cell, match.cell_count);
    merge_stretch(stretch, match, map, settings);
}

}  // namespace tbl
