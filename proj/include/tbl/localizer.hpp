#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tbl/error.hpp"
#include "tbl/matching.hpp"
#include "tbl/pitch.hpp"
#include "tbl/resample.hpp"
#include "tbl/ring_buffer.hpp"
#include "tbl/terrain_map.hpp"

namespace tbl {

struct LocalizerConfig {
    double buffer_length = 100.0;      // m
    double window_length = 1000.0;     // m
    double subbuffer_length = 30.0;    // m
    double subwindow_length = 100.0;   // m
    double ratio_threshold = 0.6;
    double update_stride = 1.0;        // m
    std::size_t exclusion_halfwidth = 10;  // cells
    double search_widening = 3.0;      // window factor before the first fix and when lost
    double dead_reckoning_limit = 500.0;  // m without a fix before reporting LOST
    double min_window_initialized = 0.5;
    bool matching_enabled = true;

    void validate() const {
        require(subbuffer_length > 0 && subbuffer_length < buffer_length && buffer_length < window_length,
                ErrorKind::precondition, "localizer lengths must satisfy subbuffer < buffer < window");
        require(subwindow_length > subbuffer_length, ErrorKind::precondition, "sub-window must exceed sub-buffer");
        require(ratio_threshold > 0 && ratio_threshold < 1, ErrorKind::precondition,
                "ratio threshold must lie in (0, 1)");
        require(update_stride > 0, ErrorKind::precondition, "update stride must be positive");
    }
};

enum class LocalizationStatus { matched, dead_reckoning, lost };

inline const char* to_string(LocalizationStatus s) {
    switch (s) {
        case LocalizationStatus::matched: return "MATCHED";
        case LocalizationStatus::dead_reckoning: return "DEAD_RECKONING";
        case LocalizationStatus::lost: return "LOST";
    }
    return "UNKNOWN";
}

inline LocalizationStatus parse_status(const std::string& s) {
    if (s == "MATCHED") return LocalizationStatus::matched;
    if (s == "DEAD_RECKONING") return LocalizationStatus::dead_reckoning;
    if (s == "LOST") return LocalizationStatus::lost;
    throw Error(ErrorKind::format, "unknown localization status '" + s + "'");
}

/// Master pitch of the whole route, derived once from the map heights.
/// Cells whose pitch depends on an uninitialized height are invalid and read
/// as zero.
class MasterPitchTrack {
public:
    MasterPitchTrack(const TerrainMap& map, const VehicleGeometry& geometry)
        : spacing_(map.spacing()), closed_(map.closed()), total_(map.total_cells()) {
        const double shift = geometry.wheelbase / spacing_;
        const auto reach = static_cast<long long>(std::ceil(shift - 1e-9));
        std::vector<bool> init;
        const long long first = map.closed() ? -reach : 0;
        const auto heights = map.heights(first, static_cast<std::size_t>(total_ - first), &init);
        const auto pitch = pitch_from_heights(heights, geometry);
        values_.assign(static_cast<std::size_t>(total_), 0.0);
        valid_.assign(static_cast<std::size_t>(total_), false);
        // pitch.values[k] belongs to heights cell k + reach, i.e. master cell first + reach + k.
        for (std::size_t k = 0; k < pitch.size(); ++k) {
            const long long hi = static_cast<long long>(k) + reach;
            const long long cell = first + hi;
            if (cell < 0 || cell >= total_) continue;
            const long long lo_a = hi - static_cast<long long>(std::floor(shift));
            const long long lo_b = hi - reach;
            const bool ok = init[static_cast<std::size_t>(hi)] && init[static_cast<std::size_t>(std::max(lo_a, 0LL))] &&
                            init[static_cast<std::size_t>(std::max(lo_b, 0LL))];
            values_[static_cast<std::size_t>(cell)] = ok ? pitch.values[k] : 0.0;
            valid_[static_cast<std::size_t>(cell)] = ok;
        }
    }

    double spacing() const { return spacing_; }
    bool closed() const { return closed_; }
    double route_length() const { return double(total_) * spacing_; }

    struct Window {
        DistanceProfile pitch;  // start_offset is the unwrapped master position
        double valid_fraction = 0.0;
    };

    /// Cells covering [start, start + length), wrapped on closed routes and
    /// clamped to the route on open ones.
    Window window(double start, double length) const {
        long long first = std::llround(start / spacing_);
        auto count = std::llround(length / spacing_);
        if (!closed_) {
            first = std::clamp(first, 0LL, std::max(0LL, total_ - count));
            count = std::min(count, total_ - first);
        }
        Window w;
        w.pitch.spacing = spacing_;
        w.pitch.units = ProfileUnits::radians;
        w.pitch.start_offset = double(first) * spacing_;
        w.pitch.values.resize(static_cast<std::size_t>(count));
        std::size_t valid = 0;
        for (long long i = 0; i < count; ++i) {
            long long c = first + i;
            if (closed_) c = ((c % total_) + total_) % total_;
            if (c < 0 || c >= total_) continue;
            w.pitch.values[static_cast<std::size_t>(i)] = values_[static_cast<std::size_t>(c)];
            if (valid_[static_cast<std::size_t>(c)]) ++valid;
        }
        w.valid_fraction = count > 0 ? double(valid) / double(count) : 0.0;
        return w;
    }

private:
    double spacing_;
    bool closed_;
    long long total_;
    std::vector<double> values_;
    std::vector<bool> valid_;
};

/// Trailing live pitch buffer plus the position estimate. Positions are
/// master positions; odometer values are live-profile distances.
struct LocalizerState {
    LocalizerState(const LocalizerConfig& config, double spacing, double prior_position)
        : spacing(spacing),
          buffer(static_cast<std::size_t>(std::llround(config.buffer_length / spacing))),
          position_estimate(prior_position),
          fix_position(prior_position) {}

    double spacing;
    RingBuffer<double> buffer;
    std::optional<double> tail_odometer;  // live distance of the newest cell
    double position_estimate;
    LocalizationStatus status = LocalizationStatus::dead_reckoning;
    double fix_position;                   // estimate at the last fix (or the prior)
    double odometer_since_fix = 0.0;       // m
    double window_anchor = 0.0;            // start of the last window, m
    bool ever_matched = false;
    std::size_t buffer_resets = 0;

    double dead_reckoned() const { return fix_position + odometer_since_fix; }
};

/// Append contiguous cells. A gap (or overlap) resets the buffer and drops
/// the state to dead reckoning; the odometer still advances to the new tail.
inline void update_buffer(LocalizerState& state, const DistanceProfile& cells) {
    if (cells.empty()) return;
    require(std::abs(cells.spacing - state.spacing) <= 1e-9 * state.spacing, ErrorKind::misaligned,
            "live cells use a different spacing than the localizer");
    if (state.tail_odometer) {
        const double expected = *state.tail_odometer + state.spacing;
        if (std::abs(cells.start_offset - expected) > 0.5 * state.spacing) {
            state.buffer.clear();
            ++state.buffer_resets;
            if (state.status == LocalizationStatus::matched) state.status = LocalizationStatus::dead_reckoning;
        }
        state.odometer_since_fix += cells.last_position() - *state.tail_odometer;
    } else {
        // The prior refers to the first cell ever fed.
        state.odometer_since_fix += cells.last_position() - cells.start_offset;
    }
    for (double v : cells.values) state.buffer.push_back(v);
    state.tail_odometer = cells.last_position();
    state.position_estimate = state.dead_reckoned();
}

struct LocalizeOutcome {
    double position = 0.0;
    LocalizationStatus status = LocalizationStatus::dead_reckoning;
    std::optional<double> ratio;
    std::optional<double> coarse_position;
    bool refined = false;
    CorrelationResult correlation;  // coarse match, sequence retained on request
};

namespace detail {
inline DistanceProfile buffer_profile(const LocalizerState& state, std::size_t cells) {
    DistanceProfile p;
    p.spacing = state.spacing;
    p.units = ProfileUnits::radians;
    p.values = state.buffer.tail(cells);
    p.start_offset = *state.tail_odometer - double(p.values.size() - 1) * state.spacing;
    return p;
}

/// Master position of the buffer tail given where the snippet starts.
inline double tail_position(const DistanceProfile& snippet, const DistanceProfile& stream, std::size_t lag,
                            double tail_odometer) {
    return stream.position(lag) + (tail_odometer - snippet.start_offset);
}
}  // namespace detail

/// One localization update against a master pitch window: coarse match of
/// the whole buffer, then refinement of the newest sub-buffer inside a
/// sub-window around the coarse fix. Falls back to dead reckoning when the
/// peak is not clear, matching is disabled, or the window is mostly empty.
inline LocalizeOutcome localize_step(LocalizerState& state, const MasterPitchTrack::Window& window,
                                     const LocalizerConfig& config, bool keep_sequence = false) {
    require(state.buffer.full() && state.tail_odometer.has_value(), ErrorKind::precondition,
            "localize_step requires a full buffer");
    state.window_anchor = window.pitch.start_offset;
    LocalizeOutcome out;

    auto fall_back = [&]() {
        out.position = state.dead_reckoned();
        out.status = state.odometer_since_fix > config.dead_reckoning_limit ? LocalizationStatus::lost
                                                                             : LocalizationStatus::dead_reckoning;
        state.position_estimate = out.position;
        state.status = out.status;
        return out;
    };

    const MatchSettings settings{config.exclusion_halfwidth, config.ratio_threshold, keep_sequence};
    const auto snippet = differentiate_profile(detail::buffer_profile(state, state.buffer.size()), 2);
    if (window.pitch.size() < state.buffer.size() + 8) return fall_back();
    const auto stream = differentiate_profile(window.pitch, 2);
    out.correlation = match_snippet(snippet.values, stream.values, settings);
    out.ratio = out.correlation.ratio;
    if (!config.matching_enabled || window.valid_fraction < config.min_window_initialized ||
        !out.correlation.clear(config.ratio_threshold)) {
        return fall_back();
    }

    double position = detail::tail_position(snippet, stream, out.correlation.best_lag, *state.tail_odometer);
    out.coarse_position = position;

    const auto sub_cells = static_cast<std::size_t>(std::llround(config.subbuffer_length / state.spacing));
    const auto sub = differentiate_profile(detail::buffer_profile(state, sub_cells), 2);
    const double sub_center = position - 0.5 * (*state.tail_odometer - (sub.start_offset - 2 * state.spacing));
    double sw_start = sub_center - 0.5 * config.subwindow_length;
    sw_start = std::clamp(sw_start, window.pitch.start_offset,
                          window.pitch.start_offset + window.pitch.length() - config.subwindow_length);
    const auto sub_window = crop(window.pitch, sw_start, config.subwindow_length);
    const auto sub_stream = differentiate_profile(sub_window, 2);
    if (sub_stream.size() >= sub.size()) {
        const auto sub_res = match_snippet(sub.values, sub_stream.values, settings);
        if (sub_res.clear(config.ratio_threshold)) {
            position = detail::tail_position(sub, sub_stream, sub_res.best_lag, *state.tail_odometer);
            out.refined = true;
        }
    }

    out.position = position;
    out.status = LocalizationStatus::matched;
    state.position_estimate = position;
    state.fix_position = position;
    state.odometer_since_fix = 0.0;
    state.status = LocalizationStatus::matched;
    state.ever_matched = true;
    return out;
}

struct EstimateRecord {
    double travel = 0.0;    // live distance of the buffer tail, m
    double estimate = 0.0;  // master position, m
    LocalizationStatus status = LocalizationStatus::dead_reckoning;
    std::optional<double> ratio;
};

/// Drives the state machine: feeds live pitch in stride-sized chunks and
/// runs one update per chunk once the buffer is full. The window is
/// centered on the dead-reckoned estimate.
class Localizer {
public:
    Localizer(const MasterPitchTrack& track, LocalizerConfig config, double prior_position)
        : track_(track), config_(std::move(config)), state_(config_, track.spacing(), prior_position) {
        config_.validate();
    }

    const LocalizerState& state() const { return state_; }
    LocalizerConfig& config() { return config_; }

    /// Predicate on travel distance; matching is skipped where it returns true.
    void set_matching_mask(std::function<bool(double)> disabled) { disabled_ = std::move(disabled); }

    /// Called with the coarse correlation of every update, for snapshots.
    void set_observer(std::function<void(const EstimateRecord&, const LocalizeOutcome&, double window_start)> f) {
        observer_ = std::move(f);
    }

    std::vector<EstimateRecord> run(const DistanceProfile& live_pitch) {
        std::vector<EstimateRecord> out;
        const auto stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config_.update_stride /
                                                                                            live_pitch.spacing)));
        for (std::size_t first = 0; first < live_pitch.size(); first += stride) {
            const std::size_t count = std::min(stride, live_pitch.size() - first);
            update_buffer(state_, slice(live_pitch, first, count));
            if (auto rec = update()) out.push_back(*rec);
        }
        return out;
    }

    std::optional<EstimateRecord> update() {
        if (!state_.buffer.full()) return std::nullopt;
        const bool widen = !state_.ever_matched || state_.status == LocalizationStatus::lost;
        const double length = config_.window_length * (widen ? config_.search_widening : 1.0);
        const auto window = track_.window(state_.dead_reckoned() - 0.5 * length, length);
        LocalizerConfig cfg = config_;
        if (disabled_ && disabled_(*state_.tail_odometer)) cfg.matching_enabled = false;
        const auto outcome = localize_step(state_, window, cfg, static_cast<bool>(observer_));
        EstimateRecord rec{*state_.tail_odometer, outcome.position, outcome.status, outcome.ratio};
        if (observer_) observer_(rec, outcome, window.pitch.start_offset);
        return rec;
    }

private:
    const MasterPitchTrack& track_;
    LocalizerConfig config_;
    LocalizerState state_;
    std::function<bool(double)> disabled_;
    std::function<void(const EstimateRecord&, const LocalizeOutcome&, double)> observer_;
};

}  // namespace tbl
