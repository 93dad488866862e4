#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "monorisk/errors.hpp"
#include "monorisk/sim_io.hpp"
#include "monorisk/simulator.hpp"

namespace monorisk {

enum class SpeedSource { lane, gps };

struct SpeedEstimate {
    double speed_mps = 0.0;
    SpeedSource source = SpeedSource::lane;
    double confidence_window_s = 0.0;  // span of data supporting the estimate
};

struct LaneSpeedConfig {
    double ema_alpha = 0.3;             // smoothing over per-period raw speeds
    double side_disagreement_tol = 0.25;  // relative gap that vetoes a sample

    void validate() const {
        if (!(ema_alpha > 0.0 && ema_alpha <= 1.0))
            throw ConfigError("lane speed: ema_alpha must be in (0, 1]");
        if (!(side_disagreement_tol > 0.0))
            throw ConfigError("lane speed: side_disagreement_tol must be > 0");
    }
};

// Ego speed from dashed-lane-marking timing. Each side watches a fixed image
// point; the interval between consecutive rising edges (uncovered -> covered)
// spans exactly one marking period, so speed = period_m / interval. Raw
// per-period speeds from both sides feed one EMA. No estimate is emitted
// until each side has completed at least one full period, and samples where
// the two sides disagree by more than the tolerance (e.g. during a lane
// change) are discarded.
class LaneSpeedEstimator {
public:
    explicit LaneSpeedEstimator(LaneMarkingSpec marking, LaneSpeedConfig config = {})
        : marking_(marking), config_(config) {
        marking_.validate();
        config_.validate();
    }

    std::optional<SpeedEstimate> update_pulse(const PulseSample& sample) {
        if (has_time_ && !(sample.time_s > last_time_))
            throw StreamError("pulse samples must arrive in increasing time order");
        last_time_ = sample.time_s;
        has_time_ = true;
        side_update(left_, right_, sample.left_covered, sample.time_s);
        side_update(right_, left_, sample.right_covered, sample.time_s);
        if (left_.periods < 1 || right_.periods < 1 || !has_ema_) return std::nullopt;
        const double window = sample.time_s - std::min(left_.first_edge_t, right_.first_edge_t);
        return SpeedEstimate{ema_, SpeedSource::lane, window};
    }

    // Latest raw (pre-EMA) per-side speeds; useful for diagnostics.
    std::optional<double> left_raw_speed() const {
        return left_.has_speed ? std::optional<double>(left_.speed) : std::nullopt;
    }
    std::optional<double> right_raw_speed() const {
        return right_.has_speed ? std::optional<double>(right_.speed) : std::nullopt;
    }

private:
    struct Side {
        bool has_prev = false;
        bool prev_covered = false;
        bool has_last_edge = false;
        double last_edge_t = 0.0;
        double first_edge_t = 0.0;
        bool has_speed = false;
        double speed = 0.0;
        int periods = 0;
    };

    void side_update(Side& side, const Side& other, bool covered, double t) {
        const bool rising = side.has_prev && !side.prev_covered && covered;
        side.has_prev = true;
        side.prev_covered = covered;
        if (!rising) return;
        if (side.has_last_edge) {
            const double dt = t - side.last_edge_t;
            const double speed = marking_.period_m() / dt;
            side.speed = speed;
            side.has_speed = true;
            ++side.periods;
            bool accept = true;
            if (other.has_speed) {
                const double ref = std::max(speed, other.speed);
                if (ref > 0.0 && std::abs(speed - other.speed) > config_.side_disagreement_tol * ref)
                    accept = false;
            }
            if (accept) {
                ema_ = has_ema_ ? config_.ema_alpha * speed + (1.0 - config_.ema_alpha) * ema_
                                : speed;
                has_ema_ = true;
            }
        } else {
            side.first_edge_t = t;
        }
        side.last_edge_t = t;
        side.has_last_edge = true;
    }

    LaneMarkingSpec marking_;
    LaneSpeedConfig config_;
    Side left_, right_;
    bool has_ema_ = false;
    double ema_ = 0.0;
    bool has_time_ = false;
    double last_time_ = 0.0;
};

// Great-circle distance on a spherical Earth, R = 6371 km.
inline double haversine_m(double lat1_deg, double lon1_deg, double lat2_deg, double lon2_deg) {
    constexpr double kEarthRadiusM = 6371000.0;
    constexpr double kDegToRad = std::numbers::pi / 180.0;
    const double phi1 = lat1_deg * kDegToRad;
    const double phi2 = lat2_deg * kDegToRad;
    const double dphi = (lat2_deg - lat1_deg) * kDegToRad;
    const double dlam = (lon2_deg - lon1_deg) * kDegToRad;
    const double a = std::sin(0.5 * dphi) * std::sin(0.5 * dphi) +
                     std::cos(phi1) * std::cos(phi2) * std::sin(0.5 * dlam) * std::sin(0.5 * dlam);
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

// Speed between consecutive GPS fixes. Fixes must be time-ordered; pairs with
// duplicate timestamps are skipped. Fewer than two fixes yield no estimates.
inline std::vector<SpeedEstimate> gps_speed(const std::vector<GpsFix>& fixes) {
    std::vector<SpeedEstimate> out;
    for (std::size_t i = 1; i < fixes.size(); ++i) {
        const double dt = fixes[i].time_s - fixes[i - 1].time_s;
        if (dt < 0.0) throw StreamError("gps fixes must be time-ordered");
        if (dt == 0.0) continue;
        const double dist =
            haversine_m(fixes[i - 1].lat_deg, fixes[i - 1].lon_deg, fixes[i].lat_deg, fixes[i].lon_deg);
        out.push_back({dist / dt, SpeedSource::gps, dt});
    }
    return out;
}

}  // namespace monorisk
