#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <utility>

#include "monorisk/errors.hpp"
#include "monorisk/geometry.hpp"
#include "monorisk/tracker.hpp"

namespace monorisk {

// Relative state of one observed vehicle in the ego frame: d_x lateral
// (signed, negative = left), d_y longitudinal, velocities in m/s.
struct VehicleState {
    double d_x = 0.0;
    double d_y = 0.0;
    double v_x = 0.0;
    double v_y = 0.0;
    double age_s = 0.0;  // seconds since this object's first estimate
};

// Bounded history of ground-plane positions; oldest samples evicted first.
class ObjectHistory {
public:
    struct Sample {
        double t = 0.0;
        double d_x = 0.0;
        double d_y = 0.0;
    };

    explicit ObjectHistory(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw ConfigError("history capacity must be >= 1");
    }

    void push(double t, double d_x, double d_y) {
        if (!samples_.empty() && !(t > samples_.back().t))
            throw StreamError("history timestamps must be strictly increasing");
        if (samples_.empty()) first_time_s_ = t;
        if (samples_.size() == capacity_) samples_.pop_front();
        samples_.push_back({t, d_x, d_y});
    }

    std::size_t size() const { return samples_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return samples_.empty(); }
    const Sample& operator[](std::size_t i) const { return samples_[i]; }  // oldest first
    const Sample& back() const { return samples_.back(); }
    double first_time_s() const { return first_time_s_; }  // survives eviction

private:
    std::size_t capacity_;
    std::deque<Sample> samples_;
    double first_time_s_ = 0.0;
};

// Least-squares slope of (d_x, d_y) against time over the most recent
// min(window, size) samples. Exact on affine trajectories; a single sample
// (or window < 2) yields (0, 0).
inline std::pair<double, double> relative_velocity(const ObjectHistory& history,
                                                   std::size_t window) {
    if (history.empty()) throw std::invalid_argument("relative_velocity: history is empty");
    const std::size_t n = std::min(window, history.size());
    if (n < 2) return {0.0, 0.0};
    const std::size_t off = history.size() - n;
    double mt = 0.0, mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mt += history[off + i].t;
        mx += history[off + i].d_x;
        my += history[off + i].d_y;
    }
    mt /= double(n);
    mx /= double(n);
    my /= double(n);
    double stt = 0.0, stx = 0.0, sty = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = history[off + i].t - mt;
        stt += dt * dt;
        stx += dt * (history[off + i].d_x - mx);
        sty += dt * (history[off + i].d_y - my);
    }
    // stt > 0 because timestamps are strictly increasing and n >= 2.
    return {stx / stt, sty / stt};
}

// Single-object estimate: ranges the box through the camera geometry, folds
// the position into the history, and fits velocities over the window.
// Throws GeometryError when the box bottom is at/above the horizon (caller
// should withhold the state and let the object coast).
inline VehicleState estimate_state(const CameraModel& camera, const BoundingBox& box,
                                   double frame_time_s, ObjectHistory& history,
                                   std::size_t window) {
    const double d_y = longitudinal_distance(camera, box);
    const double d_x = lateral_distance(camera, d_y, box);
    history.push(frame_time_s, d_x, d_y);
    const auto [v_x, v_y] = relative_velocity(history, window);
    return {d_x, d_y, v_x, v_y, frame_time_s - history.first_time_s()};
}

enum class StateQuality {
    fresh,    // computed from a detection this frame
    coasted,  // extrapolated or held; no usable detection this frame
    stale     // held longer than stale_after_s
};

struct EstimatedObject {
    VehicleState state;
    StateQuality quality = StateQuality::fresh;
};

struct StateEstimatorConfig {
    std::size_t velocity_window = 5;
    std::size_t history_capacity = 30;
    double stale_after_s = 1.0;

    void validate() const {
        if (velocity_window < 1) throw ConfigError("state: velocity_window must be >= 1");
        if (history_capacity < 1) throw ConfigError("state: history_capacity must be >= 1");
        if (!(stale_after_s > 0.0)) throw ConfigError("state: stale_after_s must be > 0");
    }
};

// Scene-level estimator: one history per tracked id. Policy per frame:
//  - matched, usable box        -> fresh state from geometry + regression
//  - matched but clipped/above  -> hold last state (no extrapolation), stale
//    horizon                       after stale_after_s
//  - coasting tracker           -> extrapolate last state at constant velocity;
//                                  coasted samples never enter the history
//  - id dropped by tracker      -> history discarded
class StateEstimator {
public:
    StateEstimator(CameraModel camera, StateEstimatorConfig config)
        : camera_(camera), config_(config) {
        camera_.validate();
        config_.validate();
    }

    std::map<int, EstimatedObject> update(double frame_time_s,
                                          const std::map<int, TrackedBox>& tracked) {
        for (auto it = entries_.begin(); it != entries_.end();) {
            if (!tracked.count(it->first))
                it = entries_.erase(it);
            else
                ++it;
        }
        std::map<int, EstimatedObject> out;
        for (const auto& [id, tb] : tracked) {
            auto it = entries_.find(id);
            if (!tb.coasted && box_usable(tb.box)) {
                if (it == entries_.end())
                    it = entries_.emplace(id, Entry{ObjectHistory(config_.history_capacity),
                                                    std::nullopt, 0.0}).first;
                Entry& e = it->second;
                const VehicleState s = estimate_state(camera_, tb.box, frame_time_s, e.history,
                                                      config_.velocity_window);
                e.last = s;
                e.last_fresh_time_s = frame_time_s;
                out.emplace(id, EstimatedObject{s, StateQuality::fresh});
            } else if (it != entries_.end() && it->second.last) {
                const Entry& e = it->second;
                VehicleState s = *e.last;
                const double gap_s = frame_time_s - e.last_fresh_time_s;
                if (tb.coasted) {  // constant-velocity extrapolation
                    s.d_x += s.v_x * gap_s;
                    // d_y > 0 is a type invariant; never extrapolate through
                    // the camera plane.
                    s.d_y = std::max(0.01, s.d_y + s.v_y * gap_s);
                }
                s.age_s = frame_time_s - e.history.first_time_s();
                const auto q = gap_s > config_.stale_after_s ? StateQuality::stale
                                                             : StateQuality::coasted;
                out.emplace(id, EstimatedObject{s, q});
            }
            // No prior state and no usable box: nothing to report for this id.
        }
        return out;
    }

    const CameraModel& camera() const { return camera_; }

private:
    // A box whose bottom touches the image border has lost its ground-contact
    // cue; at/above the horizon the ground model is undefined.
    bool box_usable(const BoundingBox& box) const {
        return box.bottom_px > camera_.horizon_row_px && box.bottom_px < camera_.image_height_px;
    }

    struct Entry {
        ObjectHistory history;
        std::optional<VehicleState> last;
        double last_fresh_time_s = 0.0;
    };

    CameraModel camera_;
    StateEstimatorConfig config_;
    std::map<int, Entry> entries_;
};

// Scene snapshot handed to the risk module.
struct SceneEstimate {
    double frame_time_s = 0.0;
    std::optional<double> ego_speed_mps;
    std::map<int, VehicleState> objects;
};

}  // namespace monorisk
