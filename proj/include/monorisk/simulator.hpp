#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "monorisk/detection.hpp"
#include "monorisk/errors.hpp"
#include "monorisk/geometry.hpp"

namespace monorisk {

// ---------------------------------------------------------------------------
// Scenario description. All vehicle kinematics are expressed relative to the
// ego vehicle (the camera): d_y grows forward, d_x grows rightward. The ego's
// own script only drives its odometer (and therefore the lane-marking pulses);
// it does not move the relative frame.
// ---------------------------------------------------------------------------

// Dashed-lane-marking geometry. Defaults follow the common US pattern of
// 10 ft painted segments with 30 ft gaps.
struct LaneMarkingSpec {
    double marking_length_m = 3.05;
    double gap_length_m = 9.14;
    double phase_m = 0.0;  // marking-cycle offset at odometer zero
    double period_m() const { return marking_length_m + gap_length_m; }

    void validate() const {
        if (!(marking_length_m > 0.0)) throw ConfigError("marking_length_m must be > 0");
        if (!(gap_length_m > 0.0)) throw ConfigError("gap_length_m must be > 0");
    }
};

struct NoiseSpec {
    double box_edge_sigma_px = 0.0;  // independent Gaussian jitter per box edge
    double miss_rate = 0.0;          // per-vehicle, per-frame dropout probability
    double clutter_rate = 0.0;       // Poisson mean of spurious boxes per frame
    std::uint64_t seed = 0;

    void validate() const {
        if (!(box_edge_sigma_px >= 0.0)) throw ConfigError("box_edge_sigma_px must be >= 0");
        if (!(miss_rate >= 0.0 && miss_rate <= 1.0)) throw ConfigError("miss_rate must be in [0, 1]");
        if (!(clutter_rate >= 0.0)) throw ConfigError("clutter_rate must be >= 0");
    }
};

// Piecewise-constant acceleration: accel_mps2 applies from start_s until the
// next segment begins. Before the first segment the acceleration is zero.
struct AccelSegment {
    double start_s = 0.0;
    double accel_mps2 = 0.0;
};

// Lateral move of delta_x_m executed as a smooth cosine ramp over duration_s.
struct LaneChangeScript {
    double start_s = 0.0;
    double delta_x_m = 0.0;
    double duration_s = 3.0;
};

// Interval during which the vehicle produces no detections.
struct OcclusionWindow {
    double start_s = 0.0;
    double end_s = 0.0;
};

struct VehicleScript {
    int id = 0;
    double d_x0_m = 0.0;
    double d_y0_m = 10.0;
    double v_y0_mps = 0.0;  // initial longitudinal speed relative to ego
    double width_m = 1.8;
    double length_m = 4.5;
    double height_m = 1.4;
    std::vector<AccelSegment> accel;  // relative longitudinal acceleration
    std::vector<LaneChangeScript> lane_changes;
    std::vector<OcclusionWindow> occlusions;
};

struct EgoScript {
    double speed0_mps = 0.0;  // absolute ground speed
    int lane_index = 0;
    std::vector<AccelSegment> accel;
};

struct Scenario {
    std::string name;
    double duration_s = 10.0;
    double frame_rate_hz = 30.0;
    CameraModel camera;
    double lane_width_m = 3.7;
    LaneMarkingSpec marking;
    NoiseSpec noise;
    EgoScript ego;
    std::vector<VehicleScript> vehicles;

    void validate() const {
        if (!(duration_s > 0.0)) throw ConfigError("scenario: duration_s must be > 0");
        if (!(frame_rate_hz > 0.0)) throw ConfigError("scenario: frame_rate_hz must be > 0");
        if (!(lane_width_m > 0.0)) throw ConfigError("scenario: lane_width_m must be > 0");
        camera.validate();
        marking.validate();
        noise.validate();
        std::vector<int> ids;
        for (const auto& v : scripts_ok(vehicles)) ids.push_back(v.id);
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
            throw ConfigError("scenario: vehicle ids must be unique");
    }

private:
    // Validates per-vehicle scripts while iterating; returns the same list.
    static const std::vector<VehicleScript>& scripts_ok(const std::vector<VehicleScript>& vs) {
        for (const auto& v : vs) {
            if (!(v.width_m > 0.0 && v.length_m > 0.0 && v.height_m > 0.0))
                throw ConfigError("scenario: vehicle dimensions must be > 0");
            for (std::size_t i = 0; i < v.accel.size(); ++i) {
                if (v.accel[i].start_s < 0.0) throw ConfigError("accel segment start_s must be >= 0");
                if (i > 0 && !(v.accel[i].start_s > v.accel[i - 1].start_s))
                    throw ConfigError("accel segments must have increasing start_s");
            }
            for (const auto& m : v.lane_changes)
                if (!(m.duration_s > 0.0)) throw ConfigError("lane change duration_s must be > 0");
            for (const auto& o : v.occlusions)
                if (!(o.end_s > o.start_s)) throw ConfigError("occlusion window must have end_s > start_s");
        }
        return vs;
    }
};

// ---------------------------------------------------------------------------
// Closed-form script evaluation. World state at any time is computed exactly
// from the scripts, so stepping accumulates no integration error.
// ---------------------------------------------------------------------------

inline double scripted_speed(double v0, const std::vector<AccelSegment>& segments, double t) {
    double v = v0, t_cur = 0.0, a = 0.0;
    for (const auto& seg : segments) {
        if (seg.start_s >= t) break;
        v += a * (seg.start_s - t_cur);
        t_cur = seg.start_s;
        a = seg.accel_mps2;
    }
    return v + a * (t - t_cur);
}

// Integral of scripted_speed over [0, t].
inline double scripted_travel(double v0, const std::vector<AccelSegment>& segments, double t) {
    double v = v0, t_cur = 0.0, a = 0.0, s = 0.0;
    for (const auto& seg : segments) {
        if (seg.start_s >= t) break;
        const double dt = seg.start_s - t_cur;
        s += v * dt + 0.5 * a * dt * dt;
        v += a * dt;
        t_cur = seg.start_s;
        a = seg.accel_mps2;
    }
    const double dt = t - t_cur;
    return s + v * dt + 0.5 * a * dt * dt;
}

// Half-cosine ramp from 0 to 1 over [0, 1]; C1-smooth at both ends.
inline double cosine_ramp(double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return 0.5 * (1.0 - std::cos(std::numbers::pi * u));
}

inline double lane_change_offset(const std::vector<LaneChangeScript>& moves, double t) {
    double off = 0.0;
    for (const auto& m : moves)
        off += m.delta_x_m * cosine_ramp((t - m.start_s) / m.duration_s);
    return off;
}

inline double lane_change_rate(const std::vector<LaneChangeScript>& moves, double t) {
    double rate = 0.0;
    for (const auto& m : moves) {
        const double u = (t - m.start_s) / m.duration_s;
        if (u <= 0.0 || u >= 1.0) continue;
        rate += m.delta_x_m * 0.5 * std::numbers::pi / m.duration_s * std::sin(std::numbers::pi * u);
    }
    return rate;
}

inline bool vehicle_occluded(const VehicleScript& script, double t) {
    for (const auto& w : script.occlusions)
        if (t >= w.start_s && t < w.end_s) return true;
    return false;
}

// ---------------------------------------------------------------------------
// World state.
// ---------------------------------------------------------------------------

struct EgoState {
    double speed_mps = 0.0;
    int lane_index = 0;
    double odometer_m = 0.0;
};

struct SimVehicle {
    int id = 0;
    double d_x_m = 0.0;
    double d_y_m = 0.0;
    double v_x_mps = 0.0;
    double v_y_mps = 0.0;
    double width_m = 1.8;
    double length_m = 4.5;
    double height_m = 1.4;
    bool visible = true;
};

struct WorldState {
    double sim_time_s = 0.0;
    EgoState ego;
    std::vector<SimVehicle> vehicles;
    double lane_width_m = 3.7;
};

inline WorldState world_at(const Scenario& scenario, double t) {
    WorldState w;
    w.sim_time_s = t;
    w.lane_width_m = scenario.lane_width_m;
    w.ego.speed_mps = scripted_speed(scenario.ego.speed0_mps, scenario.ego.accel, t);
    w.ego.lane_index = scenario.ego.lane_index;
    w.ego.odometer_m = scripted_travel(scenario.ego.speed0_mps, scenario.ego.accel, t);
    w.vehicles.reserve(scenario.vehicles.size());
    for (const auto& s : scenario.vehicles) {
        SimVehicle v;
        v.id = s.id;
        v.d_y_m = s.d_y0_m + scripted_travel(s.v_y0_mps, s.accel, t);
        v.v_y_mps = scripted_speed(s.v_y0_mps, s.accel, t);
        v.d_x_m = s.d_x0_m + lane_change_offset(s.lane_changes, t);
        v.v_x_mps = lane_change_rate(s.lane_changes, t);
        v.width_m = s.width_m;
        v.length_m = s.length_m;
        v.height_m = s.height_m;
        v.visible = !vehicle_occluded(s, t);
        w.vehicles.push_back(v);
    }
    return w;
}

inline WorldState initial_world(const Scenario& scenario) { return world_at(scenario, 0.0); }

inline WorldState step_world(const WorldState& world, double dt, const Scenario& scenario) {
    if (!(dt > 0.0)) throw std::invalid_argument("step_world: dt must be > 0");
    return world_at(scenario, world.sim_time_s + dt);
}

// ---------------------------------------------------------------------------
// Sensor rendering.
// ---------------------------------------------------------------------------

struct MarkingPulse {
    bool left_covered = false;
    bool right_covered = false;
};

// A side reads "covered" while the odometer position (plus phase) falls within
// the painted part of the marking cycle. Both sides share the same cycle.
inline MarkingPulse render_marking_pulse(const WorldState& world, const LaneMarkingSpec& marking) {
    const double period = marking.period_m();
    double pos = std::fmod(world.ego.odometer_m + marking.phase_m, period);
    if (pos < 0.0) pos += period;
    const bool covered = pos < marking.marking_length_m;
    return {covered, covered};
}

// Renders detector output for one world snapshot. Visible on-screen vehicles
// produce their projected boxes, each edge independently jittered, optionally
// dropped, then clamped to the image; Poisson clutter boxes are appended.
// With all noise parameters zero the RNG is never consumed and the boxes equal
// project_vehicle output exactly. frame_index / frame_time_s are left for the
// caller to fill in.
inline DetectionFrame render_detections(const WorldState& world, const CameraModel& camera,
                                        const NoiseSpec& noise, std::mt19937_64& rng) {
    DetectionFrame frame;
    for (const auto& v : world.vehicles) {
        if (!v.visible || v.d_y_m <= 0.0) continue;
        const auto proj = project_vehicle(camera, v.d_x_m, v.d_y_m, v.width_m, v.height_m);
        if (!proj) continue;
        if (noise.miss_rate > 0.0 && std::bernoulli_distribution(noise.miss_rate)(rng)) continue;
        BoundingBox box = proj->box;
        if (noise.box_edge_sigma_px > 0.0) {
            std::normal_distribution<double> jitter(0.0, noise.box_edge_sigma_px);
            box.left_px += jitter(rng);
            box.top_px += jitter(rng);
            box.right_px += jitter(rng);
            box.bottom_px += jitter(rng);
            if (box.left_px > box.right_px) std::swap(box.left_px, box.right_px);
            if (box.top_px > box.bottom_px) std::swap(box.top_px, box.bottom_px);
        }
        const auto clamped = clamp_to_image(camera, box);
        if (!clamped) continue;
        frame.detections.push_back({*clamped, "car", 1.0});
    }
    if (noise.clutter_rate > 0.0) {
        const int n = std::poisson_distribution<int>(noise.clutter_rate)(rng);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        for (int i = 0; i < n; ++i) {
            // Plausible spurious box: car-like aspect, anywhere on screen.
            const double w = (0.02 + 0.11 * u01(rng)) * camera.image_width_px;
            const double h = w * (0.5 + 0.4 * u01(rng));
            const double l = u01(rng) * (camera.image_width_px - w);
            const double t = u01(rng) * (camera.image_height_px - h);
            frame.detections.push_back({{l, t, l + w, t + h}, "car", 0.5});
        }
    }
    return frame;
}

// ---------------------------------------------------------------------------
// Frame-driving wrapper: advances the world to each frame time and renders
// detections plus one lane-marking pulse sample per frame.
// ---------------------------------------------------------------------------

class Simulator {
public:
    struct SimFrame {
        DetectionFrame detections;
        double pulse_time_s = 0.0;
        MarkingPulse pulse;
        WorldState world;  // ground truth at the frame time
    };

    explicit Simulator(Scenario scenario)
        : scenario_(std::move(scenario)), world_(initial_world(scenario_)), rng_(scenario_.noise.seed) {
        scenario_.validate();
    }

    std::int64_t frame_count() const {
        return static_cast<std::int64_t>(std::llround(scenario_.duration_s * scenario_.frame_rate_hz));
    }

    std::optional<SimFrame> next() {
        if (frame_ >= frame_count()) return std::nullopt;
        const double t = static_cast<double>(frame_) / scenario_.frame_rate_hz;
        if (frame_ > 0) world_ = step_world(world_, t - world_.sim_time_s, scenario_);
        SimFrame out;
        out.detections = render_detections(world_, scenario_.camera, scenario_.noise, rng_);
        out.detections.frame_index = frame_;
        out.detections.frame_time_s = t;
        out.pulse_time_s = t;
        out.pulse = render_marking_pulse(world_, scenario_.marking);
        out.world = world_;
        ++frame_;
        return out;
    }

    const Scenario& scenario() const { return scenario_; }
    const WorldState& world() const { return world_; }

private:
    Scenario scenario_;
    WorldState world_;
    std::mt19937_64 rng_;
    std::int64_t frame_ = 0;
};

}  // namespace monorisk
