#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "monorisk/errors.hpp"
#include "monorisk/state_estimator.hpp"

namespace monorisk {

// ---------------------------------------------------------------------------
// Driver model parameters (IDM for longitudinal control, MOBIL for lane
// changes). Defaults are the standard published values.
// ---------------------------------------------------------------------------

struct IdmParams {
    double desired_speed_mps = 33.3;   // v0
    double time_headway_s = 1.5;       // T
    double min_gap_m = 2.0;            // s0
    double max_accel_mps2 = 1.4;       // a
    double comfort_decel_mps2 = 2.0;   // b
    double exponent = 4.0;             // delta
};

struct MobilParams {
    double politeness = 0.5;               // p
    double change_threshold_mps2 = 0.2;    // delta a_th
    double safe_decel_mps2 = 4.0;          // b_safe
};

struct DriverParams {
    IdmParams idm;
    MobilParams mobil;

    void validate() const {
        if (!(idm.desired_speed_mps > 0.0)) throw ConfigError("idm: desired_speed must be > 0");
        if (!(idm.time_headway_s > 0.0)) throw ConfigError("idm: time_headway must be > 0");
        if (!(idm.min_gap_m > 0.0)) throw ConfigError("idm: min_gap must be > 0");
        if (!(idm.max_accel_mps2 > 0.0)) throw ConfigError("idm: max_accel must be > 0");
        if (!(idm.comfort_decel_mps2 > 0.0)) throw ConfigError("idm: comfort_decel must be > 0");
        if (!(mobil.politeness >= 0.0 && mobil.politeness <= 1.0))
            throw ConfigError("mobil: politeness must be in [0, 1]");
        if (!(mobil.safe_decel_mps2 > 0.0)) throw ConfigError("mobil: safe_decel must be > 0");
    }
};

// Sampling distribution over driver parameters: independent Gaussians around
// mean with the given std-devs, truncated (clamped) to valid ranges. Default
// std-devs are 10% of the default means.
struct DriverModelParams {
    DriverParams mean;
    DriverParams stddev{{3.33, 0.15, 0.2, 0.14, 0.2, 0.4}, {0.05, 0.02, 0.4}};
};

namespace detail {

inline double maybe_normal(double mean, double sigma, std::mt19937_64& rng) {
    if (sigma <= 0.0) return mean;
    return std::normal_distribution<double>(mean, sigma)(rng);
}

inline double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

}  // namespace detail

// One concrete parameter draw, clamped into physically valid ranges. The
// field order is fixed so a given rng state always yields the same draw.
inline DriverParams sample_driver_params(const DriverModelParams& dist, std::mt19937_64& rng) {
    using detail::clamp;
    using detail::maybe_normal;
    const DriverParams& m = dist.mean;
    const DriverParams& s = dist.stddev;
    DriverParams out;
    out.idm.desired_speed_mps = clamp(maybe_normal(m.idm.desired_speed_mps, s.idm.desired_speed_mps, rng), 1.0, 70.0);
    out.idm.time_headway_s = clamp(maybe_normal(m.idm.time_headway_s, s.idm.time_headway_s, rng), 0.2, 5.0);
    out.idm.min_gap_m = clamp(maybe_normal(m.idm.min_gap_m, s.idm.min_gap_m, rng), 0.2, 10.0);
    out.idm.max_accel_mps2 = clamp(maybe_normal(m.idm.max_accel_mps2, s.idm.max_accel_mps2, rng), 0.2, 6.0);
    out.idm.comfort_decel_mps2 = clamp(maybe_normal(m.idm.comfort_decel_mps2, s.idm.comfort_decel_mps2, rng), 0.2, 8.0);
    out.idm.exponent = clamp(maybe_normal(m.idm.exponent, s.idm.exponent, rng), 1.0, 10.0);
    out.mobil.politeness = clamp(maybe_normal(m.mobil.politeness, s.mobil.politeness, rng), 0.0, 1.0);
    out.mobil.change_threshold_mps2 = clamp(maybe_normal(m.mobil.change_threshold_mps2, s.mobil.change_threshold_mps2, rng), 0.0, 2.0);
    out.mobil.safe_decel_mps2 = clamp(maybe_normal(m.mobil.safe_decel_mps2, s.mobil.safe_decel_mps2, rng), 0.5, 10.0);
    return out;
}

// ---------------------------------------------------------------------------
// IDM / MOBIL
// ---------------------------------------------------------------------------

// Intelligent Driver Model acceleration:
//   a * [1 - (v/v0)^delta - (s*/gap)^2],  s* = s0 + v T + v (v - v_lead) / (2 sqrt(a b))
// gap = +inf selects the free-road law; gap <= 0 is already a violation and
// returns emergency braking at -b_safe.
inline double idm_accel(const DriverParams& p, double v, double v_lead, double gap) {
    if (gap <= 0.0) return -p.mobil.safe_decel_mps2;
    const double free_term = std::pow(v / p.idm.desired_speed_mps, p.idm.exponent);
    double interaction = 0.0;
    if (std::isfinite(gap)) {
        const double s_star = p.idm.min_gap_m + v * p.idm.time_headway_s +
                              v * (v - v_lead) /
                                  (2.0 * std::sqrt(p.idm.max_accel_mps2 * p.idm.comfort_decel_mps2));
        interaction = (s_star / gap) * (s_star / gap);
    }
    return p.idm.max_accel_mps2 * (1.0 - free_term - interaction);
}

enum class LaneDecision { stay, change_left, change_right };

// Hypothetical accelerations around one candidate lane change: the changing
// car, the follower it would acquire, and the follower it would leave behind.
// Absent neighbours are encoded as before == after == 0 (no influence, safety
// trivially satisfied).
struct MobilContext {
    double own_before = 0.0;
    double own_after = 0.0;
    double new_follower_before = 0.0;
    double new_follower_after = 0.0;
    double old_follower_before = 0.0;
    double old_follower_after = 0.0;
};

inline double mobil_incentive(const MobilParams& p, const MobilContext& c) {
    return (c.own_after - c.own_before) +
           p.politeness * ((c.new_follower_after - c.new_follower_before) +
                           (c.old_follower_after - c.old_follower_before));
}

// MOBIL criterion: change when incentive exceeds the threshold and the new
// follower is not forced below -b_safe. Both sides qualifying resolves to the
// larger incentive, left on an exact tie; an incentive exactly at the
// threshold stays.
inline LaneDecision mobil_decide(const MobilParams& p, const std::optional<MobilContext>& left,
                                 const std::optional<MobilContext>& right) {
    const double none = -std::numeric_limits<double>::infinity();
    double li = none, ri = none;
    bool lq = false, rq = false;
    if (left) {
        li = mobil_incentive(p, *left);
        lq = left->new_follower_after >= -p.safe_decel_mps2 && li > p.change_threshold_mps2;
    }
    if (right) {
        ri = mobil_incentive(p, *right);
        rq = right->new_follower_after >= -p.safe_decel_mps2 && ri > p.change_threshold_mps2;
    }
    if (lq && rq) return li >= ri ? LaneDecision::change_left : LaneDecision::change_right;
    if (lq) return LaneDecision::change_left;
    if (rq) return LaneDecision::change_right;
    return LaneDecision::stay;
}

// ---------------------------------------------------------------------------
// Time to collision under constant relative velocity.
// ---------------------------------------------------------------------------

// Collision footprint assumed for every vehicle (monocular ranging recovers
// no true extents). Two equal rectangles overlap when the center offsets are
// within one full length / width.
struct CollisionDims {
    double width_m = 1.8;
    double length_m = 4.5;
};

// Steps the object forward at its constant relative velocity and returns the
// first sampled time (including t = 0) where the rectangles overlap, or
// nullopt if none within the horizon.
inline std::optional<double> ttc(const CollisionDims& dims, const VehicleState& object,
                                 double horizon_s, double dt_s) {
    if (!(horizon_s > 0.0) || !(dt_s > 0.0))
        throw std::invalid_argument("ttc: horizon_s and dt_s must be > 0");
    const long steps = static_cast<long>(std::floor(horizon_s / dt_s + 1e-9));
    for (long k = 0; k <= steps; ++k) {
        const double t = double(k) * dt_s;
        const double dy = object.d_y + object.v_y * t;
        const double dx = object.d_x + object.v_x * t;
        if (std::abs(dy) <= dims.length_m && std::abs(dx) <= dims.width_m) return t;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Risk reports.
// ---------------------------------------------------------------------------

enum class RiskMode { ttc, mc };

struct RiskReport {
    double frame_time_s = 0.0;
    // max over objects of 1/TTC (ttc mode) or mean inverse collision time over
    // rollouts (mc mode). +infinity for an immediate (t = 0) collision.
    double risk = 0.0;
    std::map<int, std::optional<double>> per_object_ttc;
    RiskMode mode = RiskMode::ttc;
    int rollout_count = 0;  // mc only
};

struct RiskConfig {
    RiskMode mode = RiskMode::ttc;
    double horizon_s = 10.0;
    double dt_s = 0.1;
    int rollouts = 10;
    DriverModelParams driver;
    CollisionDims dims;
    double lane_width_m = 3.7;
    double lane_change_duration_s = 3.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(horizon_s > 0.0)) throw ConfigError("risk: horizon_s must be > 0");
        if (!(dt_s > 0.0)) throw ConfigError("risk: dt_s must be > 0");
        if (rollouts < 1) throw ConfigError("risk: rollouts must be >= 1");
        if (!(lane_width_m > 0.0)) throw ConfigError("risk: lane_width_m must be > 0");
        if (!(lane_change_duration_s > 0.0))
            throw ConfigError("risk: lane_change_duration_s must be > 0");
        if (!(dims.width_m > 0.0 && dims.length_m > 0.0))
            throw ConfigError("risk: collision dims must be > 0");
        driver.mean.validate();
    }
};

inline double inverse_time_risk(double t) {
    return t > 0.0 ? 1.0 / t : std::numeric_limits<double>::infinity();
}

inline RiskReport risk_ttc(const SceneEstimate& scene, const RiskConfig& config) {
    RiskReport report;
    report.frame_time_s = scene.frame_time_s;
    report.mode = RiskMode::ttc;
    for (const auto& [id, state] : scene.objects) {
        const auto t = ttc(config.dims, state, config.horizon_s, config.dt_s);
        report.per_object_ttc[id] = t;
        if (t) report.risk = std::max(report.risk, inverse_time_risk(*t));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Monte Carlo rollouts: every vehicle (ego included) follows IDM; observed
// vehicles may additionally change lanes per MOBIL. Lanes are the integer
// grid of lane_width_m centered on the ego lane; the candidate lane range is
// what the initial scene occupies, so a single-lane scene stays single-lane.
// ---------------------------------------------------------------------------

struct RolloutParams {
    DriverParams ego;
    std::map<int, DriverParams> objects;  // one entry per scene object
};

inline RolloutParams sample_rollout_params(const SceneEstimate& scene,
                                           const DriverModelParams& dist, std::mt19937_64& rng) {
    RolloutParams out;
    out.ego = sample_driver_params(dist, rng);
    for (const auto& [id, state] : scene.objects) {
        (void)state;
        out.objects.emplace(id, sample_driver_params(dist, rng));
    }
    return out;
}

namespace detail {

struct RolloutCar {
    bool is_ego = false;
    double y = 0.0;    // longitudinal center position, ego starts at 0
    double v = 0.0;    // absolute speed, >= 0
    double lat = 0.0;  // lateral center position, ego lane center = 0
    int lane = 0;
    bool changing = false;
    double change_start_t = 0.0;
    double lat_from = 0.0;
    double lat_to = 0.0;
    DriverParams params;
    double accel = 0.0;
};

// Index of the nearest car ahead of car i in the given lane, or -1.
inline int lead_index(const std::vector<RolloutCar>& cars, std::size_t i, int lane) {
    int best = -1;
    for (std::size_t j = 0; j < cars.size(); ++j) {
        if (j == i || cars[j].lane != lane) continue;
        if (cars[j].y <= cars[i].y) continue;
        if (best < 0 || cars[j].y < cars[std::size_t(best)].y) best = int(j);
    }
    return best;
}

// Index of the nearest car behind car i in the given lane, or -1.
inline int follow_index(const std::vector<RolloutCar>& cars, std::size_t i, int lane) {
    int best = -1;
    for (std::size_t j = 0; j < cars.size(); ++j) {
        if (j == i || cars[j].lane != lane) continue;
        if (cars[j].y >= cars[i].y) continue;
        if (best < 0 || cars[j].y > cars[std::size_t(best)].y) best = int(j);
    }
    return best;
}

inline double pair_gap(const RolloutCar& follower, const RolloutCar& leader, double length_m) {
    return (leader.y - follower.y) - length_m;  // bumper gap, equal assumed lengths
}

// Half-cosine ramp from 0 to 1, C1-smooth at both ends.
inline double ramp01(double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return 0.5 * (1.0 - std::cos(std::numbers::pi * u));
}

inline double car_accel(const std::vector<RolloutCar>& cars, std::size_t i, int lane,
                        double length_m) {
    const int lead = lead_index(cars, i, lane);
    if (lead < 0) return idm_accel(cars[i].params, cars[i].v, 0.0,
                                   std::numeric_limits<double>::infinity());
    const RolloutCar& l = cars[std::size_t(lead)];
    return idm_accel(cars[i].params, cars[i].v, l.v, pair_gap(cars[i], l, length_m));
}

}  // namespace detail

// Simulates the scene forward and returns the first time the ego rectangle
// overlaps any object rectangle, or nullopt if none within the horizon.
// Deterministic given the parameter draw.
inline std::optional<double> rollout(const SceneEstimate& scene, const RolloutParams& params,
                                     const RiskConfig& config) {
    using detail::RolloutCar;
    if (!scene.ego_speed_mps)
        throw ConfigError("rollout requires an ego speed estimate (mc mode)");
    if (scene.objects.empty()) return std::nullopt;
    const double ego_v = std::max(0.0, *scene.ego_speed_mps);
    const double length = config.dims.length_m;
    const double width = config.dims.width_m;

    std::vector<RolloutCar> cars;
    cars.reserve(scene.objects.size() + 1);
    RolloutCar ego;
    ego.is_ego = true;
    ego.v = ego_v;
    ego.params = params.ego;
    cars.push_back(ego);
    int lane_lo = 0, lane_hi = 0;
    for (const auto& [id, st] : scene.objects) {
        RolloutCar c;
        c.y = st.d_y;
        c.v = std::max(0.0, ego_v + st.v_y);
        c.lat = st.d_x;
        c.lane = int(std::lround(st.d_x / config.lane_width_m));
        c.params = params.objects.count(id) ? params.objects.at(id) : params.ego;
        lane_lo = std::min(lane_lo, c.lane);
        lane_hi = std::max(lane_hi, c.lane);
        cars.push_back(c);
    }

    const auto collided = [&](const RolloutCar& a, const RolloutCar& b) {
        return std::abs(a.y - b.y) <= length && std::abs(a.lat - b.lat) <= width;
    };
    for (std::size_t i = 1; i < cars.size(); ++i)
        if (collided(cars[0], cars[i])) return 0.0;

    const long steps = static_cast<long>(std::floor(config.horizon_s / config.dt_s + 1e-9));
    for (long k = 1; k <= steps; ++k) {
        const double t = double(k) * config.dt_s;

        for (std::size_t i = 0; i < cars.size(); ++i)
            cars[i].accel = detail::car_accel(cars, i, cars[i].lane, length);

        // Lane-change decisions in scene order; a committed change moves the
        // car to its target lane immediately for gap bookkeeping while the
        // lateral position ramps over lane_change_duration_s.
        for (std::size_t i = 1; i < cars.size(); ++i) {
            RolloutCar& c = cars[i];
            if (c.changing) continue;
            std::optional<MobilContext> left, right;
            for (int dir : {-1, +1}) {
                const int target = c.lane + dir;
                if (target < lane_lo || target > lane_hi) continue;
                MobilContext ctx;
                ctx.own_before = c.accel;
                ctx.own_after = detail::car_accel(cars, i, target, length);
                const int nf = detail::follow_index(cars, i, target);
                if (nf >= 0) {
                    const RolloutCar& f = cars[std::size_t(nf)];
                    ctx.new_follower_before = f.accel;
                    ctx.new_follower_after =
                        idm_accel(f.params, f.v, c.v, detail::pair_gap(f, c, length));
                }
                const int of = detail::follow_index(cars, i, c.lane);
                if (of >= 0) {
                    const RolloutCar& f = cars[std::size_t(of)];
                    ctx.old_follower_before = f.accel;
                    const int lead = detail::lead_index(cars, i, c.lane);
                    ctx.old_follower_after =
                        lead >= 0 ? idm_accel(f.params, f.v, cars[std::size_t(lead)].v,
                                              detail::pair_gap(f, cars[std::size_t(lead)], length))
                                  : idm_accel(f.params, f.v, 0.0,
                                              std::numeric_limits<double>::infinity());
                }
                (dir < 0 ? left : right) = ctx;
            }
            const LaneDecision d = mobil_decide(c.params.mobil, left, right);
            if (d == LaneDecision::stay) continue;
            const int target = c.lane + (d == LaneDecision::change_left ? -1 : +1);
            c.lane = target;
            c.changing = true;
            c.change_start_t = t - config.dt_s;
            c.lat_from = c.lat;
            c.lat_to = double(target) * config.lane_width_m;
        }

        for (auto& c : cars) {
            c.v = std::max(0.0, c.v + c.accel * config.dt_s);
            c.y += c.v * config.dt_s;
            if (c.changing) {
                const double u = (t - c.change_start_t) / config.lane_change_duration_s;
                c.lat = c.lat_from + (c.lat_to - c.lat_from) * detail::ramp01(u);
                if (u >= 1.0) {
                    c.lat = c.lat_to;
                    c.changing = false;
                }
            }
        }

        for (std::size_t i = 1; i < cars.size(); ++i)
            if (collided(cars[0], cars[i])) return t;
    }
    return std::nullopt;
}

// Splits one seed into independent per-rollout streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Monte Carlo risk: mean over rollouts of the inverse collision time (0 for
// rollouts with no collision). Parameter draws are derived from (seed,
// rollout index) only, so results are reproducible and independent of
// evaluation order; with zero sampling variance every rollout is identical
// and the mean is bit-exact regardless of seed. per_object_ttc carries the
// constant-velocity TTCs for reporting parity with ttc mode.
inline RiskReport risk_mc(const SceneEstimate& scene, const RiskConfig& config,
                          std::uint64_t seed) {
    if (config.rollouts < 1) throw ConfigError("risk_mc: rollouts must be >= 1");
    RiskReport report;
    report.frame_time_s = scene.frame_time_s;
    report.mode = RiskMode::mc;
    report.rollout_count = config.rollouts;
    for (const auto& [id, state] : scene.objects)
        report.per_object_ttc[id] = ttc(config.dims, state, config.horizon_s, config.dt_s);
    if (scene.objects.empty()) return report;

    std::vector<double> values;
    values.reserve(std::size_t(config.rollouts));
    for (int i = 0; i < config.rollouts; ++i) {
        std::mt19937_64 rng(mix_seed(seed, std::uint64_t(i)));
        const RolloutParams params = sample_rollout_params(scene, config.driver, rng);
        const auto t = rollout(scene, params, config);
        values.push_back(t ? inverse_time_risk(*t) : 0.0);
    }
    bool finite = true;
    for (double v : values)
        if (!std::isfinite(v)) finite = false;
    if (!finite) {
        report.risk = std::numeric_limits<double>::infinity();
        return report;
    }
    // Shifted mean: exact (no rounding) when all values are identical, which
    // keeps zero-variance runs bit-equal across seeds and rollout counts.
    double acc = 0.0;
    for (double v : values) acc += (v - values.front());
    report.risk = values.front() + acc / double(values.size());
    return report;
}

}  // namespace monorisk
