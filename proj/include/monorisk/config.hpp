#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "monorisk/errors.hpp"
#include "monorisk/pipeline.hpp"

namespace monorisk {

// JSON config loading. All relative paths inside a file resolve against that
// file's directory. Unknown keys are rejected nowhere (forward compatibility);
// missing required keys and bad values raise ConfigError.

namespace detail {

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config file " + path + ": " + e.what());
    }
}

template <typename T>
T require(const nlohmann::json& j, const char* key, const std::string& context) {
    if (!j.contains(key)) throw ConfigError(context + ": missing required key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(context + ": bad value for '" + key + "': " + e.what());
    }
}

template <typename T>
T value_or(const nlohmann::json& j, const char* key, T fallback, const std::string& context) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(context + ": bad value for '" + key + "': " + e.what());
    }
}

inline std::string resolve_path(const std::string& base_dir, const std::string& path) {
    const std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (std::filesystem::path(base_dir) / p).string();
}

}  // namespace detail

inline CameraModel camera_from_json(const nlohmann::json& j, const std::string& context) {
    using detail::require;
    using detail::value_or;
    CameraModel cam;
    cam.focal_length_px = require<double>(j, "focal_length_px", context);
    cam.mount_height_m = require<double>(j, "mount_height_m", context);
    cam.horizon_row_px = require<double>(j, "horizon_row_px", context);
    cam.principal_col_px = require<double>(j, "principal_col_px", context);
    cam.image_width_px = require<double>(j, "image_width_px", context);
    cam.image_height_px = require<double>(j, "image_height_px", context);
    cam.assumed_vehicle_width_m = value_or(j, "assumed_vehicle_width_m", cam.assumed_vehicle_width_m, context);
    cam.assumed_vehicle_length_m = value_or(j, "assumed_vehicle_length_m", cam.assumed_vehicle_length_m, context);
    cam.validate();
    return cam;
}

inline CameraModel load_camera(const std::string& path) {
    return camera_from_json(detail::load_json_file(path), path);
}

namespace detail {

inline std::vector<AccelSegment> accel_from_json(const nlohmann::json& j, const std::string& ctx) {
    std::vector<AccelSegment> out;
    for (const auto& seg : j)
        out.push_back({require<double>(seg, "start_s", ctx), require<double>(seg, "accel_mps2", ctx)});
    return out;
}

inline LaneMarkingSpec marking_from_json(const nlohmann::json& j, const std::string& ctx) {
    LaneMarkingSpec m;
    m.marking_length_m = value_or(j, "marking_length_m", m.marking_length_m, ctx);
    m.gap_length_m = value_or(j, "gap_length_m", m.gap_length_m, ctx);
    m.phase_m = value_or(j, "phase_m", m.phase_m, ctx);
    return m;
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j, const std::string& base_dir,
                                   const std::string& context) {
    using detail::require;
    using detail::value_or;
    Scenario sc;
    sc.name = value_or<std::string>(j, "name", "", context);
    sc.duration_s = require<double>(j, "duration_s", context);
    sc.frame_rate_hz = require<double>(j, "frame_rate_hz", context);
    if (!j.contains("camera")) throw ConfigError(context + ": missing required key 'camera'");
    if (j.at("camera").is_string())
        sc.camera = load_camera(detail::resolve_path(base_dir, j.at("camera").get<std::string>()));
    else
        sc.camera = camera_from_json(j.at("camera"), context + ".camera");
    sc.lane_width_m = value_or(j, "lane_width_m", sc.lane_width_m, context);
    if (j.contains("marking")) sc.marking = detail::marking_from_json(j.at("marking"), context);
    if (j.contains("noise")) {
        const auto& jn = j.at("noise");
        sc.noise.box_edge_sigma_px = value_or(jn, "box_edge_sigma_px", 0.0, context);
        sc.noise.miss_rate = value_or(jn, "miss_rate", 0.0, context);
        sc.noise.clutter_rate = value_or(jn, "clutter_rate", 0.0, context);
        sc.noise.seed = value_or<std::uint64_t>(jn, "seed", 0, context);
    }
    if (j.contains("ego")) {
        const auto& je = j.at("ego");
        sc.ego.speed0_mps = value_or(je, "speed0_mps", 0.0, context);
        sc.ego.lane_index = value_or(je, "lane_index", 0, context);
        if (je.contains("accel")) sc.ego.accel = detail::accel_from_json(je.at("accel"), context);
    }
    if (j.contains("vehicles")) {
        for (const auto& jv : j.at("vehicles")) {
            VehicleScript v;
            v.id = require<int>(jv, "id", context);
            v.d_x0_m = value_or(jv, "d_x0_m", v.d_x0_m, context);
            v.d_y0_m = require<double>(jv, "d_y0_m", context);
            v.v_y0_mps = value_or(jv, "v_y0_mps", v.v_y0_mps, context);
            v.width_m = value_or(jv, "width_m", v.width_m, context);
            v.length_m = value_or(jv, "length_m", v.length_m, context);
            v.height_m = value_or(jv, "height_m", v.height_m, context);
            if (jv.contains("accel")) v.accel = detail::accel_from_json(jv.at("accel"), context);
            if (jv.contains("lane_changes")) {
                for (const auto& jm : jv.at("lane_changes")) {
                    LaneChangeScript m;
                    m.start_s = detail::require<double>(jm, "start_s", context);
                    m.delta_x_m = detail::require<double>(jm, "delta_x_m", context);
                    m.duration_s = value_or(jm, "duration_s", m.duration_s, context);
                    v.lane_changes.push_back(m);
                }
            }
            if (jv.contains("occlusions")) {
                for (const auto& jo : jv.at("occlusions"))
                    v.occlusions.push_back({detail::require<double>(jo, "start_s", context),
                                            detail::require<double>(jo, "end_s", context)});
            }
            sc.vehicles.push_back(std::move(v));
        }
    }
    sc.validate();
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    const std::string dir = std::filesystem::path(path).parent_path().string();
    return scenario_from_json(detail::load_json_file(path), dir, path);
}

namespace detail {

inline IdmParams idm_from_json(const nlohmann::json& j, const IdmParams& base, const std::string& ctx) {
    IdmParams p = base;
    p.desired_speed_mps = value_or(j, "desired_speed_mps", p.desired_speed_mps, ctx);
    p.time_headway_s = value_or(j, "time_headway_s", p.time_headway_s, ctx);
    p.min_gap_m = value_or(j, "min_gap_m", p.min_gap_m, ctx);
    p.max_accel_mps2 = value_or(j, "max_accel_mps2", p.max_accel_mps2, ctx);
    p.comfort_decel_mps2 = value_or(j, "comfort_decel_mps2", p.comfort_decel_mps2, ctx);
    p.exponent = value_or(j, "exponent", p.exponent, ctx);
    return p;
}

inline MobilParams mobil_from_json(const nlohmann::json& j, const MobilParams& base, const std::string& ctx) {
    MobilParams p = base;
    p.politeness = value_or(j, "politeness", p.politeness, ctx);
    p.change_threshold_mps2 = value_or(j, "change_threshold_mps2", p.change_threshold_mps2, ctx);
    p.safe_decel_mps2 = value_or(j, "safe_decel_mps2", p.safe_decel_mps2, ctx);
    return p;
}

inline DriverParams driver_from_json(const nlohmann::json& j, const DriverParams& base, const std::string& ctx) {
    DriverParams p = base;
    if (j.contains("idm")) p.idm = idm_from_json(j.at("idm"), base.idm, ctx);
    if (j.contains("mobil")) p.mobil = mobil_from_json(j.at("mobil"), base.mobil, ctx);
    return p;
}

}  // namespace detail

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j,
                                                const std::string& base_dir,
                                                const std::string& context) {
    using detail::require;
    using detail::resolve_path;
    using detail::value_or;
    PipelineConfig cfg;

    if (!j.contains("input")) throw ConfigError(context + ": missing required key 'input'");
    const auto& ji = j.at("input");
    if (ji.contains("scenario"))
        cfg.input.scenario = load_scenario(resolve_path(base_dir, ji.at("scenario").get<std::string>()));
    if (ji.contains("detections"))
        cfg.input.detections_path = resolve_path(base_dir, ji.at("detections").get<std::string>());
    if (ji.contains("pulses"))
        cfg.input.pulses_path = resolve_path(base_dir, ji.at("pulses").get<std::string>());
    if (ji.contains("gps"))
        cfg.input.gps_path = resolve_path(base_dir, ji.at("gps").get<std::string>());

    // Scenario input fixes the camera, marking geometry, and lane width; file
    // input requires an explicit camera.
    if (cfg.input.scenario) {
        cfg.camera = cfg.input.scenario->camera;
        cfg.marking = cfg.input.scenario->marking;
        cfg.risk.lane_width_m = cfg.input.scenario->lane_width_m;
    } else if (j.contains("camera")) {
        if (j.at("camera").is_string())
            cfg.camera = load_camera(resolve_path(base_dir, j.at("camera").get<std::string>()));
        else
            cfg.camera = camera_from_json(j.at("camera"), context + ".camera");
    } else {
        throw ConfigError(context + ": 'camera' is required when input is a recorded stream");
    }
    if (!cfg.input.scenario && j.contains("marking"))
        cfg.marking = detail::marking_from_json(j.at("marking"), context);

    if (j.contains("tracker")) {
        const auto& jt = j.at("tracker");
        cfg.tracker.particle_count = value_or(jt, "particle_count", cfg.tracker.particle_count, context);
        if (jt.contains("motion_sigma_px")) {
            const auto v = jt.at("motion_sigma_px").get<std::vector<double>>();
            if (v.size() != 4) throw ConfigError(context + ": motion_sigma_px needs 4 entries");
            std::copy(v.begin(), v.end(), cfg.tracker.motion_sigma_px.begin());
        }
        if (jt.contains("observation_sigma_px")) {
            const auto v = jt.at("observation_sigma_px").get<std::vector<double>>();
            if (v.size() != 4) throw ConfigError(context + ": observation_sigma_px needs 4 entries");
            std::copy(v.begin(), v.end(), cfg.tracker.observation_sigma_px.begin());
        }
        cfg.tracker.reference_image_width_px =
            value_or(jt, "reference_image_width_px", cfg.tracker.reference_image_width_px, context);
        cfg.tracker.iou_gate = value_or(jt, "iou_gate", cfg.tracker.iou_gate, context);
        cfg.tracker.min_hits = value_or(jt, "min_hits", cfg.tracker.min_hits, context);
        cfg.tracker.max_occlusion = value_or(jt, "max_occlusion", cfg.tracker.max_occlusion, context);
        cfg.tracker.score_threshold = value_or(jt, "score_threshold", cfg.tracker.score_threshold, context);
    }
    if (j.contains("state")) {
        const auto& js = j.at("state");
        cfg.state.velocity_window = value_or(js, "velocity_window", cfg.state.velocity_window, context);
        cfg.state.history_capacity = value_or(js, "history_capacity", cfg.state.history_capacity, context);
        cfg.state.stale_after_s = value_or(js, "stale_after_s", cfg.state.stale_after_s, context);
    }
    if (j.contains("speed")) {
        const auto& js = j.at("speed");
        const std::string source = value_or<std::string>(js, "source", "none", context);
        if (source == "lane")
            cfg.speed_source = SpeedSourceSel::lane;
        else if (source == "gps")
            cfg.speed_source = SpeedSourceSel::gps;
        else if (source == "none")
            cfg.speed_source = SpeedSourceSel::none;
        else
            throw ConfigError(context + ": speed.source must be lane|gps|none");
        cfg.lane_speed.ema_alpha = value_or(js, "ema_alpha", cfg.lane_speed.ema_alpha, context);
        cfg.lane_speed.side_disagreement_tol =
            value_or(js, "side_disagreement_tol", cfg.lane_speed.side_disagreement_tol, context);
    }
    if (j.contains("risk")) {
        const auto& jr = j.at("risk");
        const std::string mode = value_or<std::string>(jr, "mode", "ttc", context);
        if (mode == "ttc")
            cfg.risk.mode = RiskMode::ttc;
        else if (mode == "mc")
            cfg.risk.mode = RiskMode::mc;
        else
            throw ConfigError(context + ": risk.mode must be ttc|mc");
        cfg.risk.horizon_s = value_or(jr, "horizon_s", cfg.risk.horizon_s, context);
        cfg.risk.dt_s = value_or(jr, "dt_s", cfg.risk.dt_s, context);
        cfg.risk.rollouts = value_or(jr, "rollouts", cfg.risk.rollouts, context);
        if (!cfg.input.scenario)
            cfg.risk.lane_width_m = value_or(jr, "lane_width_m", cfg.risk.lane_width_m, context);
        cfg.risk.lane_change_duration_s =
            value_or(jr, "lane_change_duration_s", cfg.risk.lane_change_duration_s, context);
        if (jr.contains("driver")) {
            const auto& jd = jr.at("driver");
            if (jd.contains("mean"))
                cfg.risk.driver.mean = detail::driver_from_json(jd.at("mean"), cfg.risk.driver.mean, context);
            if (jd.contains("stddev"))
                cfg.risk.driver.stddev =
                    detail::driver_from_json(jd.at("stddev"), cfg.risk.driver.stddev, context);
        }
    }
    // Collision footprint follows the camera's assumed vehicle dimensions.
    cfg.risk.dims = {cfg.camera.assumed_vehicle_width_m, cfg.camera.assumed_vehicle_length_m};

    const std::string mode = value_or<std::string>(j, "mode", "staged", context);
    if (mode == "staged")
        cfg.mode = ExecMode::staged;
    else if (mode == "sequential")
        cfg.mode = ExecMode::sequential;
    else
        throw ConfigError(context + ": mode must be staged|sequential");
    cfg.queue_capacity = value_or<std::size_t>(j, "queue_capacity", cfg.queue_capacity, context);
    cfg.seed = value_or<std::uint64_t>(j, "seed", cfg.seed, context);
    cfg.risk.seed = cfg.seed;
    if (j.contains("vehicle_labels")) {
        cfg.vehicle_labels.clear();
        for (const auto& l : j.at("vehicle_labels")) cfg.vehicle_labels.insert(l.get<std::string>());
    }
    cfg.validate();
    return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    const std::string dir = std::filesystem::path(path).parent_path().string();
    return pipeline_config_from_json(detail::load_json_file(path), dir, path);
}

}  // namespace monorisk
