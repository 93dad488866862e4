// Command-line front end for the monorisk library.
//
//   monorisk simulate  --scenario s.json [--out-detections f] [--out-pulses f]
//                      [--out-truth f] [--out-gps f] [--seed N]
//   monorisk run       --config c.json [--mode staged|sequential] [--risk ttc|mc]
//                      [--rollouts N] [--seed N] [--speed-source lane|gps|none]
//                      [--out-timeline f] [--out-profile f]
//   monorisk profile   --config c.json [same overrides]   (timing table on stdout)
//   monorisk oracle    ttc|idm|gps ...                    (brute-force references)
//
// Exit codes: 0 success, 2 configuration error, 3 input/stream error,
// 1 unexpected failure.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "monorisk/config.hpp"
#include "monorisk/detection_io.hpp"
#include "monorisk/pipeline.hpp"
#include "monorisk/sim_io.hpp"
#include "monorisk/simulator.hpp"

#include "support/oracles.hpp"

namespace {

// Opens `path` for writing, "-" meaning stdout. Returns nullptr when empty.
std::ostream* open_sink(const std::string& path, std::ofstream& file) {
    if (path.empty()) return nullptr;
    if (path == "-") return &std::cout;
    file.open(path);
    if (!file) throw monorisk::ConfigError("cannot open output file: " + path);
    return &file;
}

struct SimulateArgs {
    std::string scenario_path;
    std::string out_detections, out_pulses, out_truth, out_gps;
    double gps_rate_hz = 1.0;
    double gps_origin_lat = 37.0, gps_origin_lon = -122.0;
    std::optional<std::uint64_t> seed;
};

int run_simulate(const SimulateArgs& args) {
    auto scenario = monorisk::load_scenario(args.scenario_path);
    if (args.seed) scenario.noise.seed = *args.seed;

    std::ofstream det_file, pulse_file, truth_file, gps_file;
    std::ostream* det_out = open_sink(args.out_detections, det_file);
    std::ostream* pulse_out = open_sink(args.out_pulses, pulse_file);
    std::ostream* truth_out = open_sink(args.out_truth, truth_file);
    std::ostream* gps_out = open_sink(args.out_gps, gps_file);

    monorisk::Simulator sim(scenario);
    std::optional<monorisk::DetectionStreamWriter> det_writer;
    if (det_out) det_writer.emplace(*det_out);
    std::int64_t frames = 0;
    while (auto frame = sim.next()) {
        if (det_writer) det_writer->write(frame->detections);
        if (pulse_out)
            monorisk::write_pulse_record(
                *pulse_out,
                {frame->pulse_time_s, frame->pulse.left_covered, frame->pulse.right_covered});
        if (truth_out) monorisk::write_ground_truth_record(*truth_out, frame->world);
        ++frames;
    }

    if (gps_out) {
        // Fixes along a due-north track: latitude advances with the odometer.
        constexpr double earth_radius_m = 6371000.0;
        constexpr double rad_to_deg = 180.0 / 3.14159265358979323846;
        for (std::int64_t k = 0;; ++k) {
            const double t = double(k) / args.gps_rate_hz;
            if (t > scenario.duration_s) break;
            const double odo = monorisk::world_at(scenario, t).ego.odometer_m;
            monorisk::write_gps_record(
                *gps_out, {t, args.gps_origin_lat + odo / earth_radius_m * rad_to_deg,
                           args.gps_origin_lon});
        }
    }

    std::cerr << "simulated " << frames << " frames from " << args.scenario_path << "\n";
    return 0;
}

struct RunArgs {
    std::string config_path;
    std::string mode, risk, speed_source;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> rollouts;
    std::string out_timeline, out_profile;
};

monorisk::PipelineConfig configure(const RunArgs& args) {
    auto cfg = monorisk::load_pipeline_config(args.config_path);
    if (!args.mode.empty())
        cfg.mode = args.mode == "staged" ? monorisk::ExecMode::staged
                                         : monorisk::ExecMode::sequential;
    if (!args.risk.empty())
        cfg.risk.mode = args.risk == "ttc" ? monorisk::RiskMode::ttc : monorisk::RiskMode::mc;
    if (!args.speed_source.empty()) {
        if (args.speed_source == "lane")
            cfg.speed_source = monorisk::SpeedSourceSel::lane;
        else if (args.speed_source == "gps")
            cfg.speed_source = monorisk::SpeedSourceSel::gps;
        else
            cfg.speed_source = monorisk::SpeedSourceSel::none;
    }
    if (args.rollouts) cfg.risk.rollouts = *args.rollouts;
    if (args.seed) {
        cfg.seed = *args.seed;
        cfg.risk.seed = *args.seed;
    }
    cfg.validate();
    return cfg;
}

int run_pipeline(const RunArgs& args, bool print_table) {
    const auto cfg = configure(args);

    std::ofstream timeline_file, profile_file;
    // `run` defaults the timeline to stdout; `profile` keeps stdout for the table.
    const std::string timeline_path =
        args.out_timeline.empty() && !print_table ? "-" : args.out_timeline;
    std::ostream* timeline = open_sink(timeline_path, timeline_file);
    std::ostream* profile = open_sink(args.out_profile, profile_file);

    const auto timing = monorisk::run(cfg, timeline);
    if (profile) *profile << monorisk::profile_json(timing).dump(2) << "\n";
    if (print_table)
        std::cout << monorisk::profile_text(timing);
    else
        std::cerr << "processed " << timing.frames << " frames in " << timing.elapsed_s
                  << " s\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"monocular risk-prediction pipeline"};
    app.require_subcommand(1);

    SimulateArgs sim_args;
    auto* sim_cmd = app.add_subcommand("simulate", "generate detection/pulse/truth streams");
    sim_cmd->add_option("--scenario", sim_args.scenario_path, "scenario file")->required();
    sim_cmd->add_option("--out-detections", sim_args.out_detections, "detections output ('-' = stdout)");
    sim_cmd->add_option("--out-pulses", sim_args.out_pulses, "lane-marking pulse output");
    sim_cmd->add_option("--out-truth", sim_args.out_truth, "ground-truth output");
    sim_cmd->add_option("--out-gps", sim_args.out_gps, "synthesized GPS fix output");
    sim_cmd->add_option("--gps-rate-hz", sim_args.gps_rate_hz, "GPS fix rate")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--seed", sim_args.seed, "override the scenario noise seed");

    RunArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "run the pipeline and emit a risk timeline");
    auto* prof_cmd = app.add_subcommand("profile", "run the pipeline and print stage timings");
    for (auto* cmd : {run_cmd, prof_cmd}) {
        cmd->add_option("--config", run_args.config_path, "pipeline config file")->required();
        cmd->add_option("--mode", run_args.mode, "execution mode")
            ->check(CLI::IsMember({"staged", "sequential"}));
        cmd->add_option("--risk", run_args.risk, "risk scoring mode")
            ->check(CLI::IsMember({"ttc", "mc"}));
        cmd->add_option("--rollouts", run_args.rollouts, "Monte Carlo rollouts per frame");
        cmd->add_option("--seed", run_args.seed, "run seed");
        cmd->add_option("--speed-source", run_args.speed_source, "ego speed source")
            ->check(CLI::IsMember({"lane", "gps", "none"}));
        cmd->add_option("--out-timeline", run_args.out_timeline, "timeline output ('-' = stdout)");
        cmd->add_option("--out-profile", run_args.out_profile, "timing report (JSON)");
    }

    auto* oracle_cmd = app.add_subcommand("oracle", "brute-force reference computations");
    oracle_cmd->require_subcommand(1);

    struct {
        double d_x = 0, d_y = 0, v_x = 0, v_y = 0;
        double width = 1.8, length = 4.5, horizon = 10.0, dt = 0.001;
    } ttc_args;
    auto* ttc_cmd = oracle_cmd->add_subcommand("ttc", "fine-step time-to-collision");
    ttc_cmd->add_option("--d-x", ttc_args.d_x)->required();
    ttc_cmd->add_option("--d-y", ttc_args.d_y)->required();
    ttc_cmd->add_option("--v-x", ttc_args.v_x)->required();
    ttc_cmd->add_option("--v-y", ttc_args.v_y)->required();
    ttc_cmd->add_option("--width", ttc_args.width);
    ttc_cmd->add_option("--length", ttc_args.length);
    ttc_cmd->add_option("--horizon", ttc_args.horizon);
    ttc_cmd->add_option("--dt", ttc_args.dt)->check(CLI::PositiveNumber);

    struct {
        double v = 0, v_lead = 0, gap = 0;
        oracles::IdmRef p;
    } idm_args;
    auto* idm_cmd = oracle_cmd->add_subcommand("idm", "car-following acceleration");
    idm_cmd->add_option("--v", idm_args.v)->required();
    idm_cmd->add_option("--v-lead", idm_args.v_lead)->required();
    idm_cmd->add_option("--gap", idm_args.gap)->required()->check(CLI::PositiveNumber);
    idm_cmd->add_option("--v0", idm_args.p.v0);
    idm_cmd->add_option("--headway", idm_args.p.T);
    idm_cmd->add_option("--min-gap", idm_args.p.s0);
    idm_cmd->add_option("--max-accel", idm_args.p.a);
    idm_cmd->add_option("--comfort-decel", idm_args.p.b);
    idm_cmd->add_option("--exponent", idm_args.p.delta);

    struct {
        double lat1 = 0, lon1 = 0, lat2 = 0, lon2 = 0, dt = 1.0;
    } gps_args;
    auto* gps_cmd = oracle_cmd->add_subcommand("gps", "great-circle distance and speed");
    gps_cmd->add_option("--lat1", gps_args.lat1)->required();
    gps_cmd->add_option("--lon1", gps_args.lon1)->required();
    gps_cmd->add_option("--lat2", gps_args.lat2)->required();
    gps_cmd->add_option("--lon2", gps_args.lon2)->required();
    gps_cmd->add_option("--dt", gps_args.dt)->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*sim_cmd) return run_simulate(sim_args);
        if (*run_cmd) return run_pipeline(run_args, false);
        if (*prof_cmd) return run_pipeline(run_args, true);
        if (*ttc_cmd) {
            const auto t = oracles::ttc_fine(ttc_args.d_x, ttc_args.d_y, ttc_args.v_x,
                                             ttc_args.v_y, ttc_args.width, ttc_args.length,
                                             ttc_args.horizon, ttc_args.dt);
            nlohmann::ordered_json out{{"ttc_s", nullptr}};
            if (t) out["ttc_s"] = *t;
            std::cout << out.dump() << "\n";
            return 0;
        }
        if (*idm_cmd) {
            nlohmann::ordered_json out{
                {"accel_mps2", oracles::idm_ref_accel(idm_args.p, idm_args.v, idm_args.v_lead,
                                                      idm_args.gap)}};
            std::cout << out.dump() << "\n";
            return 0;
        }
        if (*gps_cmd) {
            const double d = oracles::great_circle_m(gps_args.lat1, gps_args.lon1, gps_args.lat2,
                                                     gps_args.lon2);
            nlohmann::ordered_json out{{"distance_m", d}, {"speed_mps", d / gps_args.dt}};
            std::cout << out.dump() << "\n";
            return 0;
        }
    } catch (const monorisk::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const monorisk::ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 3;
    } catch (const monorisk::StreamError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
