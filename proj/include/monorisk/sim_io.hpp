#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "monorisk/errors.hpp"
#include "monorisk/simulator.hpp"

namespace monorisk {

// Line-delimited JSON logs emitted by the simulator:
//   ground truth  {"time_s", "ego": {...}, "lane_width_m", "vehicles": [...]}
//   pulse         {"time_s", "left", "right"}
//   gps           {"time_s", "lat", "lon"}

struct PulseSample {
    double time_s = 0.0;
    bool left_covered = false;
    bool right_covered = false;
};

struct GpsFix {
    double time_s = 0.0;
    double lat_deg = 0.0;
    double lon_deg = 0.0;
};

inline void write_ground_truth_record(std::ostream& out, const WorldState& world) {
    nlohmann::ordered_json vehicles = nlohmann::ordered_json::array();
    for (const auto& v : world.vehicles) {
        vehicles.push_back({{"id", v.id},
                            {"d_x", v.d_x_m},
                            {"d_y", v.d_y_m},
                            {"v_x", v.v_x_mps},
                            {"v_y", v.v_y_mps},
                            {"width_m", v.width_m},
                            {"length_m", v.length_m},
                            {"height_m", v.height_m},
                            {"visible", v.visible}});
    }
    nlohmann::ordered_json rec{{"time_s", world.sim_time_s},
                               {"ego",
                                {{"speed_mps", world.ego.speed_mps},
                                 {"lane_index", world.ego.lane_index},
                                 {"odometer_m", world.ego.odometer_m}}},
                               {"lane_width_m", world.lane_width_m},
                               {"vehicles", std::move(vehicles)}};
    out << rec.dump() << '\n';
}

inline std::vector<WorldState> read_ground_truth(std::istream& in) {
    std::vector<WorldState> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto rec = nlohmann::json::parse(line);
            WorldState w;
            w.sim_time_s = rec.at("time_s").get<double>();
            w.lane_width_m = rec.at("lane_width_m").get<double>();
            const auto& ego = rec.at("ego");
            w.ego.speed_mps = ego.at("speed_mps").get<double>();
            w.ego.lane_index = ego.at("lane_index").get<int>();
            w.ego.odometer_m = ego.at("odometer_m").get<double>();
            for (const auto& jv : rec.at("vehicles")) {
                SimVehicle v;
                v.id = jv.at("id").get<int>();
                v.d_x_m = jv.at("d_x").get<double>();
                v.d_y_m = jv.at("d_y").get<double>();
                v.v_x_mps = jv.at("v_x").get<double>();
                v.v_y_mps = jv.at("v_y").get<double>();
                v.width_m = jv.at("width_m").get<double>();
                v.length_m = jv.at("length_m").get<double>();
                v.height_m = jv.at("height_m").get<double>();
                v.visible = jv.at("visible").get<bool>();
                w.vehicles.push_back(v);
            }
            out.push_back(std::move(w));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad ground-truth record: ") + e.what(), line_no);
        }
    }
    return out;
}

inline void write_pulse_record(std::ostream& out, const PulseSample& sample) {
    nlohmann::ordered_json rec{
        {"time_s", sample.time_s}, {"left", sample.left_covered}, {"right", sample.right_covered}};
    out << rec.dump() << '\n';
}

class PulseStreamReader {
public:
    explicit PulseStreamReader(std::istream& in) : in_(&in) {}

    std::optional<PulseSample> next() {
        std::string line;
        while (std::getline(*in_, line)) {
            ++line_;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                const auto rec = nlohmann::json::parse(line);
                PulseSample s;
                s.time_s = rec.at("time_s").get<double>();
                s.left_covered = rec.at("left").get<bool>();
                s.right_covered = rec.at("right").get<bool>();
                return s;
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(std::string("bad pulse record: ") + e.what(), line_);
            }
        }
        return std::nullopt;
    }

private:
    std::istream* in_;
    std::size_t line_ = 0;
};

inline std::vector<PulseSample> read_pulse_log(std::istream& in) {
    PulseStreamReader reader(in);
    std::vector<PulseSample> out;
    while (auto s = reader.next()) out.push_back(*s);
    return out;
}

inline void write_gps_record(std::ostream& out, const GpsFix& fix) {
    nlohmann::ordered_json rec{{"time_s", fix.time_s}, {"lat", fix.lat_deg}, {"lon", fix.lon_deg}};
    out << rec.dump() << '\n';
}

inline std::vector<GpsFix> read_gps_log(std::istream& in) {
    std::vector<GpsFix> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto rec = nlohmann::json::parse(line);
            out.push_back({rec.at("time_s").get<double>(), rec.at("lat").get<double>(),
                           rec.at("lon").get<double>()});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad gps record: ") + e.what(), line_no);
        }
    }
    return out;
}

}  // namespace monorisk
