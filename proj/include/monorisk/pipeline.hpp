#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "monorisk/channel.hpp"
#include "monorisk/detection_io.hpp"
#include "monorisk/ego_speed.hpp"
#include "monorisk/errors.hpp"
#include "monorisk/risk.hpp"
#include "monorisk/sim_io.hpp"
#include "monorisk/simulator.hpp"
#include "monorisk/state_estimator.hpp"
#include "monorisk/tracker.hpp"

namespace monorisk {

enum class ExecMode { staged, sequential };
enum class SpeedSourceSel { lane, gps, none };

// Exactly one of scenario / detections_path drives the pipeline.
struct PipelineInput {
    std::optional<Scenario> scenario;
    std::optional<std::string> detections_path;
    std::optional<std::string> pulses_path;  // lane-speed pulses for recorded runs
    std::optional<std::string> gps_path;
};

struct PipelineConfig {
    PipelineInput input;
    CameraModel camera;
    TrackerConfig tracker;
    StateEstimatorConfig state;
    LaneSpeedConfig lane_speed;
    LaneMarkingSpec marking;
    SpeedSourceSel speed_source = SpeedSourceSel::none;
    RiskConfig risk;
    ExecMode mode = ExecMode::staged;
    std::size_t queue_capacity = 4;
    std::uint64_t seed = 0;
    std::set<std::string> vehicle_labels{"car"};

    void validate() const {
        const int sources = (input.scenario ? 1 : 0) + (input.detections_path ? 1 : 0);
        if (sources != 1)
            throw ConfigError("exactly one input source (scenario or detections) is required");
        if (queue_capacity < 1) throw ConfigError("queue_capacity must be >= 1");
        camera.validate();
        tracker.validate();
        state.validate();
        lane_speed.validate();
        marking.validate();
        risk.validate();
        if (speed_source == SpeedSourceSel::lane && !input.scenario && !input.pulses_path)
            throw ConfigError("lane speed source requires a pulse log (or scenario input)");
        if (speed_source == SpeedSourceSel::gps && !input.gps_path)
            throw ConfigError("gps speed source requires a gps log");
        if (vehicle_labels.empty()) throw ConfigError("vehicle_labels must be nonempty");
    }
};

// Everything the pipeline derived for one frame; all sub-results share
// frame_time_s.
struct FrameResult {
    std::int64_t frame_index = 0;
    double frame_time_s = 0.0;
    std::map<int, TrackedBox> tracked;
    std::map<int, EstimatedObject> objects;
    std::optional<SpeedEstimate> speed;
    SceneEstimate scene;
    RiskReport risk;
};

using FrameCallback = std::function<void(const FrameResult&)>;

// ---------------------------------------------------------------------------
// Profiling.
// ---------------------------------------------------------------------------

struct StageTiming {
    struct Stage {
        std::string name;
        std::vector<double> frame_ms;  // raw per-frame wall-clock samples

        double total_ms() const {
            double s = 0.0;
            for (double v : frame_ms) s += v;
            return s;
        }
        double mean_ms() const { return frame_ms.empty() ? 0.0 : total_ms() / double(frame_ms.size()); }
    };

    std::vector<Stage> stages;
    std::size_t frames = 0;
    double elapsed_s = 0.0;
    // Queue occupancy peaks (staged mode only); bounded by queue capacity.
    std::vector<std::pair<std::string, std::size_t>> queue_high_water;

    double fps() const { return elapsed_s > 0.0 ? double(frames) / elapsed_s : 0.0; }
};

inline nlohmann::ordered_json profile_json(const StageTiming& timing) {
    nlohmann::ordered_json stages = nlohmann::ordered_json::array();
    for (const auto& s : timing.stages)
        stages.push_back({{"name", s.name},
                          {"frames", s.frame_ms.size()},
                          {"mean_ms", s.mean_ms()},
                          {"total_ms", s.total_ms()}});
    nlohmann::ordered_json queues = nlohmann::ordered_json::array();
    for (const auto& [name, hwm] : timing.queue_high_water)
        queues.push_back({{"name", name}, {"high_water", hwm}});
    return {{"frames", timing.frames},
            {"elapsed_s", timing.elapsed_s},
            {"fps", timing.fps()},
            {"stages", std::move(stages)},
            {"queues", std::move(queues)}};
}

// Human-readable table. Also reports the gap between summed stage time and
// wall-clock elapsed (thread handoff and other untracked time).
inline std::string profile_text(const StageTiming& timing) {
    std::ostringstream out;
    out << "stage        frames   mean ms     total ms\n";
    double sum_ms = 0.0;
    for (const auto& s : timing.stages) {
        char line[128];
        std::snprintf(line, sizeof(line), "%-12s %6zu %9.4f %12.3f\n", s.name.c_str(),
                      s.frame_ms.size(), s.mean_ms(), s.total_ms());
        out << line;
        sum_ms += s.total_ms();
    }
    char tail[256];
    std::snprintf(tail, sizeof(tail),
                  "frames %zu, elapsed %.3f s, %.2f FPS; stage sum %.3f s, untracked %.3f s\n",
                  timing.frames, timing.elapsed_s, timing.fps(), sum_ms / 1000.0,
                  std::max(0.0, timing.elapsed_s - sum_ms / 1000.0));
    out << tail;
    if (!timing.queue_high_water.empty()) {
        out << "queue high-water:";
        for (const auto& [name, hwm] : timing.queue_high_water) out << ' ' << name << '=' << hwm;
        out << '\n';
    }
    return out.str();
}

struct ProfileSummary {
    struct Row {
        std::string name;
        std::size_t frames = 0;
        double mean_ms = 0.0;
        double total_ms = 0.0;
    };
    std::size_t frames = 0;
    double elapsed_s = 0.0;
    double fps = 0.0;
    std::vector<Row> stages;
};

inline ProfileSummary summarize(const StageTiming& timing) {
    ProfileSummary s;
    s.frames = timing.frames;
    s.elapsed_s = timing.elapsed_s;
    s.fps = timing.fps();
    for (const auto& st : timing.stages)
        s.stages.push_back({st.name, st.frame_ms.size(), st.mean_ms(), st.total_ms()});
    return s;
}

inline ProfileSummary parse_profile_json(std::istream& in) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad profile report: ") + e.what());
    }
    try {
        ProfileSummary s;
        s.frames = j.at("frames").get<std::size_t>();
        s.elapsed_s = j.at("elapsed_s").get<double>();
        s.fps = j.at("fps").get<double>();
        for (const auto& row : j.at("stages"))
            s.stages.push_back({row.at("name").get<std::string>(), row.at("frames").get<std::size_t>(),
                                row.at("mean_ms").get<double>(), row.at("total_ms").get<double>()});
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad profile report: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Risk timeline: one JSON record per frame, bit-stable for a given result
// stream. A non-finite risk (immediate collision, 1/0) is encoded as null.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json timeline_json(const FrameResult& r) {
    nlohmann::ordered_json objects = nlohmann::ordered_json::array();
    for (const auto& [id, st] : r.scene.objects) {
        nlohmann::ordered_json o{
            {"id", id}, {"d_x", st.d_x}, {"d_y", st.d_y}, {"v_x", st.v_x}, {"v_y", st.v_y}};
        const auto it = r.risk.per_object_ttc.find(id);
        if (it != r.risk.per_object_ttc.end() && it->second)
            o["ttc_s"] = *it->second;
        else
            o["ttc_s"] = nullptr;
        objects.push_back(std::move(o));
    }
    nlohmann::ordered_json rec{{"time_s", r.frame_time_s}};
    if (std::isfinite(r.risk.risk))
        rec["risk"] = r.risk.risk;
    else
        rec["risk"] = nullptr;
    if (r.speed)
        rec["ego_speed_mps"] = r.speed->speed_mps;
    else
        rec["ego_speed_mps"] = nullptr;
    rec["objects"] = std::move(objects);
    return rec;
}

inline void write_timeline_record(std::ostream& out, const FrameResult& r) {
    out << timeline_json(r).dump() << '\n';
}

struct TimelineObject {
    int id = 0;
    double d_x = 0.0, d_y = 0.0, v_x = 0.0, v_y = 0.0;
    std::optional<double> ttc_s;
};

struct TimelineRecord {
    double time_s = 0.0;
    double risk = 0.0;  // +inf when the stored value was null
    std::optional<double> ego_speed_mps;
    std::vector<TimelineObject> objects;
};

inline std::vector<TimelineRecord> read_timeline(std::istream& in) {
    std::vector<TimelineRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            TimelineRecord rec;
            rec.time_s = j.at("time_s").get<double>();
            rec.risk = j.at("risk").is_null() ? std::numeric_limits<double>::infinity()
                                              : j.at("risk").get<double>();
            if (!j.at("ego_speed_mps").is_null())
                rec.ego_speed_mps = j.at("ego_speed_mps").get<double>();
            for (const auto& jo : j.at("objects")) {
                TimelineObject o;
                o.id = jo.at("id").get<int>();
                o.d_x = jo.at("d_x").get<double>();
                o.d_y = jo.at("d_y").get<double>();
                o.v_x = jo.at("v_x").get<double>();
                o.v_y = jo.at("v_y").get<double>();
                if (!jo.at("ttc_s").is_null()) o.ttc_s = jo.at("ttc_s").get<double>();
                rec.objects.push_back(o);
            }
            out.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad timeline record: ") + e.what(), line_no);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stages. Each owns its state exclusively; staged mode runs one thread per
// stage, sequential mode calls the same objects in a single loop, so both
// modes produce identical result streams.
// ---------------------------------------------------------------------------

namespace detail {

struct SourceItem {
    DetectionFrame frame;
    std::vector<PulseSample> pulses;  // samples at or before this frame's time
};

class FrameSource {
public:
    virtual ~FrameSource() = default;
    virtual std::optional<SourceItem> next() = 0;
};

class SimFrameSource : public FrameSource {
public:
    explicit SimFrameSource(const Scenario& scenario) : sim_(scenario) {}

    std::optional<SourceItem> next() override {
        auto f = sim_.next();
        if (!f) return std::nullopt;
        SourceItem item;
        item.frame = std::move(f->detections);
        item.pulses.push_back({f->pulse_time_s, f->pulse.left_covered, f->pulse.right_covered});
        return item;
    }

private:
    Simulator sim_;
};

class FileFrameSource : public FrameSource {
public:
    FileFrameSource(const std::string& detections_path,
                    const std::optional<std::string>& pulses_path) {
        det_in_.open(detections_path);
        if (!det_in_) throw ParseError("cannot open detections file: " + detections_path);
        reader_.emplace(det_in_);
        if (pulses_path) {
            pulse_in_.open(*pulses_path);
            if (!pulse_in_) throw ParseError("cannot open pulse file: " + *pulses_path);
            pulse_reader_.emplace(pulse_in_);
        }
    }

    std::optional<SourceItem> next() override {
        auto frame = reader_->next();
        if (!frame) return std::nullopt;
        SourceItem item;
        item.frame = std::move(*frame);
        if (pulse_reader_) {
            while (true) {
                if (!pending_) {
                    pending_ = pulse_reader_->next();
                    if (!pending_) break;
                }
                if (pending_->time_s <= item.frame.frame_time_s) {
                    item.pulses.push_back(*pending_);
                    pending_.reset();
                } else {
                    break;
                }
            }
        }
        return item;
    }

private:
    std::ifstream det_in_;
    std::ifstream pulse_in_;
    std::optional<DetectionStreamReader> reader_;
    std::optional<PulseStreamReader> pulse_reader_;
    std::optional<PulseSample> pending_;
};

inline std::unique_ptr<FrameSource> make_source(const PipelineConfig& config) {
    if (config.input.scenario) return std::make_unique<SimFrameSource>(*config.input.scenario);
    return std::make_unique<FileFrameSource>(*config.input.detections_path,
                                             config.input.pulses_path);
}

class TrackerStage {
public:
    explicit TrackerStage(const PipelineConfig& config)
        : labels_(config.vehicle_labels),
          bank_(config.tracker, config.camera.image_width_px, mix_seed(config.seed, 1)) {}

    struct Out {
        std::int64_t frame_index = 0;
        double frame_time_s = 0.0;
        std::map<int, TrackedBox> tracked;
    };

    Out process(const DetectionFrame& frame) {
        return {frame.frame_index, frame.frame_time_s,
                bank_.step(filter_vehicle_classes(frame, labels_))};
    }

private:
    std::set<std::string> labels_;
    TrackerBank bank_;
};

class StateStage {
public:
    explicit StateStage(const PipelineConfig& config)
        : estimator_(config.camera, config.state) {}

    std::map<int, EstimatedObject> process(double frame_time_s,
                                           const std::map<int, TrackedBox>& tracked) {
        return estimator_.update(frame_time_s, tracked);
    }

private:
    StateEstimator estimator_;
};

class SpeedStage {
public:
    explicit SpeedStage(const PipelineConfig& config) {
        if (config.speed_source == SpeedSourceSel::lane) {
            lane_.emplace(config.marking, config.lane_speed);
        } else if (config.speed_source == SpeedSourceSel::gps) {
            std::ifstream in(*config.input.gps_path);
            if (!in) throw ParseError("cannot open gps file: " + *config.input.gps_path);
            const auto fixes = read_gps_log(in);
            const auto estimates = gps_speed(fixes);
            // Estimate i becomes available at the time of fix i+1 (skipped
            // duplicate-timestamp pairs keep this aligned via confidence span).
            std::size_t e = 0;
            for (std::size_t i = 1; i < fixes.size() && e < estimates.size(); ++i) {
                if (fixes[i].time_s == fixes[i - 1].time_s) continue;
                gps_schedule_.emplace_back(fixes[i].time_s, estimates[e]);
                ++e;
            }
        }
    }

    std::optional<SpeedEstimate> process(const std::vector<PulseSample>& pulses,
                                         double frame_time_s) {
        if (lane_) {
            for (const auto& p : pulses)
                if (auto e = lane_->update_pulse(p)) current_ = *e;
        } else {
            while (gps_pos_ < gps_schedule_.size() &&
                   gps_schedule_[gps_pos_].first <= frame_time_s) {
                current_ = gps_schedule_[gps_pos_].second;
                ++gps_pos_;
            }
        }
        return current_;
    }

private:
    std::optional<LaneSpeedEstimator> lane_;
    std::vector<std::pair<double, SpeedEstimate>> gps_schedule_;
    std::size_t gps_pos_ = 0;
    std::optional<SpeedEstimate> current_;
};

class RiskStage {
public:
    RiskStage(const RiskConfig& config, std::uint64_t run_seed)
        : config_(config), seed_(mix_seed(run_seed, 2)) {}

    FrameResult process(TrackerStage::Out&& tr, std::map<int, EstimatedObject>&& objects,
                        const std::optional<SpeedEstimate>& speed) {
        FrameResult r;
        r.frame_index = tr.frame_index;
        r.frame_time_s = tr.frame_time_s;
        r.tracked = std::move(tr.tracked);
        r.objects = std::move(objects);
        r.speed = speed;
        r.scene.frame_time_s = r.frame_time_s;
        if (speed) r.scene.ego_speed_mps = speed->speed_mps;
        for (const auto& [id, eo] : r.objects) r.scene.objects.emplace(id, eo.state);
        // MC needs an absolute ego speed; until one is available the frame
        // falls back to deterministic ttc scoring.
        if (config_.mode == RiskMode::mc && r.scene.ego_speed_mps)
            r.risk = risk_mc(r.scene, config_, mix_seed(seed_, std::uint64_t(r.frame_index)));
        else
            r.risk = risk_ttc(r.scene, config_);
        return r;
    }

private:
    RiskConfig config_;
    std::uint64_t seed_;
};

class StageClock {
public:
    void start() { t0_ = std::chrono::steady_clock::now(); }
    void stop() {
        const auto t1 = std::chrono::steady_clock::now();
        samples_.push_back(std::chrono::duration<double, std::milli>(t1 - t0_).count());
    }
    std::vector<double> take() { return std::move(samples_); }

private:
    std::chrono::steady_clock::time_point t0_;
    std::vector<double> samples_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// run(): drives the pipeline to completion. The optional timeline stream
// receives one record per frame; the optional callback sees every FrameResult
// (invoked from the sink stage's thread in staged mode). Returns per-stage
// timing. Throws on input/config errors; in staged mode a failing stage
// cancels the others and its exception is rethrown here.
// ---------------------------------------------------------------------------

inline StageTiming run(const PipelineConfig& config, std::ostream* timeline = nullptr,
                       const FrameCallback& on_frame = {}) {
    config.validate();
    auto source = detail::make_source(config);
    detail::TrackerStage tracker(config);
    detail::StateStage state(config);
    detail::SpeedStage speed(config);
    detail::RiskStage risk(config.risk, config.seed);

    StageTiming timing;
    std::size_t frames = 0;
    detail::StageClock c_source, c_tracker, c_state, c_speed, c_risk, c_sink;
    const auto wall0 = std::chrono::steady_clock::now();

    const auto emit = [&](const FrameResult& r) {
        if (timeline) write_timeline_record(*timeline, r);
        if (on_frame) on_frame(r);
        ++frames;
    };

    if (config.mode == ExecMode::sequential) {
        while (true) {
            c_source.start();
            auto item = source->next();
            c_source.stop();
            if (!item) break;
            c_tracker.start();
            auto tr = tracker.process(item->frame);
            c_tracker.stop();
            c_state.start();
            auto objects = state.process(tr.frame_time_s, tr.tracked);
            c_state.stop();
            c_speed.start();
            auto sp = speed.process(item->pulses, tr.frame_time_s);
            c_speed.stop();
            c_risk.start();
            auto result = risk.process(std::move(tr), std::move(objects), sp);
            c_risk.stop();
            c_sink.start();
            emit(result);
            c_sink.stop();
        }
    } else {
        struct PulseItem {
            std::int64_t frame_index = 0;
            double frame_time_s = 0.0;
            std::vector<PulseSample> pulses;
        };
        struct StateItem {
            detail::TrackerStage::Out tr;
            std::map<int, EstimatedObject> objects;
        };
        struct SpeedItem {
            std::int64_t frame_index = 0;
            std::optional<SpeedEstimate> speed;
        };

        Channel<DetectionFrame> ch_det(config.queue_capacity);
        Channel<PulseItem> ch_pulse(config.queue_capacity);
        Channel<detail::TrackerStage::Out> ch_track(config.queue_capacity);
        Channel<StateItem> ch_state(config.queue_capacity);
        Channel<SpeedItem> ch_speed(config.queue_capacity);
        Channel<FrameResult> ch_out(config.queue_capacity);

        std::mutex error_mutex;
        std::exception_ptr error;
        const auto fail = [&](std::exception_ptr e) {
            {
                std::lock_guard lock(error_mutex);
                if (!error) error = e;
            }
            ch_det.cancel();
            ch_pulse.cancel();
            ch_track.cancel();
            ch_state.cancel();
            ch_speed.cancel();
            ch_out.cancel();
        };

        std::thread th_source([&] {
            try {
                while (true) {
                    c_source.start();
                    auto item = source->next();
                    c_source.stop();
                    if (!item) break;
                    PulseItem pi{item->frame.frame_index, item->frame.frame_time_s,
                                 std::move(item->pulses)};
                    if (!ch_det.push(std::move(item->frame))) return;
                    if (!ch_pulse.push(std::move(pi))) return;
                }
                ch_det.close();
                ch_pulse.close();
            } catch (...) {
                fail(std::current_exception());
            }
        });
        std::thread th_tracker([&] {
            try {
                while (auto frame = ch_det.pop()) {
                    c_tracker.start();
                    auto out = tracker.process(*frame);
                    c_tracker.stop();
                    if (!ch_track.push(std::move(out))) return;
                }
                ch_track.close();
            } catch (...) {
                fail(std::current_exception());
            }
        });
        std::thread th_state([&] {
            try {
                while (auto tr = ch_track.pop()) {
                    c_state.start();
                    auto objects = state.process(tr->frame_time_s, tr->tracked);
                    c_state.stop();
                    if (!ch_state.push(StateItem{std::move(*tr), std::move(objects)})) return;
                }
                ch_state.close();
            } catch (...) {
                fail(std::current_exception());
            }
        });
        std::thread th_speed([&] {
            try {
                while (auto pi = ch_pulse.pop()) {
                    c_speed.start();
                    auto estimate = speed.process(pi->pulses, pi->frame_time_s);
                    c_speed.stop();
                    if (!ch_speed.push(SpeedItem{pi->frame_index, estimate})) return;
                }
                ch_speed.close();
            } catch (...) {
                fail(std::current_exception());
            }
        });
        std::thread th_risk([&] {
            try {
                while (true) {
                    auto st = ch_state.pop();
                    auto sp = ch_speed.pop();
                    if (!st || !sp) break;  // both branches emit once per frame
                    if (st->tr.frame_index != sp->frame_index)
                        throw StreamError("pipeline branches desynchronized");
                    c_risk.start();
                    auto result = risk.process(std::move(st->tr), std::move(st->objects), sp->speed);
                    c_risk.stop();
                    if (!ch_out.push(std::move(result))) return;
                }
                ch_out.close();
            } catch (...) {
                fail(std::current_exception());
            }
        });
        std::thread th_sink([&] {
            try {
                while (auto result = ch_out.pop()) {
                    c_sink.start();
                    emit(*result);
                    c_sink.stop();
                }
            } catch (...) {
                fail(std::current_exception());
            }
        });

        th_source.join();
        th_tracker.join();
        th_state.join();
        th_speed.join();
        th_risk.join();
        th_sink.join();
        if (error) std::rethrow_exception(error);

        timing.queue_high_water = {{"det", ch_det.high_water_mark()},
                                   {"pulse", ch_pulse.high_water_mark()},
                                   {"track", ch_track.high_water_mark()},
                                   {"state", ch_state.high_water_mark()},
                                   {"speed", ch_speed.high_water_mark()},
                                   {"out", ch_out.high_water_mark()}};
    }

    timing.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    timing.frames = frames;
    timing.stages = {{"source", c_source.take()}, {"tracker", c_tracker.take()},
                     {"state", c_state.take()},   {"speed", c_speed.take()},
                     {"risk", c_risk.take()},     {"sink", c_sink.take()}};
    return timing;
}

}  // namespace monorisk
