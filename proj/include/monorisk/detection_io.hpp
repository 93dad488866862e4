#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "monorisk/detection.hpp"
#include "monorisk/errors.hpp"

namespace monorisk {

// Detection stream wire format: one JSON object per line,
//   {"frame": N, "time_s": T, "boxes": [{"l","t","r","b","label","score"}, ...]}
// with frame_time_s strictly increasing across the stream.

namespace detail {

inline nlohmann::ordered_json detection_frame_to_json(const DetectionFrame& frame) {
    nlohmann::ordered_json boxes = nlohmann::ordered_json::array();
    for (const auto& d : frame.detections) {
        boxes.push_back({{"l", d.box.left_px},
                         {"t", d.box.top_px},
                         {"r", d.box.right_px},
                         {"b", d.box.bottom_px},
                         {"label", d.label},
                         {"score", d.score}});
    }
    return {{"frame", frame.frame_index}, {"time_s", frame.frame_time_s}, {"boxes", std::move(boxes)}};
}

}  // namespace detail

class DetectionStreamReader {
public:
    explicit DetectionStreamReader(std::istream& in) : in_(&in) {}

    // Next frame in the stream, or nullopt at end of input. Blank lines are
    // skipped. Throws ParseError (with 1-based line) for malformed records and
    // StreamError for non-monotone timestamps.
    std::optional<DetectionFrame> next() {
        std::string line;
        while (std::getline(*in_, line)) {
            ++line_;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            return parse_record(line);
        }
        return std::nullopt;
    }

    std::size_t line() const noexcept { return line_; }

private:
    DetectionFrame parse_record(const std::string& line) {
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line_);
        }
        DetectionFrame frame;
        try {
            frame.frame_index = rec.at("frame").get<std::int64_t>();
            frame.frame_time_s = rec.at("time_s").get<double>();
            for (const auto& jb : rec.at("boxes")) {
                Detection d;
                d.box.left_px = jb.at("l").get<double>();
                d.box.top_px = jb.at("t").get<double>();
                d.box.right_px = jb.at("r").get<double>();
                d.box.bottom_px = jb.at("b").get<double>();
                d.label = jb.at("label").get<std::string>();
                d.score = jb.at("score").get<double>();
                frame.detections.push_back(std::move(d));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad detection record: ") + e.what(), line_);
        }
        try {
            validate_frame(frame);
        } catch (const StreamError& e) {
            throw ParseError(e.what(), line_);
        }
        if (has_last_time_ && !(frame.frame_time_s > last_time_))
            throw StreamError("frame_time_s not strictly increasing at line " +
                              std::to_string(line_));
        last_time_ = frame.frame_time_s;
        has_last_time_ = true;
        return frame;
    }

    std::istream* in_;
    std::size_t line_ = 0;
    bool has_last_time_ = false;
    double last_time_ = 0.0;
};

class DetectionStreamWriter {
public:
    explicit DetectionStreamWriter(std::ostream& out) : out_(&out) {}

    // Validates before emitting anything, so a throw leaves the output
    // untouched by this call.
    void write(const DetectionFrame& frame) {
        validate_frame(frame);
        if (has_last_time_ && !(frame.frame_time_s > last_time_))
            throw StreamError("frame_time_s must be strictly increasing");
        (*out_) << detail::detection_frame_to_json(frame).dump() << '\n';
        last_time_ = frame.frame_time_s;
        has_last_time_ = true;
    }

private:
    std::ostream* out_;
    bool has_last_time_ = false;
    double last_time_ = 0.0;
};

inline std::vector<DetectionFrame> read_detection_stream(std::istream& in) {
    DetectionStreamReader reader(in);
    std::vector<DetectionFrame> frames;
    while (auto f = reader.next()) frames.push_back(std::move(*f));
    return frames;
}

inline void write_detection_stream(const std::vector<DetectionFrame>& frames, std::ostream& out) {
    // Validate the whole batch first: no partial output on error.
    for (std::size_t i = 0; i < frames.size(); ++i) {
        validate_frame(frames[i]);
        if (i > 0 && !(frames[i].frame_time_s > frames[i - 1].frame_time_s))
            throw StreamError("frame_time_s must be strictly increasing");
    }
    DetectionStreamWriter writer(out);
    for (const auto& f : frames) writer.write(f);
}

}  // namespace monorisk
