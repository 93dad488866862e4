#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "monorisk/errors.hpp"
#include "monorisk/geometry.hpp"

namespace monorisk {

struct Detection {
    BoundingBox box;
    std::string label;
    double score = 1.0;  // detector confidence in [0, 1]
};

// One timestamped batch of detector output; the tracker's observation unit.
struct DetectionFrame {
    std::int64_t frame_index = 0;
    double frame_time_s = 0.0;
    std::vector<Detection> detections;
};

// Record-level invariants shared by readers and writers.
inline void validate_frame(const DetectionFrame& frame) {
    for (const auto& d : frame.detections) {
        if (!d.box.valid()) throw StreamError("detection box is empty or inverted");
        if (d.label.empty()) throw StreamError("detection label must be nonempty");
        if (!(d.score >= 0.0 && d.score <= 1.0))
            throw StreamError("detection score outside [0, 1]");
    }
}

// Keeps only detections whose label is in the allowed set; order preserved.
inline DetectionFrame filter_vehicle_classes(const DetectionFrame& frame,
                                             const std::set<std::string>& allowed) {
    DetectionFrame out;
    out.frame_index = frame.frame_index;
    out.frame_time_s = frame.frame_time_s;
    out.detections.reserve(frame.detections.size());
    for (const auto& d : frame.detections)
        if (allowed.count(d.label)) out.detections.push_back(d);
    return out;
}

}  // namespace monorisk
