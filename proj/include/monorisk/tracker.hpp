#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "monorisk/detection.hpp"
#include "monorisk/errors.hpp"
#include "monorisk/geometry.hpp"

namespace monorisk {

struct TrackerConfig {
    int particle_count = 200;
    // Per-axis motion-model std-dev (center col, center row, width, height) in
    // pixels at reference_image_width_px; scaled linearly with the input width.
    std::array<double, 4> motion_sigma_px{8.0, 4.0, 2.0, 2.0};
    std::array<double, 4> observation_sigma_px{5.0, 5.0, 5.0, 5.0};
    double reference_image_width_px = 1920.0;
    double iou_gate = 0.2;
    int min_hits = 2;      // matches required before a track is reported
    int max_occlusion = 8; // consecutive misses beyond which a track is dropped
    double score_threshold = 0.0;

    void validate() const {
        if (particle_count < 1) throw ConfigError("tracker: particle_count must be >= 1");
        for (double s : motion_sigma_px)
            if (!(s >= 0.0)) throw ConfigError("tracker: motion sigma must be >= 0");
        for (double s : observation_sigma_px)
            if (!(s >= 0.0)) throw ConfigError("tracker: observation sigma must be >= 0");
        if (!(reference_image_width_px > 0.0))
            throw ConfigError("tracker: reference_image_width_px must be > 0");
        if (!(iou_gate >= 0.0 && iou_gate <= 1.0)) throw ConfigError("tracker: iou_gate must be in [0, 1]");
        if (min_hits < 1) throw ConfigError("tracker: min_hits must be >= 1");
        if (max_occlusion < 0) throw ConfigError("tracker: max_occlusion must be >= 0");
        if (!(score_threshold >= 0.0 && score_threshold <= 1.0))
            throw ConfigError("tracker: score_threshold must be in [0, 1]");
    }

    std::array<double, 4> scaled_motion_sigma(double image_width_px) const {
        const double k = image_width_px / reference_image_width_px;
        return {motion_sigma_px[0] * k, motion_sigma_px[1] * k, motion_sigma_px[2] * k,
                motion_sigma_px[3] * k};
    }
};

// Box hypothesis: center position plus size, with an importance weight.
struct Particle {
    double col = 0.0;
    double row = 0.0;
    double width = 0.0;
    double height = 0.0;
    double weight = 0.0;

    BoundingBox box() const {
        return {col - 0.5 * width, row - 0.5 * height, col + 0.5 * width, row + 0.5 * height};
    }
};

enum class TrackState { tentative, confirmed, occluded };

// One particle filter following one object. The motion model drifts every
// particle by the object's displacement between its last two matched
// detections, then adds per-axis Gaussian noise.
class ObjectTracker {
public:
    ObjectTracker(int object_id, const BoundingBox& detection, int particle_count,
                  const std::array<double, 4>& motion_sigma,
                  const std::array<double, 4>& observation_sigma, int min_hits,
                  std::mt19937_64& rng)
        : id_(object_id),
          motion_sigma_(motion_sigma),
          observation_sigma_(observation_sigma),
          min_hits_(min_hits),
          last_detection_(detection) {
        if (particle_count < 1) throw std::invalid_argument("particle_count must be >= 1");
        if (!detection.valid()) throw std::invalid_argument("seed detection box invalid");
        particles_.resize(static_cast<std::size_t>(particle_count));
        seed_particles(detection, rng);
    }

    // Prior: shift by last displacement, then perturb. Weights unchanged.
    void predict(std::mt19937_64& rng) {
        for (auto& p : particles_) {
            p.col += displacement_col_ + noise(motion_sigma_[0], rng);
            p.row += displacement_row_ + noise(motion_sigma_[1], rng);
            p.width = std::max(kMinSizePx, p.width + noise(motion_sigma_[2], rng));
            p.height = std::max(kMinSizePx, p.height + noise(motion_sigma_[3], rng));
        }
    }

    // Importance weights from the observation model, normalized to sum 1.
    // If every weight underflows to zero the filter has lost the object;
    // recover by reseeding the particles around the matched box.
    void update(const BoundingBox& matched, std::mt19937_64& rng) {
        if (!matched.valid()) throw std::invalid_argument("matched box invalid");
        const double zc = matched.center_col();
        const double zr = matched.center_row();
        const double zw = matched.width();
        const double zh = matched.height();
        double sum = 0.0, comp = 0.0;  // Neumaier-compensated sum
        for (auto& p : particles_) {
            const double m2 = gauss_exponent(p.col - zc, observation_sigma_[0]) +
                              gauss_exponent(p.row - zr, observation_sigma_[1]) +
                              gauss_exponent(p.width - zw, observation_sigma_[2]) +
                              gauss_exponent(p.height - zh, observation_sigma_[3]);
            p.weight *= std::exp(-0.5 * m2);
            const double t = sum + p.weight;
            comp += std::abs(sum) >= std::abs(p.weight) ? (sum - t) + p.weight : (p.weight - t) + sum;
            sum = t;
        }
        sum += comp;
        if (!(sum > 0.0) || !std::isfinite(sum)) {
            seed_particles(matched, rng);
            return;
        }
        for (auto& p : particles_) p.weight /= sum;
    }

    // Systematic resampling: one uniform offset, N evenly spaced pointers.
    // Expected copy count of particle i is N * weight_i.
    void resample(std::mt19937_64& rng) {
        const std::size_t n = particles_.size();
        const double start = std::uniform_real_distribution<double>(0.0, 1.0)(rng) / double(n);
        std::vector<Particle> out;
        out.reserve(n);
        double cum = particles_[0].weight;
        std::size_t i = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const double target = start + double(k) / double(n);
            while (cum < target && i + 1 < n) {
                ++i;
                cum += particles_[i].weight;
            }
            out.push_back(particles_[i]);
            out.back().weight = 1.0 / double(n);
        }
        particles_ = std::move(out);
    }

    BoundingBox mean_box() const {
        double c = 0.0, r = 0.0, w = 0.0, h = 0.0, wsum = 0.0;
        for (const auto& p : particles_) {
            c += p.weight * p.col;
            r += p.weight * p.row;
            w += p.weight * p.width;
            h += p.weight * p.height;
            wsum += p.weight;
        }
        c /= wsum;
        r /= wsum;
        w /= wsum;
        h /= wsum;
        return {c - 0.5 * w, r - 0.5 * h, c + 0.5 * w, r + 0.5 * h};
    }

    void record_match(const BoundingBox& matched) {
        displacement_col_ = matched.center_col() - last_detection_.center_col();
        displacement_row_ = matched.center_row() - last_detection_.center_row();
        last_detection_ = matched;
        ++hits_;
        frames_since_seen_ = 0;
        if (hits_ >= min_hits_) confirmed_ = true;
    }

    void record_miss() { ++frames_since_seen_; }

    int id() const { return id_; }
    int hits() const { return hits_; }
    int frames_since_seen() const { return frames_since_seen_; }
    bool confirmed() const { return confirmed_; }
    TrackState state() const {
        if (frames_since_seen_ > 0) return TrackState::occluded;
        return confirmed_ ? TrackState::confirmed : TrackState::tentative;
    }
    const BoundingBox& last_detection() const { return last_detection_; }
    std::pair<double, double> last_displacement() const {
        return {displacement_col_, displacement_row_};
    }
    const std::vector<Particle>& particles() const { return particles_; }

private:
    static constexpr double kMinSizePx = 1e-3;  // particle sizes must stay positive

    static double noise(double sigma, std::mt19937_64& rng) {
        if (sigma <= 0.0) return 0.0;
        return std::normal_distribution<double>(0.0, sigma)(rng);
    }

    // Squared z-score of one observation dimension. A zero-sigma dimension is
    // treated as an exact constraint: matching costs nothing, any mismatch
    // kills the particle.
    static double gauss_exponent(double diff, double sigma) {
        if (sigma > 0.0) {
            const double z = diff / sigma;
            return z * z;
        }
        return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }

    void seed_particles(const BoundingBox& box, std::mt19937_64& rng) {
        const double c = box.center_col(), r = box.center_row();
        const double w = box.width(), h = box.height();
        for (auto& p : particles_) {
            p.col = c + noise(observation_sigma_[0], rng);
            p.row = r + noise(observation_sigma_[1], rng);
            p.width = std::max(kMinSizePx, w + noise(observation_sigma_[2], rng));
            p.height = std::max(kMinSizePx, h + noise(observation_sigma_[3], rng));
            p.weight = 1.0 / double(particles_.size());
        }
    }

    int id_;
    std::array<double, 4> motion_sigma_;
    std::array<double, 4> observation_sigma_;
    int min_hits_;
    std::vector<Particle> particles_;
    BoundingBox last_detection_;
    double displacement_col_ = 0.0;
    double displacement_row_ = 0.0;
    int hits_ = 1;  // the seeding detection counts as the first match
    int frames_since_seen_ = 0;
    bool confirmed_ = false;
};

struct Association {
    std::vector<std::pair<int, std::size_t>> matches;  // (tracker id, detection index)
    std::vector<std::size_t> unmatched_detections;
    std::vector<int> unmatched_trackers;
};

// Confirmed-track output. coasted marks boxes carried by the motion model
// alone (no detection matched this frame).
struct TrackedBox {
    BoundingBox box;
    bool coasted = false;
};

class TrackerBank {
public:
    TrackerBank(TrackerConfig config, double image_width_px, std::uint64_t seed)
        : config_(config), rng_(seed) {
        config_.validate();
        if (!(image_width_px > 0.0)) throw ConfigError("tracker: image width must be > 0");
        motion_sigma_ = config_.scaled_motion_sigma(image_width_px);
    }

    // Greedy one-to-one matching by descending IoU between tracker mean boxes
    // and candidate boxes; pairs under the gate are rejected. Ties resolve by
    // lower tracker id, then lower detection index.
    Association associate(const std::vector<BoundingBox>& boxes) const {
        struct Cand {
            double iou;
            int id;
            std::size_t det;
        };
        std::vector<Cand> cands;
        for (const auto& [id, tr] : trackers_) {
            const BoundingBox mean = tr.mean_box();
            for (std::size_t j = 0; j < boxes.size(); ++j) {
                const double v = iou(mean, boxes[j]);
                if (v >= config_.iou_gate && v > 0.0) cands.push_back({v, id, j});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.iou != b.iou) return a.iou > b.iou;
            if (a.id != b.id) return a.id < b.id;
            return a.det < b.det;
        });
        Association out;
        std::map<int, bool> tracker_used;
        std::vector<bool> det_used(boxes.size(), false);
        for (const auto& c : cands) {
            if (tracker_used.count(c.id) || det_used[c.det]) continue;
            tracker_used[c.id] = true;
            det_used[c.det] = true;
            out.matches.emplace_back(c.id, c.det);
        }
        for (const auto& [id, tr] : trackers_)
            if (!tracker_used.count(id)) out.unmatched_trackers.push_back(id);
        for (std::size_t j = 0; j < boxes.size(); ++j)
            if (!det_used[j]) out.unmatched_detections.push_back(j);
        return out;
    }

    Association associate(const DetectionFrame& frame) const {
        std::vector<BoundingBox> boxes;
        boxes.reserve(frame.detections.size());
        for (const auto& d : frame.detections) boxes.push_back(d.box);
        return associate(boxes);
    }

    // One tracking cycle: predict -> associate -> update+resample matched ->
    // coast unmatched -> drop over-age tracks -> spawn from leftover
    // detections. Returns mean boxes of confirmed tracks only.
    std::map<int, TrackedBox> step(const DetectionFrame& frame) {
        if (has_time_ && !(frame.frame_time_s > last_time_))
            throw StreamError("tracker frames must arrive in increasing time order");
        last_time_ = frame.frame_time_s;
        has_time_ = true;

        std::vector<BoundingBox> boxes;
        for (const auto& d : frame.detections)
            if (d.score >= config_.score_threshold) boxes.push_back(d.box);

        for (auto& [id, tr] : trackers_) tr.predict(rng_);

        Association assoc = associate(boxes);
        // Matched updates run in tracker-id order so the RNG draw sequence does
        // not depend on match discovery order.
        std::sort(assoc.matches.begin(), assoc.matches.end());
        for (const auto& [id, j] : assoc.matches) {
            ObjectTracker& tr = trackers_.at(id);
            tr.update(boxes[j], rng_);
            tr.resample(rng_);
            tr.record_match(boxes[j]);
        }
        for (int id : assoc.unmatched_trackers) trackers_.at(id).record_miss();
        for (auto it = trackers_.begin(); it != trackers_.end();) {
            if (it->second.frames_since_seen() > config_.max_occlusion)
                it = trackers_.erase(it);
            else
                ++it;
        }
        for (std::size_t j : assoc.unmatched_detections) {
            const int id = next_id_++;
            trackers_.emplace(id, ObjectTracker(id, boxes[j], config_.particle_count, motion_sigma_,
                                                config_.observation_sigma_px, config_.min_hits, rng_));
        }

        std::map<int, TrackedBox> out;
        for (const auto& [id, tr] : trackers_)
            if (tr.confirmed()) out.emplace(id, TrackedBox{tr.mean_box(), tr.frames_since_seen() > 0});
        return out;
    }

    const std::map<int, ObjectTracker>& trackers() const { return trackers_; }
    int next_id() const { return next_id_; }
    const TrackerConfig& config() const { return config_; }

private:
    TrackerConfig config_;
    std::array<double, 4> motion_sigma_;
    std::map<int, ObjectTracker> trackers_;
    int next_id_ = 0;
    std::mt19937_64 rng_;
    bool has_time_ = false;
    double last_time_ = 0.0;
};

}  // namespace monorisk
