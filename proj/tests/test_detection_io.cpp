#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "monorisk/detection.hpp"
#include "monorisk/detection_io.hpp"

using namespace monorisk;

namespace {

DetectionFrame make_frame(std::int64_t index, double time_s,
                          std::initializer_list<Detection> dets) {
    DetectionFrame f;
    f.frame_index = index;
    f.frame_time_s = time_s;
    f.detections = dets;
    return f;
}

std::vector<DetectionFrame> random_frames(std::uint64_t seed, std::size_t count) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<int> n_boxes(0, 6);
    std::vector<DetectionFrame> frames;
    double t = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        t += 0.01 + u01(rng);
        DetectionFrame f;
        f.frame_index = std::int64_t(i);
        f.frame_time_s = t;
        const int n = n_boxes(rng);
        for (int b = 0; b < n; ++b) {
            Detection d;
            d.box.left_px = 1000.0 * u01(rng);
            d.box.top_px = 600.0 * u01(rng);
            d.box.right_px = d.box.left_px + 1.0 + 300.0 * u01(rng);
            d.box.bottom_px = d.box.top_px + 1.0 + 200.0 * u01(rng);
            d.label = (b % 2 == 0) ? "car" : "truck";
            d.score = u01(rng);
            f.detections.push_back(std::move(d));
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

bool frames_equal(const DetectionFrame& a, const DetectionFrame& b) {
    if (a.frame_index != b.frame_index || a.frame_time_s != b.frame_time_s ||
        a.detections.size() != b.detections.size())
        return false;
    for (std::size_t i = 0; i < a.detections.size(); ++i) {
        const auto& da = a.detections[i];
        const auto& db = b.detections[i];
        if (da.box.left_px != db.box.left_px || da.box.top_px != db.box.top_px ||
            da.box.right_px != db.box.right_px || da.box.bottom_px != db.box.bottom_px ||
            da.label != db.label || da.score != db.score)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("empty stream yields an empty sequence") {
    std::istringstream in("");
    REQUIRE(read_detection_stream(in).empty());

    std::istringstream blank("\n   \n\t\n");
    REQUIRE(read_detection_stream(blank).empty());
}

TEST_CASE("single record with one box") {
    std::istringstream in(
        R"({"frame": 3, "time_s": 0.1, "boxes": [{"l": 10.0, "t": 20.0, "r": 30.0, "b": 40.0, "label": "car", "score": 0.9}]})"
        "\n");
    const auto frames = read_detection_stream(in);
    REQUIRE(frames.size() == 1);
    REQUIRE(frames[0].frame_index == 3);
    REQUIRE(frames[0].frame_time_s == 0.1);
    REQUIRE(frames[0].detections.size() == 1);
    REQUIRE(frames[0].detections[0].box.left_px == 10.0);
    REQUIRE(frames[0].detections[0].label == "car");
    REQUIRE(frames[0].detections[0].score == 0.9);
}

TEST_CASE("write/read round-trip is the identity on random streams") {
    for (std::uint64_t seed : {11ull, 22ull, 33ull}) {
        const auto frames = random_frames(seed, 40);
        std::ostringstream out;
        write_detection_stream(frames, out);
        std::istringstream in(out.str());
        const auto back = read_detection_stream(in);
        REQUIRE(back.size() == frames.size());
        for (std::size_t i = 0; i < frames.size(); ++i) REQUIRE(frames_equal(frames[i], back[i]));
    }
}

TEST_CASE("serialization is bit-stable") {
    const auto frames = random_frames(99, 25);
    std::ostringstream a, b;
    write_detection_stream(frames, a);
    write_detection_stream(frames, b);
    REQUIRE(a.str() == b.str());
}

TEST_CASE("malformed records report their line number") {
    std::istringstream in(
        "{\"frame\": 0, \"time_s\": 0.0, \"boxes\": []}\n"
        "\n"
        "not json at all\n");
    DetectionStreamReader reader(in);
    REQUIRE(reader.next().has_value());
    try {
        reader.next();
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        REQUIRE(e.line() == 3);
        REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("missing fields and bad values are parse errors") {
    SECTION("missing boxes key") {
        std::istringstream in(R"({"frame": 0, "time_s": 0.0})" "\n");
        REQUIRE_THROWS_AS(read_detection_stream(in), ParseError);
    }
    SECTION("score outside [0, 1]") {
        std::istringstream in(
            R"({"frame": 0, "time_s": 0.0, "boxes": [{"l": 0, "t": 0, "r": 1, "b": 1, "label": "car", "score": 1.5}]})"
            "\n");
        REQUIRE_THROWS_AS(read_detection_stream(in), ParseError);
    }
    SECTION("empty label") {
        std::istringstream in(
            R"({"frame": 0, "time_s": 0.0, "boxes": [{"l": 0, "t": 0, "r": 1, "b": 1, "label": "", "score": 0.5}]})"
            "\n");
        REQUIRE_THROWS_AS(read_detection_stream(in), ParseError);
    }
    SECTION("degenerate box") {
        std::istringstream in(
            R"({"frame": 0, "time_s": 0.0, "boxes": [{"l": 5, "t": 0, "r": 5, "b": 1, "label": "car", "score": 0.5}]})"
            "\n");
        REQUIRE_THROWS_AS(read_detection_stream(in), ParseError);
    }
}

TEST_CASE("non-monotone timestamps are stream errors on read") {
    std::istringstream in(
        "{\"frame\": 0, \"time_s\": 1.0, \"boxes\": []}\n"
        "{\"frame\": 1, \"time_s\": 1.0, \"boxes\": []}\n");
    REQUIRE_THROWS_AS(read_detection_stream(in), StreamError);
}

TEST_CASE("writer rejects invariant violations before emitting output") {
    SECTION("non-monotone frame times") {
        std::ostringstream out;
        DetectionStreamWriter writer(out);
        writer.write(make_frame(0, 1.0, {}));
        const std::string before = out.str();
        REQUIRE_THROWS_AS(writer.write(make_frame(1, 0.5, {})), StreamError);
        REQUIRE(out.str() == before);
    }
    SECTION("batch writer emits nothing when a late frame is invalid") {
        std::vector<DetectionFrame> frames{make_frame(0, 0.0, {}), make_frame(1, 1.0, {}),
                                           make_frame(2, 0.5, {})};
        std::ostringstream out;
        REQUIRE_THROWS_AS(write_detection_stream(frames, out), StreamError);
        REQUIRE(out.str().empty());
    }
    SECTION("bad score") {
        std::ostringstream out;
        DetectionStreamWriter writer(out);
        REQUIRE_THROWS_AS(writer.write(make_frame(0, 0.0, {{{0, 0, 1, 1}, "car", 2.0}})),
                          StreamError);
        REQUIRE(out.str().empty());
    }
}

TEST_CASE("reader yields frames one at a time") {
    std::ostringstream out;
    write_detection_stream(random_frames(7, 5), out);
    std::istringstream in(out.str());
    DetectionStreamReader reader(in);
    std::size_t n = 0;
    while (auto f = reader.next()) {
        REQUIRE(f->frame_index == std::int64_t(n));
        ++n;
    }
    REQUIRE(n == 5);
    REQUIRE_FALSE(reader.next().has_value());  // end of stream is sticky
}

TEST_CASE("filter_vehicle_classes") {
    DetectionFrame frame = make_frame(0, 0.0,
                                      {{{0, 0, 1, 1}, "car", 0.9},
                                       {{1, 1, 2, 2}, "truck", 0.8},
                                       {{2, 2, 3, 3}, "car", 0.7},
                                       {{3, 3, 4, 4}, "person", 0.6}});

    SECTION("all-car frame with allowed={car} is unchanged") {
        DetectionFrame cars = make_frame(0, 0.0, {{{0, 0, 1, 1}, "car", 0.9},
                                                  {{1, 1, 2, 2}, "car", 0.8}});
        const auto kept = filter_vehicle_classes(cars, {"car"});
        REQUIRE(frames_equal(kept, cars));
    }

    SECTION("empty allow-set removes every detection") {
        REQUIRE(filter_vehicle_classes(frame, {}).detections.empty());
    }

    SECTION("mixed frame keeps exactly the allowed labels, in order") {
        const std::set<std::string> allowed{"car", "truck"};
        const auto kept = filter_vehicle_classes(frame, allowed);
        // Brute-force membership count.
        std::size_t expected = 0;
        for (const auto& d : frame.detections) expected += allowed.count(d.label);
        REQUIRE(kept.detections.size() == expected);
        REQUIRE(kept.detections[0].label == "car");
        REQUIRE(kept.detections[1].label == "truck");
        REQUIRE(kept.detections[2].label == "car");
        REQUIRE(kept.frame_index == frame.frame_index);
        REQUIRE(kept.frame_time_s == frame.frame_time_s);
    }
}
