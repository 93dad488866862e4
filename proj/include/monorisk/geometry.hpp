#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "monorisk/errors.hpp"

namespace monorisk {

struct PixelPoint {
    double col = 0.0;
    double row = 0.0;
};

// Pinhole camera over a flat-ground world. Rows grow downward, so the ground
// plane projects below horizon_row_px and objects approach the horizon row as
// they recede.
struct CameraModel {
    double focal_length_px = 0.0;
    double mount_height_m = 0.0;    // camera height above the road surface
    double horizon_row_px = 0.0;    // row of the ground-plane vanishing line
    double principal_col_px = 0.0;  // column of the optical axis
    double image_width_px = 0.0;
    double image_height_px = 0.0;
    // Dimensions assumed for every detected vehicle; monocular ranging cannot
    // recover true extents.
    double assumed_vehicle_width_m = 1.8;
    double assumed_vehicle_length_m = 4.5;

    void validate() const {
        if (!(focal_length_px > 0.0)) throw ConfigError("camera: focal_length_px must be > 0");
        if (!(mount_height_m > 0.0)) throw ConfigError("camera: mount_height_m must be > 0");
        if (!(image_width_px > 0.0)) throw ConfigError("camera: image_width_px must be > 0");
        if (!(image_height_px > 0.0)) throw ConfigError("camera: image_height_px must be > 0");
        if (!(horizon_row_px >= 0.0 && horizon_row_px < image_height_px))
            throw ConfigError("camera: horizon_row_px must lie inside the image");
        if (!(principal_col_px >= 0.0 && principal_col_px < image_width_px))
            throw ConfigError("camera: principal_col_px must lie inside the image");
        if (!(assumed_vehicle_width_m > 0.0) || !(assumed_vehicle_length_m > 0.0))
            throw ConfigError("camera: assumed vehicle dimensions must be > 0");
    }
};

// Axis-aligned box in image coordinates. Valid boxes have left < right and
// top < bottom (rows grow downward).
struct BoundingBox {
    double left_px = 0.0;
    double top_px = 0.0;
    double right_px = 0.0;
    double bottom_px = 0.0;

    double width() const { return right_px - left_px; }
    double height() const { return bottom_px - top_px; }
    double center_col() const { return 0.5 * (left_px + right_px); }
    double center_row() const { return 0.5 * (top_px + bottom_px); }
    bool valid() const { return left_px < right_px && top_px < bottom_px; }
};

inline double iou(const BoundingBox& a, const BoundingBox& b) {
    const double iw = std::min(a.right_px, b.right_px) - std::max(a.left_px, b.left_px);
    const double ih = std::min(a.bottom_px, b.bottom_px) - std::max(a.top_px, b.top_px);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.width() * a.height() + b.width() * b.height() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

struct ImageLineSegment {
    PixelPoint a;
    PixelPoint b;
};

// Longitudinal ground distance from the box bottom's drop below the horizon:
// d_y = h * F / (bottom - horizon). Unbounded as the bottom approaches the
// horizon row; undefined at or above it.
inline double longitudinal_distance(const CameraModel& camera, const BoundingBox& box) {
    const double drop_px = box.bottom_px - camera.horizon_row_px;
    if (drop_px <= 0.0)
        throw GeometryError("box bottom at or above the horizon row; distance undefined");
    return camera.mount_height_m * camera.focal_length_px / drop_px;
}

// Lateral offset of the vehicle center. Uses the box edge farther from the
// principal column (that edge images the vehicle's near-side rear corner) and
// walks back toward the axis by half the assumed width:
//   d_x = sign * (d_y * |edge - principal| / F - W/2).
// Ties between edges resolve to the right edge.
inline double lateral_distance(const CameraModel& camera, double d_y, const BoundingBox& box) {
    if (!(d_y > 0.0)) throw GeometryError("lateral distance requires d_y > 0");
    const double left_off = box.left_px - camera.principal_col_px;
    const double right_off = box.right_px - camera.principal_col_px;
    const double far_off = std::abs(right_off) >= std::abs(left_off) ? right_off : left_off;
    const double corner_m = d_y * std::abs(far_off) / camera.focal_length_px;
    const double center_m = corner_m - 0.5 * camera.assumed_vehicle_width_m;
    return far_off >= 0.0 ? center_m : -center_m;
}

// Least-squares intersection of the segments' carrier lines. Each segment
// contributes the constraint n.p = n.a with n the line's unit normal; the
// returned point minimizes the sum of squared distances to all lines. The
// row coordinate serves as a horizon estimate.
inline PixelPoint vanishing_point(const std::vector<ImageLineSegment>& segments) {
    if (segments.size() < 2)
        throw GeometryError("vanishing point needs at least two line segments");
    double a00 = 0.0, a01 = 0.0, a11 = 0.0, b0 = 0.0, b1 = 0.0;
    for (const auto& seg : segments) {
        const double dx = seg.b.col - seg.a.col;
        const double dy = seg.b.row - seg.a.row;
        const double len = std::hypot(dx, dy);
        if (len == 0.0) throw GeometryError("line segment endpoints coincide");
        const double nx = -dy / len;
        const double ny = dx / len;
        const double d = nx * seg.a.col + ny * seg.a.row;
        a00 += nx * nx;
        a01 += nx * ny;
        a11 += ny * ny;
        b0 += nx * d;
        b1 += ny * d;
    }
    // Normals are unit length, so trace(A) equals the segment count; the
    // determinant vanishes exactly when all lines are parallel.
    const double det = a00 * a11 - a01 * a01;
    const double scale = a00 + a11;
    if (det <= 1e-12 * scale * scale)
        throw GeometryError("segments are parallel in the image; no vanishing point");
    return {(a11 * b0 - a01 * b1) / det, (a00 * b1 - a01 * b0) / det};
}

// Image box of a vehicle rear face whose bottom rests on the ground plane at
// (d_x, d_y) meters. clipped_bottom marks boxes whose ground-contact row falls
// at or past the bottom image border, where the ranging cue is unreliable.
struct ProjectedBox {
    BoundingBox box;
    bool clipped_bottom = false;
};

// Exact inverse of the distance equations. Returns nullopt when the box lies
// entirely outside the image. Throws for d_y <= 0 (at or behind the camera).
inline std::optional<ProjectedBox> project_vehicle(const CameraModel& camera, double d_x,
                                                   double d_y, double width_m, double height_m) {
    if (!(d_y > 0.0)) throw GeometryError("cannot project a vehicle at or behind the camera plane");
    if (!(width_m > 0.0) || !(height_m > 0.0))
        throw GeometryError("vehicle dimensions must be positive");
    const double scale = camera.focal_length_px / d_y;  // px per meter at range d_y
    BoundingBox box;
    box.bottom_px = camera.horizon_row_px + camera.mount_height_m * scale;
    box.top_px = camera.horizon_row_px + (camera.mount_height_m - height_m) * scale;
    box.left_px = camera.principal_col_px + (d_x - 0.5 * width_m) * scale;
    box.right_px = camera.principal_col_px + (d_x + 0.5 * width_m) * scale;
    if (box.right_px <= 0.0 || box.left_px >= camera.image_width_px || box.bottom_px <= 0.0 ||
        box.top_px >= camera.image_height_px)
        return std::nullopt;
    return ProjectedBox{box, box.bottom_px >= camera.image_height_px};
}

// Intersects a box with the image rectangle; nullopt when nothing remains.
inline std::optional<BoundingBox> clamp_to_image(const CameraModel& camera,
                                                 const BoundingBox& box) {
    BoundingBox out;
    out.left_px = std::max(box.left_px, 0.0);
    out.top_px = std::max(box.top_px, 0.0);
    out.right_px = std::min(box.right_px, camera.image_width_px);
    out.bottom_px = std::min(box.bottom_px, camera.image_height_px);
    if (!out.valid()) return std::nullopt;
    return out;
}

}  // namespace monorisk
