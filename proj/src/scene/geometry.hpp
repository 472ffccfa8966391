#pragma once

#include <array>
#include <cmath>
#include <optional>

namespace bevfuse::scene {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

inline double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

// SE(2) pose: translation plus heading. x forward, y left, yaw CCW.
struct Pose2 {
  double x = 0.0, y = 0.0, yaw = 0.0;

  Vec2 apply(Vec2 p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {x + c * p.x - s * p.y, y + s * p.x + c * p.y};
  }
  Vec2 apply_inverse(Vec2 p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double dx = p.x - x, dy = p.y - y;
    return {c * dx + s * dy, -s * dx + c * dy};
  }
  Pose2 compose(const Pose2& o) const {
    const Vec2 t = apply({o.x, o.y});
    return {t.x, t.y, wrap_angle(yaw + o.yaw)};
  }
  Pose2 inverse() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {-(c * x + s * y), -(-s * x + c * y), wrap_angle(-yaw)};
  }
};

// Delta pose of `cur` expressed in the frame of `prev`.
inline Pose2 relative_pose(const Pose2& prev, const Pose2& cur) {
  return prev.inverse().compose(cur);
}

// Pinhole camera over a feature grid. Extrinsics map world to camera
// coordinates (+z optical axis, +x right, +y down); p_cam = R * p + t.
struct CameraModel {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  std::array<double, 9> rot{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 trans;
  int width = 0, height = 0, channels = 0;

  Vec3 to_camera(Vec3 p) const {
    return {rot[0] * p.x + rot[1] * p.y + rot[2] * p.z + trans.x,
            rot[3] * p.x + rot[4] * p.y + rot[5] * p.z + trans.y,
            rot[6] * p.x + rot[7] * p.y + rot[8] * p.z + trans.z};
  }
};

// Returns the feature-grid pixel iff the point sits in front of the camera
// and inside the sampleable region [0, width-1] x [0, height-1].
std::optional<Vec2> project_to_camera(Vec3 world, const CameraModel& cam);

// Like project_to_camera but without the image-bounds test; used for
// rasterizing boxes that straddle the view frustum.
std::optional<Vec2> project_unbounded(Vec3 world, const CameraModel& cam,
                                      double* depth = nullptr);

}  // namespace bevfuse::scene
