#include "scene/geometry.hpp"

namespace bevfuse::scene {

namespace {
constexpr double kMinDepth = 1e-9;
}

std::optional<Vec2> project_unbounded(Vec3 world, const CameraModel& cam,
                                      double* depth) {
  const Vec3 p = cam.to_camera(world);
  if (!(p.z > kMinDepth)) return std::nullopt;
  if (depth) *depth = p.z;
  return Vec2{cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy};
}

std::optional<Vec2> project_to_camera(Vec3 world, const CameraModel& cam) {
  const auto px = project_unbounded(world, cam);
  if (!px) return std::nullopt;
  if (px->x < 0.0 || px->x > cam.width - 1 || px->y < 0.0 ||
      px->y > cam.height - 1)
    return std::nullopt;
  return px;
}

}  // namespace bevfuse::scene
