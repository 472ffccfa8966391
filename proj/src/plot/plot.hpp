#pragma once

#include "plot/png.hpp"
#include "pnp/trajectory.hpp"
#include "scene/scene.hpp"

namespace bevfuse::plot {

// Top-down view in the current ego frame: ego footprint and ground truth in
// green/gray, agents with their futures, plus the optional forecast modes
// (orange) and planned trajectory (blue).
Image plot_trajectories(const scene::Scene& s, const pnp::Forecast* forecast,
                        const pnp::Plan* plan);

// LiDAR feature heatmap (channel norm) at the current frame.
Image plot_bev(const scene::Scene& s);

}  // namespace bevfuse::plot
