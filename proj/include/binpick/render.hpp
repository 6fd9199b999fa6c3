#pragma once

#include <cstdint>
#include <vector>

#include "binpick/scenegen.hpp"

namespace binpick {

struct RenderConfig {
  double near_plane = 0.1;
  double far_plane = 4.0;
  double noise_sigma = 0.0;  // additive Gaussian on foreground pixels
  std::uint64_t noise_seed = 0;
};

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> depth;  // row-major meters; background = far plane

  float at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return depth[static_cast<std::size_t>(y) * width + x]; }
};

struct InstanceAnnotation {
  int instance_index = -1;  // position in the scene's instance list
  Box2D box;                // tight bounds of the full projection, pixels
  double center_x = 0.0;    // projection of the model origin, pixels
  double center_y = 0.0;
  double center_depth = 0.0;  // meters
  Pose6D pose;                // camera frame
  double visibility = 0.0;    // visible pixels / solo-render pixels
  bool center_outside_box = false;
};

struct FrameAnnotation {
  CameraView view;
  std::vector<InstanceAnnotation> instances;
};

// Depth plus per-pixel owning instance (-1 = background).
struct OwnedRender {
  DepthImage depth;
  std::vector<int> owner;
};

// Z-buffer rasterization of every instance; nearest surface wins.
DepthImage rasterize_depth(const std::vector<SceneInstance>& scene,
                           const CameraView& view, const MeshModel& model,
                           const RenderConfig& cfg);

OwnedRender rasterize_with_owners(const std::vector<SceneInstance>& scene,
                                  const CameraView& view, const MeshModel& model,
                                  const RenderConfig& cfg);

// Single body already posed in camera frame (identity extrinsic).
DepthImage rasterize_single(const Pose6D& camera_pose, const CameraView& view,
                            const MeshModel& model, const RenderConfig& cfg);

// Per-instance ground truth; instances with no visible pixels are omitted.
FrameAnnotation annotate(const std::vector<SceneInstance>& scene,
                         const CameraView& view, const MeshModel& model,
                         const RenderConfig& cfg);

}  // namespace binpick
