#pragma once

#include <cstdint>
#include <vector>

#include "binpick/geometry.hpp"
#include "binpick/rng.hpp"

namespace binpick {

struct SceneConfig {
  Vec3 bin_half = Vec3(0.11, 0.11, 0.05);  // floor at z=0, walls at +-x/y
  int n_min = 10;
  int n_max = 20;
  std::uint64_t seed = 1;
  int settle_iters = 400;
  double tolerance = 5e-4;  // max allowed penetration, meters

  // View sampling: camera on a hemisphere around the bin center.
  double view_radius_min_factor = 2.0;  // x bin diagonal
  double view_radius_max_factor = 3.0;
  double elev_min_deg = 30.0;
  double elev_max_deg = 90.0;
  int views_per_scene = 17;

  // Intrinsics shared by all sampled views.
  int image_width = 128;
  int image_height = 128;
  double focal_px = 200.0;

  Vec3 bin_center() const { return Vec3(0, 0, bin_half.z()); }
  double bin_diagonal() const { return 2.0 * bin_half.norm(); }
};

struct SceneInstance {
  Pose6D pose;  // model -> world (bin) frame
};

struct CameraView {
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();   // p_cam = R * p_world + t
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  Vec3 position() const { return -rotation.transpose() * translation; }
  Vec3 optical_axis() const { return rotation.row(2).transpose(); }
};

struct CollisionSphere {
  Vec3 center = Vec3::Zero();  // model frame
  double radius = 0.0;
};

// Greedy farthest-point coverage: k interior spheres that jointly cover the
// vertex set, used as the collision proxy during settling.
std::vector<CollisionSphere> fit_coverage_spheres(const MeshModel& model,
                                                  int k = 8);

// Drop-and-settle placement. Deterministic in (cfg, cfg.seed); a scene that
// fails to settle is regenerated from the next derived seed a bounded number
// of times before erroring out.
std::vector<SceneInstance> generate_scene(const SceneConfig& cfg,
                                          const MeshModel& model);

// Worst pairwise sphere-proxy penetration depth, meters (0 if none).
double max_pairwise_penetration(const std::vector<SceneInstance>& scene,
                                const std::vector<CollisionSphere>& spheres);

// Lowest sphere-bottom height over the scene, meters (negative = below floor).
double lowest_sphere_clearance(const std::vector<SceneInstance>& scene,
                               const std::vector<CollisionSphere>& spheres);

std::vector<CameraView> sample_views(const SceneConfig& cfg, int count,
                                     std::uint64_t seed);

}  // namespace binpick
