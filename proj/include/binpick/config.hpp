#pragma once

#include <cstdint>
#include <string>

#include "binpick/render.hpp"

namespace binpick {

// Every tunable in one flat key=value config. Defaults reproduce the desk
// preset; parse() rejects unknown keys.
struct RunConfig {
  // Object + scene generation.
  std::string object_kind = "wedge";  // wedge | box | cylinder
  double object_a = 0.06, object_b = 0.09, object_c = 0.05;
  // auto = primitive's natural group; else none | box | cN | axial | axial_flip
  std::string object_symmetry = "auto";
  double bin_half_x = 0.11, bin_half_y = 0.11, bin_half_z = 0.05;
  std::int64_t n_min = 10, n_max = 20;
  std::int64_t settle_iters = 400;
  double settle_tolerance = 5e-4;
  std::int64_t train_scenes = 50, test_scenes = 20;
  std::int64_t views_per_scene = 17;
  double view_radius_min_factor = 2.0, view_radius_max_factor = 3.0;
  double elev_min_deg = 30.0, elev_max_deg = 90.0;
  std::int64_t image_width = 128, image_height = 128;
  double focal_px = 200.0;

  // Rendering.
  double near_plane = 0.1, far_plane = 4.0;
  double noise_sigma = 0.0;

  // Detection.
  double detect_score_thresh = 0.05;
  double detect_nms_iou = 0.5;
  std::int64_t detect_max_out = 40;
  double assign_pos_iou = 0.5, assign_neg_iou = 0.2;
  std::int64_t sample_pos = 64, sample_neg = 64;

  // Pose hypothesis heads.
  std::int64_t pitch_bins = 30, yaw_bins = 13, roll_bins = 30;
  std::int64_t depth_bins = 140;
  double depth_lo = 0.0, depth_hi = 0.0;  // 0 = derive from view geometry
  std::int64_t topk_per_head = 3;
  std::int64_t max_hypotheses = 5;
  double pose_nms_factor = 0.05;

  // Relational rescoring.
  std::int64_t jointreg_blocks = 1;
  double jointreg_neg_weight = 16.0;
  double match_factor = 0.1;

  // Training.
  double lr = 1e-3;
  std::int64_t train_steps = 5000;
  std::int64_t jointreg_steps = 2000;
  double w_detect = 1.0, w_offset = 1.0, w_depth = 1.0, w_pose = 1.0;
  double center_jitter = 0.2;

  // Evaluation.
  double eval_threshold_factor = 0.1;
  double min_visibility = 0.0;
  std::string eval_confidence = "registration";  // raw | registration

  std::uint64_t seed = 1;

  SceneConfig scene_config() const;
  MeshModel build_model() const;
  RenderConfig render_config() const;
};

// key = value lines; '#' comments; unknown keys rejected.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);
// Canonical sorted dump; parse(dump(c)) == c.
std::string dump_config(const RunConfig& cfg);
// FNV-1a over the canonical dump, hex.
std::string config_hash(const RunConfig& cfg);

}  // namespace binpick
