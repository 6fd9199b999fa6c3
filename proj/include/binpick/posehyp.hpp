#pragma once

#include <array>

#include "binpick/detect.hpp"
#include "binpick/geometry.hpp"

namespace binpick {

// Uniform binning of [lo, hi); the representative value is the bin center.
struct BinSpec {
  int count = 1;
  double lo = 0.0;
  double hi = 1.0;

  double width() const { return (hi - lo) / count; }
  double center(int k) const;
  // Clamps to the valid index range; angular wrapping is the caller's job.
  int encode(double v) const;
};

struct HeadConfig {
  BinSpec pitch{30, 0.0, 2.0 * M_PI};
  BinSpec yaw{13, -M_PI / 2.0, M_PI / 2.0};
  BinSpec roll{30, 0.0, 2.0 * M_PI};  // unused when has_roll is false
  BinSpec depth{140, 0.0, 1.0};
  bool has_roll = true;  // false for axially symmetric objects

  int head_count() const { return has_roll ? 4 : 3; }
};

// Depth range = camera radius range padded by one bin diagonal.
HeadConfig make_head_config(const SceneConfig& scene, bool axial_symmetry);

struct PoseHypothesis {
  Pose6D pose;  // camera frame
  double confidence = 0.0;
  int detection_index = -1;
  Box2D box;
};

// (C,H,W) features + pixel box -> (C,7,7) nearest-neighbor patch.
TensorF roi_extract(const TensorF& features, const Box2D& box, int stride);

// Scatter-add of a patch gradient back onto the sampled feature cells.
void roi_extract_backward(const TensorF& d_patch, const Box2D& box, int stride,
                          TensorF& d_features);

// Heads all consume the flattened 7x7 patch.
Sequential<float> make_offset_head(int channels);              // -> 2
Sequential<float> make_class_head(const std::string& name,
                                  int channels, int bins);     // -> softmax

// Center decode: (cx + xhat*w, cy + yhat*h) in pixels.
std::array<double, 2> decode_center(const std::array<double, 2>& offsets,
                                    const Box2D& box);
std::array<double, 2> encode_center(double center_x, double center_y,
                                    const Box2D& box);

// L1 in box-normalized units; d_pred gets the gradient.
double offset_loss(const std::array<double, 2>& pred, double gt_center_x,
                   double gt_center_y, const Box2D& box,
                   std::array<double, 2>* d_pred = nullptr);

// Sum over heads of -log(prob at the target bin); d_probs (same shapes as
// probs) accumulates the gradient when given.
double classification_loss(const std::vector<const TensorF*>& probs,
                           const std::vector<int>& gt_bins,
                           std::vector<TensorF*>* d_probs = nullptr);

// Ground-truth bins for one annotated pose; out-of-range depth clamps with a
// warning on stderr.
std::vector<int> gt_bins_for_pose(const Pose6D& pose, const HeadConfig& cfg);

Vec3 decode_translation(double u, double v, int depth_bin,
                        const HeadConfig& cfg, const CameraView& view);

// Cartesian product of the per-head top-k bins; confidence = product of the
// selected probabilities. Pose angles sit at bin centers; translation comes
// from the regressed center and the depth bin.
std::vector<PoseHypothesis> enumerate_hypotheses(
    const std::vector<const TensorF*>& probs, double center_u, double center_v,
    const HeadConfig& cfg, const CameraView& view, int k_per_head = 3);

// Conceptual full enumeration cardinality (bins multiplied across heads).
long long full_hypothesis_space(const HeadConfig& cfg);

// Greedy suppression of hypotheses within dist_threshold (sym_distance).
std::vector<PoseHypothesis> pose_nms(const std::vector<PoseHypothesis>& hyps,
                                     const MeshModel& model,
                                     double dist_threshold);

// Descending-confidence top-n, ties by index.
std::vector<PoseHypothesis> select_top(const std::vector<PoseHypothesis>& hyps,
                                       int n = 5);

}  // namespace binpick
