#include "binpick/posehyp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace binpick {

double BinSpec::center(int k) const {
  if (k < 0 || k >= count) throw ContractViolation("bin index out of range");
  return lo + (k + 0.5) * width();
}

int BinSpec::encode(double v) const {
  const int k = static_cast<int>(std::floor((v - lo) / width()));
  return std::clamp(k, 0, count - 1);
}

HeadConfig make_head_config(const SceneConfig& scene, bool axial_symmetry) {
  HeadConfig cfg;
  cfg.has_roll = !axial_symmetry;
  // Pad the camera radius shell by 1.5 bin diagonals on both sides: piles
  // can overflow the bin upward, bringing instances well inside the nominal
  // minimum radius.
  const double diag = scene.bin_diagonal();
  cfg.depth.lo = (scene.view_radius_min_factor - 1.5) * diag;
  cfg.depth.hi = (scene.view_radius_max_factor + 1.5) * diag;
  if (cfg.depth.lo <= 0) cfg.depth.lo = 0.01;
  return cfg;
}

TensorF roi_extract(const TensorF& features, const Box2D& box, int stride) {
  if (features.rank() != 3)
    throw ContractViolation("roi_extract expects (C,H,W) features");
  if (box.w < 2.0 || box.h < 2.0)
    throw ContractViolation("roi_extract: degenerate box");
  const int C = features.dim(0), H = features.dim(1), W = features.dim(2);
  TensorF patch({C, 7, 7});
  for (int i = 0; i < 7; ++i) {
    const double py = (box.y + (i + 0.5) * box.h / 7.0) / stride;
    const int sy = std::clamp(static_cast<int>(std::floor(py)), 0, H - 1);
    for (int j = 0; j < 7; ++j) {
      const double px = (box.x + (j + 0.5) * box.w / 7.0) / stride;
      const int sx = std::clamp(static_cast<int>(std::floor(px)), 0, W - 1);
      for (int c = 0; c < C; ++c)
        patch[(c * 7 + i) * 7 + j] = features[(c * H + sy) * W + sx];
    }
  }
  return patch;
}

void roi_extract_backward(const TensorF& d_patch, const Box2D& box, int stride,
                          TensorF& d_features) {
  if (d_features.rank() != 3)
    throw ContractViolation("roi_extract_backward expects (C,H,W) features");
  const int C = d_features.dim(0), H = d_features.dim(1), W = d_features.dim(2);
  require_shape({C, 7, 7}, d_patch.shape(), "roi patch gradient");
  if (box.w < 2.0 || box.h < 2.0)
    throw ContractViolation("roi_extract_backward: degenerate box");
  for (int i = 0; i < 7; ++i) {
    const double py = (box.y + (i + 0.5) * box.h / 7.0) / stride;
    const int sy = std::clamp(static_cast<int>(std::floor(py)), 0, H - 1);
    for (int j = 0; j < 7; ++j) {
      const double px = (box.x + (j + 0.5) * box.w / 7.0) / stride;
      const int sx = std::clamp(static_cast<int>(std::floor(px)), 0, W - 1);
      for (int c = 0; c < C; ++c)
        d_features[(c * H + sy) * W + sx] += d_patch[(c * 7 + i) * 7 + j];
    }
  }
}

Sequential<float> make_offset_head(int channels) {
  Sequential<float> s;
  s.layers = {FullyConnected<float>("offset.fc1", channels * 49, 256), Relu{},
              FullyConnected<float>("offset.fc2", 256, 2)};
  return s;
}

Sequential<float> make_class_head(const std::string& name, int channels,
                                  int bins) {
  Sequential<float> s;
  s.layers = {FullyConnected<float>(name + ".fc1", channels * 49, 256), Relu{},
              FullyConnected<float>(name + ".fc2", 256, bins), Softmax{}};
  return s;
}

std::array<double, 2> decode_center(const std::array<double, 2>& offsets,
                                    const Box2D& box) {
  return {box.x + offsets[0] * box.w, box.y + offsets[1] * box.h};
}

std::array<double, 2> encode_center(double center_x, double center_y,
                                    const Box2D& box) {
  if (box.w <= 0 || box.h <= 0)
    throw ContractViolation("encode_center: degenerate box");
  return {(center_x - box.x) / box.w, (center_y - box.y) / box.h};
}

double offset_loss(const std::array<double, 2>& pred, double gt_center_x,
                   double gt_center_y, const Box2D& box,
                   std::array<double, 2>* d_pred) {
  const auto gt = encode_center(gt_center_x, gt_center_y, box);
  double loss = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double d = pred[i] - gt[i];
    loss += std::abs(d);
    if (d_pred) (*d_pred)[i] += d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
  }
  return loss;
}

double classification_loss(const std::vector<const TensorF*>& probs,
                           const std::vector<int>& gt_bins,
                           std::vector<TensorF*>* d_probs) {
  if (probs.size() != gt_bins.size())
    throw ContractViolation("classification_loss: head count mismatch");
  double loss = 0.0;
  for (std::size_t h = 0; h < probs.size(); ++h) {
    const TensorF& p = *probs[h];
    const int g = gt_bins[h];
    if (g < 0 || g >= p.size())
      throw ContractViolation("classification_loss: target bin out of range");
    const double pg = std::max(static_cast<double>(p[g]), 1e-12);
    loss += -std::log(pg);
    if (d_probs) (*(*d_probs)[h])[g] += static_cast<float>(-1.0 / pg);
  }
  return loss;
}

std::vector<int> gt_bins_for_pose(const Pose6D& pose, const HeadConfig& cfg) {
  std::vector<int> bins;
  bins.push_back(cfg.pitch.encode(wrap_angle_2pi(pose.pitch)));
  bins.push_back(cfg.yaw.encode(pose.yaw));
  if (cfg.has_roll) bins.push_back(cfg.roll.encode(wrap_angle_2pi(pose.roll)));
  const double z = pose.t.z();
  if (z < cfg.depth.lo || z > cfg.depth.hi)
    std::fprintf(stderr,
                 "warning: depth %.4f outside [%.4f, %.4f], clamping\n", z,
                 cfg.depth.lo, cfg.depth.hi);
  bins.push_back(cfg.depth.encode(z));
  return bins;
}

Vec3 decode_translation(double u, double v, int depth_bin,
                        const HeadConfig& cfg, const CameraView& view) {
  const double z = cfg.depth.center(depth_bin);
  return {(u - view.cx) * z / view.fx, (v - view.cy) * z / view.fy, z};
}

namespace {

std::vector<int> top_k_bins(const TensorF& probs, int k) {
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs[a] > probs[b]; });
  order.resize(std::min<std::size_t>(order.size(), k));
  return order;
}

}  // namespace

std::vector<PoseHypothesis> enumerate_hypotheses(
    const std::vector<const TensorF*>& probs, double center_u, double center_v,
    const HeadConfig& cfg, const CameraView& view, int k_per_head) {
  const int heads = cfg.head_count();
  if (static_cast<int>(probs.size()) != heads)
    throw ContractViolation("enumerate_hypotheses: head count mismatch");
  std::vector<std::vector<int>> tops;
  for (const TensorF* p : probs) tops.push_back(top_k_bins(*p, k_per_head));

  std::vector<PoseHypothesis> out;
  const std::vector<int>& pitch_top = tops[0];
  const std::vector<int>& yaw_top = tops[1];
  const std::vector<int> roll_top =
      cfg.has_roll ? tops[2] : std::vector<int>{0};
  const std::vector<int>& depth_top = tops[heads - 1];
  for (int pb : pitch_top)
    for (int yb : yaw_top)
      for (int rb : roll_top)
        for (int db : depth_top) {
          PoseHypothesis h;
          h.pose.pitch = cfg.pitch.center(pb);
          h.pose.yaw = cfg.yaw.center(yb);
          h.pose.roll = cfg.has_roll ? cfg.roll.center(rb) : 0.0;
          h.pose.t = decode_translation(center_u, center_v, db, cfg, view);
          double conf = (*probs[0])[pb] * (*probs[1])[yb] *
                        (*probs[heads - 1])[db];
          if (cfg.has_roll) conf *= (*probs[2])[rb];
          h.confidence = conf;
          out.push_back(h);
        }
  return out;
}

long long full_hypothesis_space(const HeadConfig& cfg) {
  long long n = 1LL * cfg.pitch.count * cfg.yaw.count * cfg.depth.count;
  if (cfg.has_roll) n *= cfg.roll.count;
  return n;
}

std::vector<PoseHypothesis> pose_nms(const std::vector<PoseHypothesis>& hyps,
                                     const MeshModel& model,
                                     double dist_threshold) {
  std::vector<int> order(hyps.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return hyps[a].confidence > hyps[b].confidence;
  });
  std::vector<PoseHypothesis> kept;
  std::vector<char> removed(hyps.size(), 0);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const int i = order[oi];
    if (removed[i]) continue;
    kept.push_back(hyps[i]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const int j = order[oj];
      if (!removed[j] &&
          sym_distance(hyps[i].pose, hyps[j].pose, model) < dist_threshold)
        removed[j] = 1;
    }
  }
  return kept;
}

std::vector<PoseHypothesis> select_top(const std::vector<PoseHypothesis>& hyps,
                                       int n) {
  std::vector<int> order(hyps.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return hyps[a].confidence > hyps[b].confidence;
  });
  std::vector<PoseHypothesis> out;
  for (int i = 0; i < std::min<int>(n, order.size()); ++i)
    out.push_back(hyps[order[i]]);
  return out;
}

}  // namespace binpick
