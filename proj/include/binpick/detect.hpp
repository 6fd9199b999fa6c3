#pragma once

#include <array>

#include "binpick/layers.hpp"
#include "binpick/render.hpp"
#include "binpick/rng.hpp"

namespace binpick {

struct DetectConfig {
  double score_thresh = 0.05;
  double nms_iou = 0.5;
  int max_out = 40;
  double pos_iou = 0.5;
  double neg_iou = 0.2;
  int sample_pos = 64;
  int sample_neg = 64;
  std::vector<double> anchor_sizes = {16.0, 24.0, 32.0};
  int stride = 4;
};

// Square anchors tiling the image at the backbone stride; anchor index
// (cell_row * cells_x + cell_col) * sizes + size_index.
struct AnchorGrid {
  int stride = 4;
  std::vector<double> sizes;
  int cells_x = 0;
  int cells_y = 0;

  int count() const { return cells_x * cells_y * static_cast<int>(sizes.size()); }
  Box2D box(int index) const;
};

AnchorGrid make_anchor_grid(int image_w, int image_h, const DetectConfig& cfg);

struct Detection {
  Box2D box;
  double score = 0.0;
};

// Depth mapped affinely [near, far] -> [0, 1]; background (= far) maps to 1.
TensorF normalize_depth(const DepthImage& img, const RenderConfig& cfg);

// conv-relu x2, pool, conv-relu x2, pool: (1,H,W) -> (32,H/4,W/4).
Sequential<float> make_backbone();
// (32,Hc,Wc) -> (5*sizes, Hc, Wc); per anchor channel a*5 is the objectness
// logit, a*5+1.. are the box deltas (dx/wa, dy/ha, log w/wa, log h/ha).
Sequential<float> make_detect_head(int anchors_per_cell);

std::array<double, 4> encode_box(const Box2D& anchor, const Box2D& target);
Box2D decode_box(const Box2D& anchor, const std::array<double, 4>& deltas);
Box2D clip_box(const Box2D& box, int image_w, int image_h);

enum class AnchorLabel { negative, positive, ignore };

struct Assignment {
  std::vector<AnchorLabel> labels;
  std::vector<int> matched_gt;  // -1 unless positive
};

// Positive: IoU >= pos_iou with some box, or the best anchor of a box.
// Negative: max IoU < neg_iou. Anything between is ignored.
Assignment assign_anchors(const AnchorGrid& grid,
                          const std::vector<Box2D>& gt_boxes,
                          const DetectConfig& cfg);

// Sampled binary cross-entropy on objectness plus mean L1 on positive box
// deltas; writes d(loss)/d(raw) into raw_grad (accumulating).
double detection_loss(const TensorF& raw, TensorF& raw_grad,
                      const AnchorGrid& grid, const Assignment& assign,
                      const std::vector<Box2D>& gt_boxes, Rng& rng,
                      const DetectConfig& cfg);

// Sigmoid scores, threshold, decode, clip to the image.
std::vector<Detection> decode_detections(const TensorF& raw,
                                         const AnchorGrid& grid, int image_w,
                                         int image_h, const DetectConfig& cfg);

// Greedy descending-score suppression at IoU > threshold.
std::vector<Detection> box_nms(std::vector<Detection> dets,
                               double iou_threshold);

}  // namespace binpick
