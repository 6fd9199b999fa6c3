#include "binpick/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace binpick {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + e^x) without overflow.
double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

Box2D AnchorGrid::box(int index) const {
  const int per_cell = static_cast<int>(sizes.size());
  const int a = index % per_cell;
  const int cell = index / per_cell;
  const int col = cell % cells_x;
  const int row = cell / cells_x;
  const double cx = col * stride + stride / 2.0;
  const double cy = row * stride + stride / 2.0;
  const double s = sizes[a];
  return {cx - s / 2.0, cy - s / 2.0, s, s};
}

AnchorGrid make_anchor_grid(int image_w, int image_h, const DetectConfig& cfg) {
  if (image_w <= 0 || image_h <= 0 || image_w % cfg.stride ||
      image_h % cfg.stride)
    throw ContractViolation("image size must be a positive multiple of stride");
  if (cfg.anchor_sizes.empty())
    throw ContractViolation("need at least one anchor size");
  AnchorGrid g;
  g.stride = cfg.stride;
  g.sizes = cfg.anchor_sizes;
  g.cells_x = image_w / cfg.stride;
  g.cells_y = image_h / cfg.stride;
  return g;
}

TensorF normalize_depth(const DepthImage& img, const RenderConfig& cfg) {
  TensorF out({1, img.height, img.width});
  const double span = cfg.far_plane - cfg.near_plane;
  for (std::size_t i = 0; i < img.depth.size(); ++i)
    out[static_cast<int>(i)] =
        static_cast<float>((img.depth[i] - cfg.near_plane) / span);
  return out;
}

Sequential<float> make_backbone() {
  Sequential<float> s;
  s.layers = {Conv3x3<float>("backbone.conv1", 1, 1, 8),    Relu{},
              Conv3x3<float>("backbone.conv2", 1, 8, 16),   Relu{},
              MaxPool2x2{},
              Conv3x3<float>("backbone.conv3", 1, 16, 32),  Relu{},
              Conv3x3<float>("backbone.conv4", 1, 32, 32),  Relu{},
              MaxPool2x2{}};
  return s;
}

Sequential<float> make_detect_head(int anchors_per_cell) {
  Sequential<float> s;
  s.layers = {Conv3x3<float>("detect.conv1", 1, 32, 64), Relu{},
              Conv3x3<float>("detect.out", 1, 64, 5 * anchors_per_cell)};
  return s;
}

std::array<double, 4> encode_box(const Box2D& anchor, const Box2D& target) {
  if (anchor.w <= 0 || anchor.h <= 0 || target.w <= 0 || target.h <= 0)
    throw ContractViolation("encode_box requires positive extents");
  return {(target.cx() - anchor.cx()) / anchor.w,
          (target.cy() - anchor.cy()) / anchor.h, std::log(target.w / anchor.w),
          std::log(target.h / anchor.h)};
}

Box2D decode_box(const Box2D& anchor, const std::array<double, 4>& deltas) {
  const double cx = anchor.cx() + deltas[0] * anchor.w;
  const double cy = anchor.cy() + deltas[1] * anchor.h;
  const double w = anchor.w * std::exp(deltas[2]);
  const double h = anchor.h * std::exp(deltas[3]);
  return {cx - w / 2.0, cy - h / 2.0, w, h};
}

Box2D clip_box(const Box2D& box, int image_w, int image_h) {
  const double x0 = std::clamp(box.x, 0.0, static_cast<double>(image_w));
  const double y0 = std::clamp(box.y, 0.0, static_cast<double>(image_h));
  const double x1 = std::clamp(box.x + box.w, x0, static_cast<double>(image_w));
  const double y1 = std::clamp(box.y + box.h, y0, static_cast<double>(image_h));
  return {x0, y0, x1 - x0, y1 - y0};
}

Assignment assign_anchors(const AnchorGrid& grid,
                          const std::vector<Box2D>& gt_boxes,
                          const DetectConfig& cfg) {
  const int n = grid.count();
  const int m = static_cast<int>(gt_boxes.size());
  Assignment out;
  out.labels.assign(n, AnchorLabel::negative);
  out.matched_gt.assign(n, -1);
  if (m == 0) return out;

  std::vector<double> best_iou(n, 0.0);
  std::vector<int> best_gt(n, -1);
  std::vector<double> gt_best_iou(m, 0.0);
  std::vector<int> gt_best_anchor(m, -1);
  for (int i = 0; i < n; ++i) {
    const Box2D a = grid.box(i);
    for (int g = 0; g < m; ++g) {
      const double iou = box2d_iou(a, gt_boxes[g]);
      if (iou > best_iou[i]) {
        best_iou[i] = iou;
        best_gt[i] = g;
      }
      if (iou > gt_best_iou[g]) {
        gt_best_iou[g] = iou;
        gt_best_anchor[g] = i;  // strict > keeps the lowest anchor index on ties
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (best_iou[i] >= cfg.pos_iou) {
      out.labels[i] = AnchorLabel::positive;
      out.matched_gt[i] = best_gt[i];
    } else if (best_iou[i] >= cfg.neg_iou) {
      out.labels[i] = AnchorLabel::ignore;
    }
  }
  // Every box claims its best-overlap anchor even below the threshold.
  for (int g = 0; g < m; ++g) {
    if (gt_best_anchor[g] >= 0 && gt_best_iou[g] > 0) {
      out.labels[gt_best_anchor[g]] = AnchorLabel::positive;
      out.matched_gt[gt_best_anchor[g]] = g;
    }
  }
  return out;
}

double detection_loss(const TensorF& raw, TensorF& raw_grad,
                      const AnchorGrid& grid, const Assignment& assign,
                      const std::vector<Box2D>& gt_boxes, Rng& rng,
                      const DetectConfig& cfg) {
  const int per_cell = static_cast<int>(grid.sizes.size());
  require_shape({5 * per_cell, grid.cells_y, grid.cells_x}, raw.shape(),
                "detection_loss raw");
  require_shape(raw.shape(), raw_grad.shape(), "detection_loss raw_grad");
  const int n = grid.count();
  if (static_cast<int>(assign.labels.size()) != n)
    throw ContractViolation("assignment size mismatch");

  std::vector<int> pos, neg;
  for (int i = 0; i < n; ++i) {
    if (assign.labels[i] == AnchorLabel::positive) pos.push_back(i);
    else if (assign.labels[i] == AnchorLabel::negative) neg.push_back(i);
  }
  auto subsample = [&rng](std::vector<int>& v, int keep) {
    // Partial Fisher-Yates: the first `keep` entries are a uniform sample.
    for (int i = 0; i < keep && i + 1 < static_cast<int>(v.size()); ++i) {
      const int j = i + static_cast<int>(rng.uniform_int(
                            0, static_cast<int>(v.size()) - 1 - i));
      std::swap(v[i], v[j]);
    }
    if (static_cast<int>(v.size()) > keep) v.resize(keep);
  };
  subsample(pos, cfg.sample_pos);
  subsample(neg, cfg.sample_neg);

  const int cells = grid.cells_x * grid.cells_y;
  auto flat = [&](int anchor, int field) {
    const int a = anchor % per_cell;
    const int cell = anchor / per_cell;
    return (a * 5 + field) * cells + cell;
  };

  double loss = 0.0;
  const int n_cls = static_cast<int>(pos.size() + neg.size());
  if (n_cls > 0) {
    for (int i : pos) {
      const double l = raw[flat(i, 0)];
      loss += softplus(-l) / n_cls;
      raw_grad[flat(i, 0)] += static_cast<float>((sigmoid(l) - 1.0) / n_cls);
    }
    for (int i : neg) {
      const double l = raw[flat(i, 0)];
      loss += softplus(l) / n_cls;
      raw_grad[flat(i, 0)] += static_cast<float>(sigmoid(l) / n_cls);
    }
  }
  if (!pos.empty()) {
    const int n_pos = static_cast<int>(pos.size());
    for (int i : pos) {
      const auto target = encode_box(grid.box(i), gt_boxes[assign.matched_gt[i]]);
      for (int f = 0; f < 4; ++f) {
        const double d = raw[flat(i, f + 1)] - target[f];
        loss += std::abs(d) / n_pos;
        raw_grad[flat(i, f + 1)] +=
            static_cast<float>((d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / n_pos);
      }
    }
  }
  return loss;
}

std::vector<Detection> decode_detections(const TensorF& raw,
                                         const AnchorGrid& grid, int image_w,
                                         int image_h, const DetectConfig& cfg) {
  const int per_cell = static_cast<int>(grid.sizes.size());
  require_shape({5 * per_cell, grid.cells_y, grid.cells_x}, raw.shape(),
                "decode_detections raw");
  const int cells = grid.cells_x * grid.cells_y;
  std::vector<Detection> out;
  for (int i = 0; i < grid.count(); ++i) {
    const int a = i % per_cell;
    const int cell = i / per_cell;
    const double score = sigmoid(raw[(a * 5) * cells + cell]);
    if (score < cfg.score_thresh) continue;
    std::array<double, 4> deltas;
    for (int f = 0; f < 4; ++f) deltas[f] = raw[(a * 5 + f + 1) * cells + cell];
    Box2D box = clip_box(decode_box(grid.box(i), deltas), image_w, image_h);
    if (box.w <= 1.0 || box.h <= 1.0) continue;
    out.push_back({box, score});
  }
  return out;
}

std::vector<Detection> box_nms(std::vector<Detection> dets,
                               double iou_threshold) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<Detection> kept;
  std::vector<char> removed(dets.size(), 0);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const int i = order[oi];
    if (removed[i]) continue;
    kept.push_back(dets[i]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const int j = order[oj];
      if (!removed[j] && box2d_iou(dets[i].box, dets[j].box) > iou_threshold)
        removed[j] = 1;
    }
  }
  return kept;
}

}  // namespace binpick
