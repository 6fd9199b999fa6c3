#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "binpick/adam.hpp"
#include "binpick/detect.hpp"
#include "binpick/gradcheck.hpp"

using namespace binpick;

namespace {

DepthImage constant_depth(int w, int h, float value) {
  DepthImage img;
  img.width = w;
  img.height = h;
  img.depth.assign(static_cast<std::size_t>(w) * h, value);
  return img;
}

}  // namespace

TEST_CASE("depth normalization maps the working range to [0,1]") {
  RenderConfig cfg;
  DepthImage img = constant_depth(4, 2, static_cast<float>(cfg.far_plane));
  img.depth[0] = static_cast<float>(cfg.near_plane);
  img.depth[1] = static_cast<float>(0.5 * (cfg.near_plane + cfg.far_plane));
  TensorF t = normalize_depth(img, cfg);
  REQUIRE(t.shape() == std::vector<int>{1, 2, 4});
  CHECK(t[0] == doctest::Approx(0.0));
  CHECK(t[1] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(t[2] == doctest::Approx(1.0));  // background
}

TEST_CASE("backbone output shape and constant-input invariance") {
  Sequential<float> net = make_backbone();
  Rng rng(3);
  net.init(rng);
  RenderConfig rcfg;
  TensorF in = normalize_depth(constant_depth(64, 64, 1.0f), rcfg);
  TensorF out = net.forward(in);
  REQUIRE(out.shape() == std::vector<int>{32, 16, 16});
  CHECK(out.all_finite());
  // Interior cells away from the zero-padded border are identical.
  for (int c = 0; c < 32; ++c) {
    const float ref = out[(c * 16 + 8) * 16 + 8];
    for (int y = 4; y < 12; ++y)
      for (int x = 4; x < 12; ++x)
        CHECK(out[(c * 16 + y) * 16 + x] == doctest::Approx(ref).epsilon(1e-5));
  }
  // Determinism.
  TensorF again = net.forward(in);
  bool same = true;
  for (int i = 0; i < out.size(); ++i) same = same && out[i] == again[i];
  CHECK(same);
}

TEST_CASE("anchor grid tiles the image") {
  DetectConfig cfg;
  AnchorGrid g = make_anchor_grid(128, 128, cfg);
  CHECK(g.cells_x == 32);
  CHECK(g.cells_y == 32);
  CHECK(g.count() == 32 * 32 * 3);
  // First cell, first size: centered at (2,2) with extent 16.
  Box2D b0 = g.box(0);
  CHECK(b0.cx() == doctest::Approx(2.0));
  CHECK(b0.cy() == doctest::Approx(2.0));
  CHECK(b0.w == 16.0);
  // Last anchor sits in the last cell.
  Box2D last = g.box(g.count() - 1);
  CHECK(last.cx() == doctest::Approx(126.0));
  CHECK(last.cy() == doctest::Approx(126.0));
  CHECK(last.w == 32.0);
  CHECK_THROWS_AS(make_anchor_grid(126, 128, cfg), ContractViolation);
}

TEST_CASE("zero deltas decode to the anchor box") {
  DetectConfig cfg;
  AnchorGrid g = make_anchor_grid(128, 128, cfg);
  for (int i : {0, 7, 100, g.count() - 1}) {
    Box2D a = g.box(i);
    Box2D d = decode_box(a, {0, 0, 0, 0});
    CHECK(d.x == doctest::Approx(a.x));
    CHECK(d.y == doctest::Approx(a.y));
    CHECK(d.w == doctest::Approx(a.w));
    CHECK(d.h == doctest::Approx(a.h));
  }
}

TEST_CASE("encode/decode round trips") {
  DetectConfig cfg;
  AnchorGrid g = make_anchor_grid(128, 128, cfg);
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Box2D a = g.box(rng.uniform_int(0, g.count() - 1));
    Box2D target{rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(4, 40),
                 rng.uniform(4, 40)};
    auto deltas = encode_box(a, target);
    Box2D back = decode_box(a, deltas);
    CHECK(std::abs(back.x - target.x) < 1e-5);
    CHECK(std::abs(back.y - target.y) < 1e-5);
    CHECK(std::abs(back.w - target.w) < 1e-5);
    CHECK(std::abs(back.h - target.h) < 1e-5);

    // decode then encode is the identity on deltas too.
    std::array<double, 4> d2 = {rng.uniform(-1, 1), rng.uniform(-1, 1),
                                rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7)};
    auto d3 = encode_box(a, decode_box(a, d2));
    for (int f = 0; f < 4; ++f) CHECK(std::abs(d3[f] - d2[f]) < 1e-5);
  }
}

TEST_CASE("anchor assignment rules") {
  DetectConfig cfg;
  AnchorGrid g = make_anchor_grid(128, 128, cfg);

  // A GT identical to some anchor: that anchor is positive.
  const int probe = (10 * 32 + 10) * 3 + 1;  // cell (10,10), 24 px
  std::vector<Box2D> gt = {g.box(probe)};
  Assignment as = assign_anchors(g, gt, cfg);
  CHECK(as.labels[probe] == AnchorLabel::positive);
  CHECK(as.matched_gt[probe] == 0);

  // Anchors far away are negative.
  const int far_idx = (30 * 32 + 30) * 3;
  CHECK(as.labels[far_idx] == AnchorLabel::negative);
  CHECK(as.matched_gt[far_idx] == -1);

  int n_pos = 0;
  for (auto l : as.labels) n_pos += l == AnchorLabel::positive;
  CHECK(n_pos >= 1);

  // Empty GT: everything negative.
  Assignment none = assign_anchors(g, {}, cfg);
  for (auto l : none.labels) CHECK(l == AnchorLabel::negative);

  // A tiny off-grid GT still claims its best-overlap anchor.
  std::vector<Box2D> tiny = {{50.3, 61.2, 6.0, 5.0}};
  Assignment at = assign_anchors(g, tiny, cfg);
  int tiny_pos = 0;
  for (auto l : at.labels) tiny_pos += l == AnchorLabel::positive;
  CHECK(tiny_pos >= 1);
}

TEST_CASE("ignore band sits between the thresholds") {
  DetectConfig cfg;
  cfg.anchor_sizes = {16.0};
  AnchorGrid g = make_anchor_grid(32, 32, cfg);
  // Craft a GT whose IoU with the cell-(4,4) anchor lands inside (0.2, 0.5).
  const int idx = 4 * 8 + 4;
  const Box2D a = g.box(idx);
  Box2D gt{a.x + 8.0, a.y, 16.0, 16.0};  // half horizontal overlap, IoU = 1/3
  CHECK(box2d_iou(a, gt) == doctest::Approx(1.0 / 3.0));
  Assignment as = assign_anchors(g, {gt}, cfg);
  // Not this anchor's box (another anchor overlaps more), IoU in the band.
  CHECK(as.labels[idx] == AnchorLabel::ignore);
}

TEST_CASE("detection loss on perfect and neutral predictions") {
  DetectConfig cfg;
  cfg.anchor_sizes = {16.0};
  AnchorGrid g = make_anchor_grid(32, 32, cfg);
  std::vector<Box2D> gt = {g.box(2 * 8 + 3)};
  Assignment as = assign_anchors(g, gt, cfg);

  TensorF raw = TensorF::zeros({5, 8, 8});
  TensorF grad = TensorF::zeros({5, 8, 8});
  // Exact deltas for every positive anchor; logits stay zero.
  for (int i = 0; i < g.count(); ++i) {
    if (as.labels[i] != AnchorLabel::positive) continue;
    const auto target = encode_box(g.box(i), gt[as.matched_gt[i]]);
    for (int f = 0; f < 4; ++f)
      raw[(f + 1) * 64 + i] = static_cast<float>(target[f]);
  }
  Rng rng(5);
  // Zero logits: the objectness term is ln 2, the box term vanishes.
  const double neutral = detection_loss(raw, grad, g, as, gt, rng, cfg);
  CHECK(neutral == doctest::Approx(std::log(2.0)).epsilon(1e-6));

  // Saturate logits the right way and keep deltas exact: loss < 1e-6.
  for (int i = 0; i < g.count(); ++i)
    raw[i] = as.labels[i] == AnchorLabel::positive ? 20.0f : -20.0f;
  grad.set_zero();
  Rng rng2(5);
  const double perfect = detection_loss(raw, grad, g, as, gt, rng2, cfg);
  CHECK(perfect >= 0.0);
  CHECK(perfect < 1e-6);
}

TEST_CASE("no positives trains objectness only") {
  DetectConfig cfg;
  cfg.anchor_sizes = {16.0};
  AnchorGrid g = make_anchor_grid(32, 32, cfg);
  Assignment as = assign_anchors(g, {}, cfg);
  TensorF raw = TensorF::zeros({5, 8, 8});
  TensorF grad = TensorF::zeros({5, 8, 8});
  Rng rng(1);
  const double loss = detection_loss(raw, grad, g, as, {}, rng, cfg);
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  // Delta channels receive no gradient.
  for (int f = 1; f < 5; ++f)
    for (int c = 0; c < 64; ++c) CHECK(grad[f * 64 + c] == 0.0f);
}

TEST_CASE("detection loss gradient matches finite differences") {
  DetectConfig cfg;
  cfg.anchor_sizes = {16.0, 24.0};
  cfg.sample_pos = 64;
  cfg.sample_neg = 64;
  AnchorGrid g = make_anchor_grid(32, 32, cfg);
  std::vector<Box2D> gt = {{6.2, 7.1, 15.0, 17.0}, {18.0, 14.0, 20.0, 18.0}};
  Assignment as = assign_anchors(g, gt, cfg);

  Rng init(17);
  TensorF raw({10, 8, 8});
  for (int i = 0; i < raw.size(); ++i)
    raw[i] = static_cast<float>(init.uniform(-1.5, 1.5));
  // L1 kinks: keep every delta away from its target by more than the probe.
  for (int i = 0; i < g.count(); ++i) {
    if (as.labels[i] != AnchorLabel::positive) continue;
    const auto target = encode_box(g.box(i), gt[as.matched_gt[i]]);
    const int a = i % 2, cell = i / 2;
    for (int f = 0; f < 4; ++f) {
      const int idx = (a * 5 + f + 1) * 64 + cell;
      if (std::abs(raw[idx] - target[f]) < 0.05)
        raw[idx] = static_cast<float>(target[f] + 0.1);
    }
  }

  TensorF analytic = TensorF::zeros(raw.shape());
  Rng rng_a(9);
  detection_loss(raw, analytic, g, as, gt, rng_a, cfg);

  // The sampler is seed-controlled, so an identically seeded loss call is a
  // deterministic function of raw; probe it in double precision.
  Tensor<double> raw_d = raw.cast<double>();
  auto loss_fn = [&](const Tensor<double>& x) {
    TensorF xf = x.cast<float>();
    TensorF scratch = TensorF::zeros(xf.shape());
    Rng r(9);
    return detection_loss(xf, scratch, g, as, gt, r, cfg);
  };
  Tensor<double> analytic_d = analytic.cast<double>();
  const double err = grad_check(loss_fn, analytic_d, raw_d, 1e-3);
  CHECK(err < 1e-3);
}

TEST_CASE("box nms matches the brute-force oracle") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Detection> dets;
    const int n = rng.uniform_int(1, 12);
    for (int i = 0; i < n; ++i)
      dets.push_back({{rng.uniform(0, 90), rng.uniform(0, 90),
                       rng.uniform(5, 40), rng.uniform(5, 40)},
                      rng.uniform(0.05, 1.0)});
    const double thr = 0.5;
    auto kept = box_nms(dets, thr);

    // Oracle: repeatedly take the global argmax, erase everything above
    // threshold against it.
    std::vector<Detection> pool = dets, expect;
    while (!pool.empty()) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < pool.size(); ++i)
        if (pool[i].score > pool[best].score) best = i;
      Detection top = pool[best];
      expect.push_back(top);
      std::vector<Detection> next;
      for (std::size_t i = 0; i < pool.size(); ++i)
        if (i != best && box2d_iou(top.box, pool[i].box) <= thr)
          next.push_back(pool[i]);
      pool = next;
    }
    REQUIRE(kept.size() == expect.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
      CHECK(kept[i].score == expect[i].score);
      CHECK(kept[i].box.x == expect[i].box.x);
    }
    // Survivors have pairwise IoU <= threshold.
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j)
        CHECK(box2d_iou(kept[i].box, kept[j].box) <= thr + 1e-12);
  }
}

TEST_CASE("nms keeps the higher-scoring of identical boxes") {
  std::vector<Detection> dets = {{{10, 10, 20, 20}, 0.8},
                                 {{10, 10, 20, 20}, 0.9},
                                 {{60, 60, 10, 10}, 0.3}};
  auto kept = box_nms(dets, 0.5);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].score == 0.9);
  CHECK(kept[1].score == 0.3);
}

TEST_CASE("decode_detections thresholds, clips, and bounds output") {
  DetectConfig cfg;
  cfg.anchor_sizes = {16.0};
  AnchorGrid g = make_anchor_grid(32, 32, cfg);
  TensorF raw = TensorF::zeros({5, 8, 8});
  for (int i = 0; i < 64; ++i) raw[i] = -20.0f;  // all below threshold
  raw[0] = 2.0f;   // strong at cell 0 (anchor pokes outside the image)
  raw[9] = 0.5f;   // moderate at cell 9
  auto dets = decode_detections(raw, g, 32, 32, cfg);
  REQUIRE(dets.size() == 2);
  for (const auto& d : dets) {
    CHECK(d.box.x >= 0.0);
    CHECK(d.box.y >= 0.0);
    CHECK(d.box.x + d.box.w <= 32.0);
    CHECK(d.box.y + d.box.h <= 32.0);
    CHECK(d.score >= cfg.score_thresh);
    CHECK(d.score <= 1.0);
  }
}

TEST_CASE("detector overfits one frame with mostly monotone loss") {
  DetectConfig cfg;
  RenderConfig rcfg;
  // Synthetic frame: two box-shaped dips in the depth image.
  DepthImage img = constant_depth(64, 64, 2.0f);
  auto stamp = [&](int x0, int y0, int w, int h, float d) {
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) img.at(x, y) = d;
  };
  stamp(8, 10, 18, 16, 1.2f);
  stamp(34, 30, 22, 20, 1.0f);
  std::vector<Box2D> gt = {{8, 10, 18, 16}, {34, 30, 22, 20}};

  Sequential<float> backbone = make_backbone();
  Sequential<float> head = make_detect_head(3);
  backbone.init(Rng(7));
  head.init(Rng(8));
  std::vector<Param<float>*> params;
  backbone.collect(params);
  head.collect(params);

  AnchorGrid grid = make_anchor_grid(64, 64, cfg);
  Assignment as = assign_anchors(grid, gt, cfg);
  TensorF input = normalize_depth(img, rcfg);

  AdamConfig acfg;
  auto train_step = [&](double lr) {
    auto acts_b = backbone.forward_cached(input);
    auto acts_h = head.forward_cached(acts_b.back());
    TensorF raw_grad = TensorF::zeros(acts_h.back().shape());
    // One fixed anchor sample per frame: the per-step objective is stable.
    Rng sampler(99);
    const double loss =
        detection_loss(acts_h.back(), raw_grad, grid, as, gt, sampler, cfg);
    backbone.backward(acts_b, head.backward(acts_h, raw_grad));
    adam_step(params, lr, acfg);
    return loss;
  };

  std::vector<double> trace;
  for (int step = 0; step < 200; ++step) trace.push_back(train_step(1e-4));
  CHECK(trace.back() < 0.5 * trace.front());
  int rises = 0;
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i] > trace[i - 1] + 1e-12) ++rises;
  CHECK(rises <= 10);  // <=5% non-monotone steps

  // Push further with a hotter rate until the frame is fully overfit.
  for (int step = 0; step < 300; ++step) train_step(1e-3);

  // The trained detector finds both objects.
  TensorF feat = backbone.forward(input);
  TensorF raw = head.forward(feat);
  auto dets = box_nms(decode_detections(raw, grid, 64, 64, cfg), cfg.nms_iou);
  if (static_cast<int>(dets.size()) > cfg.max_out) dets.resize(cfg.max_out);
  REQUIRE(dets.size() >= 2);
  for (const Box2D& g_box : gt) {
    double best = 0;
    for (const auto& d : dets) best = std::max(best, box2d_iou(d.box, g_box));
    CHECK(best >= 0.5);
  }
}
