#include "binpick/jointreg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace binpick {

namespace {

constexpr int kEmbed = 64;
constexpr int kBlock = 128;
constexpr int kRelation = 13;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double norm_angle(double a, const BinSpec& spec, bool wrap) {
  if (wrap) a = wrap_angle_2pi(a);
  return clamp01((a - spec.lo) / (spec.hi - spec.lo));
}

}  // namespace

double bbox_diameter(const MeshModel& model) {
  if (model.vertices.empty())
    throw ContractViolation("bbox_diameter: empty mesh");
  Vec3 lo = model.vertices.front(), hi = lo;
  for (const Vec3& v : model.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return (hi - lo).norm();
}

RelationFeature relation_feature(const PoseHypothesis& hoi,
                                 const PoseHypothesis& nh,
                                 const MeshModel& model, const HeadConfig& cfg) {
  const double diam = bbox_diameter(model);
  RelationFeature f;
  f.v[0] = hoi.confidence;
  f.v[1] = nh.confidence;
  f.v[2] = box2d_iou(hoi.box, nh.box);
  f.v[3] = norm_angle(hoi.pose.pitch, cfg.pitch, true);
  f.v[4] = norm_angle(hoi.pose.yaw, cfg.yaw, false);
  f.v[5] = norm_angle(hoi.pose.roll, cfg.roll, true);
  f.v[6] = norm_angle(nh.pose.pitch, cfg.pitch, true);
  f.v[7] = norm_angle(nh.pose.yaw, cfg.yaw, false);
  f.v[8] = norm_angle(nh.pose.roll, cfg.roll, true);
  const Vec3 d = hoi.pose.t - nh.pose.t;
  f.v[9] = d.x() / diam;
  f.v[10] = d.y() / diam;
  f.v[11] = d.z() / diam;
  f.v[12] = d.norm() / diam;
  return f;
}

std::vector<std::vector<int>> find_neighbors(
    const std::vector<PoseHypothesis>& hyps, const MeshModel& model) {
  const int n = static_cast<int>(hyps.size());
  std::vector<Box3D> boxes(n);
  for (int i = 0; i < n; ++i) boxes[i] = model_box3d(hyps[i].pose, model);
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      if (j != i && box3d_overlaps(boxes[i], boxes[j])) adj[i].push_back(j);
    if (adj[i].empty()) adj[i].push_back(i);
  }
  return adj;
}

std::vector<LabeledHypothesis> assign_labels(
    const std::vector<PoseHypothesis>& hyps, const std::vector<Pose6D>& gt,
    const MeshModel& model, double dist_threshold, double neg_weight) {
  const int n = static_cast<int>(hyps.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return hyps[a].confidence > hyps[b].confidence;
  });
  std::vector<char> taken(gt.size(), 0);
  std::vector<LabeledHypothesis> labels(n);
  for (int i : order) {
    int best = -1;
    double best_d = dist_threshold;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (taken[g]) continue;
      const double d = sym_distance(hyps[i].pose, gt[g], model);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      taken[best] = 1;
      labels[i] = {1, 1.0};
    } else {
      labels[i] = {-1, neg_weight};
    }
  }
  return labels;
}

void RegistrationNet::collect(std::vector<Param<float>*>& out) {
  projector.collect(out);
  for (auto& b : pair_blocks) b.collect(out);
  classifier.collect(out);
}

void RegistrationNet::init(Rng rng) {
  projector.init(rng.derive(1));
  for (std::size_t s = 0; s < pair_blocks.size(); ++s)
    pair_blocks[s].init(rng.derive(10 + s));
  classifier.init(rng.derive(2));
}

RegistrationNet make_registration_net(int patch_dim, int stages) {
  if (patch_dim <= 0)
    throw ContractViolation("make_registration_net: patch_dim must be > 0");
  if (stages < 1 || stages > 3)
    throw ContractViolation("make_registration_net: stages must be in [1,3]");
  RegistrationNet net;
  net.patch_dim = patch_dim;
  net.projector.layers = {FullyConnected<float>("jointreg.proj", patch_dim, kEmbed),
                          Relu{}};
  for (int s = 0; s < stages; ++s) {
    const int in = (s == 0 ? 2 * kEmbed : 2 * kBlock) + kRelation;
    Sequential<float> block;
    const std::string base = "jointreg.pair" + std::to_string(s + 1);
    block.layers = {FullyConnected<float>(base + "a", in, kBlock), Relu{},
                    FullyConnected<float>(base + "b", kBlock, kBlock)};
    net.pair_blocks.push_back(std::move(block));
  }
  net.classifier.layers = {FullyConnected<float>("jointreg.cls1", kBlock, 64),
                          Relu{},
                          FullyConnected<float>("jointreg.cls2", 64, 1)};
  return net;
}

std::vector<double> registration_forward(
    const RegistrationNet& net, const std::vector<PoseHypothesis>& hyps,
    const std::vector<TensorF>& patches,
    const std::vector<std::vector<int>>& adjacency, const MeshModel& model,
    const HeadConfig& cfg, RegistrationCache* cache) {
  const int n = static_cast<int>(hyps.size());
  if (static_cast<int>(patches.size()) != n ||
      static_cast<int>(adjacency.size()) != n)
    throw ContractViolation("registration_forward: size mismatch");
  if (net.pair_blocks.empty())
    throw ContractViolation("registration_forward: net has no pair blocks");
  const int stages = net.stages();

  if (cache) {
    *cache = RegistrationCache{};
    cache->pair_acts.resize(stages);
    cache->argmax.resize(stages);
  }

  std::vector<TensorF> proj(n);
  for (int i = 0; i < n; ++i) {
    require_shape({net.patch_dim}, patches[i].shape(), "registration patch");
    auto acts = net.projector.forward_cached(patches[i]);
    proj[i] = acts.back();
    if (cache) cache->proj_acts.push_back(std::move(acts));
  }

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j : adjacency[i]) {
      if (j < 0 || j >= n)
        throw ContractViolation("registration_forward: bad neighbor index");
      pairs.emplace_back(i, j);
    }
  if (cache) cache->pairs = pairs;

  std::vector<RelationFeature> rel(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p)
    rel[p] = relation_feature(hyps[pairs[p].first], hyps[pairs[p].second],
                              model, cfg);

  std::vector<TensorF> pooled(n);
  for (int s = 0; s < stages; ++s) {
    const std::vector<TensorF>& part = (s == 0) ? proj : pooled;
    const int part_dim = (s == 0) ? kEmbed : kBlock;
    std::vector<TensorF> next(n);
    std::vector<int> arg(static_cast<std::size_t>(n) * kBlock, -1);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [i, j] = pairs[p];
      TensorF in({2 * part_dim + kRelation});
      for (int e = 0; e < part_dim; ++e) {
        in[e] = part[i][e];
        in[part_dim + e] = part[j][e];
      }
      for (int e = 0; e < kRelation; ++e)
        in[2 * part_dim + e] = static_cast<float>(rel[p].v[e]);
      auto acts = net.pair_blocks[s].forward_cached(in);
      const TensorF& out = acts.back();
      if (next[i].size() == 0) next[i] = TensorF::full({kBlock}, 0.0f);
      for (int e = 0; e < kBlock; ++e)
        if (arg[i * kBlock + e] < 0 || out[e] > next[i][e]) {
          next[i][e] = out[e];
          arg[i * kBlock + e] = static_cast<int>(p);
        }
      if (cache) cache->pair_acts[s].push_back(std::move(acts));
    }
    for (int i = 0; i < n; ++i)
      if (next[i].size() == 0)
        throw ContractViolation("registration_forward: hypothesis without neighbors");
    if (cache) cache->argmax[s] = std::move(arg);
    pooled = std::move(next);
  }

  std::vector<double> scores(n);
  for (int i = 0; i < n; ++i) {
    auto acts = net.classifier.forward_cached(pooled[i]);
    scores[i] = acts.back()[0];
    if (cache) cache->cls_acts.push_back(std::move(acts));
  }
  return scores;
}

double registration_loss(const std::vector<double>& scores,
                         const std::vector<LabeledHypothesis>& labels,
                         std::vector<double>* d_scores) {
  if (scores.size() != labels.size())
    throw ContractViolation("registration_loss: size mismatch");
  if (d_scores) d_scores->assign(scores.size(), 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double m = scores[i] * labels[i].label;
    // log(1 + exp(-m)), stable on both tails.
    const double sp = m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
    loss += labels[i].weight * sp;
    if (d_scores)
      (*d_scores)[i] =
          -labels[i].weight * labels[i].label / (1.0 + std::exp(m));
  }
  return loss;
}

void registration_backward(RegistrationNet& net, const RegistrationCache& cache,
                           const std::vector<double>& d_scores) {
  const int n = static_cast<int>(cache.cls_acts.size());
  if (static_cast<int>(d_scores.size()) != n)
    throw ContractViolation("registration_backward: size mismatch");
  const int stages = net.stages();
  if (static_cast<int>(cache.pair_acts.size()) != stages)
    throw ContractViolation("registration_backward: cache/net stage mismatch");

  std::vector<TensorF> d_pooled(n);
  for (int i = 0; i < n; ++i) {
    TensorF up({1});
    up[0] = static_cast<float>(d_scores[i]);
    d_pooled[i] = net.classifier.backward(cache.cls_acts[i], up);
  }

  std::vector<TensorF> d_proj(n);
  for (int s = stages - 1; s >= 0; --s) {
    const int part_dim = (s == 0) ? kEmbed : kBlock;
    std::vector<TensorF> d_prev(n);
    for (std::size_t p = 0; p < cache.pairs.size(); ++p) {
      const auto [i, j] = cache.pairs[p];
      TensorF up = TensorF::zeros({kBlock});
      bool any = false;
      for (int e = 0; e < kBlock; ++e)
        if (cache.argmax[s][i * kBlock + e] == static_cast<int>(p)) {
          up[e] = d_pooled[i][e];
          any = any || up[e] != 0.0f;
        }
      if (!any) continue;
      TensorF din = net.pair_blocks[s].backward(cache.pair_acts[s][p], up);
      auto& sink = (s == 0) ? d_proj : d_prev;
      if (sink[i].size() == 0) sink[i] = TensorF::zeros({part_dim});
      if (sink[j].size() == 0) sink[j] = TensorF::zeros({part_dim});
      for (int e = 0; e < part_dim; ++e) {
        sink[i][e] += din[e];
        sink[j][e] += din[part_dim + e];
      }
    }
    if (s > 0) {
      for (int i = 0; i < n; ++i)
        if (d_prev[i].size() == 0) d_prev[i] = TensorF::zeros({kBlock});
      d_pooled = std::move(d_prev);
    }
  }

  for (int i = 0; i < n; ++i) {
    if (d_proj[i].size() == 0) continue;
    net.projector.backward(cache.proj_acts[i], d_proj[i]);
  }
}

std::vector<PoseHypothesis> rescore_and_filter(
    const std::vector<PoseHypothesis>& hyps, const std::vector<double>& scores,
    double keep_threshold) {
  if (hyps.size() != scores.size())
    throw ContractViolation("rescore_and_filter: size mismatch");
  std::vector<int> order(hyps.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<PoseHypothesis> out;
  for (int i : order) {
    if (scores[i] <= keep_threshold) continue;
    PoseHypothesis h = hyps[i];
    h.confidence = 1.0 / (1.0 + std::exp(-scores[i]));
    out.push_back(h);
  }
  return out;
}

}  // namespace binpick
