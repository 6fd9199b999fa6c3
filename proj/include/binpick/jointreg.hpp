#pragma once

#include "binpick/posehyp.hpp"

namespace binpick {

// Diagonal of the model-frame axis-aligned bounding box.
double bbox_diameter(const MeshModel& model);

// Pairwise configuration descriptor for an ordered (HOI, NH) pair:
//   [0]    HOI confidence
//   [1]    NH confidence
//   [2]    2D box IoU
//   [3-5]  HOI pitch/yaw/roll, each normalized to [0,1] over its bin range
//   [6-8]  NH pitch/yaw/roll, likewise
//   [9-11] (dx, dy, dz) of the 3D centers / bbox_diameter
//   [12]   euclidean center distance / bbox_diameter
struct RelationFeature {
  std::array<double, 13> v{};
};

RelationFeature relation_feature(const PoseHypothesis& hoi,
                                 const PoseHypothesis& nh,
                                 const MeshModel& model, const HeadConfig& cfg);

// For each hypothesis, the indices of all others whose posed 3D boxes overlap
// its own with positive volume; an isolated hypothesis gets itself.
std::vector<std::vector<int>> find_neighbors(
    const std::vector<PoseHypothesis>& hyps, const MeshModel& model);

struct LabeledHypothesis {
  int label = -1;        // +1 true positive, -1 false positive
  double weight = 16.0;  // 1 for +1, neg_weight for -1
};

// Greedy by descending confidence: match the nearest unmatched ground truth
// within dist_threshold (consuming it) for +1, else -1.
std::vector<LabeledHypothesis> assign_labels(
    const std::vector<PoseHypothesis>& hyps, const std::vector<Pose6D>& gt,
    const MeshModel& model, double dist_threshold, double neg_weight = 16.0);

// Relational rescorer: per-hypothesis appearance embedding, per-pair blocks
// over (embedding, embedding, relation) triples, element-wise max over
// neighbors, then a scalar classifier. Later stages re-pair the pooled
// features with the same relation descriptors.
struct RegistrationNet {
  Sequential<float> projector;                // patch -> 64, relu
  std::vector<Sequential<float>> pair_blocks; // stage s: in -> 128 -> 128
  Sequential<float> classifier;               // 128 -> 64 -> relu -> 1
  int patch_dim = 0;

  int stages() const { return static_cast<int>(pair_blocks.size()); }
  void collect(std::vector<Param<float>*>& out);
  void init(Rng rng);
};

RegistrationNet make_registration_net(int patch_dim, int stages = 1);

struct RegistrationCache {
  std::vector<std::pair<int, int>> pairs;  // (hoi index, nh index)
  std::vector<std::vector<TensorF>> proj_acts;               // [hyp]
  std::vector<std::vector<std::vector<TensorF>>> pair_acts;  // [stage][pair]
  std::vector<std::vector<int>> argmax;    // [stage][hyp*128 + e] -> pair
  std::vector<std::vector<TensorF>> cls_acts;                // [hyp]
};

// One logit per hypothesis. Fill `cache` to enable a later backward pass.
std::vector<double> registration_forward(
    const RegistrationNet& net, const std::vector<PoseHypothesis>& hyps,
    const std::vector<TensorF>& patches,
    const std::vector<std::vector<int>>& adjacency, const MeshModel& model,
    const HeadConfig& cfg, RegistrationCache* cache = nullptr);

// Weighted logistic loss sum_i a_i * log(1 + exp(-f_i * y_i)).
double registration_loss(const std::vector<double>& scores,
                         const std::vector<LabeledHypothesis>& labels,
                         std::vector<double>* d_scores = nullptr);

// Routes d_scores through the cached forward, accumulating parameter grads.
void registration_backward(RegistrationNet& net, const RegistrationCache& cache,
                           const std::vector<double>& d_scores);

// Drop scores <= keep_threshold, re-rank by score, confidence = sigmoid.
std::vector<PoseHypothesis> rescore_and_filter(
    const std::vector<PoseHypothesis>& hyps, const std::vector<double>& scores,
    double keep_threshold = 0.0);

}  // namespace binpick
