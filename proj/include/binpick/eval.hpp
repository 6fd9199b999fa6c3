#pragma once

#include <string>

#include "binpick/posehyp.hpp"

namespace binpick {

enum class Criterion { Sym, Add };

// "sym" or "add".
Criterion criterion_from_name(const std::string& name);

struct EvalConfig {
  Criterion criterion = Criterion::Sym;
  double threshold_factor = 0.1;
};

// Acceptance distance for one criterion: Sym uses the bounding-sphere
// diameter, ADD the object diameter.
double accept_threshold(const MeshModel& model, const EvalConfig& cfg);

// Greedy one-to-one matching of descending-confidence predictions to the
// nearest unmatched ground truth under the criterion distance. Throws if the
// predictions are not sorted by confidence.
std::vector<char> match_frame(const std::vector<PoseHypothesis>& predictions,
                              const std::vector<Pose6D>& ground_truths,
                              const MeshModel& model, const EvalConfig& cfg);

struct FrameMatches {
  std::string frame_id;
  std::vector<double> confidence;  // descending within the frame
  std::vector<char> tp;
  int gt_count = 0;
};

struct PRPoint {
  double confidence = 0.0;
  bool tp = false;
  double precision = 0.0;
  double recall = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // one per prediction, global rank order
  int total_gt = 0;
};

// Merges per-frame matches into one globally confidence-ranked curve.
PRCurve pr_curve(const std::vector<FrameMatches>& frames);

// Area under the precision envelope. Zero ground truth is an error.
double average_precision(const PRCurve& curve);

// Max over ranks of 2PR/(P+R); 0 when undefined everywhere.
double f1_best(const PRCurve& curve);

struct Metrics {
  double ap = 0.0;
  double f1 = 0.0;
  PRCurve curve;
  std::vector<FrameMatches> frames;
};

Metrics compute_metrics(std::vector<FrameMatches> frames);

void write_metrics_json(const Metrics& metrics, const EvalConfig& cfg,
                        const std::string& path);
// Columns: rank, confidence, tp, precision, recall.
void write_pr_csv(const PRCurve& curve, const std::string& path);

}  // namespace binpick
