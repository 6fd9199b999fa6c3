#include "binpick/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace binpick {

Criterion criterion_from_name(const std::string& name) {
  if (name == "sym") return Criterion::Sym;
  if (name == "add") return Criterion::Add;
  throw ConfigError("unknown criterion '" + name + "' (expected sym or add)");
}

double accept_threshold(const MeshModel& model, const EvalConfig& cfg) {
  if (cfg.threshold_factor <= 0)
    throw ContractViolation("accept_threshold: threshold_factor must be > 0");
  const double diam = cfg.criterion == Criterion::Sym ? model.bsphere_diameter
                                                      : model.diameter;
  return cfg.threshold_factor * diam;
}

std::vector<char> match_frame(const std::vector<PoseHypothesis>& predictions,
                              const std::vector<Pose6D>& ground_truths,
                              const MeshModel& model, const EvalConfig& cfg) {
  for (std::size_t i = 1; i < predictions.size(); ++i)
    if (predictions[i].confidence > predictions[i - 1].confidence)
      throw ContractViolation("match_frame: predictions not sorted by confidence");
  const double threshold = accept_threshold(model, cfg);
  auto dist = [&](const Pose6D& p, const Pose6D& q) {
    return cfg.criterion == Criterion::Sym ? sym_distance(p, q, model)
                                           : add_distance(p, q, model);
  };
  std::vector<char> taken(ground_truths.size(), 0);
  std::vector<char> tp(predictions.size(), 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    int best = -1;
    double best_d = threshold;
    for (std::size_t g = 0; g < ground_truths.size(); ++g) {
      if (taken[g]) continue;
      const double d = dist(predictions[i].pose, ground_truths[g]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      taken[best] = 1;
      tp[i] = 1;
    }
  }
  return tp;
}

PRCurve pr_curve(const std::vector<FrameMatches>& frames) {
  PRCurve curve;
  std::vector<std::pair<double, bool>> ranked;
  for (const auto& f : frames) {
    if (f.confidence.size() != f.tp.size())
      throw ContractViolation("pr_curve: confidence/tp size mismatch");
    if (f.gt_count < 0) throw ContractViolation("pr_curve: negative gt count");
    curve.total_gt += f.gt_count;
    for (std::size_t i = 0; i < f.tp.size(); ++i)
      ranked.emplace_back(f.confidence[i], f.tp[i] != 0);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  int tps = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    tps += ranked[r].second;
    PRPoint p;
    p.confidence = ranked[r].first;
    p.tp = ranked[r].second;
    p.precision = static_cast<double>(tps) / static_cast<double>(r + 1);
    p.recall = curve.total_gt > 0
                   ? static_cast<double>(tps) / curve.total_gt
                   : 0.0;
    curve.points.push_back(p);
  }
  return curve;
}

double average_precision(const PRCurve& curve) {
  if (curve.total_gt <= 0)
    throw DataError("average_precision: no ground truth instances");
  // Precision envelope: best precision achievable at or beyond each rank.
  std::vector<double> env(curve.points.size());
  double best = 0.0;
  for (std::size_t i = curve.points.size(); i-- > 0;) {
    best = std::max(best, curve.points[i].precision);
    env[i] = best;
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    ap += (curve.points[i].recall - prev_recall) * env[i];
    prev_recall = curve.points[i].recall;
  }
  return ap;
}

double f1_best(const PRCurve& curve) {
  double best = 0.0;
  for (const auto& p : curve.points) {
    if (p.precision + p.recall <= 0.0) continue;
    best = std::max(best, 2.0 * p.precision * p.recall / (p.precision + p.recall));
  }
  return best;
}

Metrics compute_metrics(std::vector<FrameMatches> frames) {
  Metrics m;
  m.curve = pr_curve(frames);
  m.ap = average_precision(m.curve);
  m.f1 = f1_best(m.curve);
  m.frames = std::move(frames);
  return m;
}

void write_metrics_json(const Metrics& metrics, const EvalConfig& cfg,
                        const std::string& path) {
  nlohmann::json j;
  j["criterion"] = cfg.criterion == Criterion::Sym ? "sym" : "add";
  j["threshold_factor"] = cfg.threshold_factor;
  j["ap"] = metrics.ap;
  j["f1_best"] = metrics.f1;
  j["total_gt"] = metrics.curve.total_gt;
  j["predictions"] = metrics.curve.points.size();
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : metrics.frames) {
    nlohmann::json jf;
    jf["frame"] = f.frame_id;
    jf["gt_count"] = f.gt_count;
    nlohmann::json tp = nlohmann::json::array();
    for (char t : f.tp) tp.push_back(t != 0);
    jf["tp"] = std::move(tp);
    frames.push_back(std::move(jf));
  }
  j["frames"] = std::move(frames);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(1, '\t') << '\n';
  if (!out) throw DataError("write failed: " + path);
}

void write_pr_csv(const PRCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "rank,confidence,tp,precision,recall\n";
  char line[160];
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const PRPoint& p = curve.points[i];
    std::snprintf(line, sizeof(line), "%zu,%.9g,%d,%.9g,%.9g\n", i + 1,
                  p.confidence, p.tp ? 1 : 0, p.precision, p.recall);
    out << line;
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace binpick
