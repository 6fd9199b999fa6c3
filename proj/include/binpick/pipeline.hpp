#pragma once

#include <functional>
#include <string>
#include <vector>

#include "binpick/config.hpp"
#include "binpick/dataset.hpp"
#include "binpick/eval.hpp"
#include "binpick/jointreg.hpp"

namespace binpick {

// Every network in the system plus the shapes and thresholds they were
// built for. head_params covers the detector + pose heads (the "heads"
// checkpoint); jointreg_params covers only the rescorer.
struct ModelBundle {
  Sequential<float> backbone;
  Sequential<float> detect_head;
  Sequential<float> offset_head;
  Sequential<float> pitch_head;
  Sequential<float> yaw_head;
  Sequential<float> roll_head;  // empty when the object is axially symmetric
  Sequential<float> depth_head;
  RegistrationNet reg;
  HeadConfig heads;
  MeshModel model;
  DetectConfig det;
  AnchorGrid grid;
};

// Scene-dependent bin layout with the config's bin counts and optional
// explicit depth range applied.
HeadConfig head_config_from(const RunConfig& cfg, const MeshModel& model);

ModelBundle make_bundle(const RunConfig& cfg);
void init_bundle(ModelBundle& b, const RunConfig& cfg);

std::vector<Param<float>*> head_params(ModelBundle& b);
std::vector<Param<float>*> jointreg_params(ModelBundle& b);

// The shared pinhole intrinsics with identity extrinsics; annotation poses
// are already expressed in the camera frame.
CameraView intrinsics_view(const RunConfig& cfg);

struct InferOptions {
  bool use_offset = true;  // false: fall back to the box center
};

struct FrameHypotheses {
  std::string frame_id;
  std::vector<PoseHypothesis> raw;  // union of per-detection top hypotheses
  std::vector<double> scores;       // rescorer logits, aligned with raw
  std::vector<PoseHypothesis> kept; // rescored survivors, descending
};

// Full single-frame chain: normalize, backbone, detect, NMS, per-detection
// offset + bin heads, hypothesis enumeration, pose NMS, top-5, relational
// rescoring. Deterministic; no random state.
FrameHypotheses infer_frame(const ModelBundle& b, const RunConfig& cfg,
                            const DepthImage& depth,
                            const std::string& frame_id,
                            const InferOptions& opt = {});

// Index-parallel loop; workers <= 1 runs inline. The first worker exception
// is rethrown on the caller.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

// Commands. All paths live under `out`:
//   dataset/      scene + frame files + manifest
//   checkpoints/  heads.bpck, jointreg.bpck
//   train/        loss traces
//   infer/        hypothesis dump (JSONL)
//   eval/<label>/ metrics + PR curves per criterion
//   report/       summary table
void cmd_gen(const RunConfig& cfg, const std::string& out, int workers);

// stage: "heads" (detector + offset + bin heads, multi-task loss) or
// "jointreg" (rescorer on frozen-head hypotheses; requires heads.bpck).
void cmd_train(const RunConfig& cfg, const std::string& out,
               const std::string& stage);

// Writes one JSON line per raw hypothesis; kept/final_conf reflect the
// rescorer. dump_path defaults to <out>/infer/hypotheses.jsonl.
void cmd_infer(const RunConfig& cfg, const std::string& out, int workers,
               const std::string& dump_path = "", const InferOptions& opt = {},
               const std::string& split = "test");

// criterion: "sym", "add", or "both". confidence: "" = config value,
// else "raw" | "registration". Results land in <out>/eval/<label>/.
void cmd_eval(const RunConfig& cfg, const std::string& out,
              const std::string& criterion = "both",
              const std::string& dump_path = "",
              const std::string& label = "main",
              const std::string& split = "test",
              const std::string& confidence = "");

// Merges metrics_{sym,add}.json from each eval directory into
// <out>/report/summary.csv, one row per directory.
void cmd_report(const std::string& out,
                const std::vector<std::string>& eval_dirs);

}  // namespace binpick
