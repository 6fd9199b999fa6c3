#include "binpick/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "binpick/adam.hpp"
#include "binpick/checkpoint.hpp"
#include "json.hpp"

namespace binpick {
namespace {

constexpr int kFeatChannels = 32;

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string scene_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05d.json", index);
  return buf;
}

std::string frame_stem(int scene, int view) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "frame_%05d_%02d", scene, view);
  return buf;
}

std::string stem_of(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw DataError("cannot create directory " + path + ": " + ec.message());
}

void ensure_parent_dir(const std::string& file) {
  const auto parent = std::filesystem::path(file).parent_path();
  if (!parent.empty()) ensure_dir(parent.string());
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << content;
  if (!out) throw DataError("write failed for " + path);
}

TensorF flatten(const TensorF& t) {
  TensorF out({static_cast<int>(t.size())});
  out.array() = t.array();
  return out;
}

struct FrameRef {
  std::string depth;       // relative to the dataset root
  std::string annotation;
  std::string stem;
};

std::vector<FrameRef> split_frames(const DatasetManifest& m,
                                   const std::string& split) {
  if (split != "train" && split != "test")
    throw ConfigError("split must be train or test, got '" + split + "'");
  std::vector<FrameRef> out;
  for (const SceneFiles& s : m.scenes) {
    if (s.split != split) continue;
    for (const FrameFiles& f : s.frames)
      out.push_back({f.depth, f.annotation, stem_of(f.depth)});
  }
  return out;
}

Box2D jitter_box(const Box2D& box, double amount, Rng& rng) {
  const double sx = 1.0 + amount * rng.uniform(-1.0, 1.0);
  const double sy = 1.0 + amount * rng.uniform(-1.0, 1.0);
  const double dx = amount * box.w * rng.uniform(-1.0, 1.0);
  const double dy = amount * box.h * rng.uniform(-1.0, 1.0);
  Box2D out;
  out.w = box.w * sx;
  out.h = box.h * sy;
  out.x = box.cx() + dx - 0.5 * out.w;
  out.y = box.cy() + dy - 0.5 * out.h;
  return out;
}

// NLL of one classification head on a flattened crop; scaled gradient is
// accumulated into d_flat and the head's params.
double head_nll_backward(Sequential<float>& head, const TensorF& flat, int bin,
                         double scale, TensorF& d_flat) {
  const auto acts = head.forward_cached(flat);
  const TensorF& p = acts.back();
  TensorF dp = TensorF::zeros(p.shape());
  const std::vector<const TensorF*> pv{&p};
  std::vector<TensorF*> dv{&dp};
  const double loss = classification_loss(pv, {bin}, &dv);
  dp.array() *= static_cast<float>(scale);
  d_flat.array() += head.backward(acts, dp).array();
  return loss;
}

// Per-detection hypothesis pool with the flat appearance patch each
// hypothesis was produced from.
struct RawPool {
  std::vector<PoseHypothesis> hyps;
  std::vector<TensorF> patches;  // aligned with hyps
};

RawPool hypothesis_pool(const ModelBundle& b, const RunConfig& cfg,
                        const DepthImage& depth, const InferOptions& opt) {
  RawPool out;
  const TensorF input = normalize_depth(depth, cfg.render_config());
  const TensorF feat = b.backbone.forward(input);
  const TensorF raw = b.detect_head.forward(feat);
  std::vector<Detection> dets =
      box_nms(decode_detections(raw, b.grid, depth.width, depth.height, b.det),
              b.det.nms_iou);
  if (static_cast<int>(dets.size()) > b.det.max_out) dets.resize(b.det.max_out);
  const CameraView view = intrinsics_view(cfg);
  const double nms_dist = cfg.pose_nms_factor * b.model.bsphere_diameter;
  for (std::size_t di = 0; di < dets.size(); ++di) {
    const Box2D& box = dets[di].box;
    if (box.w < 2.0 || box.h < 2.0) continue;
    const TensorF flat = flatten(roi_extract(feat, box, b.det.stride));
    double cu, cv;
    if (opt.use_offset) {
      const TensorF off = b.offset_head.forward(flat);
      const auto c = decode_center({off[0], off[1]}, box);
      cu = c[0];
      cv = c[1];
    } else {
      cu = box.cx();
      cv = box.cy();
    }
    std::vector<TensorF> probs;
    probs.push_back(b.pitch_head.forward(flat));
    probs.push_back(b.yaw_head.forward(flat));
    if (b.heads.has_roll) probs.push_back(b.roll_head.forward(flat));
    probs.push_back(b.depth_head.forward(flat));
    std::vector<const TensorF*> pv;
    pv.reserve(probs.size());
    for (const TensorF& p : probs) pv.push_back(&p);
    std::vector<PoseHypothesis> hyps = enumerate_hypotheses(
        pv, cu, cv, b.heads, view, static_cast<int>(cfg.topk_per_head));
    hyps = pose_nms(hyps, b.model, nms_dist);
    hyps = select_top(hyps, static_cast<int>(cfg.max_hypotheses));
    for (PoseHypothesis& h : hyps) {
      h.detection_index = static_cast<int>(di);
      h.box = box;
      out.hyps.push_back(h);
      out.patches.push_back(flat);
    }
  }
  return out;
}

struct TrainFrame {
  TensorF input;
  FrameAnnotation ann;
  std::vector<Box2D> gt_boxes;
  Assignment assign;
};

std::vector<TrainFrame> load_train_frames(const RunConfig& cfg,
                                          const std::string& root,
                                          const DatasetManifest& m,
                                          const ModelBundle& b) {
  const std::vector<FrameRef> refs = split_frames(m, "train");
  if (refs.empty()) throw DataError("no training frames in dataset");
  const RenderConfig rc = cfg.render_config();
  std::vector<TrainFrame> frames(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    TrainFrame& tf = frames[i];
    tf.input = normalize_depth(load_depth(root + "/" + refs[i].depth), rc);
    tf.ann = load_annotation(root + "/" + refs[i].annotation);
    for (const InstanceAnnotation& a : tf.ann.instances)
      tf.gt_boxes.push_back(a.box);
    tf.assign = assign_anchors(b.grid, tf.gt_boxes, b.det);
  }
  return frames;
}

void train_heads(const RunConfig& cfg, const std::string& out) {
  const std::string root = out + "/dataset";
  const DatasetManifest m =
      load_manifest(root + "/manifest.json", root, config_hash(cfg));
  ModelBundle b = make_bundle(cfg);
  init_bundle(b, cfg);
  const std::vector<TrainFrame> frames = load_train_frames(cfg, root, m, b);
  const std::vector<Param<float>*> params = head_params(b);
  const int nframes = static_cast<int>(frames.size());
  Rng pick = Rng(cfg.seed).derive(8);
  std::ostringstream trace;
  trace << "step,total,det,offset,depth,pose\n";
  for (int step = 0; step < static_cast<int>(cfg.train_steps); ++step) {
    const int fidx = pick.uniform_int(0, nframes - 1);
    const TrainFrame& tf = frames[fidx];
    const auto acts_bb = b.backbone.forward_cached(tf.input);
    const TensorF& feat = acts_bb.back();
    const auto acts_det = b.detect_head.forward_cached(feat);
    TensorF raw_grad = TensorF::zeros(acts_det.back().shape());
    // Fixed anchor sample per frame: the derived stream depends on the frame
    // only, so revisits optimize the same objective.
    Rng det_rng = Rng(cfg.seed).derive(9000 + static_cast<std::uint64_t>(fidx));
    const double l_det = detection_loss(acts_det.back(), raw_grad, b.grid,
                                        tf.assign, tf.gt_boxes, det_rng, b.det);
    if (cfg.w_detect != 1.0)
      raw_grad.array() *= static_cast<float>(cfg.w_detect);
    TensorF feat_grad = b.detect_head.backward(acts_det, raw_grad);

    Rng jitter =
        Rng(cfg.seed).derive(10000000ull + static_cast<std::uint64_t>(step));
    const int n_inst = static_cast<int>(tf.ann.instances.size());
    const double denom = std::max(1, n_inst);
    double l_off = 0.0, l_depth = 0.0, l_pose = 0.0;
    for (const InstanceAnnotation& a : tf.ann.instances) {
      const Box2D box = jitter_box(a.box, cfg.center_jitter, jitter);
      if (box.w < 4.0 || box.h < 4.0) continue;
      const TensorF patch = roi_extract(feat, box, b.det.stride);
      const TensorF flat = flatten(patch);

      const auto acts_off = b.offset_head.forward_cached(flat);
      const std::array<double, 2> pred{acts_off.back()[0], acts_off.back()[1]};
      std::array<double, 2> d_pred{};
      l_off += offset_loss(pred, a.center_x, a.center_y, box, &d_pred);
      TensorF up({2});
      up[0] = static_cast<float>(d_pred[0] * cfg.w_offset / denom);
      up[1] = static_cast<float>(d_pred[1] * cfg.w_offset / denom);
      TensorF d_flat = b.offset_head.backward(acts_off, up);

      const std::vector<int> bins = gt_bins_for_pose(a.pose, b.heads);
      std::vector<Sequential<float>*> rot{&b.pitch_head, &b.yaw_head};
      if (b.heads.has_roll) rot.push_back(&b.roll_head);
      for (std::size_t h = 0; h < rot.size(); ++h)
        l_pose += head_nll_backward(*rot[h], flat, bins[h],
                                    cfg.w_pose / denom, d_flat);
      l_depth += head_nll_backward(b.depth_head, flat, bins.back(),
                                   cfg.w_depth / denom, d_flat);

      TensorF d_patch(patch.shape());
      d_patch.array() = d_flat.array();
      roi_extract_backward(d_patch, box, b.det.stride, feat_grad);
    }
    const double total =
        cfg.w_detect * l_det +
        (cfg.w_offset * l_off + cfg.w_depth * l_depth + cfg.w_pose * l_pose) /
            denom;
    if (!std::isfinite(total))
      throw NumericError("train heads: non-finite loss at step " +
                         std::to_string(step));
    b.backbone.backward(acts_bb, feat_grad);
    adam_step(params, cfg.lr);
    trace << step << ',' << fmt9(total) << ',' << fmt9(l_det) << ','
          << fmt9(l_off / denom) << ',' << fmt9(l_depth / denom) << ','
          << fmt9(l_pose / denom) << '\n';
  }
  ensure_dir(out + "/checkpoints");
  save_checkpoint(out + "/checkpoints/heads.bpck", params);
  ensure_dir(out + "/train");
  write_text(out + "/train/loss_heads.csv", trace.str());
}

struct RegFrame {
  std::vector<PoseHypothesis> hyps;
  std::vector<TensorF> det_patches;  // unique per detection
  std::vector<int> patch_index;      // hypothesis -> det_patches entry
  std::vector<std::vector<int>> adjacency;
  std::vector<LabeledHypothesis> labels;
};

void train_jointreg(const RunConfig& cfg, const std::string& out) {
  const std::string root = out + "/dataset";
  const DatasetManifest m =
      load_manifest(root + "/manifest.json", root, config_hash(cfg));
  ModelBundle b = make_bundle(cfg);
  const std::string heads_path = out + "/checkpoints/heads.bpck";
  if (!std::filesystem::exists(heads_path))
    throw DataError("train jointreg: missing heads checkpoint " + heads_path);
  const std::vector<Param<float>*> hp = head_params(b);
  assign_params(load_checkpoint(heads_path), hp);
  b.reg.init(Rng(cfg.seed).derive(11));

  // Hypotheses come from the frozen heads, so each frame's pool, graph, and
  // labels are computed once up front.
  const std::vector<FrameRef> refs = split_frames(m, "train");
  if (refs.empty()) throw DataError("no training frames in dataset");
  const double match_dist = cfg.match_factor * b.model.bsphere_diameter;
  std::vector<RegFrame> frames(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const DepthImage depth = load_depth(root + "/" + refs[i].depth);
    const FrameAnnotation ann =
        load_annotation(root + "/" + refs[i].annotation);
    RawPool pool = hypothesis_pool(b, cfg, depth, {});
    RegFrame& rf = frames[i];
    rf.hyps = std::move(pool.hyps);
    if (rf.hyps.empty()) continue;
    std::map<int, int> det_slot;
    for (std::size_t h = 0; h < rf.hyps.size(); ++h) {
      const int det = rf.hyps[h].detection_index;
      const auto it = det_slot.find(det);
      if (it == det_slot.end()) {
        det_slot[det] = static_cast<int>(rf.det_patches.size());
        rf.det_patches.push_back(std::move(pool.patches[h]));
        rf.patch_index.push_back(det_slot[det]);
      } else {
        rf.patch_index.push_back(it->second);
      }
    }
    rf.adjacency = find_neighbors(rf.hyps, b.model);
    std::vector<Pose6D> gt;
    for (const InstanceAnnotation& a : ann.instances) gt.push_back(a.pose);
    rf.labels = assign_labels(rf.hyps, gt, b.model, match_dist,
                              cfg.jointreg_neg_weight);
  }

  const std::vector<Param<float>*> params = jointreg_params(b);
  Rng pick = Rng(cfg.seed).derive(12);
  std::ostringstream trace;
  trace << "step,loss\n";
  for (int step = 0; step < static_cast<int>(cfg.jointreg_steps); ++step) {
    const int fidx = pick.uniform_int(0, static_cast<int>(frames.size()) - 1);
    const RegFrame& rf = frames[fidx];
    if (rf.hyps.empty()) {
      trace << step << ",0\n";
      continue;
    }
    std::vector<TensorF> patches;
    patches.reserve(rf.hyps.size());
    for (int pi : rf.patch_index) patches.push_back(rf.det_patches[pi]);
    RegistrationCache cache;
    const std::vector<double> scores = registration_forward(
        b.reg, rf.hyps, patches, rf.adjacency, b.model, b.heads, &cache);
    std::vector<double> d_scores;
    const double loss = registration_loss(scores, rf.labels, &d_scores);
    if (!std::isfinite(loss))
      throw NumericError("train jointreg: non-finite loss at step " +
                         std::to_string(step));
    registration_backward(b.reg, cache, d_scores);
    adam_step(params, cfg.lr);
    trace << step << ',' << fmt9(loss) << '\n';
  }
  ensure_dir(out + "/checkpoints");
  save_checkpoint(out + "/checkpoints/jointreg.bpck", params);
  ensure_dir(out + "/train");
  write_text(out + "/train/loss_jointreg.csv", trace.str());
}

}  // namespace

HeadConfig head_config_from(const RunConfig& cfg, const MeshModel& model) {
  if (cfg.pitch_bins < 1 || cfg.yaw_bins < 1 || cfg.roll_bins < 1 ||
      cfg.depth_bins < 1)
    throw ConfigError("bin counts must be positive");
  HeadConfig h = make_head_config(cfg.scene_config(),
                                  model.symmetry.has_roll_symmetry());
  h.pitch.count = static_cast<int>(cfg.pitch_bins);
  h.yaw.count = static_cast<int>(cfg.yaw_bins);
  h.roll.count = static_cast<int>(cfg.roll_bins);
  h.depth.count = static_cast<int>(cfg.depth_bins);
  if (cfg.depth_lo > 0.0) h.depth.lo = cfg.depth_lo;
  if (cfg.depth_hi > 0.0) h.depth.hi = cfg.depth_hi;
  if (!(h.depth.lo < h.depth.hi)) throw ConfigError("depth bin range is empty");
  return h;
}

ModelBundle make_bundle(const RunConfig& cfg) {
  ModelBundle b;
  b.model = cfg.build_model();
  b.heads = head_config_from(cfg, b.model);
  b.det.score_thresh = cfg.detect_score_thresh;
  b.det.nms_iou = cfg.detect_nms_iou;
  b.det.max_out = static_cast<int>(cfg.detect_max_out);
  b.det.pos_iou = cfg.assign_pos_iou;
  b.det.neg_iou = cfg.assign_neg_iou;
  b.det.sample_pos = static_cast<int>(cfg.sample_pos);
  b.det.sample_neg = static_cast<int>(cfg.sample_neg);
  if (cfg.image_width <= 0 || cfg.image_height <= 0 ||
      cfg.image_width % b.det.stride != 0 ||
      cfg.image_height % b.det.stride != 0)
    throw ConfigError("image size must be a positive multiple of " +
                      std::to_string(b.det.stride));
  if (cfg.jointreg_blocks < 1 || cfg.jointreg_blocks > 3)
    throw ConfigError("jointreg_blocks must be between 1 and 3");
  if (cfg.topk_per_head < 1 || cfg.max_hypotheses < 1)
    throw ConfigError("topk_per_head and max_hypotheses must be positive");
  b.grid = make_anchor_grid(static_cast<int>(cfg.image_width),
                            static_cast<int>(cfg.image_height), b.det);
  b.backbone = make_backbone();
  b.detect_head =
      make_detect_head(static_cast<int>(b.det.anchor_sizes.size()));
  b.offset_head = make_offset_head(kFeatChannels);
  b.pitch_head = make_class_head("pitch", kFeatChannels, b.heads.pitch.count);
  b.yaw_head = make_class_head("yaw", kFeatChannels, b.heads.yaw.count);
  if (b.heads.has_roll)
    b.roll_head = make_class_head("roll", kFeatChannels, b.heads.roll.count);
  b.depth_head = make_class_head("depth", kFeatChannels, b.heads.depth.count);
  b.reg = make_registration_net(kFeatChannels * 49,
                                static_cast<int>(cfg.jointreg_blocks));
  return b;
}

void init_bundle(ModelBundle& b, const RunConfig& cfg) {
  Rng r = Rng(cfg.seed).derive(7);
  b.backbone.init(r.derive(1));
  b.detect_head.init(r.derive(2));
  b.offset_head.init(r.derive(3));
  b.pitch_head.init(r.derive(4));
  b.yaw_head.init(r.derive(5));
  if (b.heads.has_roll) b.roll_head.init(r.derive(6));
  b.depth_head.init(r.derive(7));
  b.reg.init(Rng(cfg.seed).derive(11));
}

std::vector<Param<float>*> head_params(ModelBundle& b) {
  std::vector<Param<float>*> out;
  b.backbone.collect(out);
  b.detect_head.collect(out);
  b.offset_head.collect(out);
  b.pitch_head.collect(out);
  b.yaw_head.collect(out);
  if (b.heads.has_roll) b.roll_head.collect(out);
  b.depth_head.collect(out);
  return out;
}

std::vector<Param<float>*> jointreg_params(ModelBundle& b) {
  std::vector<Param<float>*> out;
  b.reg.collect(out);
  return out;
}

CameraView intrinsics_view(const RunConfig& cfg) {
  CameraView v;
  v.fx = v.fy = cfg.focal_px;
  v.cx = 0.5 * static_cast<double>(cfg.image_width);
  v.cy = 0.5 * static_cast<double>(cfg.image_height);
  v.width = static_cast<int>(cfg.image_width);
  v.height = static_cast<int>(cfg.image_height);
  return v;
}

FrameHypotheses infer_frame(const ModelBundle& b, const RunConfig& cfg,
                            const DepthImage& depth,
                            const std::string& frame_id,
                            const InferOptions& opt) {
  FrameHypotheses out;
  out.frame_id = frame_id;
  RawPool pool = hypothesis_pool(b, cfg, depth, opt);
  out.raw = std::move(pool.hyps);
  if (out.raw.empty()) return out;
  const auto adjacency = find_neighbors(out.raw, b.model);
  out.scores = registration_forward(b.reg, out.raw, pool.patches, adjacency,
                                    b.model, b.heads);
  out.kept = rescore_and_filter(out.raw, out.scores);
  return out;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  std::exception_ptr err;
  auto body = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (err) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int count = std::min(workers, n);
  pool.reserve(count);
  for (int t = 0; t < count; ++t) pool.emplace_back(body);
  for (std::thread& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

void cmd_gen(const RunConfig& cfg, const std::string& out, int workers) {
  if (cfg.train_scenes < 0 || cfg.test_scenes < 0 ||
      cfg.train_scenes + cfg.test_scenes < 1)
    throw ConfigError("train_scenes + test_scenes must be positive");
  const MeshModel model = cfg.build_model();
  const int total = static_cast<int>(cfg.train_scenes + cfg.test_scenes);
  ensure_dir(out + "/dataset/frames");
  const Rng base(cfg.seed);
  std::vector<SceneFiles> scenes(total);
  parallel_for(total, workers, [&](int i) {
    SceneConfig sc = cfg.scene_config();
    sc.seed = base.derive(1000 + static_cast<std::uint64_t>(i)).seed();
    std::vector<SceneInstance> instances;
    try {
      instances = generate_scene(sc, model);
    } catch (const DataError& e) {
      throw DataError("scene " + std::to_string(i) + ": " + e.what());
    }
    const std::vector<CameraView> views = sample_views(
        sc, sc.views_per_scene,
        base.derive(2000 + static_cast<std::uint64_t>(i)).seed());
    SceneFiles& sf = scenes[i];
    sf.scene = scene_name(i);
    sf.split = i < cfg.train_scenes ? "train" : "test";
    save_scene({instances, views}, out + "/dataset/" + sf.scene);
    for (int v = 0; v < static_cast<int>(views.size()); ++v) {
      const std::uint64_t g =
          static_cast<std::uint64_t>(i) * views.size() + v;
      RenderConfig rc = cfg.render_config();
      rc.noise_seed = base.derive(3000 + g).seed();
      const std::string stem = "frames/" + frame_stem(i, v);
      save_depth(rasterize_depth(instances, views[v], model, rc),
                 out + "/dataset/" + stem + ".bpd");
      save_annotation(annotate(instances, views[v], model, rc),
                      out + "/dataset/" + stem + ".json");
      sf.frames.push_back({stem + ".bpd", stem + ".json"});
    }
  });
  DatasetManifest m;
  m.scenes = std::move(scenes);
  m.seed = cfg.seed;
  m.config_hash = config_hash(cfg);
  save_manifest(m, out + "/dataset/manifest.json");
}

void cmd_train(const RunConfig& cfg, const std::string& out,
               const std::string& stage) {
  if (stage == "heads")
    train_heads(cfg, out);
  else if (stage == "jointreg")
    train_jointreg(cfg, out);
  else
    throw ConfigError("train stage must be heads or jointreg, got '" + stage +
                      "'");
}

void cmd_infer(const RunConfig& cfg, const std::string& out, int workers,
               const std::string& dump_path, const InferOptions& opt,
               const std::string& split) {
  const std::string root = out + "/dataset";
  const DatasetManifest m =
      load_manifest(root + "/manifest.json", root, config_hash(cfg));
  ModelBundle b = make_bundle(cfg);
  for (const char* name : {"heads.bpck", "jointreg.bpck"}) {
    const std::string path = out + "/checkpoints/" + name;
    if (!std::filesystem::exists(path))
      throw DataError("infer: missing checkpoint " + path);
  }
  assign_params(load_checkpoint(out + "/checkpoints/heads.bpck"),
                head_params(b));
  assign_params(load_checkpoint(out + "/checkpoints/jointreg.bpck"),
                jointreg_params(b));
  const std::vector<FrameRef> refs = split_frames(m, split);
  std::vector<FrameHypotheses> results(refs.size());
  parallel_for(static_cast<int>(refs.size()), workers, [&](int i) {
    const DepthImage depth = load_depth(root + "/" + refs[i].depth);
    results[i] = infer_frame(b, cfg, depth, refs[i].stem, opt);
  });
  std::ostringstream os;
  for (const FrameHypotheses& fh : results) {
    for (std::size_t j = 0; j < fh.raw.size(); ++j) {
      const PoseHypothesis& h = fh.raw[j];
      const double score = fh.scores[j];
      nlohmann::json pose;
      pose["pitch"] = h.pose.pitch;
      pose["yaw"] = h.pose.yaw;
      pose["roll"] = h.pose.roll;
      pose["t"] = nlohmann::json::array(
          {h.pose.t.x(), h.pose.t.y(), h.pose.t.z()});
      nlohmann::json row;
      row["frame"] = fh.frame_id;
      row["det"] = h.detection_index;
      row["pose"] = pose;
      row["conf"] = h.confidence;
      row["score"] = score;
      row["kept"] = score > 0.0;
      row["final_conf"] = 1.0 / (1.0 + std::exp(-score));
      os << row.dump() << '\n';
    }
  }
  const std::string path =
      dump_path.empty() ? out + "/infer/hypotheses.jsonl" : dump_path;
  ensure_parent_dir(path);
  write_text(path, os.str());
}

void cmd_eval(const RunConfig& cfg, const std::string& out,
              const std::string& criterion, const std::string& dump_path,
              const std::string& label, const std::string& split,
              const std::string& confidence) {
  const std::string conf_mode =
      confidence.empty() ? cfg.eval_confidence : confidence;
  if (conf_mode != "raw" && conf_mode != "registration")
    throw ConfigError("eval confidence must be raw or registration, got '" +
                      conf_mode + "'");
  std::vector<Criterion> crits;
  if (criterion == "both")
    crits = {Criterion::Sym, Criterion::Add};
  else
    crits = {criterion_from_name(criterion)};

  const std::string root = out + "/dataset";
  const DatasetManifest m =
      load_manifest(root + "/manifest.json", root, config_hash(cfg));
  const MeshModel model = cfg.build_model();
  const std::vector<FrameRef> refs = split_frames(m, split);
  std::map<std::string, int> stem_index;
  for (std::size_t i = 0; i < refs.size(); ++i)
    stem_index[refs[i].stem] = static_cast<int>(i);

  const std::string path =
      dump_path.empty() ? out + "/infer/hypotheses.jsonl" : dump_path;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open hypothesis dump " + path);
  struct Row {
    Pose6D pose;
    double conf = 0.0;
    bool kept = false;
    double final_conf = 0.0;
  };
  std::vector<std::vector<Row>> rows(refs.size());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      const std::string frame = j.at("frame").get<std::string>();
      const auto it = stem_index.find(frame);
      if (it == stem_index.end())
        throw DataError("dump references frame '" + frame +
                        "' outside the " + split + " split");
      Row r;
      const nlohmann::json& p = j.at("pose");
      r.pose.pitch = p.at("pitch").get<double>();
      r.pose.yaw = p.at("yaw").get<double>();
      r.pose.roll = p.at("roll").get<double>();
      r.pose.t = Vec3(p.at("t").at(0).get<double>(),
                      p.at("t").at(1).get<double>(),
                      p.at("t").at(2).get<double>());
      r.conf = j.at("conf").get<double>();
      r.kept = j.at("kept").get<bool>();
      r.final_conf = j.at("final_conf").get<double>();
      rows[it->second].push_back(r);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError("bad dump line " + std::to_string(lineno) + ": " +
                      e.what());
    }
  }

  std::vector<std::vector<PoseHypothesis>> preds(refs.size());
  std::vector<std::vector<Pose6D>> gts(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    for (const Row& r : rows[i]) {
      if (conf_mode == "registration" && !r.kept) continue;
      PoseHypothesis h;
      h.pose = r.pose;
      h.confidence = conf_mode == "registration" ? r.final_conf : r.conf;
      preds[i].push_back(h);
    }
    std::stable_sort(preds[i].begin(), preds[i].end(),
                     [](const PoseHypothesis& a, const PoseHypothesis& b) {
                       return a.confidence > b.confidence;
                     });
    const FrameAnnotation ann =
        load_annotation(root + "/" + refs[i].annotation);
    for (const InstanceAnnotation& a : ann.instances)
      if (a.visibility >= cfg.min_visibility) gts[i].push_back(a.pose);
  }

  for (Criterion c : crits) {
    const EvalConfig ec{c, cfg.eval_threshold_factor};
    std::vector<FrameMatches> frames(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
      FrameMatches& fm = frames[i];
      fm.frame_id = refs[i].stem;
      fm.gt_count = static_cast<int>(gts[i].size());
      for (const PoseHypothesis& h : preds[i])
        fm.confidence.push_back(h.confidence);
      fm.tp = match_frame(preds[i], gts[i], model, ec);
    }
    const Metrics met = compute_metrics(std::move(frames));
    const std::string dir = out + "/eval/" + label;
    ensure_dir(dir);
    const std::string name = c == Criterion::Sym ? "sym" : "add";
    write_metrics_json(met, ec, dir + "/metrics_" + name + ".json");
    write_pr_csv(met.curve, dir + "/pr_" + name + ".csv");
  }
}

void cmd_report(const std::string& out,
                const std::vector<std::string>& eval_dirs) {
  if (eval_dirs.empty())
    throw ConfigError("report: no eval directories given");
  std::ostringstream os;
  os << "name,ap_sym,f1_sym,ap_add,f1_add\n";
  for (const std::string& dir : eval_dirs) {
    std::string trimmed = dir;
    while (trimmed.size() > 1 && trimmed.back() == '/') trimmed.pop_back();
    const std::string name = std::filesystem::path(trimmed).filename().string();
    double vals[4] = {0, 0, 0, 0};
    const char* files[2] = {"metrics_sym.json", "metrics_add.json"};
    for (int c = 0; c < 2; ++c) {
      const std::string mpath = trimmed + "/" + files[c];
      std::ifstream in(mpath, std::ios::binary);
      if (!in) throw DataError("report: missing metrics file " + mpath);
      try {
        nlohmann::json j;
        in >> j;
        vals[2 * c] = j.at("ap").get<double>();
        vals[2 * c + 1] = j.at("f1_best").get<double>();
      } catch (const std::exception& e) {
        throw DataError("report: bad metrics file " + mpath + ": " + e.what());
      }
    }
    os << name << ',' << fmt9(vals[0]) << ',' << fmt9(vals[1]) << ','
       << fmt9(vals[2]) << ',' << fmt9(vals[3]) << '\n';
  }
  ensure_dir(out + "/report");
  write_text(out + "/report/summary.csv", os.str());
}

}  // namespace binpick
