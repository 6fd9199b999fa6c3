#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "binpick/render.hpp"

using namespace binpick;

namespace {

MeshModel make_quad(double s, double z_at_x = 0.0) {
  // Plane z = z0 + slope*x expressed by its corners; z_at_x is the slope.
  std::vector<Vec3> v = {{-s, -s, -z_at_x * s},
                         {s, -s, z_at_x * s},
                         {s, s, z_at_x * s},
                         {-s, s, -z_at_x * s}};
  return MeshModel::create(v, {{0, 1, 2}, {0, 2, 3}});
}

CameraView identity_view(double f = 200.0, double cx = 64.0, double cy = 64.0,
                         int w = 128, int h = 128) {
  CameraView v;
  v.fx = v.fy = f;
  v.cx = cx;
  v.cy = cy;
  v.width = w;
  v.height = h;
  return v;
}

Pose6D at_depth(double z) {
  Pose6D p;
  p.t = Vec3(0, 0, z);
  return p;
}

int foreground_count(const DepthImage& img, const RenderConfig& cfg) {
  int n = 0;
  for (float d : img.depth)
    if (d < static_cast<float>(cfg.far_plane)) ++n;
  return n;
}

}  // namespace

TEST_CASE("fronto-parallel plane renders exact depth") {
  MeshModel quad = make_quad(0.5);
  RenderConfig cfg;
  DepthImage img = rasterize_single(at_depth(1.0), identity_view(), quad, cfg);
  REQUIRE(img.width == 128);
  REQUIRE(img.height == 128);
  // The quad spans the full frustum at z=1; every pixel reads 1.0.
  for (float d : img.depth) CHECK(d == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("uncovered pixels read the far plane exactly") {
  MeshModel quad = make_quad(0.05);
  RenderConfig cfg;
  DepthImage img = rasterize_single(at_depth(1.0), identity_view(), quad, cfg);
  int fg = 0;
  for (float d : img.depth) {
    if (d == static_cast<float>(cfg.far_plane)) continue;
    ++fg;
    CHECK(d >= cfg.near_plane);
    CHECK(d <= cfg.far_plane);
    CHECK(d == doctest::Approx(1.0).epsilon(1e-6));
  }
  // 0.05 m half-extent at z=1 with f=200 covers ~20x20 px.
  CHECK(fg > 300);
  CHECK(fg < 500);
}

TEST_CASE("tilted plane follows the analytic ray intersection") {
  const double slope = 0.3;
  MeshModel quad = make_quad(0.5, slope);
  RenderConfig cfg;
  CameraView view = identity_view();
  DepthImage img = rasterize_single(at_depth(1.0), view, quad, cfg);
  for (int px = 20; px < 108; ++px) {
    const double u = px + 0.5 - view.cx;
    const double expected = 1.0 / (1.0 - slope * u / view.fx);
    const float got = img.at(px, 64);
    REQUIRE(got < cfg.far_plane);
    CHECK(got == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("nearer surface wins regardless of draw order") {
  MeshModel quad = make_quad(0.3);
  RenderConfig cfg;
  CameraView view = identity_view();
  for (bool near_first : {true, false}) {
    std::vector<SceneInstance> scene(2);
    scene[0].pose = at_depth(near_first ? 1.0 : 2.0);
    scene[1].pose = at_depth(near_first ? 2.0 : 1.0);
    OwnedRender r = rasterize_with_owners(scene, view, quad, cfg);
    const int near_idx = near_first ? 0 : 1;
    // Center pixel is covered by both; must read the nearer.
    CHECK(r.depth.at(64, 64) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.owner[64 * 128 + 64] == near_idx);
  }
}

TEST_CASE("exact depth ties go to the first-drawn instance") {
  MeshModel quad = make_quad(0.2);
  RenderConfig cfg;
  std::vector<SceneInstance> scene(2);
  scene[0].pose = at_depth(1.0);
  scene[1].pose = at_depth(1.0);
  OwnedRender r = rasterize_with_owners(scene, identity_view(), quad, cfg);
  for (std::size_t i = 0; i < r.owner.size(); ++i)
    if (r.owner[i] >= 0) CHECK(r.owner[i] == 0);
}

TEST_CASE("icosphere center pixel depth") {
  // Principal point on a pixel center so pixel (64,64) lies on the axis.
  MeshModel sphere = make_icosphere(0.05, 4);
  RenderConfig cfg;
  CameraView view = identity_view(400.0, 64.5, 64.5);
  DepthImage img = rasterize_single(at_depth(1.0), view, sphere, cfg);
  CHECK(std::abs(img.at(64, 64) - 0.95) < 1e-4);
}

TEST_CASE("near-plane clipping keeps depths in range") {
  std::vector<Vec3> v = {{0, 0, -0.5}, {0.4, 0.1, 2.0}, {-0.4, 0.1, 2.0}};
  MeshModel tri = MeshModel::create(v, {{0, 1, 2}});
  RenderConfig cfg;
  DepthImage img = rasterize_single(Pose6D{}, identity_view(), tri, cfg);
  int fg = 0;
  for (float d : img.depth) {
    CHECK(std::isfinite(d));
    if (d < cfg.far_plane) {
      ++fg;
      CHECK(d >= cfg.near_plane - 1e-6);
    }
  }
  CHECK(fg > 0);
}

TEST_CASE("degenerate intrinsics are rejected") {
  MeshModel quad = make_quad(0.2);
  RenderConfig cfg;
  CameraView bad = identity_view();
  bad.fx = 0.0;
  CHECK_THROWS_AS(rasterize_single(at_depth(1.0), bad, quad, cfg),
                  ContractViolation);
  RenderConfig bad_cfg;
  bad_cfg.near_plane = 0.5;
  bad_cfg.far_plane = 0.4;
  CHECK_THROWS_AS(rasterize_single(at_depth(1.0), identity_view(), quad, bad_cfg),
                  ContractViolation);
}

TEST_CASE("two-instance visibility matches the pixel-count oracle") {
  MeshModel box = make_box_mesh(0.08, 0.08, 0.02);
  RenderConfig cfg;
  CameraView view = identity_view();
  std::vector<SceneInstance> scene(2);
  scene[0].pose = at_depth(1.0);
  scene[0].pose.t.x() = 0.02;  // partial overlap
  scene[1].pose = at_depth(1.3);

  OwnedRender joint = rasterize_with_owners(scene, view, box, cfg);
  FrameAnnotation ann = annotate(scene, view, box, cfg);
  REQUIRE(ann.instances.size() == 2);

  for (const InstanceAnnotation& inst : ann.instances) {
    int owned = 0;
    for (int o : joint.owner)
      if (o == inst.instance_index) ++owned;
    DepthImage solo = rasterize_single(inst.pose, view, box, cfg);
    const int solo_px = foreground_count(solo, cfg);
    REQUIRE(solo_px > 0);
    CHECK(inst.visibility ==
          doctest::Approx(static_cast<double>(owned) / solo_px).epsilon(1e-12));
  }
  // The occluded rear instance lost pixels; the front one did not.
  CHECK(ann.instances[0].visibility == doctest::Approx(1.0));
  CHECK(ann.instances[1].visibility < 1.0);
  CHECK(ann.instances[1].visibility > 0.0);
}

TEST_CASE("ownership partitions the foreground") {
  MeshModel model = make_wedge(0.06, 0.09, 0.05);
  SceneConfig scfg;
  scfg.seed = 5;
  auto scene = generate_scene(scfg, model);
  auto views = sample_views(scfg, 3, 99);
  RenderConfig cfg;
  for (const CameraView& view : views) {
    OwnedRender r = rasterize_with_owners(scene, view, model, cfg);
    int fg = 0;
    std::vector<int> owned(scene.size(), 0);
    for (std::size_t i = 0; i < r.owner.size(); ++i) {
      const bool background =
          r.depth.depth[i] == static_cast<float>(cfg.far_plane);
      if (r.owner[i] >= 0) {
        REQUIRE(!background);
        ++fg;
        ++owned[r.owner[i]];
      } else {
        REQUIRE(background);
      }
    }
    int total_owned = 0;
    for (int c : owned) total_owned += c;
    CHECK(total_owned == fg);

    // Annotations appear exactly for instances owning at least one pixel.
    FrameAnnotation ann = annotate(scene, view, model, cfg);
    std::set<int> annotated;
    for (const auto& inst : ann.instances) {
      CHECK(annotated.insert(inst.instance_index).second);
      CHECK(owned[inst.instance_index] > 0);
      CHECK(inst.visibility > 0.0);
      CHECK(inst.visibility <= 1.0 + 1e-12);
    }
    for (std::size_t i = 0; i < scene.size(); ++i)
      if (owned[i] > 0) CHECK(annotated.count(static_cast<int>(i)) == 1);
  }
}

TEST_CASE("re-rendering is bit-identical") {
  MeshModel model = make_wedge(0.06, 0.09, 0.05);
  SceneConfig scfg;
  scfg.seed = 8;
  auto scene = generate_scene(scfg, model);
  CameraView view = sample_views(scfg, 1, 3)[0];
  RenderConfig cfg;
  DepthImage a = rasterize_depth(scene, view, model, cfg);
  DepthImage b = rasterize_depth(scene, view, model, cfg);
  CHECK(a.depth == b.depth);
}

TEST_CASE("solo render at the annotated pose reproduces the box") {
  MeshModel model = make_wedge(0.06, 0.09, 0.05);
  SceneConfig scfg;
  scfg.seed = 13;
  auto scene = generate_scene(scfg, model);
  CameraView view = sample_views(scfg, 1, 21)[0];
  RenderConfig cfg;
  FrameAnnotation ann = annotate(scene, view, model, cfg);
  REQUIRE(!ann.instances.empty());
  for (const InstanceAnnotation& inst : ann.instances) {
    DepthImage solo = rasterize_single(inst.pose, view, model, cfg);
    int x0 = view.width, y0 = view.height, x1 = -1, y1 = -1;
    for (int y = 0; y < view.height; ++y)
      for (int x = 0; x < view.width; ++x)
        if (solo.at(x, y) < static_cast<float>(cfg.far_plane)) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    REQUIRE(x1 >= 0);
    CHECK(inst.box.x == x0);
    CHECK(inst.box.y == y0);
    CHECK(inst.box.w == x1 - x0 + 1);
    CHECK(inst.box.h == y1 - y0 + 1);

    // Center annotation matches the pinhole projection of the pose origin.
    CHECK(inst.center_depth == doctest::Approx(inst.pose.t.z()).epsilon(1e-12));
    CHECK(inst.center_x ==
          doctest::Approx(view.fx * inst.pose.t.x() / inst.pose.t.z() + view.cx)
              .epsilon(1e-9));
    CHECK(inst.center_y ==
          doctest::Approx(view.fy * inst.pose.t.y() / inst.pose.t.z() + view.cy)
              .epsilon(1e-9));
    const bool inside = inst.center_x >= inst.box.x &&
                        inst.center_x <= inst.box.x + inst.box.w &&
                        inst.center_y >= inst.box.y &&
                        inst.center_y <= inst.box.y + inst.box.h;
    CHECK(inst.center_outside_box == !inside);
  }
}

TEST_CASE("fully occluded instance is omitted") {
  MeshModel box = make_box_mesh(0.08, 0.08, 0.02);
  RenderConfig cfg;
  std::vector<SceneInstance> scene(2);
  scene[0].pose = at_depth(1.0);  // nearer, subtends a larger silhouette
  scene[1].pose = at_depth(2.0);
  FrameAnnotation ann = annotate(scene, identity_view(), box, cfg);
  REQUIRE(ann.instances.size() == 1);
  CHECK(ann.instances[0].instance_index == 0);
  CHECK(ann.instances[0].visibility == doctest::Approx(1.0));
}

TEST_CASE("depth noise touches only the foreground and is seeded") {
  MeshModel quad = make_quad(0.05);
  RenderConfig clean;
  RenderConfig noisy;
  noisy.noise_sigma = 0.002;
  noisy.noise_seed = 7;
  CameraView view = identity_view();
  DepthImage base = rasterize_single(at_depth(1.0), view, quad, clean);
  DepthImage a = rasterize_single(at_depth(1.0), view, quad, noisy);
  DepthImage b = rasterize_single(at_depth(1.0), view, quad, noisy);
  CHECK(a.depth == b.depth);
  bool changed = false;
  for (std::size_t i = 0; i < base.depth.size(); ++i) {
    if (base.depth[i] == static_cast<float>(clean.far_plane)) {
      CHECK(a.depth[i] == base.depth[i]);
    } else {
      CHECK(a.depth[i] >= noisy.near_plane);
      CHECK(a.depth[i] <= noisy.far_plane);
      changed = changed || a.depth[i] != base.depth[i];
    }
  }
  CHECK(changed);
  RenderConfig other = noisy;
  other.noise_seed = 8;
  DepthImage c = rasterize_single(at_depth(1.0), view, quad, other);
  CHECK(a.depth != c.depth);

  // Annotations are computed from the clean render even when noise is on.
  std::vector<SceneInstance> scene(1);
  scene[0].pose = at_depth(1.0);
  FrameAnnotation ann_clean = annotate(scene, view, quad, clean);
  FrameAnnotation ann_noisy = annotate(scene, view, quad, noisy);
  REQUIRE(ann_clean.instances.size() == 1);
  REQUIRE(ann_noisy.instances.size() == 1);
  CHECK(ann_clean.instances[0].box.x == ann_noisy.instances[0].box.x);
  CHECK(ann_clean.instances[0].box.w == ann_noisy.instances[0].box.w);
  CHECK(ann_clean.instances[0].visibility == ann_noisy.instances[0].visibility);
}
