#include "binpick/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace binpick {

namespace {

struct CamVert {
  Vec3 p;  // camera frame
};

// Clip a triangle against the z = near plane; appends 0, 1, or 2 triangles.
void clip_near(const Vec3& a, const Vec3& b, const Vec3& c, double near_z,
               std::vector<std::array<Vec3, 3>>& out) {
  const Vec3* v[3] = {&a, &b, &c};
  std::vector<Vec3> poly;
  for (int i = 0; i < 3; ++i) {
    const Vec3& cur = *v[i];
    const Vec3& nxt = *v[(i + 1) % 3];
    const bool cur_in = cur.z() >= near_z;
    const bool nxt_in = nxt.z() >= near_z;
    if (cur_in) poly.push_back(cur);
    if (cur_in != nxt_in) {
      const double t = (near_z - cur.z()) / (nxt.z() - cur.z());
      poly.push_back(cur + t * (nxt - cur));
    }
  }
  for (std::size_t i = 2; i < poly.size(); ++i)
    out.push_back({poly[0], poly[i - 1], poly[i]});
}

struct Raster {
  int width, height;
  double fx, fy, cx, cy;
  double near_z, far_z;
  std::vector<float> depth;
  std::vector<int> owner;

  Raster(const CameraView& view, const RenderConfig& cfg)
      : width(view.width),
        height(view.height),
        fx(view.fx),
        fy(view.fy),
        cx(view.cx),
        cy(view.cy),
        near_z(cfg.near_plane),
        far_z(cfg.far_plane) {
    if (fx <= 0 || fy <= 0 || width < 1 || height < 1)
      throw ContractViolation("rasterizer: degenerate intrinsics");
    if (near_z <= 0 || far_z <= near_z)
      throw ContractViolation("rasterizer: bad near/far planes");
    depth.assign(static_cast<std::size_t>(width) * height,
                 static_cast<float>(far_z));
    owner.assign(static_cast<std::size_t>(width) * height, -1);
  }

  void triangle(const Vec3& a, const Vec3& b, const Vec3& c, int tag) {
    std::vector<std::array<Vec3, 3>> clipped;
    clip_near(a, b, c, near_z, clipped);
    for (const auto& tri : clipped) raster_clipped(tri[0], tri[1], tri[2], tag);
  }

  void raster_clipped(const Vec3& a, const Vec3& b, const Vec3& c, int tag) {
    // Screen coordinates; pixel (x, y) samples at (x + 0.5, y + 0.5).
    const double ax = fx * a.x() / a.z() + cx, ay = fy * a.y() / a.z() + cy;
    const double bx = fx * b.x() / b.z() + cx, by = fy * b.y() / b.z() + cy;
    const double cxs = fx * c.x() / c.z() + cx, cys = fy * c.y() / c.z() + cy;

    double area = (bx - ax) * (cys - ay) - (by - ay) * (cxs - ax);
    if (std::abs(area) < 1e-12) return;

    const int x0 = std::max(0, static_cast<int>(std::floor(
                                   std::min({ax, bx, cxs}) - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(
                                           std::max({ax, bx, cxs}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(
                                   std::min({ay, by, cys}) - 0.5)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(
                                            std::max({ay, by, cys}))));

    const double iza = 1.0 / a.z(), izb = 1.0 / b.z(), izc = 1.0 / c.z();
    for (int py = y0; py <= y1; ++py) {
      const double sy = py + 0.5;
      for (int px = x0; px <= x1; ++px) {
        const double sx = px + 0.5;
        double w0 = (bx - ax) * (sy - ay) - (by - ay) * (sx - ax);  // opp c
        double w1 = (cxs - bx) * (sy - by) - (cys - by) * (sx - bx);  // opp a
        double w2 = (ax - cxs) * (sy - cys) - (ay - cys) * (sx - cxs);  // opp b
        if (area < 0) {
          w0 = -w0;
          w1 = -w1;
          w2 = -w2;
        }
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double inv_area = 1.0 / std::abs(area);
        // Barycentric weights; 1/z interpolates linearly in screen space.
        const double la = w1 * inv_area, lb = w2 * inv_area, lc = w0 * inv_area;
        const double inv_z = la * iza + lb * izb + lc * izc;
        if (inv_z <= 0) continue;
        const double z = 1.0 / inv_z;
        if (z > far_z) continue;
        const std::size_t idx = static_cast<std::size_t>(py) * width + px;
        if (static_cast<float>(z) < depth[idx]) {
          depth[idx] = static_cast<float>(z);
          owner[idx] = tag;
        }
      }
    }
  }
};

void draw_instance(Raster& r, const Mat3& R, const Vec3& t,
                   const MeshModel& model, int tag) {
  for (const auto& tri : model.triangles) {
    const Vec3 a = R * model.vertices[static_cast<std::size_t>(tri[0])] + t;
    const Vec3 b = R * model.vertices[static_cast<std::size_t>(tri[1])] + t;
    const Vec3 c = R * model.vertices[static_cast<std::size_t>(tri[2])] + t;
    r.triangle(a, b, c, tag);
  }
}

void apply_noise(DepthImage& img, const RenderConfig& cfg) {
  if (cfg.noise_sigma <= 0) return;
  Rng rng(cfg.noise_seed);
  const float far_v = static_cast<float>(cfg.far_plane);
  for (float& d : img.depth) {
    if (d >= far_v) continue;
    d = static_cast<float>(std::clamp(d + cfg.noise_sigma * rng.normal(),
                                      cfg.near_plane, cfg.far_plane));
  }
}

}  // namespace

OwnedRender rasterize_with_owners(const std::vector<SceneInstance>& scene,
                                  const CameraView& view, const MeshModel& model,
                                  const RenderConfig& cfg) {
  Raster r(view, cfg);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Pose6D cam_pose =
        compose_rigid(view.rotation, view.translation, scene[i].pose);
    draw_instance(r, pose_rotation(cam_pose), cam_pose.t, model,
                  static_cast<int>(i));
  }
  OwnedRender out;
  out.depth.width = r.width;
  out.depth.height = r.height;
  out.depth.depth = std::move(r.depth);
  out.owner = std::move(r.owner);
  apply_noise(out.depth, cfg);
  return out;
}

DepthImage rasterize_depth(const std::vector<SceneInstance>& scene,
                           const CameraView& view, const MeshModel& model,
                           const RenderConfig& cfg) {
  return rasterize_with_owners(scene, view, model, cfg).depth;
}

DepthImage rasterize_single(const Pose6D& camera_pose, const CameraView& view,
                            const MeshModel& model, const RenderConfig& cfg) {
  Raster r(view, cfg);
  draw_instance(r, pose_rotation(camera_pose), camera_pose.t, model, 0);
  DepthImage img;
  img.width = r.width;
  img.height = r.height;
  img.depth = std::move(r.depth);
  apply_noise(img, cfg);
  return img;
}

FrameAnnotation annotate(const std::vector<SceneInstance>& scene,
                         const CameraView& view, const MeshModel& model,
                         const RenderConfig& cfg) {
  // Annotations come from noise-free geometry; noise only affects pixels.
  RenderConfig clean = cfg;
  clean.noise_sigma = 0.0;
  const OwnedRender joint = rasterize_with_owners(scene, view, model, clean);

  std::vector<std::int64_t> visible(scene.size(), 0);
  for (int o : joint.owner)
    if (o >= 0) visible[static_cast<std::size_t>(o)] += 1;

  FrameAnnotation out;
  out.view = view;
  const float far_v = static_cast<float>(clean.far_plane);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (visible[i] == 0) continue;
    const Pose6D cam_pose =
        compose_rigid(view.rotation, view.translation, scene[i].pose);
    const DepthImage solo = rasterize_single(cam_pose, view, model, clean);
    std::int64_t solo_count = 0;
    int min_x = view.width, max_x = -1, min_y = view.height, max_y = -1;
    for (int y = 0; y < solo.height; ++y)
      for (int x = 0; x < solo.width; ++x)
        if (solo.at(x, y) < far_v) {
          solo_count += 1;
          min_x = std::min(min_x, x);
          max_x = std::max(max_x, x);
          min_y = std::min(min_y, y);
          max_y = std::max(max_y, y);
        }
    if (solo_count == 0) continue;

    InstanceAnnotation ann;
    ann.instance_index = static_cast<int>(i);
    ann.box = Box2D{static_cast<double>(min_x), static_cast<double>(min_y),
                    static_cast<double>(max_x - min_x + 1),
                    static_cast<double>(max_y - min_y + 1)};
    ann.pose = cam_pose;
    ann.center_depth = cam_pose.t.z();
    ann.center_x = view.fx * cam_pose.t.x() / cam_pose.t.z() + view.cx;
    ann.center_y = view.fy * cam_pose.t.y() / cam_pose.t.z() + view.cy;
    ann.visibility = static_cast<double>(visible[i]) /
                     static_cast<double>(solo_count);
    ann.center_outside_box =
        ann.center_x < ann.box.x || ann.center_x > ann.box.x + ann.box.w ||
        ann.center_y < ann.box.y || ann.center_y > ann.box.y + ann.box.h;
    out.instances.push_back(ann);
  }
  return out;
}

}  // namespace binpick
