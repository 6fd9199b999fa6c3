#include "binpick/scenegen.hpp"

#include <algorithm>
#include <cmath>

namespace binpick {

std::vector<CollisionSphere> fit_coverage_spheres(const MeshModel& model, int k) {
  if (k < 1) throw ContractViolation("fit_coverage_spheres: k must be >= 1");
  // Cover surface samples, not just vertices: edge midpoints and face
  // centroids keep the spheres small on coarse meshes, which keeps the
  // phantom gap between settled bodies down.
  std::vector<Vec3> pts = model.vertices;
  for (const auto& tri : model.triangles) {
    const Vec3& a = model.vertices[static_cast<std::size_t>(tri[0])];
    const Vec3& b = model.vertices[static_cast<std::size_t>(tri[1])];
    const Vec3& c = model.vertices[static_cast<std::size_t>(tri[2])];
    pts.push_back(0.5 * (a + b));
    pts.push_back(0.5 * (b + c));
    pts.push_back(0.5 * (c + a));
    pts.push_back((a + b + c) / 3.0);
  }
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& v : pts) centroid += v;
  centroid /= static_cast<double>(pts.size());

  const int n = std::min<int>(k, static_cast<int>(pts.size()));
  // Farthest-point seeds, then a few k-means rounds so every sphere hugs a
  // compact local patch instead of spanning the whole body.
  std::vector<Vec3> centers;
  std::vector<double> dist(pts.size(), std::numeric_limits<double>::infinity());
  int cur = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = (pts[i] - centroid).squaredNorm();
    if (d > best) {
      best = d;
      cur = static_cast<int>(i);
    }
  }
  for (int s = 0; s < n; ++s) {
    centers.push_back(pts[static_cast<std::size_t>(cur)]);
    best = -1.0;
    int next = cur;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      dist[i] = std::min(dist[i], (pts[i] - pts[cur]).squaredNorm());
      if (dist[i] > best) {
        best = dist[i];
        next = static_cast<int>(i);
      }
    }
    cur = next;
  }

  std::vector<int> owner(pts.size(), 0);
  for (int round = 0; round < 8; ++round) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double nd = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < centers.size(); ++j) {
        const double d = (pts[i] - centers[j]).squaredNorm();
        if (d < nd) {
          nd = d;
          owner[i] = static_cast<int>(j);
        }
      }
    }
    std::vector<Vec3> mean(centers.size(), Vec3::Zero());
    std::vector<int> count(centers.size(), 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      mean[static_cast<std::size_t>(owner[i])] += pts[i];
      ++count[static_cast<std::size_t>(owner[i])];
    }
    for (std::size_t j = 0; j < centers.size(); ++j)
      if (count[j] > 0) centers[j] = mean[j] / count[j];
  }

  // Pull centers slightly toward the centroid so the spheres sit inside the
  // mesh, then grow each to cover its assigned samples.
  std::vector<CollisionSphere> spheres;
  for (const Vec3& c : centers) {
    CollisionSphere s;
    s.center = centroid + 0.85 * (c - centroid);
    spheres.push_back(s);
  }
  for (const Vec3& v : pts) {
    int nearest = 0;
    double nd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < spheres.size(); ++j) {
      const double d = (v - spheres[j].center).squaredNorm();
      if (d < nd) {
        nd = d;
        nearest = static_cast<int>(j);
      }
    }
    spheres[nearest].radius = std::max(spheres[nearest].radius, std::sqrt(nd));
  }
  for (CollisionSphere& s : spheres)
    if (s.radius <= 0.0) s.radius = 1e-4;
  return spheres;
}

namespace {

struct Body {
  Mat3 R;
  Vec3 t;
  std::vector<Vec3> local;  // sphere centers, model frame
  std::vector<double> radius;

  Vec3 world_center(std::size_t i) const { return R * local[i] + t; }
};

// Uniform random rotation (Shoemake quaternion construction).
Mat3 random_rotation(Rng& rng) {
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  Eigen::Quaterniond q(a * std::sin(2 * M_PI * u2), a * std::cos(2 * M_PI * u2),
                       b * std::sin(2 * M_PI * u3), b * std::cos(2 * M_PI * u3));
  return q.normalized().toRotationMatrix();
}

// One Gauss-Seidel pass of constraint projection; returns the worst
// penetration seen before correction.
double project_once(std::vector<Body>& bodies, const SceneConfig& cfg) {
  double worst = 0.0;
  const double hx = cfg.bin_half.x(), hy = cfg.bin_half.y();
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    for (std::size_t j = i + 1; j < bodies.size(); ++j) {
      for (std::size_t a = 0; a < bodies[i].local.size(); ++a) {
        const Vec3 ca = bodies[i].world_center(a);
        for (std::size_t b = 0; b < bodies[j].local.size(); ++b) {
          const Vec3 cb = bodies[j].world_center(b);
          const double rr = bodies[i].radius[a] + bodies[j].radius[b];
          Vec3 d = cb - ca;
          double len = d.norm();
          const double pen = rr - len;
          if (pen <= 0) continue;
          worst = std::max(worst, pen);
          if (len < 1e-12) d = Vec3(0, 0, 1);
          else d /= len;
          bodies[i].t -= 0.5 * pen * d;
          bodies[j].t += 0.5 * pen * d;
        }
      }
    }
  }
  for (Body& body : bodies) {
    for (std::size_t a = 0; a < body.local.size(); ++a) {
      const Vec3 c = body.world_center(a);
      const double r = body.radius[a];
      if (c.z() - r < 0) {
        worst = std::max(worst, r - c.z());
        body.t.z() += r - c.z();
      }
      if (c.x() - r < -hx) {
        worst = std::max(worst, -hx - (c.x() - r));
        body.t.x() += -hx - (c.x() - r);
      }
      if (c.x() + r > hx) {
        worst = std::max(worst, (c.x() + r) - hx);
        body.t.x() -= (c.x() + r) - hx;
      }
      if (c.y() - r < -hy) {
        worst = std::max(worst, -hy - (c.y() - r));
        body.t.y() += -hy - (c.y() - r);
      }
      if (c.y() + r > hy) {
        worst = std::max(worst, (c.y() + r) - hy);
        body.t.y() -= (c.y() + r) - hy;
      }
    }
  }
  return worst;
}

// Worst constraint violation of the current state: pair penetration, floor
// penetration, and wall excess. Unlike project_once this applies no
// corrections, so the value describes the state exactly as it stands.
double measure_worst(const std::vector<Body>& bodies, const SceneConfig& cfg) {
  double worst = 0.0;
  const double hx = cfg.bin_half.x(), hy = cfg.bin_half.y();
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    for (std::size_t j = i + 1; j < bodies.size(); ++j) {
      for (std::size_t a = 0; a < bodies[i].local.size(); ++a) {
        const Vec3 ca = bodies[i].world_center(a);
        for (std::size_t b = 0; b < bodies[j].local.size(); ++b) {
          const Vec3 cb = bodies[j].world_center(b);
          const double rr = bodies[i].radius[a] + bodies[j].radius[b];
          worst = std::max(worst, rr - (cb - ca).norm());
        }
      }
    }
  }
  for (const Body& body : bodies) {
    for (std::size_t a = 0; a < body.local.size(); ++a) {
      const Vec3 c = body.world_center(a);
      const double r = body.radius[a];
      worst = std::max({worst, r - c.z(), (c.x() + r) - hx, -hx - (c.x() - r),
                        (c.y() + r) - hy, -hy - (c.y() - r)});
    }
  }
  return std::max(worst, 0.0);
}

// Vertically separates every penetrating sphere pair by raising the body
// whose center sits higher. Gauss-Seidel projection alone can reach a limit
// cycle when pair corrections push bodies into the walls and the walls push
// them straight back; the bin is open above, so these moves are never undone.
// fraction < 1 lifts part of the way, letting gravity and the lateral
// projection components rearrange the pile instead of building towers.
void lift_pass(std::vector<Body>& bodies, double tol, double fraction) {
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    for (std::size_t j = i + 1; j < bodies.size(); ++j) {
      std::size_t lo = i, hi = j;
      if (bodies[hi].t.z() < bodies[lo].t.z()) std::swap(lo, hi);
      double need = 0.0;
      for (std::size_t a = 0; a < bodies[lo].local.size(); ++a) {
        const Vec3 ca = bodies[lo].world_center(a);
        for (std::size_t b = 0; b < bodies[hi].local.size(); ++b) {
          const Vec3 cb = bodies[hi].world_center(b);
          const double rr = bodies[lo].radius[a] + bodies[hi].radius[b];
          if ((cb - ca).norm() >= rr) continue;
          const double dxy = std::hypot(cb.x() - ca.x(), cb.y() - ca.y());
          if (dxy >= rr) continue;
          const double dz_min = std::sqrt(rr * rr - dxy * dxy);
          need = std::max(need, dz_min - (cb.z() - ca.z()) + 0.5 * tol);
        }
      }
      if (need > 0) bodies[hi].t.z() += fraction * need;
    }
  }
}

bool settle_attempt(const SceneConfig& cfg, const MeshModel& model,
                    const std::vector<CollisionSphere>& spheres, Rng& rng,
                    std::vector<SceneInstance>& out) {
  const int n = rng.uniform_int(cfg.n_min, cfg.n_max);
  double max_r = 0.0;
  for (const auto& s : spheres) max_r = std::max(max_r, s.radius);
  const double bsr = 0.5 * model.bsphere_diameter;

  std::vector<Body> bodies(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Body& b = bodies[static_cast<std::size_t>(i)];
    b.R = random_rotation(rng);
    const double hx = std::max(1e-6, cfg.bin_half.x() - max_r);
    const double hy = std::max(1e-6, cfg.bin_half.y() - max_r);
    b.t = Vec3(rng.uniform(-hx, hx), rng.uniform(-hy, hy),
               bsr + i * 1.2 * bsr + rng.uniform(0.0, 0.5 * bsr));
    for (const auto& s : spheres) {
      b.local.push_back(s.center);
      b.radius.push_back(s.radius);
    }
  }

  // Gravity descent with projection; the step decays so bodies come to rest.
  // Jams detected mid-descent are shaken loose by lifting, and gravity then
  // re-settles the lifted bodies onto the pile.
  double g_step = 0.5 * bsr;
  double last = std::numeric_limits<double>::infinity();
  int stall = 0;
  for (int it = 0; it < cfg.settle_iters; ++it) {
    for (Body& b : bodies) b.t.z() -= g_step;
    double pen = 0.0;
    for (int sub = 0; sub < 4; ++sub) pen = project_once(bodies, cfg);
    if (it > 100 && pen > cfg.tolerance && pen >= 0.999 * last) {
      if (++stall >= 10) {
        lift_pass(bodies, cfg.tolerance, 1.0);
        stall = 0;
        last = std::numeric_limits<double>::infinity();
        // Restore enough gravity for the lifted bodies to come back down.
        g_step = std::max(g_step, 0.15 * bsr);
      }
    } else {
      stall = 0;
      last = pen;
    }
    g_step = std::max(0.985 * g_step, 0.25 * cfg.tolerance);
  }
  // Projection-only cleanup: drive residual penetration under tolerance.
  // A 20-pass stall means the projections reached a limit cycle; break it by
  // lifting jammed pairs apart and keep going.
  bool ok = false;
  last = std::numeric_limits<double>::infinity();
  stall = 0;
  for (int it = 0; it < 400; ++it) {
    const double pen = project_once(bodies, cfg);
    // project_once reports pre-correction violations, and corrections late in
    // a pass can nudge earlier pairs back over tolerance; only a correction-
    // free measurement of the final state counts as converged.
    if (pen <= cfg.tolerance && measure_worst(bodies, cfg) <= cfg.tolerance) {
      ok = true;
      break;
    }
    if (pen >= 0.999 * last) {
      if (++stall >= 20) {
        lift_pass(bodies, cfg.tolerance, 1.0);
        stall = 0;
        last = std::numeric_limits<double>::infinity();
        continue;
      }
    } else {
      stall = 0;
    }
    last = pen;
  }
  if (!ok) return false;

  out.clear();
  for (const Body& b : bodies) out.push_back(SceneInstance{make_pose(b.R, b.t)});
  return true;
}

}  // namespace

std::vector<SceneInstance> generate_scene(const SceneConfig& cfg,
                                          const MeshModel& model) {
  if (cfg.n_min < 1 || cfg.n_min > cfg.n_max)
    throw ConfigError("generate_scene: bad instance count range");
  if (cfg.tolerance <= 0) throw ConfigError("generate_scene: tolerance must be > 0");
  const auto spheres = fit_coverage_spheres(model);

  Rng base(cfg.seed);
  constexpr int kMaxAttempts = 8;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng = base.derive(static_cast<std::uint64_t>(attempt));
    std::vector<SceneInstance> scene;
    if (settle_attempt(cfg, model, spheres, rng, scene)) return scene;
  }
  throw DataError("generate_scene: failed to settle after " +
                  std::to_string(kMaxAttempts) + " attempts (seed " +
                  std::to_string(cfg.seed) + ")");
}

double max_pairwise_penetration(const std::vector<SceneInstance>& scene,
                                const std::vector<CollisionSphere>& spheres) {
  double worst = 0.0;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Mat3 Ri = pose_rotation(scene[i].pose);
    for (std::size_t j = i + 1; j < scene.size(); ++j) {
      const Mat3 Rj = pose_rotation(scene[j].pose);
      for (const auto& a : spheres) {
        const Vec3 ca = Ri * a.center + scene[i].pose.t;
        for (const auto& b : spheres) {
          const Vec3 cb = Rj * b.center + scene[j].pose.t;
          const double pen = a.radius + b.radius - (ca - cb).norm();
          worst = std::max(worst, pen);
        }
      }
    }
  }
  return worst;
}

double lowest_sphere_clearance(const std::vector<SceneInstance>& scene,
                               const std::vector<CollisionSphere>& spheres) {
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& inst : scene) {
    const Mat3 R = pose_rotation(inst.pose);
    for (const auto& s : spheres)
      lowest = std::min(lowest, (R * s.center + inst.pose.t).z() - s.radius);
  }
  return lowest;
}

std::vector<CameraView> sample_views(const SceneConfig& cfg, int count,
                                     std::uint64_t seed) {
  if (count < 1) throw ConfigError("sample_views: count must be >= 1");
  if (cfg.focal_px <= 0 || cfg.image_width < 2 || cfg.image_height < 2)
    throw ConfigError("sample_views: bad intrinsics");

  Rng rng(seed);
  const Vec3 target = cfg.bin_center();
  const double diag = cfg.bin_diagonal();
  std::vector<CameraView> views;
  for (int i = 0; i < count; ++i) {
    const double radius = diag * rng.uniform(cfg.view_radius_min_factor,
                                             cfg.view_radius_max_factor);
    const double elev =
        rng.uniform(cfg.elev_min_deg, cfg.elev_max_deg) * M_PI / 180.0;
    const double azim = rng.uniform(0.0, 2 * M_PI);
    const double roll = rng.uniform(0.0, 2 * M_PI);

    const Vec3 pos = target + radius * Vec3(std::cos(elev) * std::cos(azim),
                                            std::cos(elev) * std::sin(azim),
                                            std::sin(elev));
    const Vec3 fwd = (target - pos).normalized();
    Vec3 hint = Vec3(0, 0, 1);
    if (std::abs(fwd.dot(hint)) > 0.999) hint = Vec3(1, 0, 0);
    const Vec3 x0 = fwd.cross(hint).normalized();
    const Vec3 y0 = fwd.cross(x0);  // right-handed with z = fwd, y down-ish
    const Vec3 xc = std::cos(roll) * x0 + std::sin(roll) * y0;
    const Vec3 yc = -std::sin(roll) * x0 + std::cos(roll) * y0;

    CameraView v;
    v.rotation.row(0) = xc.transpose();
    v.rotation.row(1) = yc.transpose();
    v.rotation.row(2) = fwd.transpose();
    v.translation = -v.rotation * pos;
    v.fx = v.fy = cfg.focal_px;
    v.cx = 0.5 * cfg.image_width;
    v.cy = 0.5 * cfg.image_height;
    v.width = cfg.image_width;
    v.height = cfg.image_height;
    views.push_back(v);
  }
  return views;
}

}  // namespace binpick
