#include "binpick/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace binpick {

double wrap_angle_2pi(double a) {
  a = std::fmod(a, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  if (a >= 2.0 * M_PI) a = 0.0;
  return a;
}

static Mat3 rot_x(double a) {
  Mat3 r;
  r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return r;
}

static Mat3 rot_y(double a) {
  Mat3 r;
  r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return r;
}

static Mat3 rot_z(double a) {
  Mat3 r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}

Mat3 euler_to_matrix(double pitch, double yaw, double roll) {
  return rot_z(roll) * rot_x(yaw) * rot_y(pitch);
}

std::array<double, 3> matrix_to_euler(const Mat3& R) {
  const Mat3 err = R.transpose() * R - Mat3::Identity();
  if (err.cwiseAbs().maxCoeff() > 1e-4 || R.determinant() < 0.0)
    throw ContractViolation("matrix_to_euler: input is not a rotation matrix");

  const double sy = std::clamp(R(2, 1), -1.0, 1.0);
  const double yaw = std::asin(sy);
  double pitch, roll;
  if (std::abs(sy) > 1.0 - 1e-9) {
    // Gimbal lock: only pitch+roll (or pitch-roll) is observable.
    roll = 0.0;
    pitch = std::atan2(R(0, 2), R(0, 0));
  } else {
    pitch = std::atan2(-R(2, 0), R(2, 2));
    roll = std::atan2(-R(0, 1), R(1, 1));
  }
  return {wrap_angle_2pi(pitch), yaw, wrap_angle_2pi(roll)};
}

// The stored angles factor the camera->model rotation as
// Rz(roll)*Rx(yaw)*Ry(pitch); the model->camera matrix is its transpose.
// With this arrangement the object's own z axis, expressed in camera
// coordinates, depends on (pitch, yaw) only, and roll spins the object
// about that axis -- the component that axial symmetry erases.
Mat3 pose_rotation(const Pose6D& p) {
  return euler_to_matrix(p.pitch, p.yaw, p.roll).transpose();
}

Pose6D make_pose(const Mat3& R, const Vec3& t) {
  const auto e = matrix_to_euler(R.transpose());
  return Pose6D{e[0], e[1], e[2], t};
}

Vec3 transform_point(const Pose6D& p, const Vec3& v) {
  return pose_rotation(p) * v + p.t;
}

Pose6D compose_rigid(const Mat3& R, const Vec3& t, const Pose6D& pose) {
  return make_pose(R * pose_rotation(pose), R * pose.t + t);
}

SymmetrySpec SymmetrySpec::identity_only() { return SymmetrySpec{}; }

SymmetrySpec SymmetrySpec::box_c2() {
  SymmetrySpec s;
  s.finite_rotations = {Mat3::Identity(), rot_x(M_PI), rot_y(M_PI), rot_z(M_PI)};
  return s;
}

SymmetrySpec SymmetrySpec::cyclic_z(int n) {
  if (n < 1) throw ContractViolation("cyclic symmetry order must be >= 1");
  SymmetrySpec s;
  s.finite_rotations.clear();
  for (int k = 0; k < n; ++k) s.finite_rotations.push_back(rot_z(2.0 * M_PI * k / n));
  return s;
}

SymmetrySpec SymmetrySpec::axial_z(bool with_flip) {
  SymmetrySpec s;
  if (with_flip) s.finite_rotations.push_back(rot_x(M_PI));
  s.axial = Vec3(0, 0, 1);
  return s;
}

SymmetrySpec SymmetrySpec::from_name(const std::string& name) {
  if (name == "none") return identity_only();
  if (name == "box") return box_c2();
  if (name == "axial") return axial_z(false);
  if (name == "axial_flip") return axial_z(true);
  if (name.size() >= 2 && name[0] == 'c') {
    try {
      return cyclic_z(std::stoi(name.substr(1)));
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("unknown symmetry spec '" + name + "'");
}

bool symmetry_closed(const SymmetrySpec& s, double tol) {
  auto contains = [&](const Mat3& g) {
    for (const Mat3& h : s.finite_rotations)
      if ((g - h).cwiseAbs().maxCoeff() <= tol) return true;
    return false;
  };
  if (!contains(Mat3::Identity())) return false;
  for (const Mat3& a : s.finite_rotations)
    for (const Mat3& b : s.finite_rotations) {
      Mat3 ab = a * b;
      if (s.axial) {
        // Modulo the continuous axial part: project the product onto the
        // nearest pure-axial composition before membership testing.
        bool ok = false;
        for (const Mat3& h : s.finite_rotations) {
          const Mat3 rel = h.transpose() * ab;
          // rel should be a rotation about the axial axis.
          if ((rel * *s.axial - *s.axial).norm() <= tol) {
            ok = true;
            break;
          }
        }
        if (!ok) return false;
      } else if (!contains(ab)) {
        return false;
      }
    }
  if (s.axial && std::abs(s.axial->norm() - 1.0) > tol) return false;
  return true;
}

MeshModel MeshModel::create(std::vector<Vec3> vertices,
                            std::vector<std::array<int, 3>> triangles,
                            SymmetrySpec symmetry) {
  if (vertices.empty()) throw ContractViolation("mesh has no vertices");
  const int nv = static_cast<int>(vertices.size());
  for (const auto& t : triangles)
    for (int idx : t)
      if (idx < 0 || idx >= nv)
        throw ContractViolation("mesh triangle index out of range");

  MeshModel m;
  m.vertices = std::move(vertices);
  m.triangles = std::move(triangles);
  m.symmetry = std::move(symmetry);

  double d2 = 0.0;
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    for (std::size_t j = i + 1; j < m.vertices.size(); ++j)
      d2 = std::max(d2, (m.vertices[i] - m.vertices[j]).squaredNorm());
  m.diameter = std::sqrt(d2);

  // Ritter's approximate bounding sphere.
  const Vec3& x = m.vertices[0];
  Vec3 y = x, z = x;
  double best = -1.0;
  for (const Vec3& v : m.vertices) {
    const double d = (v - x).squaredNorm();
    if (d > best) {
      best = d;
      y = v;
    }
  }
  best = -1.0;
  for (const Vec3& v : m.vertices) {
    const double d = (v - y).squaredNorm();
    if (d > best) {
      best = d;
      z = v;
    }
  }
  Vec3 c = 0.5 * (y + z);
  double r = 0.5 * (y - z).norm();
  for (const Vec3& v : m.vertices) {
    const double d = (v - c).norm();
    if (d > r) {
      const double nr = 0.5 * (r + d);
      c += (v - c) * ((d - nr) / d);
      r = nr;
    }
  }
  m.bsphere_center = c;
  m.bsphere_diameter = 2.0 * r;
  return m;
}

static double mean_displacement(const Mat3& Ra, const Vec3& ta, const Mat3& Rb,
                                const Vec3& tb, const std::vector<Vec3>& verts) {
  const Mat3 dR = Ra - Rb;
  const Vec3 dt = ta - tb;
  double acc = 0.0;
  for (const Vec3& v : verts) acc += (dR * v + dt).norm();
  return acc / static_cast<double>(verts.size());
}

static Mat3 axis_rotation(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

double sym_distance(const Pose6D& p, const Pose6D& q, const MeshModel& model) {
  if (model.vertices.empty()) throw ContractViolation("sym_distance: empty mesh");
  const Mat3 Rp = pose_rotation(p);
  const Mat3 Rq = pose_rotation(q);
  double best = std::numeric_limits<double>::infinity();
  for (const Mat3& g : model.symmetry.finite_rotations) {
    const Mat3 Rpg = Rp * g;
    if (!model.symmetry.axial) {
      best = std::min(best,
                      mean_displacement(Rpg, p.t, Rq, q.t, model.vertices));
      continue;
    }
    const Vec3 axis = *model.symmetry.axial;
    auto f = [&](double theta) {
      return mean_displacement(Rpg * axis_rotation(axis, theta), p.t, Rq, q.t,
                               model.vertices);
    };
    // 72-point grid, then golden-section refinement around the best cell.
    constexpr int kGrid = 72;
    const double step = 2.0 * M_PI / kGrid;
    double best_theta = 0.0, best_val = std::numeric_limits<double>::infinity();
    for (int k = 0; k < kGrid; ++k) {
      const double v = f(k * step);
      if (v < best_val) {
        best_val = v;
        best_theta = k * step;
      }
    }
    double lo = best_theta - step, hi = best_theta + step;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c1 = hi - gr * (hi - lo), c2 = lo + gr * (hi - lo);
    double f1 = f(c1), f2 = f(c2);
    while (hi - lo > 1e-4) {
      if (f1 < f2) {
        hi = c2;
        c2 = c1;
        f2 = f1;
        c1 = hi - gr * (hi - lo);
        f1 = f(c1);
      } else {
        lo = c1;
        c1 = c2;
        f1 = f2;
        c2 = lo + gr * (hi - lo);
        f2 = f(c2);
      }
    }
    best = std::min({best, best_val, f(0.5 * (lo + hi))});
  }
  return best;
}

double add_distance(const Pose6D& p, const Pose6D& q, const MeshModel& model) {
  if (model.vertices.empty()) throw ContractViolation("add_distance: empty mesh");
  return mean_displacement(pose_rotation(p), p.t, pose_rotation(q), q.t,
                           model.vertices);
}

double box2d_iou(const Box2D& a, const Box2D& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

bool box3d_overlaps(const Box3D& a, const Box3D& b) {
  for (int i = 0; i < 3; ++i)
    if (std::abs(a.center[i] - b.center[i]) >= a.half_extents[i] + b.half_extents[i])
      return false;
  return true;
}

Box3D model_box3d(const Pose6D& pose, const MeshModel& model) {
  if (model.vertices.empty()) throw ContractViolation("model_box3d: empty mesh");
  const Mat3 R = pose_rotation(pose);
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3& v : model.vertices) {
    const Vec3 p = R * v + pose.t;
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return Box3D{0.5 * (lo + hi), 0.5 * (hi - lo)};
}

}  // namespace binpick
