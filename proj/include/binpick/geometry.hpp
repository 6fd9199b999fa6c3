#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "binpick/errors.hpp"

namespace binpick {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rotation convention, fixed globally: the camera->model rotation factors
// as Rz(roll) * Rx(yaw) * Ry(pitch); pitch/roll in [0, 2pi), yaw in
// [-pi/2, pi/2]. pose_rotation() returns the model->camera matrix (the
// transpose), so roll is the spin about the object's own z axis.
struct Pose6D {
  double pitch = 0.0;
  double yaw = 0.0;
  double roll = 0.0;
  Vec3 t = Vec3::Zero();
};

struct SymmetrySpec {
  std::vector<Mat3> finite_rotations{Mat3::Identity()};
  std::optional<Vec3> axial;

  static SymmetrySpec identity_only();
  static SymmetrySpec box_c2();                 // {I, Rx(pi), Ry(pi), Rz(pi)}
  static SymmetrySpec cyclic_z(int n);
  static SymmetrySpec axial_z(bool with_flip);
  // "none", "box", "cN", "axial", "axial_flip"
  static SymmetrySpec from_name(const std::string& name);

  bool has_roll_symmetry() const { return axial.has_value(); }
};

bool symmetry_closed(const SymmetrySpec& s, double tol = 1e-6);

struct MeshModel {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  double diameter = 0.0;          // max pairwise vertex distance
  double bsphere_diameter = 0.0;  // Ritter approximation
  Vec3 bsphere_center = Vec3::Zero();
  SymmetrySpec symmetry;

  static MeshModel create(std::vector<Vec3> vertices,
                          std::vector<std::array<int, 3>> triangles,
                          SymmetrySpec symmetry = SymmetrySpec::identity_only());
};

// Top-left corner plus extent, pixels.
struct Box2D {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
};

// Axis-aligned, camera frame.
struct Box3D {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Zero();
};

double wrap_angle_2pi(double a);

Mat3 euler_to_matrix(double pitch, double yaw, double roll);
// Returns {pitch, yaw, roll} in the canonical ranges; at gimbal lock
// (|yaw| = pi/2) roll is 0 and pitch absorbs the free angle.
std::array<double, 3> matrix_to_euler(const Mat3& R);

// Model->camera rotation of the pose.
Mat3 pose_rotation(const Pose6D& p);
// Inverse of pose_rotation composition: R is model->camera.
Pose6D make_pose(const Mat3& R, const Vec3& t);
Vec3 transform_point(const Pose6D& p, const Vec3& v);
// (R, t) o pose: rotation R*Rp, translation R*tp + t.
Pose6D compose_rigid(const Mat3& R, const Vec3& t, const Pose6D& pose);

// Symmetry-minimized mean vertex displacement between the two poses.
double sym_distance(const Pose6D& p, const Pose6D& q, const MeshModel& model);
// Mean vertex displacement, no symmetry minimization.
double add_distance(const Pose6D& p, const Pose6D& q, const MeshModel& model);

double box2d_iou(const Box2D& a, const Box2D& b);
// True iff the boxes overlap with positive volume on all three axes.
bool box3d_overlaps(const Box3D& a, const Box3D& b);
Box3D model_box3d(const Pose6D& pose, const MeshModel& model);

// Mesh primitives, centered at the vertex centroid.
MeshModel make_wedge(double leg_a, double leg_b, double length);
MeshModel make_box_mesh(double sx, double sy, double sz);
MeshModel make_cylinder(double radius, double height, int segments);
MeshModel make_icosphere(double radius, int subdivisions);

// ASCII mesh file ("BPMESH" header, counts, vertex lines, triangle lines).
void save_mesh(const MeshModel& m, const std::string& path);
MeshModel load_mesh(const std::string& path,
                    SymmetrySpec symmetry = SymmetrySpec::identity_only());

}  // namespace binpick
