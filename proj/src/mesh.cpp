#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "binpick/geometry.hpp"

namespace binpick {

static MeshModel centered(std::vector<Vec3> verts,
                          std::vector<std::array<int, 3>> tris,
                          SymmetrySpec sym) {
  Vec3 c = Vec3::Zero();
  for (const Vec3& v : verts) c += v;
  c /= static_cast<double>(verts.size());
  for (Vec3& v : verts) v -= c;
  return MeshModel::create(std::move(verts), std::move(tris), std::move(sym));
}

MeshModel make_wedge(double leg_a, double leg_b, double length) {
  std::vector<Vec3> v = {
      {0, 0, 0}, {leg_a, 0, 0}, {0, leg_b, 0},
      {0, 0, length}, {leg_a, 0, length}, {0, leg_b, length},
  };
  std::vector<std::array<int, 3>> t = {
      {0, 2, 1}, {3, 4, 5},                    // caps
      {0, 1, 4}, {0, 4, 3},                    // bottom side
      {1, 2, 5}, {1, 5, 4},                    // hypotenuse side
      {2, 0, 3}, {2, 3, 5},                    // left side
  };
  return centered(std::move(v), std::move(t), SymmetrySpec::identity_only());
}

MeshModel make_box_mesh(double sx, double sy, double sz) {
  const double x = 0.5 * sx, y = 0.5 * sy, z = 0.5 * sz;
  std::vector<Vec3> v = {
      {-x, -y, -z}, {x, -y, -z}, {x, y, -z}, {-x, y, -z},
      {-x, -y, z},  {x, -y, z},  {x, y, z},  {-x, y, z},
  };
  std::vector<std::array<int, 3>> t = {
      {0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7},  // bottom, top
      {0, 1, 5}, {0, 5, 4}, {2, 3, 7}, {2, 7, 6},  // front, back
      {1, 2, 6}, {1, 6, 5}, {3, 0, 4}, {3, 4, 7},  // right, left
  };
  return centered(std::move(v), std::move(t), SymmetrySpec::box_c2());
}

MeshModel make_cylinder(double radius, double height, int segments) {
  if (segments < 3) throw ContractViolation("cylinder needs >= 3 segments");
  std::vector<Vec3> v;
  std::vector<std::array<int, 3>> t;
  const double hz = 0.5 * height;
  for (int k = 0; k < segments; ++k) {
    const double a = 2.0 * M_PI * k / segments;
    v.emplace_back(radius * std::cos(a), radius * std::sin(a), -hz);
    v.emplace_back(radius * std::cos(a), radius * std::sin(a), hz);
  }
  const int bottom_c = static_cast<int>(v.size());
  v.emplace_back(0, 0, -hz);
  const int top_c = bottom_c + 1;
  v.emplace_back(0, 0, hz);
  for (int k = 0; k < segments; ++k) {
    const int b0 = 2 * k, t0 = 2 * k + 1;
    const int b1 = 2 * ((k + 1) % segments), t1 = b1 + 1;
    t.push_back({b0, b1, t0});
    t.push_back({t0, b1, t1});
    t.push_back({bottom_c, b1, b0});
    t.push_back({top_c, t0, t1});
  }
  return MeshModel::create(std::move(v), std::move(t),
                           SymmetrySpec::axial_z(false));
}

MeshModel make_icosphere(double radius, int subdivisions) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {
      {-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1},
  };
  for (Vec3& p : v) p.normalize();
  std::vector<std::array<int, 3>> t = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
  };
  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vec3 m = (v[a] + v[b]).normalized();
      v.push_back(m);
      const int idx = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(t.size() * 4);
    for (const auto& f : t) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    t = std::move(next);
  }
  for (Vec3& p : v) p *= radius;
  return MeshModel::create(std::move(v), std::move(t),
                           SymmetrySpec::axial_z(false));
}

void save_mesh(const MeshModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write mesh file: " + path);
  out << "BPMESH\n";
  out << m.vertices.size() << " " << m.triangles.size() << "\n";
  char buf[128];
  for (const Vec3& v : m.vertices) {
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& t : m.triangles)
    out << t[0] << " " << t[1] << " " << t[2] << "\n";
  if (!out) throw DataError("error writing mesh file: " + path);
}

MeshModel load_mesh(const std::string& path, SymmetrySpec symmetry) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mesh file: " + path);
  std::string magic;
  in >> magic;
  if (magic != "BPMESH") throw DataError("bad mesh magic in " + path);
  std::size_t nv = 0, nt = 0;
  in >> nv >> nt;
  if (!in) throw DataError("bad mesh header in " + path);
  std::vector<Vec3> verts(nv);
  for (auto& v : verts) in >> v.x() >> v.y() >> v.z();
  std::vector<std::array<int, 3>> tris(nt);
  for (auto& t : tris) in >> t[0] >> t[1] >> t[2];
  if (!in) throw DataError("truncated mesh file: " + path);
  return MeshModel::create(std::move(verts), std::move(tris),
                           std::move(symmetry));
}

}  // namespace binpick
