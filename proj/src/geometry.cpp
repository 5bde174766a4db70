#include "occ/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "occ/errors.hpp"

namespace occ {

namespace {

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

Aabb Aabb::of(std::span<const Vec3> points) {
  Aabb box;
  for (const auto& p : points) box.expand(p);
  return box;
}

Vec3 TriangleMesh::face_normal(std::size_t tri) const {
  const Vec3 a = corner(tri, 0), b = corner(tri, 1), c = corner(tri, 2);
  return (b - a).cross(c - a).normalized();
}

double TriangleMesh::face_area(std::size_t tri) const {
  const Vec3 a = corner(tri, 0), b = corner(tri, 1), c = corner(tri, 2);
  return 0.5 * (b - a).cross(c - a).norm();
}

double TriangleMesh::surface_area() const {
  double total = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) total += face_area(t);
  return total;
}

Aabb TriangleMesh::bounds() const {
  Aabb box;
  for (const auto& tri : triangles)
    for (int k : tri) box.expand(vertices[k]);
  return box;
}

bool is_closed_manifold(const TriangleMesh& mesh) {
  if (mesh.triangles.empty()) return false;
  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(mesh.triangles.size() * 3);
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      if (++directed[edge_key(t[k], t[(k + 1) % 3])] > 1) return false;
    }
  }
  for (const auto& [key, count] : directed) {
    const int a = static_cast<int>(key >> 32);
    const int b = static_cast<int>(key & 0xffffffffu);
    if (!directed.contains(edge_key(b, a))) return false;
  }
  return true;
}

void finalize_mesh(TriangleMesh& mesh) {
  const int nv = static_cast<int>(mesh.vertices.size());
  for (const auto& v : mesh.vertices)
    if (!v.allFinite()) fail(ErrorKind::Parse, "non-finite vertex coordinate");
  for (const auto& t : mesh.triangles)
    for (int k : t)
      if (k < 0 || k >= nv) fail(ErrorKind::Parse, "triangle index " + std::to_string(k) + " out of range");

  std::erase_if(mesh.triangles, [](const Triangle& t) { return t[0] == t[1] || t[1] == t[2] || t[0] == t[2]; });
  if (mesh.triangles.empty()) fail(ErrorKind::DegenerateGeometry, "mesh has no non-degenerate triangles");

  const double longest = mesh.bounds().extent().maxCoeff();
  if (!(longest > 0.0)) fail(ErrorKind::DegenerateGeometry, "mesh bounding box has zero extent");
  const double min_area = 1e-12 * longest * longest;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (!(mesh.face_area(t) > min_area))
      fail(ErrorKind::DegenerateGeometry, "triangle " + std::to_string(t) + " has zero area");
  }
  mesh.watertight = is_closed_manifold(mesh);
}

int euler_characteristic(const TriangleMesh& mesh) {
  std::unordered_set<int> used;
  std::unordered_set<std::uint64_t> edges;
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      used.insert(t[k]);
      const int a = t[k], b = t[(k + 1) % 3];
      edges.insert(edge_key(std::min(a, b), std::max(a, b)));
    }
  }
  return static_cast<int>(used.size()) - static_cast<int>(edges.size()) + static_cast<int>(mesh.triangles.size());
}

std::size_t connected_components(const TriangleMesh& mesh) {
  std::vector<int> parent(mesh.vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<bool> used(mesh.vertices.size(), false);
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      used[t[k]] = true;
      parent[find(t[k])] = find(t[(k + 1) % 3]);
    }
  }
  std::size_t count = 0;
  for (std::size_t v = 0; v < parent.size(); ++v)
    if (used[v] && find(static_cast<int>(v)) == static_cast<int>(v)) ++count;
  return count;
}

double signed_volume(const TriangleMesh& mesh) {
  double vol = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    vol += mesh.corner(t, 0).dot(mesh.corner(t, 1).cross(mesh.corner(t, 2)));
  return vol / 6.0;
}

std::pair<TriangleMesh, Similarity> normalize_to_unit_cube(const TriangleMesh& mesh) {
  if (mesh.empty()) fail(ErrorKind::DegenerateGeometry, "cannot normalize an empty mesh");
  const Aabb box = mesh.bounds();
  const double longest = box.extent().maxCoeff();
  if (!(longest > 0.0)) fail(ErrorKind::DegenerateGeometry, "bounding box has zero extent");
  Similarity t;
  t.scale = 1.0 / longest;
  t.translation = -t.scale * box.center();
  return {transformed(mesh, t), t};
}

TriangleMesh transformed(const TriangleMesh& mesh, const Similarity& t) {
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = t.apply(v);
  return out;
}

TriangleMesh transformed(const TriangleMesh& mesh, const Eigen::Matrix3d& rotation) {
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = rotation * v;
  return out;
}

PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, Rng& rng) {
  if (mesh.empty()) fail(ErrorKind::DegenerateGeometry, "cannot sample an empty mesh");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += mesh.face_area(t);
    cumulative[t] = total;
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.normals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = unit(rng) * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const std::size_t tri = std::min<std::size_t>(it - cumulative.begin(), cumulative.size() - 1);
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    const Vec3 a = mesh.corner(tri, 0), b = mesh.corner(tri, 1), c = mesh.corner(tri, 2);
    cloud.points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
    cloud.normals.push_back(mesh.face_normal(tri));
  }
  return cloud;
}

// Van Oosterom-Strackee solid angle, summed over faces.
double winding_number(const TriangleMesh& mesh, const Vec3& q) {
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Vec3 a = mesh.corner(t, 0) - q, b = mesh.corner(t, 1) - q, c = mesh.corner(t, 2) - q;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double num = a.dot(b.cross(c));
    const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * M_PI);
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

bool point_in_mesh(const TriangleMesh& mesh, const Vec3& q) { return MeshQuery(mesh).inside(q); }

SurfacePoint nearest_surface_point(const TriangleMesh& mesh, const Vec3& x) { return MeshQuery(mesh).nearest(x); }

Eigen::Matrix3d axis_angle_rotation(char axis, double degrees) {
  Vec3 a;
  switch (axis) {
    case 'x': case 'X': a = Vec3::UnitX(); break;
    case 'y': case 'Y': a = Vec3::UnitY(); break;
    case 'z': case 'Z': a = Vec3::UnitZ(); break;
    default: fail(ErrorKind::Config, std::string("unknown rotation axis '") + axis + "'");
  }
  return Eigen::AngleAxisd(degrees * M_PI / 180.0, a).toRotationMatrix();
}

}  // namespace occ
