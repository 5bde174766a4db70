#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace occ {

using Vec3 = Eigen::Vector3d;
using Rng = std::mt19937_64;
using Triangle = std::array<int, 3>;

struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  static Aabb of(std::span<const Vec3> points);

  bool valid() const { return (min.array() <= max.array()).all(); }
  void expand(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  void expand(const Aabb& b) {
    min = min.cwiseMin(b.min);
    max = max.cwiseMax(b.max);
  }
  Aabb padded(double pad) const { return {min.array() - pad, max.array() + pad}; }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  bool contains(const Vec3& p) const { return (p.array() >= min.array()).all() && (p.array() <= max.array()).all(); }
};

/// Indexed triangle mesh. `watertight` is maintained by finalize_mesh().
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  bool watertight = false;

  bool empty() const { return triangles.empty(); }
  Vec3 corner(std::size_t tri, int k) const { return vertices[triangles[tri][k]]; }
  Vec3 face_normal(std::size_t tri) const;
  double face_area(std::size_t tri) const;
  double surface_area() const;
  Aabb bounds() const;
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty, or one unit normal per point

  std::size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty(); }
};

/// x -> scale * x + translation
struct Similarity {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * x + translation; }
  Similarity inverse() const { return {1.0 / scale, -translation / scale}; }
};

enum class MeshFormat { Obj, Off };

MeshFormat format_from_path(const std::filesystem::path& path);

TriangleMesh read_obj(std::istream& in);
TriangleMesh read_off(std::istream& in);
TriangleMesh load_mesh(const std::filesystem::path& path, MeshFormat format);
TriangleMesh load_mesh(const std::filesystem::path& path);

void write_obj(std::ostream& out, const TriangleMesh& mesh);
void write_off(std::ostream& out, const TriangleMesh& mesh);
void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Validates indices, drops index-degenerate faces, rejects zero-area faces
/// and recomputes the watertight flag. Throws ParseError / DegenerateGeometry.
void finalize_mesh(TriangleMesh& mesh);

/// True iff every directed edge has exactly one opposite partner.
bool is_closed_manifold(const TriangleMesh& mesh);

/// Euler characteristic V - E + F counted over referenced vertices.
int euler_characteristic(const TriangleMesh& mesh);
std::size_t connected_components(const TriangleMesh& mesh);

/// Signed enclosed volume; positive for outward-oriented closed meshes.
double signed_volume(const TriangleMesh& mesh);

std::pair<TriangleMesh, Similarity> normalize_to_unit_cube(const TriangleMesh& mesh);
TriangleMesh transformed(const TriangleMesh& mesh, const Similarity& t);
TriangleMesh transformed(const TriangleMesh& mesh, const Eigen::Matrix3d& rotation);

PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, Rng& rng);

/// Generalized winding number of a closed mesh around q (1 inside, 0 outside).
double winding_number(const TriangleMesh& mesh, const Vec3& q);

struct SurfacePoint {
  Vec3 point;
  Vec3 normal;
  double distance = 0.0;
  std::size_t triangle = 0;
};

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

class Bvh;

/// Read-only acceleration structure over a mesh for inside/outside and
/// nearest-surface queries. Safe to share between threads once built.
class MeshQuery {
 public:
  explicit MeshQuery(const TriangleMesh& mesh);
  ~MeshQuery();
  MeshQuery(MeshQuery&&) noexcept;
  MeshQuery& operator=(MeshQuery&&) noexcept;

  const TriangleMesh& mesh() const { return *mesh_; }

  /// Ray-parity test. Requires a watertight mesh (NotWatertight otherwise).
  bool inside(const Vec3& q) const;
  SurfacePoint nearest(const Vec3& x) const;

  /// Number of ray-parity queries that fell back to the winding number.
  std::size_t fallback_count() const;

 private:
  std::shared_ptr<const TriangleMesh> mesh_;
  std::unique_ptr<Bvh> bvh_;
};

bool point_in_mesh(const TriangleMesh& mesh, const Vec3& q);
SurfacePoint nearest_surface_point(const TriangleMesh& mesh, const Vec3& x);

Eigen::Matrix3d axis_angle_rotation(char axis, double degrees);

}  // namespace occ
