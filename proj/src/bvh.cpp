#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <numeric>

#include "occ/errors.hpp"
#include "occ/geometry.hpp"

namespace occ {

namespace {

constexpr int kLeafSize = 4;
constexpr int kMaxRayRetries = 8;
constexpr double kGrazeTol = 1e-9;

struct Node {
  Aabb box;
  int left = -1;  // child index, or -1 for a leaf
  int right = -1;
  int first = 0;  // leaf range into the permuted triangle list
  int count = 0;
};

double box_distance2(const Aabb& b, const Vec3& p) {
  const Vec3 d = (b.min - p).cwiseMax(p - b.max).cwiseMax(Vec3::Zero());
  return d.squaredNorm();
}

bool ray_hits_box(const Aabb& b, const Vec3& origin, const Vec3& inv_dir) {
  double tmin = 0.0, tmax = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    double t0 = (b.min[a] - origin[a]) * inv_dir[a];
    double t1 = (b.max[a] - origin[a]) * inv_dir[a];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return false;
  }
  return true;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Direction derived from the query coordinates so the test is a pure function of q.
Vec3 ray_direction(const Vec3& q, int attempt) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(attempt + 1);
  for (int a = 0; a < 3; ++a) h = mix64(h ^ std::bit_cast<std::uint64_t>(q[a]));
  const double u = static_cast<double>(mix64(h) >> 11) * 0x1.0p-53;
  const double v = static_cast<double>(mix64(h + 1) >> 11) * 0x1.0p-53;
  const double z = 2.0 * u - 1.0;
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * M_PI * v;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

}  // namespace

class Bvh {
 public:
  explicit Bvh(const TriangleMesh& mesh) : mesh_(mesh) {
    const std::size_t n = mesh.triangles.size();
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    centroids_.resize(n);
    for (std::size_t t = 0; t < n; ++t)
      centroids_[t] = (mesh.corner(t, 0) + mesh.corner(t, 1) + mesh.corner(t, 2)) / 3.0;
    if (n > 0) build(0, static_cast<int>(n));
  }

  // 1 inside, 0 outside, -1 grazing contact (caller re-rolls).
  int ray_parity(const Vec3& q, const Vec3& dir) const {
    const Vec3 inv_dir = dir.cwiseInverse();
    int crossings = 0;
    int stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      if (!ray_hits_box(node.box, q, inv_dir)) continue;
      if (node.left < 0) {
        for (int k = node.first; k < node.first + node.count; ++k) {
          const int hit = intersect(order_[k], q, dir);
          if (hit < 0) return -1;
          crossings += hit;
        }
      } else {
        stack[top++] = node.left;
        stack[top++] = node.right;
      }
    }
    return crossings & 1;
  }

  SurfacePoint nearest(const Vec3& x) const {
    SurfacePoint best;
    double best_d2 = std::numeric_limits<double>::infinity();
    int stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      if (box_distance2(node.box, x) >= best_d2) continue;
      if (node.left < 0) {
        for (int k = node.first; k < node.first + node.count; ++k) {
          const int t = order_[k];
          const Vec3 p = closest_point_on_triangle(x, mesh_.corner(t, 0), mesh_.corner(t, 1), mesh_.corner(t, 2));
          const double d2 = (p - x).squaredNorm();
          if (d2 < best_d2) {
            best_d2 = d2;
            best.point = p;
            best.triangle = static_cast<std::size_t>(t);
          }
        }
      } else {
        const double dl = box_distance2(nodes_[node.left].box, x);
        const double dr = box_distance2(nodes_[node.right].box, x);
        // Push the farther child first so the nearer one is visited next.
        if (dl < dr) {
          stack[top++] = node.right;
          stack[top++] = node.left;
        } else {
          stack[top++] = node.left;
          stack[top++] = node.right;
        }
      }
    }
    best.distance = std::sqrt(best_d2);
    best.normal = mesh_.face_normal(best.triangle);
    return best;
  }

  mutable std::atomic<std::size_t> fallbacks{0};

 private:
  int build(int first, int count) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    Aabb box, cbox;
    for (int k = first; k < first + count; ++k) {
      const int t = order_[k];
      for (int c = 0; c < 3; ++c) box.expand(mesh_.corner(t, c));
      cbox.expand(centroids_[t]);
    }
    nodes_[id].box = box;
    if (count <= kLeafSize) {
      nodes_[id].first = first;
      nodes_[id].count = count;
      return id;
    }
    int axis = 0;
    cbox.extent().maxCoeff(&axis);
    const int mid = first + count / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                     [&](int a, int b) {
                       if (centroids_[a][axis] != centroids_[b][axis]) return centroids_[a][axis] < centroids_[b][axis];
                       return a < b;
                     });
    const int left = build(first, mid - first);
    const int right = build(mid, first + count - mid);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  // Moller-Trumbore; returns 1 for a proper crossing at t > 0, 0 for a miss,
  // -1 when the hit lies within kGrazeTol of an edge or vertex.
  int intersect(int t, const Vec3& origin, const Vec3& dir) const {
    const Vec3 a = mesh_.corner(t, 0), b = mesh_.corner(t, 1), c = mesh_.corner(t, 2);
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 p = dir.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-14 * e1.norm() * e2.norm()) return 0;
    const double inv = 1.0 / det;
    const Vec3 s = origin - a;
    const double u = s.dot(p) * inv;
    if (u < -kGrazeTol || u > 1.0 + kGrazeTol) return 0;
    const Vec3 qv = s.cross(e1);
    const double v = dir.dot(qv) * inv;
    if (v < -kGrazeTol || u + v > 1.0 + kGrazeTol) return 0;
    const double dist = e2.dot(qv) * inv;
    if (dist <= 0.0) return 0;
    if (u < kGrazeTol || v < kGrazeTol || u + v > 1.0 - kGrazeTol) return -1;
    return 1;
  }

  const TriangleMesh& mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  std::vector<Vec3> centroids_;
};

MeshQuery::MeshQuery(const TriangleMesh& mesh)
    : mesh_(std::make_shared<const TriangleMesh>(mesh)), bvh_(std::make_unique<Bvh>(*mesh_)) {
  if (mesh_->empty()) fail(ErrorKind::DegenerateGeometry, "cannot query an empty mesh");
}

MeshQuery::~MeshQuery() = default;
MeshQuery::MeshQuery(MeshQuery&&) noexcept = default;
MeshQuery& MeshQuery::operator=(MeshQuery&&) noexcept = default;

bool MeshQuery::inside(const Vec3& q) const {
  if (!mesh_->watertight) fail(ErrorKind::NotWatertight, "inside/outside query on a non-watertight mesh");
  for (int attempt = 0; attempt < kMaxRayRetries; ++attempt) {
    const int parity = bvh_->ray_parity(q, ray_direction(q, attempt));
    if (parity >= 0) return parity == 1;
  }
  bvh_->fallbacks.fetch_add(1, std::memory_order_relaxed);
  return winding_number(*mesh_, q) >= 0.5;
}

SurfacePoint MeshQuery::nearest(const Vec3& x) const { return bvh_->nearest(x); }

std::size_t MeshQuery::fallback_count() const { return bvh_->fallbacks.load(); }

}  // namespace occ
