#include "occ/metrics.hpp"

#include <cmath>

#include "occ/errors.hpp"

namespace occ {

namespace {

constexpr std::uint64_t kVolumeStream = 21;
constexpr std::uint64_t kSurfaceStreamA = 22;
constexpr std::uint64_t kSurfaceStreamB = 23;

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;  // of the mean
};

MeanVar mean_of(const std::vector<double>& v) {
  MeanVar r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.var = ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size());
  }
  return r;
}

// Per-sample nearest-surface records from samples on `from` to `to`.
void directional(const TriangleMesh& from, const MeshQuery& to, std::size_t n, std::uint64_t seed, std::uint64_t stream,
                 std::vector<double>& dist, std::vector<double>& dots) {
  if (from.empty()) fail(ErrorKind::DimensionMismatch, "cannot sample an empty mesh");
  Rng rng = derived_rng(seed, stream, 0);
  const PointCloud pc = sample_surface(from, n, rng);
  dist.assign(n, 0.0);
  dots.assign(n, 0.0);
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const SurfacePoint sp = to.nearest(pc.points[i]);
    dist[i] = sp.distance;
    dots[i] = std::abs(pc.normals[i].dot(sp.normal));
  }
}

}  // namespace

Solid Solid::of(const TriangleMesh& mesh) {
  if (!mesh.watertight) fail(ErrorKind::NotWatertight, "volume operand mesh is not watertight");
  auto q = std::make_shared<MeshQuery>(mesh);
  return {[q](const Vec3& p) { return q->inside(p); }, mesh.bounds()};
}

Solid Solid::of(const ShapeSpec& spec) {
  auto s = std::make_shared<ShapeSpec>(spec);
  return {[s](const Vec3& p) { return occupancy_oracle(*s, p); }, shape_bounds(spec)};
}

Estimate iou(const Solid& a, const Solid& b, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 1) fail(ErrorKind::DimensionMismatch, "iou needs samples");
  Aabb box = a.box;
  box.expand(b.box);
  Rng rng = derived_rng(seed, kVolumeStream, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> pts(n_samples);
  for (auto& p : pts) {
    const double x = u(rng), y = u(rng), z = u(rng);
    p = box.min + box.extent().cwiseProduct(Vec3(x, y, z));
  }
  std::vector<std::uint8_t> in_a(n_samples), in_b(n_samples);
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n_samples);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    in_a[i] = a.inside(pts[i]);
    in_b[i] = b.inside(pts[i]);
  }
  std::size_t both = 0, either = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    both += in_a[i] && in_b[i];
    either += in_a[i] || in_b[i];
  }
  Estimate e;
  e.samples = n_samples;
  if (either == 0) return e;
  // Within the union the intersection indicator is Bernoulli(IoU).
  e.value = static_cast<double>(both) / static_cast<double>(either);
  e.stderr_ = std::sqrt(e.value * (1.0 - e.value) / static_cast<double>(either));
  return e;
}

Estimate chamfer_l1(const TriangleMesh& a, const TriangleMesh& b, std::size_t n_samples, std::uint64_t seed) {
  const MeshQuery qa(a), qb(b);
  std::vector<double> dab, dba, unused;
  directional(a, qb, n_samples, seed, kSurfaceStreamA, dab, unused);
  directional(b, qa, n_samples, seed, kSurfaceStreamB, dba, unused);
  const auto m1 = mean_of(dab), m2 = mean_of(dba);
  return {m1.mean + m2.mean, std::sqrt(m1.var + m2.var), 2 * n_samples};
}

Estimate normal_consistency(const TriangleMesh& a, const TriangleMesh& b, std::size_t n_samples, std::uint64_t seed) {
  const MeshQuery qa(a), qb(b);
  std::vector<double> unused, nab, nba;
  directional(a, qb, n_samples, seed, kSurfaceStreamA, unused, nab);
  directional(b, qa, n_samples, seed, kSurfaceStreamB, unused, nba);
  const auto m1 = mean_of(nab), m2 = mean_of(nba);
  return {0.5 * (m1.mean + m2.mean), 0.5 * std::sqrt(m1.var + m2.var), 2 * n_samples};
}

MetricReport evaluate_mesh(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n_samples, std::uint64_t seed,
                           const Solid* gt_solid) {
  MetricReport r;
  r.seed = seed;
  const Solid p = Solid::of(pred);
  r.iou = iou(p, gt_solid ? *gt_solid : Solid::of(gt), n_samples, seed);
  const MeshQuery qp(pred), qg(gt);
  std::vector<double> d1, n1, d2, n2;
  directional(pred, qg, n_samples, seed, kSurfaceStreamA, d1, n1);
  directional(gt, qp, n_samples, seed, kSurfaceStreamB, d2, n2);
  const auto md1 = mean_of(d1), md2 = mean_of(d2), mn1 = mean_of(n1), mn2 = mean_of(n2);
  r.chamfer_l1 = {md1.mean + md2.mean, std::sqrt(md1.var + md2.var), 2 * n_samples};
  r.normal_consistency = {0.5 * (mn1.mean + mn2.mean), 0.5 * std::sqrt(mn1.var + mn2.var), 2 * n_samples};
  return r;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  MetricReport m;
  if (reports.empty()) return m;
  const double n = static_cast<double>(reports.size());
  const auto combine = [&](auto field) {
    Estimate e;
    double var = 0.0;
    for (const auto& r : reports) {
      const Estimate& x = r.*field;
      e.value += x.value / n;
      var += x.stderr_ * x.stderr_;
      e.samples += x.samples;
    }
    e.stderr_ = std::sqrt(var) / n;
    return e;
  };
  m.iou = combine(&MetricReport::iou);
  m.chamfer_l1 = combine(&MetricReport::chamfer_l1);
  m.normal_consistency = combine(&MetricReport::normal_consistency);
  m.seed = reports.front().seed;
  return m;
}

void to_json(nlohmann::json& j, const Estimate& e) {
  j = {{"value", e.value}, {"stderr", e.stderr_}, {"samples", e.samples}};
}

void to_json(nlohmann::json& j, const MetricReport& r) {
  j = {{"iou", r.iou}, {"chamfer_l1", r.chamfer_l1}, {"normal_consistency", r.normal_consistency}, {"seed", r.seed}};
}

}  // namespace occ
