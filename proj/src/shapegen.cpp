#include "occ/shapegen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "occ/errors.hpp"
#include "occ/marching_cubes.hpp"

namespace occ {

namespace {

Pose compose(const Pose& outer, const Pose& inner) {
  return {outer.rotation * inner.rotation, outer.rotation * inner.translation + outer.translation};
}

void flatten_into(const ShapeSpec& spec, const Pose& parent, std::vector<ShapeSpec>& out) {
  const Pose world = compose(parent, spec.pose);
  if (spec.kind == ShapeKind::Composite) {
    for (const auto& p : spec.parts) flatten_into(p, world, out);
    return;
  }
  ShapeSpec leaf = spec;
  leaf.pose = world;
  out.push_back(std::move(leaf));
}

double primitive_sdf(const ShapeSpec& s, const Vec3& world) {
  const Vec3 y = s.pose.to_local(world);
  switch (s.kind) {
    case ShapeKind::Sphere:
      return y.norm() - s.dims[0];
    case ShapeKind::Box: {
      const Vec3 half(0.5 * s.dims[0], 0.5 * s.dims[1], 0.5 * s.dims[2]);
      const Vec3 d = y.cwiseAbs() - half;
      return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
    }
    case ShapeKind::Torus: {
      const double ring = std::hypot(y.x(), y.y()) - s.dims[0];
      return std::hypot(ring, y.z()) - s.dims[1];
    }
    case ShapeKind::Cylinder: {
      const double dr = std::hypot(y.x(), y.y()) - s.dims[0];
      const double dz = std::abs(y.z()) - 0.5 * s.dims[1];
      return std::min(std::max(dr, dz), 0.0) + std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
    }
    case ShapeKind::Composite:
      break;
  }
  fail(ErrorKind::InvalidSpec, "composite passed where a primitive is required");
}

double primitive_area(const ShapeSpec& s) {
  switch (s.kind) {
    case ShapeKind::Sphere: return 4.0 * M_PI * s.dims[0] * s.dims[0];
    case ShapeKind::Box: return 2.0 * (s.dims[0] * s.dims[1] + s.dims[1] * s.dims[2] + s.dims[2] * s.dims[0]);
    case ShapeKind::Torus: return 4.0 * M_PI * M_PI * s.dims[0] * s.dims[1];
    case ShapeKind::Cylinder: return 2.0 * M_PI * s.dims[0] * (s.dims[1] + s.dims[0]);
    case ShapeKind::Composite: break;
  }
  fail(ErrorKind::InvalidSpec, "composite passed where a primitive is required");
}

// One area-uniform point on a primitive, returned in world space.
std::pair<Vec3, Vec3> sample_primitive(const ShapeSpec& s, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 p, n;
  switch (s.kind) {
    case ShapeKind::Sphere: {
      Vec3 d;
      do d = Vec3(gauss(rng), gauss(rng), gauss(rng));
      while (d.squaredNorm() < 1e-24);
      n = d.normalized();
      p = s.dims[0] * n;
      break;
    }
    case ShapeKind::Box: {
      const double a[3] = {s.dims[1] * s.dims[2], s.dims[2] * s.dims[0], s.dims[0] * s.dims[1]};
      const double pick = unit(rng) * (a[0] + a[1] + a[2]);
      const int axis = pick < a[0] ? 0 : (pick < a[0] + a[1] ? 1 : 2);
      const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
      for (int k = 0; k < 3; ++k) p[k] = (unit(rng) - 0.5) * s.dims[k];
      p[axis] = sign * 0.5 * s.dims[axis];
      n = Vec3::Zero();
      n[axis] = sign;
      break;
    }
    case ShapeKind::Torus: {
      const double major = s.dims[0], minor = s.dims[1];
      double u, v;
      do {
        u = 2.0 * M_PI * unit(rng);
        v = 2.0 * M_PI * unit(rng);
      } while (unit(rng) * (major + minor) > major + minor * std::cos(v));
      n = Vec3(std::cos(v) * std::cos(u), std::cos(v) * std::sin(u), std::sin(v));
      p = Vec3(major * std::cos(u), major * std::sin(u), 0.0) + minor * n;
      break;
    }
    case ShapeKind::Cylinder: {
      const double r = s.dims[0], h = s.dims[1];
      const double side = 2.0 * M_PI * r * h, cap = M_PI * r * r;
      const double pick = unit(rng) * (side + 2.0 * cap);
      const double theta = 2.0 * M_PI * unit(rng);
      if (pick < side) {
        n = Vec3(std::cos(theta), std::sin(theta), 0.0);
        p = r * n + Vec3(0.0, 0.0, (unit(rng) - 0.5) * h);
      } else {
        const double sign = pick < side + cap ? -1.0 : 1.0;
        const double rad = r * std::sqrt(unit(rng));
        p = Vec3(rad * std::cos(theta), rad * std::sin(theta), sign * 0.5 * h);
        n = Vec3(0.0, 0.0, sign);
      }
      break;
    }
    case ShapeKind::Composite:
      fail(ErrorKind::InvalidSpec, "composite passed where a primitive is required");
  }
  return {s.pose.to_world(p), s.pose.rotation * n};
}

TriangleMesh icosphere(double radius, int level) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : m.vertices) v.normalize();
  m.triangles = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const int id = static_cast<int>(m.vertices.size());
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Triangle> next;
    next.reserve(m.triangles.size() * 4);
    for (const auto& f : m.triangles) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.triangles = std::move(next);
  }
  for (auto& v : m.vertices) v *= radius;
  return m;
}

TriangleMesh box_mesh(const Vec3& size) {
  TriangleMesh m;
  for (int k = 0; k < 8; ++k)
    m.vertices.emplace_back((k & 1 ? 0.5 : -0.5) * size.x(), (k & 2 ? 0.5 : -0.5) * size.y(), (k & 4 ? 0.5 : -0.5) * size.z());
  m.triangles = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                 {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

// Quad grid wrapped in u (and optionally v); grid(i, j) -> vertex index.
void add_quads(TriangleMesh& m, int nu, int nv, bool wrap_v, auto&& grid) {
  const int jmax = wrap_v ? nv : nv - 1;
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < jmax; ++j) {
      const int a = grid(i, j), b = grid((i + 1) % nu, j), c = grid((i + 1) % nu, (j + 1) % nv), d = grid(i, (j + 1) % nv);
      m.triangles.push_back({a, b, c});
      m.triangles.push_back({a, c, d});
    }
  }
}

TriangleMesh torus_mesh(double major, double minor, int nu, int nv) {
  TriangleMesh m;
  for (int i = 0; i < nu; ++i) {
    const double u = 2.0 * M_PI * i / nu;
    for (int j = 0; j < nv; ++j) {
      const double v = 2.0 * M_PI * j / nv;
      const double ring = major + minor * std::cos(v);
      m.vertices.emplace_back(ring * std::cos(u), ring * std::sin(u), minor * std::sin(v));
    }
  }
  add_quads(m, nu, nv, true, [nv](int i, int j) { return i * nv + j; });
  return m;
}

TriangleMesh cylinder_mesh(double radius, double height, int n) {
  TriangleMesh m;
  for (int z = 0; z < 2; ++z)
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * M_PI * i / n;
      m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), (z - 0.5) * height);
    }
  const int bottom = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0.0, 0.0, -0.5 * height);
  const int top = bottom + 1;
  m.vertices.emplace_back(0.0, 0.0, 0.5 * height);
  add_quads(m, n, 2, false, [n](int i, int j) { return j * n + i; });
  for (int i = 0; i < n; ++i) {
    m.triangles.push_back({bottom, (i + 1) % n, i});
    m.triangles.push_back({top, n + i, n + (i + 1) % n});
  }
  return m;
}

void orient_outward(TriangleMesh& m) {
  if (signed_volume(m) < 0.0)
    for (auto& t : m.triangles) std::swap(t[1], t[2]);
}

nlohmann::json pose_json(const Pose& p) {
  nlohmann::json rot = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(p.rotation(r, c));
  return {{"rotation", rot}, {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

Pose pose_from_json(const nlohmann::json& j) {
  Pose p;
  if (j.contains("rotation")) {
    const auto& rot = j.at("rotation");
    if (rot.size() != 9) fail(ErrorKind::InvalidSpec, "pose rotation needs 9 entries");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = rot.at(3 * r + c).get<double>();
  }
  if (j.contains("translation")) {
    const auto& t = j.at("translation");
    if (t.size() != 3) fail(ErrorKind::InvalidSpec, "pose translation needs 3 entries");
    p.translation = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
  }
  return p;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace

const char* to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Box: return "box";
    case ShapeKind::Torus: return "torus";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Composite: return "composite";
  }
  return "?";
}

ShapeKind shape_kind_from_string(const std::string& name) {
  for (auto k : {ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Torus, ShapeKind::Cylinder, ShapeKind::Composite})
    if (name == to_string(k)) return k;
  fail(ErrorKind::InvalidSpec, "unknown shape kind '" + name + "'");
}

ShapeSpec ShapeSpec::sphere(double radius, const Pose& pose) { return {ShapeKind::Sphere, {radius}, pose, {}}; }
ShapeSpec ShapeSpec::box(double sx, double sy, double sz, const Pose& pose) { return {ShapeKind::Box, {sx, sy, sz}, pose, {}}; }
ShapeSpec ShapeSpec::torus(double major, double minor, const Pose& pose) { return {ShapeKind::Torus, {major, minor}, pose, {}}; }
ShapeSpec ShapeSpec::cylinder(double radius, double height, const Pose& pose) {
  return {ShapeKind::Cylinder, {radius, height}, pose, {}};
}
ShapeSpec ShapeSpec::composite(std::vector<ShapeSpec> parts, const Pose& pose) {
  return {ShapeKind::Composite, {}, pose, std::move(parts)};
}

void validate(const ShapeSpec& spec) {
  std::size_t expected = 0;
  switch (spec.kind) {
    case ShapeKind::Sphere: expected = 1; break;
    case ShapeKind::Box: expected = 3; break;
    case ShapeKind::Torus: expected = 2; break;
    case ShapeKind::Cylinder: expected = 2; break;
    case ShapeKind::Composite:
      if (spec.parts.size() < 2) fail(ErrorKind::InvalidSpec, "composite needs at least 2 parts");
      for (const auto& p : spec.parts) validate(p);
      return;
  }
  if (spec.dims.size() != expected)
    fail(ErrorKind::InvalidSpec, std::string(to_string(spec.kind)) + " expects " + std::to_string(expected) + " dimensions");
  for (double d : spec.dims)
    if (!(d > 0.0) || !std::isfinite(d)) fail(ErrorKind::InvalidSpec, "dimensions must be positive");
  if (spec.kind == ShapeKind::Torus && spec.dims[1] >= spec.dims[0])
    fail(ErrorKind::InvalidSpec, "torus minor radius must be below the major radius");
}

std::vector<ShapeSpec> flatten_parts(const ShapeSpec& spec) {
  std::vector<ShapeSpec> out;
  flatten_into(spec, Pose{}, out);
  return out;
}

TriangleMesh make_primitive(const ShapeSpec& spec, int resolution) {
  validate(spec);
  if (spec.kind == ShapeKind::Composite) fail(ErrorKind::InvalidSpec, "make_primitive called on a composite");
  if (resolution < 0 || resolution > 8) fail(ErrorKind::InvalidSpec, "tessellation level must be in [0, 8]");
  const int segments = 8 << resolution;
  TriangleMesh m;
  switch (spec.kind) {
    case ShapeKind::Sphere: m = icosphere(spec.dims[0], resolution); break;
    case ShapeKind::Box: m = box_mesh({spec.dims[0], spec.dims[1], spec.dims[2]}); break;
    case ShapeKind::Torus: m = torus_mesh(spec.dims[0], spec.dims[1], segments, std::max(4, segments / 2)); break;
    case ShapeKind::Cylinder: m = cylinder_mesh(spec.dims[0], spec.dims[1], segments); break;
    case ShapeKind::Composite: break;
  }
  for (auto& v : m.vertices) v = spec.pose.to_world(v);
  orient_outward(m);
  finalize_mesh(m);
  return m;
}

double signed_distance(const ShapeSpec& spec, const Vec3& q) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& part : flatten_parts(spec)) d = std::min(d, primitive_sdf(part, q));
  return d;
}

bool occupancy_oracle(const ShapeSpec& spec, const Vec3& q) {
  if (spec.kind != ShapeKind::Composite) return primitive_sdf(spec, q) <= 0.0;
  for (const auto& part : spec.parts) {
    ShapeSpec p = part;
    p.pose = compose(spec.pose, part.pose);
    if (occupancy_oracle(p, q)) return true;
  }
  return false;
}

Aabb shape_bounds(const ShapeSpec& spec) {
  Aabb box;
  for (const auto& s : flatten_parts(spec)) {
    const Eigen::Matrix3d& rot = s.pose.rotation;
    Vec3 half;
    switch (s.kind) {
      case ShapeKind::Sphere:
        half = Vec3::Constant(s.dims[0]);
        break;
      case ShapeKind::Box:
        half = 0.5 * rot.cwiseAbs() * Vec3(s.dims[0], s.dims[1], s.dims[2]);
        break;
      case ShapeKind::Torus:
        for (int k = 0; k < 3; ++k) {
          const double a = rot(k, 2);
          half[k] = s.dims[0] * std::sqrt(std::max(0.0, 1.0 - a * a)) + s.dims[1];
        }
        break;
      case ShapeKind::Cylinder:
        for (int k = 0; k < 3; ++k) {
          const double a = rot(k, 2);
          half[k] = 0.5 * s.dims[1] * std::abs(a) + s.dims[0] * std::sqrt(std::max(0.0, 1.0 - a * a));
        }
        break;
      case ShapeKind::Composite:
        break;
    }
    box.expand(Aabb{s.pose.translation - half, s.pose.translation + half});
  }
  return box;
}

double surface_area(const ShapeSpec& spec) {
  double total = 0.0;
  for (const auto& s : flatten_parts(spec)) total += primitive_area(s);
  return total;
}

ShapeSpec transformed(const ShapeSpec& spec, const Similarity& t) {
  ShapeSpec out = spec;
  auto scale_all = [&](auto&& self, ShapeSpec& s) -> void {
    for (double& d : s.dims) d *= t.scale;
    s.pose.translation *= t.scale;
    for (auto& p : s.parts) self(self, p);
  };
  scale_all(scale_all, out);
  out.pose.translation += t.translation;
  return out;
}

ShapeSpec rotated(const ShapeSpec& spec, const Eigen::Matrix3d& rotation) {
  ShapeSpec out = spec;
  out.pose = compose(Pose{rotation, Vec3::Zero()}, spec.pose);
  return out;
}

std::pair<ShapeSpec, Similarity> normalize_to_unit_cube(const ShapeSpec& spec) {
  validate(spec);
  const Aabb box = shape_bounds(spec);
  const double longest = box.extent().maxCoeff();
  if (!(longest > 0.0)) fail(ErrorKind::DegenerateGeometry, "shape has zero extent");
  Similarity t{1.0 / longest, -box.center() / longest};
  return {transformed(spec, t), t};
}

TriangleMesh composite_ground_truth_mesh(const ShapeSpec& spec, int grid_resolution) {
  validate(spec);
  if (grid_resolution < 32) fail(ErrorKind::InvalidSpec, "ground-truth grid resolution must be at least 32");
  const auto parts = flatten_parts(spec);
  const Aabb box = shape_bounds(spec);
  const double h = box.extent().maxCoeff() / grid_resolution;
  std::array<int, 3> dims;
  for (int a = 0; a < 3; ++a) dims[a] = static_cast<int>(std::ceil(box.extent()[a] / h)) + 5;
  const Vec3 lo = box.center() - 0.5 * h * Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1);
  const Vec3 hi = lo + h * Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1);
  ScalarGrid grid(Aabb{lo, hi}, dims);

  bool any_inside = false;
#pragma omp parallel for schedule(static) reduction(|| : any_inside)
  for (int k = 0; k < dims[2]; ++k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        const Vec3 q = grid.position(i, j, k);
        double d = std::numeric_limits<double>::infinity();
        for (const auto& p : parts) d = std::min(d, primitive_sdf(p, q));
        // Ramp of width one cell; thresholding at 0.5 reproduces the oracle.
        const double v = std::clamp(0.5 - d / h, 0.0, 1.0);
        grid.at(i, j, k) = v;
        any_inside = any_inside || d <= 0.0;
      }
    }
  }
  if (!any_inside) fail(ErrorKind::EmptyShape, "no grid vertex lies inside the shape");
  return marching_cubes(grid, 0.5);
}

PointCloud sample_shape_surface(const ShapeSpec& spec, std::size_t n, Rng& rng) {
  validate(spec);
  const auto parts = flatten_parts(spec);
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& p : parts) cumulative.push_back(total += primitive_area(p));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.normals.reserve(n);
  const std::size_t max_tries = 1000 * n + 1000;
  for (std::size_t tries = 0; cloud.size() < n; ++tries) {
    if (tries > max_tries) fail(ErrorKind::EmptyShape, "union boundary too small to sample");
    const double pick = unit(rng) * total;
    const std::size_t which =
        std::min<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin(), parts.size() - 1);
    auto [p, normal] = sample_primitive(parts[which], rng);
    bool covered = false;
    for (std::size_t o = 0; o < parts.size() && !covered; ++o)
      covered = o != which && primitive_sdf(parts[o], p) < 0.0;
    if (covered) continue;
    cloud.points.push_back(p);
    cloud.normals.push_back(normal);
  }
  return cloud;
}

void SamplingConfig::validate() const {
  if (pool_size < 1 || input_size < 1 || near_queries < 1 || far_queries < 1)
    fail(ErrorKind::Config, "sampling counts must be >= 1");
  if (input_size > pool_size) fail(ErrorKind::Config, "input_size cannot exceed pool_size");
  if (!(noise_sd >= 0.0) || !(near_sd > 0.0) || !(far_sd > 0.0))
    fail(ErrorKind::Config, "sampling standard deviations must be positive");
}

TrainingSample make_training_sample(const ShapeSpec& spec, const SamplingConfig& cfg, Rng& rng) {
  cfg.validate();
  TrainingSample sample;

  const PointCloud pool = sample_shape_surface(spec, cfg.pool_size, rng);
  // Partial Fisher-Yates: the first input_size slots are a uniform draw without replacement.
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < cfg.input_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  sample.cloud.points.reserve(cfg.input_size);
  for (std::size_t i = 0; i < cfg.input_size; ++i) {
    Vec3 p = pool.points[order[i]];
    if (cfg.noise_sd > 0.0) p += cfg.noise_sd * Vec3(noise(rng), noise(rng), noise(rng));
    sample.cloud.points.push_back(p);
  }

  auto add_queries = [&](std::size_t count, double sd) {
    const PointCloud base = sample_shape_surface(spec, count, rng);
    for (const auto& p : base.points) sample.queries.push_back(p + sd * Vec3(noise(rng), noise(rng), noise(rng)));
  };
  add_queries(cfg.near_queries, cfg.near_sd);
  add_queries(cfg.far_queries, cfg.far_sd);

  sample.labels.reserve(sample.queries.size());
  for (const auto& q : sample.queries) sample.labels.push_back(occupancy_oracle(spec, q) ? 1 : 0);
  return sample;
}

void CorpusSpec::validate() const {
  sampling.validate();
  if (train_count < 1) fail(ErrorKind::Config, "corpus needs at least one training shape");
  if (min_parts < 1 || max_parts < min_parts) fail(ErrorKind::Config, "invalid part-count range");
}

ShapeSpec random_shape(const CorpusSpec& corpus, Rng& rng) {
  std::uniform_int_distribution<int> part_count(corpus.min_parts, corpus.max_parts);
  std::uniform_int_distribution<int> kind_pick(0, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const int count = part_count(rng);
  std::vector<ShapeSpec> parts;
  for (int i = 0; i < count; ++i) {
    Pose pose;
    pose.rotation = random_rotation(rng);
    if (count > 1) pose.translation = Vec3(range(-0.25, 0.25), range(-0.25, 0.25), range(-0.25, 0.25));
    switch (kind_pick(rng)) {
      case 0: parts.push_back(ShapeSpec::sphere(range(0.15, 0.35), pose)); break;
      case 1: parts.push_back(ShapeSpec::box(range(0.15, 0.6), range(0.15, 0.6), range(0.15, 0.6), pose)); break;
      case 2: {
        const double major = range(0.15, 0.3);
        parts.push_back(ShapeSpec::torus(major, range(0.3, 0.5) * major, pose));
        break;
      }
      default: parts.push_back(ShapeSpec::cylinder(range(0.08, 0.25), range(0.2, 0.6), pose)); break;
    }
  }
  ShapeSpec shape = parts.size() == 1 ? parts.front() : ShapeSpec::composite(std::move(parts));
  return normalize_to_unit_cube(shape).first;
}

Rng derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

void to_json(nlohmann::json& j, const ShapeSpec& s) {
  j = {{"kind", to_string(s.kind)}, {"pose", pose_json(s.pose)}};
  if (s.kind == ShapeKind::Composite)
    j["parts"] = s.parts;
  else
    j["dims"] = s.dims;
}

void from_json(const nlohmann::json& j, ShapeSpec& s) {
  try {
    s.kind = shape_kind_from_string(j.at("kind").get<std::string>());
    s.pose = j.contains("pose") ? pose_from_json(j.at("pose")) : Pose{};
    s.dims = j.value("dims", std::vector<double>{});
    s.parts = j.value("parts", std::vector<ShapeSpec>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidSpec, std::string("malformed shape spec: ") + e.what());
  }
  validate(s);
}

void to_json(nlohmann::json& j, const SamplingConfig& c) {
  j = {{"pool_size", c.pool_size}, {"input_size", c.input_size}, {"noise_sd", c.noise_sd},
       {"near_queries", c.near_queries}, {"near_sd", c.near_sd}, {"far_queries", c.far_queries},
       {"far_sd", c.far_sd}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SamplingConfig& c) {
  SamplingConfig d;
  c.pool_size = j.value("pool_size", d.pool_size);
  c.input_size = j.value("input_size", d.input_size);
  c.noise_sd = j.value("noise_sd", d.noise_sd);
  c.near_queries = j.value("near_queries", d.near_queries);
  c.near_sd = j.value("near_sd", d.near_sd);
  c.far_queries = j.value("far_queries", d.far_queries);
  c.far_sd = j.value("far_sd", d.far_sd);
  c.seed = j.value("seed", d.seed);
}

void to_json(nlohmann::json& j, const CorpusSpec& c) {
  j = {{"train_count", c.train_count}, {"val_count", c.val_count}, {"test_count", c.test_count},
       {"min_parts", c.min_parts}, {"max_parts", c.max_parts}, {"seed", c.seed}, {"sampling", c.sampling}};
}

void from_json(const nlohmann::json& j, CorpusSpec& c) {
  CorpusSpec d;
  c.train_count = j.value("train_count", d.train_count);
  c.val_count = j.value("val_count", d.val_count);
  c.test_count = j.value("test_count", d.test_count);
  c.min_parts = j.value("min_parts", d.min_parts);
  c.max_parts = j.value("max_parts", d.max_parts);
  c.seed = j.value("seed", d.seed);
  c.sampling = j.value("sampling", d.sampling);
}

}  // namespace occ
