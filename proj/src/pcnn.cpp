#include "occ/pcnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "occ/errors.hpp"

namespace occ::pcnn {

namespace {

struct PairKernel {
  double inv_two_sigma2;
  double spacing;
  double cutoff2;
  ConvMode mode;
  std::array<double, kKernelSize> lattice;  // exp(-|t_m|^2 / (2 sigma2))

  PairKernel(double sigma2, double d, ConvMode m)
      : inv_two_sigma2(0.5 / sigma2), spacing(d), cutoff2(kCutoffSigmas * kCutoffSigmas * sigma2), mode(m) {
    for (int k = 0; k < kKernelSize; ++k) {
      const auto s = kernel_offset(k);
      lattice[k] = std::exp(-(s[0] * s[0] + s[1] * s[1] + s[2] * s[2]) * d * d * inv_two_sigma2);
    }
  }

  // g[m] = exp(-|delta - t_m|^2 / (2 sigma2)) for delta = x - p.
  void operator()(const Vec3& delta, double* g) const {
    if (mode == ConvMode::Exact) {
      for (int k = 0; k < kKernelSize; ++k) {
        const auto s = kernel_offset(k);
        const Vec3 r = delta - spacing * Vec3(s[0], s[1], s[2]);
        g[k] = std::exp(-r.squaredNorm() * inv_two_sigma2);
      }
      return;
    }
    // exp(-|delta - d s|^2 / 2s2) = exp(-|delta|^2 / 2s2) * prod_a exp(d s_a delta_a / s2) * lattice
    const double r2 = delta.squaredNorm();
    const double base = std::exp(-r2 * inv_two_sigma2);
    double axis[3][3];
    for (int a = 0; a < 3; ++a) {
      const double e = std::exp(2.0 * spacing * delta[a] * inv_two_sigma2);
      axis[a][0] = 1.0 / e;
      axis[a][1] = 1.0;
      axis[a][2] = e;
    }
    int k = 0;
    for (int sx = -1; sx <= 1; ++sx)
      for (int sy = -1; sy <= 1; ++sy)
        for (int sz = -1; sz <= 1; ++sz, ++k) {
          const double dist2 = r2 - 2.0 * spacing * (sx * delta.x() + sy * delta.y() + sz * delta.z()) +
                               spacing * spacing * (sx * sx + sy * sy + sz * sz);
          g[k] = dist2 > cutoff2 ? 0.0 : base * axis[0][sx + 1] * axis[1][sy + 1] * axis[2][sz + 1] * lattice[k];
        }
  }
};

class SpatialHash {
 public:
  SpatialHash(std::span<const Vec3> points, double cell) : inv_cell_(1.0 / cell) {
    for (std::size_t i = 0; i < points.size(); ++i) cells_[key(cell_of(points[i]))].push_back(static_cast<int>(i));
  }

  template <class Fn>
  void for_each_near(const Vec3& x, Fn&& fn) const {
    const auto c = cell_of(x);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells_.end()) continue;
          for (int i : it->second) fn(i);
        }
  }

 private:
  std::array<std::int64_t, 3> cell_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() * inv_cell_)), static_cast<std::int64_t>(std::floor(p.y() * inv_cell_)),
            static_cast<std::int64_t>(std::floor(p.z() * inv_cell_))};
  }
  static std::uint64_t key(const std::array<std::int64_t, 3>& c) {
    const auto u = [](std::int64_t v) { return static_cast<std::uint64_t>(v + (1 << 20)) & 0x1fffffULL; };
    return u(c[0]) | (u(c[1]) << 21) | (u(c[2]) << 42);
  }

  double inv_cell_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

// y += a * x over n contiguous values.
inline void axpy(double a, const double* __restrict x, double* __restrict y, int n) {
#pragma omp simd
  for (int j = 0; j < n; ++j) y[j] += a * x[j];
}

void check_features(const FeatureSet& source, int channels) {
  if (static_cast<std::size_t>(source.features.rows()) != source.points.size())
    fail(ErrorKind::DimensionMismatch, "feature rows do not match point count");
  if (source.features.cols() != channels)
    fail(ErrorKind::DimensionMismatch, "feature channels " + std::to_string(source.features.cols()) +
                                           " do not match layer input " + std::to_string(channels));
}

}  // namespace

std::array<int, 3> kernel_offset(int m) { return {m / 9 - 1, (m / 3) % 3 - 1, m % 3 - 1}; }

double gaussian_conv_constant(double sigma2) { return std::pow(M_PI * sigma2 / 2.0, 1.5); }

LayerParams LayerParams::zeros(int in_channels, int out_channels, double sigma2) {
  LayerParams p;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.sigma2 = sigma2;
  p.spacing = std::sqrt(sigma2);
  p.weights = Matrix::Zero(kKernelSize * in_channels, out_channels);
  p.bias = Matrix::Zero(1, out_channels);
  return p;
}

Vec3 LayerParams::translation(int m) const {
  const auto s = kernel_offset(m);
  return spacing * Vec3(s[0], s[1], s[2]);
}

void LayerParams::validate() const {
  if (!(sigma2 > 0.0)) fail(ErrorKind::DimensionMismatch, "kernel width sigma^2 must be positive");
  if (in_channels < 1 || out_channels < 1) fail(ErrorKind::DimensionMismatch, "channel counts must be positive");
  if (weights.rows() != kKernelSize * in_channels || weights.cols() != out_channels)
    fail(ErrorKind::DimensionMismatch, "weight array does not match channel counts");
  if (bias.rows() != 1 || bias.cols() != out_channels) fail(ErrorKind::DimensionMismatch, "bias does not match output channels");
}

NeighborLists find_neighbors(std::span<const Vec3> sources, std::span<const Vec3> targets, double sigma2,
                             double spacing, ConvMode mode) {
  NeighborLists out;
  out.offsets.reserve(targets.size() + 1);
  out.offsets.push_back(0);
  if (mode == ConvMode::Exact) {
    out.sources.reserve(sources.size() * targets.size());
    for (std::size_t t = 0; t < targets.size(); ++t) {
      for (std::size_t i = 0; i < sources.size(); ++i) out.sources.push_back(static_cast<int>(i));
      out.offsets.push_back(out.sources.size());
    }
    return out;
  }
  // A source can reach a kernel centre within the cutoff only if it lies
  // within cutoff + |t_m|max of the target.
  const double radius = kCutoffSigmas * std::sqrt(sigma2) + std::sqrt(3.0) * spacing;
  const double radius2 = radius * radius;
  const SpatialHash hash(sources, radius);
  std::vector<std::vector<int>> lists(targets.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto& list = lists[t];
    hash.for_each_near(targets[t], [&](int i) {
      if ((targets[t] - sources[i]).squaredNorm() <= radius2) list.push_back(i);
    });
  }
  std::size_t total = 0;
  for (const auto& l : lists) out.offsets.push_back(total += l.size());
  out.sources.reserve(total);
  for (const auto& l : lists) out.sources.insert(out.sources.end(), l.begin(), l.end());
  return out;
}

Matrix lattice_moments(std::span<const Vec3> sources, const Matrix& features, std::span<const Vec3> targets,
                       const NeighborLists& nbrs, double sigma2, double spacing, ConvMode mode) {
  const int channels = static_cast<int>(features.cols());
  Matrix moments = Matrix::Zero(static_cast<Eigen::Index>(targets.size()), kKernelSize * channels);
  const PairKernel kernel(sigma2, spacing, mode);
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(targets.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t t = 0; t < count; ++t) {
    double g[kKernelSize];
    double* row = moments.data() + t * moments.cols();
    for (int i : nbrs.of(static_cast<std::size_t>(t))) {
      kernel(targets[t] - sources[i], g);
      const double* f = features.data() + static_cast<std::ptrdiff_t>(i) * channels;
      for (int m = 0; m < kKernelSize; ++m)
        if (g[m] != 0.0) axpy(g[m], f, row + m * channels, channels);
    }
  }
  return moments;
}

Matrix lattice_moments_adjoint(std::span<const Vec3> sources, int channels, std::span<const Vec3> targets,
                               const NeighborLists& nbrs, const Matrix& moment_grad, double sigma2, double spacing,
                               ConvMode mode) {
  // Transpose the target -> source lists; each per-source list stays sorted by
  // target so the accumulation order is fixed.
  std::vector<std::size_t> offsets(sources.size() + 1, 0);
  for (int i : nbrs.sources) ++offsets[i + 1];
  for (std::size_t i = 0; i < sources.size(); ++i) offsets[i + 1] += offsets[i];
  std::vector<int> by_source(nbrs.sources.size());
  {
    std::vector<std::size_t> fill(offsets.begin(), offsets.end() - 1);
    for (std::size_t t = 0; t < nbrs.targets(); ++t)
      for (int i : nbrs.of(t)) by_source[fill[i]++] = static_cast<int>(t);
  }

  Matrix grad = Matrix::Zero(static_cast<Eigen::Index>(sources.size()), channels);
  const PairKernel kernel(sigma2, spacing, mode);
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(sources.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    double g[kKernelSize];
    double* row = grad.data() + i * channels;
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
      const int t = by_source[k];
      kernel(targets[t] - sources[i], g);
      const double* dm = moment_grad.data() + static_cast<std::ptrdiff_t>(t) * moment_grad.cols();
      for (int m = 0; m < kKernelSize; ++m)
        if (g[m] != 0.0) axpy(g[m], dm + m * channels, row, channels);
    }
  }
  return grad;
}

FeatureSet extend_conv_restrict(const FeatureSet& source, const LayerParams& params, std::span<const Vec3> targets,
                                ConvMode mode) {
  params.validate();
  check_features(source, params.in_channels);
  const auto nbrs = find_neighbors(source.points, targets, params.sigma2, params.spacing, mode);
  const Matrix moments = lattice_moments(source.points, source.features, targets, nbrs, params.sigma2, params.spacing, mode);
  FeatureSet out;
  out.points.assign(targets.begin(), targets.end());
  out.features = gaussian_conv_constant(params.sigma2) * (moments * params.weights);
  out.features.rowwise() += params.bias.row(0);
  return out;
}

FeatureSet point_upsample(const FeatureSet& coarse, const LayerParams& params, std::span<const Vec3> fine_points,
                          ConvMode mode) {
  return extend_conv_restrict(coarse, params, fine_points, mode);
}

std::vector<std::size_t> fps_from(std::span<const Vec3> points, std::size_t n, std::size_t start) {
  if (n < 1 || n > points.size()) fail(ErrorKind::DimensionMismatch, "fps needs 1 <= n <= |points|");
  if (start >= points.size()) fail(ErrorKind::DimensionMismatch, "fps start index out of range");
  std::vector<double> dist(points.size(), std::numeric_limits<double>::infinity());
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  std::size_t next = start;
  for (std::size_t c = 0; c < n; ++c) {
    chosen.push_back(next);
    const Vec3 p = points[next];
    double best = -1.0;
    std::size_t best_idx = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      dist[i] = std::min(dist[i], (points[i] - p).squaredNorm());
      if (dist[i] > best) {
        best = dist[i];
        best_idx = i;
      }
    }
    next = best_idx;
  }
  return chosen;
}

std::vector<std::size_t> fps(std::span<const Vec3> points, std::size_t n, std::uint64_t seed) {
  if (points.empty()) fail(ErrorKind::DimensionMismatch, "fps on an empty point set");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  return fps_from(points, n, pick(rng));
}

std::size_t canonical_start(std::span<const Vec3> points) {
  if (points.empty()) fail(ErrorKind::DimensionMismatch, "canonical start of an empty point set");
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  std::size_t best = 0;
  double best_d = -1.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = (points[i] - centroid).squaredNorm();
    const auto& a = points[i];
    const auto& b = points[best];
    const bool lex_less = std::tie(a.x(), a.y(), a.z()) < std::tie(b.x(), b.y(), b.z());
    if (d > best_d || (d == best_d && lex_less)) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<std::size_t> nearest_owner(std::span<const Vec3> points, std::span<const std::size_t> retained) {
  std::vector<std::size_t> owner(points.size(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < retained.size(); ++s) {
      const double d = (points[i] - points[retained[s]]).squaredNorm();
      if (d < best) {
        best = d;
        owner[i] = s;
      }
    }
  }
  return owner;
}

PoolResult max_pool(const FeatureSet& source, std::span<const std::size_t> retained) {
  if (static_cast<std::size_t>(source.features.rows()) != source.points.size())
    fail(ErrorKind::DimensionMismatch, "feature rows do not match point count");
  PoolResult r;
  r.retained.assign(retained.begin(), retained.end());
  r.owner = nearest_owner(source.points, retained);
  const int channels = source.channels();
  r.pooled.features = Matrix::Constant(static_cast<Eigen::Index>(retained.size()), channels,
                                       -std::numeric_limits<double>::infinity());
  r.argmax.assign(retained.size() * channels, -1);
  for (std::size_t s = 0; s < retained.size(); ++s) r.pooled.points.push_back(source.points[retained[s]]);
  for (std::size_t i = 0; i < source.size(); ++i) {
    const std::size_t s = r.owner[i];
    for (int c = 0; c < channels; ++c) {
      if (source.features(i, c) > r.pooled.features(s, c)) {
        r.pooled.features(s, c) = source.features(i, c);
        r.argmax[s * channels + c] = static_cast<int>(i);
      }
    }
  }
  return r;
}

FeatureSet point_pool(const FeatureSet& source, std::size_t n_out, std::uint64_t seed) {
  const auto retained = fps(source.points, n_out, seed);
  return max_pool(source, retained).pooled;
}

}  // namespace occ::pcnn
