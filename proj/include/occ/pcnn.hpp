#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "occ/geometry.hpp"

namespace occ {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace pcnn {

/// Gaussians per kernel, centred on a {-d, 0, d}^3 lattice.
inline constexpr int kKernelSize = 27;

/// Contributions farther than this many widths from a kernel centre are
/// dropped in truncated mode (relative weight exp(-8) < 3.4e-4).
inline constexpr double kCutoffSigmas = 4.0;

enum class ConvMode {
  Truncated,  // spatial hash + cutoff, OpenMP over targets
  Exact,      // every source pair, no cutoff
};

/// Lattice offset of kernel element m, in units of the spacing d.
std::array<int, 3> kernel_offset(int m);

/// Integral of exp(-|y|^2/s2) * exp(-|x-y|^2/s2) dy over R^3 at x = 0,
/// i.e. (pi * s2 / 2)^{3/2}.
double gaussian_conv_constant(double sigma2);

/// One convolution layer. Weight row m * in_channels + j, column k, holds the
/// magnitude of Gaussian m in the kernel mapping input channel j to output k.
struct LayerParams {
  int in_channels = 0;
  int out_channels = 0;
  double sigma2 = 0.0;   // shared width of extension basis and kernel Gaussians
  double spacing = 0.0;  // lattice step d of the kernel centres
  Matrix weights;        // (27 * in_channels) x out_channels
  Matrix bias;           // 1 x out_channels

  static LayerParams zeros(int in_channels, int out_channels, double sigma2);

  double& weight(int j, int k, int m) { return weights(m * in_channels + j, k); }
  double weight(int j, int k, int m) const { return weights(m * in_channels + j, k); }
  Vec3 translation(int m) const;
  void validate() const;
};

struct FeatureSet {
  std::vector<Vec3> points;
  Matrix features;  // points.size() x channels

  std::size_t size() const { return points.size(); }
  int channels() const { return static_cast<int>(features.cols()); }
};

/// For every target, the lists of sources it interacts with (CSR layout).
struct NeighborLists {
  std::vector<std::size_t> offsets;  // targets + 1
  std::vector<int> sources;

  std::size_t targets() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::span<const int> of(std::size_t t) const { return {sources.data() + offsets[t], offsets[t + 1] - offsets[t]}; }
};

NeighborLists find_neighbors(std::span<const Vec3> sources, std::span<const Vec3> targets, double sigma2,
                             double spacing, ConvMode mode);

/// Kernel-lattice moments of the extended field:
///   M[t, m*J + j] = sum_i F[i, j] * exp(-|x_t - p_i - t_m|^2 / (2 sigma2)).
Matrix lattice_moments(std::span<const Vec3> sources, const Matrix& features, std::span<const Vec3> targets,
                       const NeighborLists& nbrs, double sigma2, double spacing, ConvMode mode);

/// Adjoint of lattice_moments with respect to the source features.
Matrix lattice_moments_adjoint(std::span<const Vec3> sources, int channels, std::span<const Vec3> targets,
                               const NeighborLists& nbrs, const Matrix& moment_grad, double sigma2, double spacing,
                               ConvMode mode);

/// Restriction of (kernel convolution of the extended field) to `targets`:
///   out[t, k] = b_k + C(sigma2) * sum_{i,j,m} F[i,j] w[j,k,m] exp(-|x_t - p_i - t_m|^2 / (2 sigma2)).
FeatureSet extend_conv_restrict(const FeatureSet& source, const LayerParams& params, std::span<const Vec3> targets,
                                ConvMode mode = ConvMode::Truncated);

/// Expansion onto a superset of the source points; same operator as above.
FeatureSet point_upsample(const FeatureSet& coarse, const LayerParams& params, std::span<const Vec3> fine_points,
                          ConvMode mode = ConvMode::Truncated);

/// Farthest-point sampling from a given first index. Ties go to the lowest index.
std::vector<std::size_t> fps_from(std::span<const Vec3> points, std::size_t n, std::size_t start);

/// Farthest-point sampling whose first index is drawn from `seed`.
std::vector<std::size_t> fps(std::span<const Vec3> points, std::size_t n, std::uint64_t seed);

/// Start index that depends only on the point set, not on its order: the
/// point farthest from the centroid (lexicographic tie-break).
std::size_t canonical_start(std::span<const Vec3> points);

/// owner[i] = position in `retained` of the retained point nearest to point i.
std::vector<std::size_t> nearest_owner(std::span<const Vec3> points, std::span<const std::size_t> retained);

struct PoolResult {
  FeatureSet pooled;
  std::vector<std::size_t> retained;  // source indices, FPS order
  std::vector<std::size_t> owner;     // per source point
  std::vector<int> argmax;            // pooled.size() x channels, source index of each max
};

/// Channel-wise max over each retained point's nearest-neighbour cell.
PoolResult max_pool(const FeatureSet& source, std::span<const std::size_t> retained);

FeatureSet point_pool(const FeatureSet& source, std::size_t n_out, std::uint64_t seed);

namespace reference {

/// Serial, term-by-term evaluation of extend_conv_restrict without cutoff.
/// Kept as the independent baseline for tests and benchmarks.
FeatureSet extend_conv_restrict(const FeatureSet& source, const LayerParams& params, std::span<const Vec3> targets);

}  // namespace reference

}  // namespace pcnn
}  // namespace occ
