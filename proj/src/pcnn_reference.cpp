#include <cmath>

#include "occ/errors.hpp"
#include "occ/pcnn.hpp"

namespace occ::pcnn {

namespace reference {

FeatureSet extend_conv_restrict(const FeatureSet& source, const LayerParams& params, std::span<const Vec3> targets) {
  params.validate();
  if (static_cast<std::size_t>(source.features.rows()) != source.points.size() ||
      source.features.cols() != params.in_channels)
    fail(ErrorKind::DimensionMismatch, "features do not match points or layer input");
  const double c = gaussian_conv_constant(params.sigma2);
  FeatureSet out;
  out.points.assign(targets.begin(), targets.end());
  out.features = Matrix::Zero(static_cast<Eigen::Index>(targets.size()), params.out_channels);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    for (int k = 0; k < params.out_channels; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < source.size(); ++i) {
        for (int j = 0; j < params.in_channels; ++j) {
          for (int m = 0; m < kKernelSize; ++m) {
            const Vec3 r = targets[t] - source.points[i] - params.translation(m);
            acc += source.features(i, j) * params.weight(j, k, m) * std::exp(-r.squaredNorm() / (2.0 * params.sigma2));
          }
        }
      }
      out.features(t, k) = params.bias(0, k) + c * acc;
    }
  }
  return out;
}

}  // namespace reference

}  // namespace occ::pcnn
