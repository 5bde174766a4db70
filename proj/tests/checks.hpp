#pragma once

// Randomized oracle comparisons shared by the unit tests (few trials) and the
// acceptance binary (full trial counts).

#include <algorithm>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "occ/occnet.hpp"
#include "occ/pcnn.hpp"
#include "occ/tape.hpp"
#include "occ/train.hpp"
#include "oracles.hpp"

namespace checks {

using namespace occ;

struct ConvTrial {
  pcnn::FeatureSet source;
  pcnn::LayerParams params;
  std::vector<Vec3> targets;
};

// I, L <= 5 and J, K <= 2 with points spread over a few kernel widths.
inline ConvTrial random_conv_trial(Rng& rng) {
  std::uniform_int_distribution<int> n5(1, 5), n2(1, 2);
  std::uniform_real_distribution<double> u(-1.0, 1.0), s2(0.002, 0.05);
  ConvTrial c;
  const int i = n5(rng), l = n5(rng), j = n2(rng), k = n2(rng);
  c.params = pcnn::LayerParams::zeros(j, k, s2(rng));
  const double s = std::sqrt(c.params.sigma2);
  const Vec3 centre(u(rng), u(rng), u(rng));
  for (int n = 0; n < i; ++n) c.source.points.push_back(centre + 2.0 * s * Vec3(u(rng), u(rng), u(rng)));
  for (int n = 0; n < l; ++n) c.targets.push_back(centre + 2.0 * s * Vec3(u(rng), u(rng), u(rng)));
  c.source.features = Matrix::NullaryExpr(i, j, [&] { return u(rng); });
  c.params.weights = Matrix::NullaryExpr(pcnn::kKernelSize * j, k, [&] { return u(rng); });
  c.params.bias = Matrix::NullaryExpr(1, k, [&] { return 0.1 * u(rng); });
  return c;
}

// Largest relative error of the closed form against quadrature over one trial.
inline double conv_quadrature_error(const ConvTrial& c, pcnn::ConvMode mode) {
  const auto out = pcnn::extend_conv_restrict(c.source, c.params, c.targets, mode);
  double worst = 0.0;
  for (std::size_t t = 0; t < c.targets.size(); ++t)
    for (int k = 0; k < c.params.out_channels; ++k) {
      const double q = oracle::extend_conv_restrict(c.source, c.params, c.targets[t], k);
      worst = std::max(worst, oracle::relative_error(out.features(static_cast<Eigen::Index>(t), k), q, 1e-12));
    }
  return worst;
}

struct NetworkTrial {
  NetworkConfig cfg;
  NetworkParams params;
  std::vector<Vec3> cloud;
  std::vector<Vec3> queries;
  std::vector<std::uint8_t> labels;
};

// A U-shaped stream over 6..12 points: one or two pooling steps mirrored by
// expansions, optionally with a same-size block at the bottleneck.
inline NetworkTrial random_network_trial(Rng& rng) {
  std::uniform_int_distribution<int> depth(1, 3), coin(0, 1);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  NetworkTrial t;
  const std::size_t n0 = std::uniform_int_distribution<std::size_t>(6, 12)(rng);
  const std::size_t n1 = std::uniform_int_distribution<std::size_t>(3, n0 - 1)(rng);
  t.cfg.input_size = n0;
  t.cfg.blocks.push_back({n1, depth(rng)});
  if (coin(rng)) {
    const std::size_t n2 = std::uniform_int_distribution<std::size_t>(2, n1 - 1)(rng);
    t.cfg.blocks.push_back({n2, depth(rng)});
    if (coin(rng)) t.cfg.blocks.push_back({n2, depth(rng)});
    t.cfg.blocks.push_back({n1, depth(rng)});
  } else if (coin(rng)) {
    t.cfg.blocks.push_back({n1, depth(rng)});
  }
  t.cfg.blocks.push_back({n0, depth(rng)});
  if (coin(rng)) t.cfg.classifier_hidden = {depth(rng) + 1};
  t.params = init_params(t.cfg, rng());
  // Non-zero biases so no path starts exactly at a ReLU kink.
  for (auto* m : t.params.tensors())
    if (m->rows() == 1) *m = Matrix::NullaryExpr(1, m->cols(), [&] { return 0.1 * u(rng); });
  for (std::size_t i = 0; i < n0; ++i) t.cloud.emplace_back(u(rng), u(rng), u(rng));
  const int nq = std::uniform_int_distribution<int>(3, 6)(rng);
  for (int i = 0; i < nq; ++i) {
    t.queries.emplace_back(u(rng), u(rng), u(rng));
    t.labels.push_back(static_cast<std::uint8_t>(coin(rng)));
  }
  return t;
}

// Relative errors are taken against max(|analytic|, |numeric|, floor).
// Central differences on an O(1) loss carry about 1e-11 of rounding noise at
// h = 1e-5, so entries near 1e-7 cannot be resolved to 1e-4 relative; the
// floor keeps the comparison above that noise.
inline constexpr double kGradientFloor = 1e-6;

struct GradientReport {
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
};

// Tape gradients of the mean cross-entropy against central differences
// (h = 1e-5) for every learnable parameter.
inline GradientReport network_gradient_check(NetworkTrial& t) {
  const auto plan = plan_network(t.cfg);
  const auto structure = build_structure(plan, t.cloud);
  const auto loss_of = [&] {
    ad::Tape tape(false);
    const auto fwd = forward(tape, plan, t.params, structure, t.queries);
    return tape.value(ad::softmax_cross_entropy(tape, fwd.logits, t.labels))(0, 0);
  };
  ad::Tape tape;
  const auto fwd = forward(tape, plan, t.params, structure, t.queries);
  tape.backward(ad::softmax_cross_entropy(tape, fwd.logits, t.labels));
  GradientReport r;
  const auto tensors = t.params.tensors();
  for (std::size_t p = 0; p < tensors.size(); ++p) {
    const Matrix analytic = tape.grad(fwd.parameters[p]);
    for (Eigen::Index i = 0; i < tensors[p]->size(); ++i) {
      const double numeric = oracle::central_difference(loss_of, tensors[p]->data() + i, 1e-5);
      r.max_relative_error =
          std::max(r.max_relative_error, oracle::relative_error(analytic.data()[i], numeric, kGradientFloor));
      ++r.parameters;
    }
  }
  return r;
}

}  // namespace checks
