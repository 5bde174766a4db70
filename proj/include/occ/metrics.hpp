#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "occ/geometry.hpp"
#include "occ/shapegen.hpp"

namespace occ {

/// Monte-Carlo estimate with its standard error.
struct Estimate {
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
};

/// Anything that answers inside/outside over a known bounding box.
struct Solid {
  std::function<bool(const Vec3&)> inside;
  Aabb box;

  /// Ray-parity queries against a watertight mesh (NotWatertight otherwise).
  static Solid of(const TriangleMesh& mesh);
  /// Analytic indicator of a procedural shape.
  static Solid of(const ShapeSpec& spec);
};

/// vol(A and B) / vol(A or B) from uniform samples in the joint bounding box.
Estimate iou(const Solid& a, const Solid& b, std::size_t n_samples, std::uint64_t seed);

/// Mean nearest-surface distance from samples on a to b plus the reverse mean.
Estimate chamfer_l1(const TriangleMesh& a, const TriangleMesh& b, std::size_t n_samples, std::uint64_t seed);

/// Average of the two directional means of |n_a . n_b| at nearest points.
Estimate normal_consistency(const TriangleMesh& a, const TriangleMesh& b, std::size_t n_samples, std::uint64_t seed);

struct MetricReport {
  Estimate iou;
  Estimate chamfer_l1;
  Estimate normal_consistency;
  std::uint64_t seed = 0;
};

/// All three scores of a predicted mesh against a ground truth mesh; `gt_solid`
/// overrides the inside test of the ground truth when given.
MetricReport evaluate_mesh(const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n_samples, std::uint64_t seed,
                           const Solid* gt_solid = nullptr);

/// Field-wise mean of reports (standard errors combined as for a mean).
MetricReport mean_report(const std::vector<MetricReport>& reports);

void to_json(nlohmann::json& j, const Estimate& e);
void to_json(nlohmann::json& j, const MetricReport& r);

}  // namespace occ
