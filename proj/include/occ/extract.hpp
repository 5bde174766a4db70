#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "occ/marching_cubes.hpp"
#include "occ/occnet.hpp"

namespace occ {

/// Interior probability at each of a batch of points.
using FieldEvaluator = std::function<std::vector<double>(std::span<const Vec3>)>;

/// Coarse-to-fine corner grids over one box. levels[l] counts cells per axis
/// and doubles from one level to the next.
struct MultiResGrid {
  Aabb box;
  std::vector<int> levels;
  std::vector<ScalarGrid> values;
  std::vector<std::vector<std::uint8_t>> evaluated;  // 1 where the field was sampled, 0 where inherited
  int dilation = 1;
  double iso = 0.5;
  std::size_t evaluations = 0;  // field calls over all levels

  const ScalarGrid& finest() const { return values.back(); }
  const std::vector<std::uint8_t>& finest_evaluated() const { return evaluated.back(); }
};

struct GridOptions {
  double iso = 0.5;
  int dilation = 1;          // face-connected steps the active set grows by
  std::size_t batch = 4096;  // points per evaluator call
};

/// Level 0 is sampled everywhere. At each refinement, cells whose corners
/// straddle `iso` are activated, the active set is dilated through faces (an
/// L1 ball of radius `dilation`), and the corners of the children of active
/// cells are sampled; every other fine corner takes the trilinear
/// interpolation of the coarse level.
MultiResGrid evaluate_hierarchical(const FieldEvaluator& field, const Aabb& box, const std::vector<int>& levels,
                                   const GridOptions& opts = {});

/// Every corner of a `cells`^3 grid sampled.
ScalarGrid evaluate_dense(const FieldEvaluator& field, const Aabb& box, int cells, std::size_t batch = 4096);

struct ReconstructOptions {
  std::vector<int> levels{64, 128, 256};
  double iso = 0.5;
  double padding = 0.1;  // added to the cloud's bounding box on every side
  int dilation = 1;
  std::size_t batch = 4096;
};

struct Reconstruction {
  TriangleMesh mesh;
  MultiResGrid grid;
};

/// Network field -> hierarchical grid -> marching cubes. The finest grid is
/// framed by a layer of exterior corners so the mesh is always closed.
Reconstruction reconstruct(const NetworkConfig& cfg, const NetworkParams& params, const PointCloud& cloud,
                           const ReconstructOptions& opts = {});

}  // namespace occ
