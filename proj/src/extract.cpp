#include "occ/extract.hpp"

#include <algorithm>
#include <cstdlib>

#include "occ/errors.hpp"

namespace occ {

namespace {

// Samples the listed corners of `grid` in batches and writes results by index.
void sample_corners(const FieldEvaluator& field, ScalarGrid& grid, const std::vector<std::size_t>& corners,
                    std::size_t batch) {
  const int nx = grid.dims[0], ny = grid.dims[1];
  std::vector<Vec3> pts;
  for (std::size_t start = 0; start < corners.size(); start += batch) {
    const std::size_t end = std::min(corners.size(), start + batch);
    pts.clear();
    for (std::size_t c = start; c < end; ++c) {
      const std::size_t id = corners[c];
      const int i = static_cast<int>(id % nx);
      const int j = static_cast<int>((id / nx) % ny);
      const int k = static_cast<int>(id / (static_cast<std::size_t>(nx) * ny));
      pts.push_back(grid.position(i, j, k));
    }
    const auto v = field(pts);
    if (v.size() != pts.size()) fail(ErrorKind::DimensionMismatch, "field returned the wrong number of values");
    for (std::size_t c = start; c < end; ++c) grid.values[corners[c]] = v[c - start];
  }
}

void check_levels(const std::vector<int>& levels) {
  if (levels.empty() || levels[0] < 1) fail(ErrorKind::Config, "grid levels must be positive");
  for (std::size_t l = 1; l < levels.size(); ++l)
    if (levels[l] != 2 * levels[l - 1]) fail(ErrorKind::Config, "each grid level must double the previous one");
}

}  // namespace

ScalarGrid evaluate_dense(const FieldEvaluator& field, const Aabb& box, int cells, std::size_t batch) {
  ScalarGrid grid(box, {cells + 1, cells + 1, cells + 1});
  std::vector<std::size_t> all(grid.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  sample_corners(field, grid, all, std::max<std::size_t>(batch, 1));
  return grid;
}

MultiResGrid evaluate_hierarchical(const FieldEvaluator& field, const Aabb& box, const std::vector<int>& levels,
                                   const GridOptions& opts) {
  check_levels(levels);
  if (opts.dilation < 0) fail(ErrorKind::Config, "dilation must be non-negative");
  const std::size_t batch = std::max<std::size_t>(opts.batch, 1);
  MultiResGrid mr;
  mr.box = box;
  mr.levels = levels;
  mr.dilation = opts.dilation;
  mr.iso = opts.iso;

  mr.values.push_back(evaluate_dense(field, box, levels[0], batch));
  mr.evaluated.emplace_back(mr.values[0].size(), 1);
  mr.evaluations = mr.values[0].size();

  for (std::size_t l = 1; l < levels.size(); ++l) {
    const ScalarGrid& coarse = mr.values[l - 1];
    const auto& coarse_eval = mr.evaluated[l - 1];
    const int n = levels[l - 1];

    // Cells whose corners disagree about the threshold.
    std::vector<std::uint8_t> active(static_cast<std::size_t>(n) * n * n, 0);
    const auto cell = [n](int i, int j, int k) { return static_cast<std::size_t>(i) + static_cast<std::size_t>(n) * (j + static_cast<std::size_t>(n) * k); };
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          int inside = 0;
          for (int c = 0; c < 8; ++c) inside += coarse.at(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) >= opts.iso;
          active[cell(i, j, k)] = inside != 0 && inside != 8;
        }
    if (opts.dilation > 0) {
      std::vector<std::uint8_t> grown(active.size(), 0);
      const int r = opts.dilation;
      for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i) {
            if (!active[cell(i, j, k)]) continue;
            for (int dk = std::max(0, k - r); dk <= std::min(n - 1, k + r); ++dk)
              for (int dj = std::max(0, j - r); dj <= std::min(n - 1, j + r); ++dj)
                for (int di = std::max(0, i - r); di <= std::min(n - 1, i + r); ++di)
                  if (std::abs(di - i) + std::abs(dj - j) + std::abs(dk - k) <= r) grown[cell(di, dj, dk)] = 1;
          }
      active.swap(grown);
    }

    // Fine corners start as trilinear interpolants of the coarse level: a copy
    // at coincident corners, otherwise the mean of the 2, 4 or 8 coarse corners
    // around an edge, face or cell midpoint.
    const int m = levels[l];
    ScalarGrid fine(box, {m + 1, m + 1, m + 1});
    std::vector<std::uint8_t> fine_eval(fine.size(), 0);
    for (int k = 0; k <= m; ++k)
      for (int j = 0; j <= m; ++j)
        for (int i = 0; i <= m; ++i) {
          const int i0 = i / 2, j0 = j / 2, k0 = k / 2;
          const int ni = 1 + (i & 1), nj = 1 + (j & 1), nk = 1 + (k & 1);
          double sum = 0.0;
          for (int dk = 0; dk < nk; ++dk)
            for (int dj = 0; dj < nj; ++dj)
              for (int di = 0; di < ni; ++di) sum += coarse.at(i0 + di, j0 + dj, k0 + dk);
          fine.at(i, j, k) = sum / (ni * nj * nk);
          if (ni * nj * nk == 1 && coarse_eval[coarse.index(i0, j0, k0)]) fine_eval[fine.index(i, j, k)] = 1;
        }

    // Corners of the children of active cells that still need a sample.
    std::vector<std::uint8_t> wanted(fine.size(), 0);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          if (!active[cell(i, j, k)]) continue;
          for (int dk = 0; dk <= 2; ++dk)
            for (int dj = 0; dj <= 2; ++dj)
              for (int di = 0; di <= 2; ++di) wanted[fine.index(2 * i + di, 2 * j + dj, 2 * k + dk)] = 1;
        }
    std::vector<std::size_t> todo;
    for (std::size_t c = 0; c < fine.size(); ++c)
      if (wanted[c] && !fine_eval[c]) todo.push_back(c);
    sample_corners(field, fine, todo, batch);
    for (auto c : todo) fine_eval[c] = 1;
    mr.evaluations += todo.size();

    mr.values.push_back(std::move(fine));
    mr.evaluated.push_back(std::move(fine_eval));
  }
  return mr;
}

Reconstruction reconstruct(const NetworkConfig& cfg, const NetworkParams& params, const PointCloud& cloud,
                           const ReconstructOptions& opts) {
  if (cloud.points.empty()) fail(ErrorKind::DimensionMismatch, "empty point cloud");
  Encoder enc(cfg, params, cloud.points);
  const FieldEvaluator field = [&enc](std::span<const Vec3> pts) { return enc.interior(pts); };
  const Aabb box = Aabb::of(cloud.points).padded(opts.padding);
  Reconstruction r;
  r.grid = evaluate_hierarchical(field, box, opts.levels, {opts.iso, opts.dilation, opts.batch});
  r.mesh = marching_cubes(r.grid.finest().padded(0.0), opts.iso);
  return r;
}

}  // namespace occ
