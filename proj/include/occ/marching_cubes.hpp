#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "occ/geometry.hpp"

namespace occ {

/// Scalar samples on the corners of a regular grid spanning `box`.
/// `dims` counts corners per axis; storage is x-fastest.
struct ScalarGrid {
  Aabb box;
  std::array<int, 3> dims{0, 0, 0};
  std::vector<double> values;

  ScalarGrid() = default;
  ScalarGrid(const Aabb& box, std::array<int, 3> dims, double fill = 0.0);

  std::size_t size() const { return values.size(); }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
  }
  double& at(int i, int j, int k) { return values[index(i, j, k)]; }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 spacing() const;
  Vec3 position(int i, int j, int k) const;

  /// Same grid surrounded by one extra layer of corners set to `value`.
  ScalarGrid padded(double value) const;
};

/// Iso-surface at `iso` with corners >= iso treated as interior. Output
/// triangles are wound counter-clockwise seen from the exterior; vertices on
/// shared edges are welded. Throws EmptyField when no edge crosses the level.
TriangleMesh marching_cubes(const ScalarGrid& grid, double iso = 0.5);

/// Flat binary dump: "OGRD", three int32 corner counts, then float32 values x-fastest.
void write_grid(const std::filesystem::path& path, const ScalarGrid& grid);
ScalarGrid read_grid(const std::filesystem::path& path, const Aabb& box);

}  // namespace occ
