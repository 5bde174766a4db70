#include "occ/marching_cubes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "occ/errors.hpp"

namespace occ {

namespace {

#include "mc_table.inc"

// Corner offsets and edge endpoints in the table's numbering.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

// Interpolation parameter is kept this far off the endpoints so vertices of
// neighbouring edges never coincide and every triangle keeps an area of order
// kEdgeClamp^2 cell^2, well above the loaders' degeneracy threshold.
constexpr double kEdgeClamp = 1e-3;

}  // namespace

ScalarGrid::ScalarGrid(const Aabb& b, std::array<int, 3> d, double fill)
    : box(b), dims(d), values(static_cast<std::size_t>(d[0]) * d[1] * d[2], fill) {}

Vec3 ScalarGrid::spacing() const {
  const Vec3 e = box.extent();
  return {e.x() / (dims[0] - 1), e.y() / (dims[1] - 1), e.z() / (dims[2] - 1)};
}

// i / (n - 1) is formed before scaling so that corner 2i of a grid with twice
// the cells lands on exactly the same coordinates as corner i.
Vec3 ScalarGrid::position(int i, int j, int k) const {
  const Vec3 e = box.extent();
  const Vec3 t(static_cast<double>(i) / (dims[0] - 1), static_cast<double>(j) / (dims[1] - 1),
               static_cast<double>(k) / (dims[2] - 1));
  return box.min + e.cwiseProduct(t);
}

ScalarGrid ScalarGrid::padded(double value) const {
  const Vec3 h = spacing();
  ScalarGrid out(Aabb{box.min - h, box.max + h}, {dims[0] + 2, dims[1] + 2, dims[2] + 2}, value);
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) out.at(i + 1, j + 1, k + 1) = at(i, j, k);
  return out;
}

TriangleMesh marching_cubes(const ScalarGrid& grid, double iso) {
  for (double v : grid.values)
    if (!std::isfinite(v)) fail(ErrorKind::EmptyField, "grid contains non-finite values");
  const auto [nx, ny, nz] = grid.dims;
  if (nx < 2 || ny < 2 || nz < 2) fail(ErrorKind::EmptyField, "grid needs at least 2 corners per axis");

  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, int> welded;

  auto edge_vertex = [&](std::size_t a, std::size_t b, const int ca[3], const int cb[3]) {
    if (a > b) {
      std::swap(a, b);
      std::swap(ca, cb);
    }
    const std::uint64_t key = static_cast<std::uint64_t>(a) * grid.size() + b;
    const auto it = welded.find(key);
    if (it != welded.end()) return it->second;
    const double va = grid.values[a], vb = grid.values[b];
    const double t = std::clamp((iso - va) / (vb - va), kEdgeClamp, 1.0 - kEdgeClamp);
    const Vec3 pa = grid.position(ca[0], ca[1], ca[2]);
    const Vec3 pb = grid.position(cb[0], cb[1], cb[2]);
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(pa + t * (pb - pa));
    welded.emplace(key, id);
    return id;
  };

  for (int k = 0; k + 1 < nz; ++k) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i + 1 < nx; ++i) {
        int cube = 0;
        std::size_t idx[8];
        int coord[8][3];
        for (int c = 0; c < 8; ++c) {
          coord[c][0] = i + kCorner[c][0];
          coord[c][1] = j + kCorner[c][1];
          coord[c][2] = k + kCorner[c][2];
          idx[c] = grid.index(coord[c][0], coord[c][1], coord[c][2]);
          if (grid.values[idx[c]] < iso) cube |= 1 << c;
        }
        if (cube == 0 || cube == 255) continue;
        const std::int8_t* row = kTriTable[cube];
        for (int t = 0; row[t] >= 0; t += 3) {
          Triangle tri;
          for (int v = 0; v < 3; ++v) {
            const int e = row[t + v];
            const int a = kEdge[e][0], b = kEdge[e][1];
            tri[v] = edge_vertex(idx[a], idx[b], coord[a], coord[b]);
          }
          // Table order is counter-clockwise seen from the low-valued (exterior) side.
          mesh.triangles.push_back(tri);
        }
      }
    }
  }
  if (mesh.triangles.empty()) fail(ErrorKind::EmptyField, "no iso-surface crossing in grid");
  mesh.watertight = is_closed_manifold(mesh);
  return mesh;
}

void write_grid(const std::filesystem::path& path, const ScalarGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write("OGRD", 4);
  for (int d : grid.dims) {
    const std::int32_t v = d;
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  for (double v : grid.values) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

ScalarGrid read_grid(const std::filesystem::path& path, const Aabb& box) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "OGRD", 4) != 0) fail(ErrorKind::Parse, "bad grid magic in " + path.string());
  std::array<int, 3> dims{};
  for (int& d : dims) {
    std::int32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in || v < 1) fail(ErrorKind::Parse, "bad grid header in " + path.string());
    d = v;
  }
  ScalarGrid grid(box, dims);
  for (double& v : grid.values) {
    float f = 0;
    in.read(reinterpret_cast<char*>(&f), sizeof(f));
    v = f;
  }
  if (!in) fail(ErrorKind::Parse, "truncated grid data in " + path.string());
  return grid;
}

}  // namespace occ
