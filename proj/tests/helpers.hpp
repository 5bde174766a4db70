#pragma once

#include <optional>
#include <sstream>
#include <string>

#include "occ/errors.hpp"
#include "occ/geometry.hpp"
#include "occ/shapegen.hpp"

namespace testing {

// Kind of the occ::Error thrown by f, or nullopt if it returns normally.
template <class F>
std::optional<occ::ErrorKind> thrown_kind(F&& f) {
  try {
    f();
  } catch (const occ::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline constexpr const char* kUnitCubeObj = R"(v -0.5 -0.5 -0.5
v 0.5 -0.5 -0.5
v 0.5 0.5 -0.5
v -0.5 0.5 -0.5
v -0.5 -0.5 0.5
v 0.5 -0.5 0.5
v 0.5 0.5 0.5
v -0.5 0.5 0.5
f 1 4 3
f 1 3 2
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
)";

inline occ::TriangleMesh unit_cube() {
  std::istringstream in(kUnitCubeObj);
  return occ::read_obj(in);
}

inline occ::Vec3 uniform_in(const occ::Aabb& box, occ::Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return box.min + (box.max - box.min).cwiseProduct(occ::Vec3(u(rng), u(rng), u(rng)));
}

}  // namespace testing
