#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "occ/geometry.hpp"
#include "occ/shapegen.hpp"
#include "oracles.hpp"

using namespace occ;
using testing::thrown_kind;

TEST_SUITE("geometry") {

TEST_CASE("obj cube loads as a closed mesh") {
  const auto mesh = testing::unit_cube();
  CHECK(mesh.vertices.size() == 8);
  CHECK(mesh.triangles.size() == 12);
  CHECK(mesh.watertight);
  CHECK(euler_characteristic(mesh) == 2);
  CHECK(signed_volume(mesh) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("off single triangle is open") {
  std::istringstream in("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  const auto mesh = read_off(in);
  CHECK(mesh.triangles.size() == 1);
  CHECK_FALSE(mesh.watertight);
}

TEST_CASE("malformed inputs") {
  std::istringstream bad_index("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n");
  CHECK(thrown_kind([&] { read_obj(bad_index); }) == ErrorKind::Parse);
  std::istringstream zero_area("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n");
  CHECK(thrown_kind([&] { read_obj(zero_area); }) == ErrorKind::DegenerateGeometry);
  std::istringstream bad_off("OFF\n3 1 0\n0 0 0\n1 0 0\n");
  CHECK(thrown_kind([&] { read_off(bad_off); }) == ErrorKind::Parse);
  CHECK(thrown_kind([] { load_mesh("/nonexistent/x.obj"); }) == ErrorKind::Io);
  CHECK(thrown_kind([] { format_from_path("mesh.stl"); }) == ErrorKind::Parse);
}

TEST_CASE("obj and off round trip at 9 significant digits") {
  auto mesh = make_primitive(ShapeSpec::torus(0.3, 0.1), 1);
  for (auto write : {&write_obj, &write_off}) {
    std::stringstream buf;
    write(buf, mesh);
    const auto back = write == &write_obj ? read_obj(buf) : read_off(buf);
    REQUIRE(back.vertices.size() == mesh.vertices.size());
    CHECK(back.triangles == mesh.triangles);
    CHECK(back.watertight);
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) CHECK((back.vertices[i] - mesh.vertices[i]).norm() < 1e-8);
  }
}

TEST_CASE("normalize to unit cube") {
  auto cube = testing::unit_cube();
  const auto big = transformed(cube, Similarity{2.0, Vec3::Constant(1.0)});  // spans [0, 2]^3
  const auto [norm, t] = normalize_to_unit_cube(big);
  CHECK(t.scale == doctest::Approx(0.5));
  CHECK((t.translation - Vec3::Constant(-0.5)).norm() < 1e-12);
  CHECK((norm.bounds().min - Vec3::Constant(-0.5)).norm() < 1e-9);
  CHECK((norm.bounds().max - Vec3::Constant(0.5)).norm() < 1e-9);
  CHECK((t.inverse().apply(t.apply(Vec3(0.3, 1.2, 1.9))) - Vec3(0.3, 1.2, 1.9)).norm() < 1e-12);

  const auto [again, t2] = normalize_to_unit_cube(norm);
  CHECK(t2.scale == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(t2.translation.norm() < 1e-9);
  for (std::size_t i = 0; i < norm.vertices.size(); ++i) CHECK((again.vertices[i] - norm.vertices[i]).norm() < 1e-9);

  const auto slab = make_primitive(ShapeSpec::box(4.0, 1.0, 1.0), 0);
  const auto ext = normalize_to_unit_cube(slab).first.bounds().extent();
  CHECK(ext.x() == doctest::Approx(1.0));
  CHECK(ext.y() == doctest::Approx(0.25));
  CHECK(ext.z() == doctest::Approx(0.25));
}

TEST_CASE("surface samples of the cube lie on its faces") {
  const auto cube = testing::unit_cube();
  Rng rng(7);
  const auto cloud = sample_surface(cube, 2048, rng);
  REQUIRE(cloud.size() == 2048);
  REQUIRE(cloud.normals.size() == 2048);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(std::abs(cloud.points[i].cwiseAbs().maxCoeff() - 0.5) < 1e-12);
    CHECK(std::abs(cloud.normals[i].norm() - 1.0) < 1e-9);
  }
  Rng a(11), b(11);
  const auto c1 = sample_surface(cube, 100, a), c2 = sample_surface(cube, 100, b);
  CHECK(c1.points == c2.points);
}

namespace {

// Index of the triangle a sample lies on (first match within 1e-9).
std::size_t owning_triangle(const TriangleMesh& mesh, const Vec3& p) {
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    if (oracle::point_triangle_distance_bruteforce(p, mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2)) < 1e-9) return t;
  return mesh.triangles.size();
}

}  // namespace

TEST_CASE("face selection follows area weights") {
  // 12 faces of three distinct areas; chi-square at 11 degrees of freedom.
  const auto mesh = make_primitive(ShapeSpec::box(0.6, 0.4, 0.2), 0);
  const std::size_t n = 100000;
  Rng rng(2024);
  const auto cloud = sample_surface(mesh, n, rng);
  std::vector<double> counts(mesh.triangles.size(), 0.0);
  for (const auto& p : cloud.points) {
    const auto t = owning_triangle(mesh, p);
    REQUIRE(t < counts.size());
    counts[t] += 1.0;
  }
  double chi2 = 0.0;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    const double expected = n * mesh.face_area(t) / mesh.surface_area();
    chi2 += (counts[t] - expected) * (counts[t] - expected) / expected;
  }
  CHECK(chi2 < 24.725);  // 0.99 quantile of chi-square(11)

  TriangleMesh lopsided;
  lopsided.vertices = {Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 6, 0), Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(0, 2, 1)};
  lopsided.triangles = {{0, 1, 2}, {3, 4, 5}};  // areas 9 and 1
  finalize_mesh(lopsided);
  Rng r2(5);
  const auto c2 = sample_surface(lopsided, 2048, r2);
  const auto big = std::count_if(c2.points.begin(), c2.points.end(), [](const Vec3& p) { return p.z() < 0.5; });
  CHECK(std::abs(static_cast<double>(big) / 2048.0 - 0.9) < 0.03);
}

TEST_CASE("point in mesh on the unit cube") {
  const auto cube = testing::unit_cube();
  CHECK(point_in_mesh(cube, Vec3(0, 0, 0)));
  CHECK_FALSE(point_in_mesh(cube, Vec3(0.6, 0, 0)));
  // Rays from the centre hit edges and vertices for axis-aligned directions;
  // queries on the diagonals exercise the re-roll path.
  CHECK(point_in_mesh(cube, Vec3(0.25, 0.25, 0.25)));
  CHECK_FALSE(point_in_mesh(cube, Vec3(0.75, 0.75, 0.75)));

  std::istringstream open("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  const auto tri = read_obj(open);
  CHECK(thrown_kind([&] { point_in_mesh(tri, Vec3(0, 0, 1)); }) == ErrorKind::NotWatertight);
}

TEST_CASE("point in mesh matches the winding number oracle on primitives") {
  const std::vector<ShapeSpec> shapes = {ShapeSpec::sphere(0.4), ShapeSpec::box(0.6, 0.4, 0.2),
                                         ShapeSpec::torus(0.3, 0.1)};
  Rng rng(99);
  for (const auto& spec : shapes) {
    const auto mesh = make_primitive(spec, 3);
    const MeshQuery query(mesh);
    const auto box = mesh.bounds().padded(0.1);
    int disagreements = 0;
    for (int i = 0; i < 1000; ++i) {
      const Vec3 q = testing::uniform_in(box, rng);
      disagreements += query.inside(q) != (oracle::winding_number(mesh, q) > 0.5);
    }
    CHECK(disagreements == 0);
  }
}

TEST_CASE("nearest surface point") {
  const auto cube = testing::unit_cube();
  const auto hit = nearest_surface_point(cube, Vec3(0.7, 0, 0));
  CHECK((hit.point - Vec3(0.5, 0, 0)).norm() < 1e-12);
  CHECK((hit.normal - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK(hit.distance == doctest::Approx(0.2));
  CHECK(nearest_surface_point(cube, Vec3(0.5, 0.1, -0.2)).distance < 1e-12);

  const auto torus = make_primitive(ShapeSpec::torus(0.3, 0.1), 2);
  const MeshQuery query(torus);
  Rng rng(3);
  const auto box = torus.bounds().padded(0.3);
  for (int i = 0; i < 100; ++i) {
    const Vec3 x = testing::uniform_in(box, rng);
    const auto near = query.nearest(x);
    CHECK(std::abs(near.distance - oracle::nearest_distance_bruteforce(torus, x)) < 1e-9);
    CHECK(std::abs((x - near.point).norm() - near.distance) < 1e-12);
    double vertex_min = 1e300;
    for (const auto& v : torus.vertices) vertex_min = std::min(vertex_min, (x - v).norm());
    CHECK(near.distance <= vertex_min + 1e-12);
  }
}

TEST_CASE("library winding number agrees with the oracle") {
  const auto mesh = make_primitive(ShapeSpec::sphere(0.4), 2);
  for (const Vec3& q : {Vec3(0, 0, 0), Vec3(0.1, 0.2, -0.1), Vec3(0.5, 0, 0), Vec3(1, 1, 1)})
    CHECK(winding_number(mesh, q) == doctest::Approx(oracle::winding_number(mesh, q)).epsilon(1e-9));
}

}  // TEST_SUITE
