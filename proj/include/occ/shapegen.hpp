#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "occ/geometry.hpp"

namespace occ {

enum class ShapeKind { Sphere, Box, Torus, Cylinder, Composite };

const char* to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& name);

struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 to_world(const Vec3& local) const { return rotation * local + translation; }
  Vec3 to_local(const Vec3& world) const { return rotation.transpose() * (world - translation); }
};

/// Procedural solid. Dimension conventions (local frame, axis along z):
///   sphere   {radius}
///   box      {size_x, size_y, size_z}   full edge lengths
///   torus    {major_radius, minor_radius}
///   cylinder {radius, height}
/// A composite is the union of its parts; its pose is applied on top of theirs.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::Sphere;
  std::vector<double> dims;
  Pose pose;
  std::vector<ShapeSpec> parts;

  static ShapeSpec sphere(double radius, const Pose& pose = {});
  static ShapeSpec box(double sx, double sy, double sz, const Pose& pose = {});
  static ShapeSpec torus(double major, double minor, const Pose& pose = {});
  static ShapeSpec cylinder(double radius, double height, const Pose& pose = {});
  static ShapeSpec composite(std::vector<ShapeSpec> parts, const Pose& pose = {});
};

/// Throws InvalidSpec unless dimensions are positive and composites have >= 2 parts.
void validate(const ShapeSpec& spec);

/// Primitive leaves with their poses flattened into world space.
std::vector<ShapeSpec> flatten_parts(const ShapeSpec& spec);

/// Watertight tessellation of a primitive. For spheres `resolution` is the
/// icosphere subdivision level; other kinds use 8 * 2^resolution segments.
TriangleMesh make_primitive(const ShapeSpec& spec, int resolution);

/// Ground-truth indicator: analytic per primitive, union over composite parts.
bool occupancy_oracle(const ShapeSpec& spec, const Vec3& q);

/// Signed distance (exact for primitives, min over parts for unions).
double signed_distance(const ShapeSpec& spec, const Vec3& q);

Aabb shape_bounds(const ShapeSpec& spec);
double surface_area(const ShapeSpec& spec);

/// x -> scale * x + translation applied to the whole solid.
ShapeSpec transformed(const ShapeSpec& spec, const Similarity& t);
ShapeSpec rotated(const ShapeSpec& spec, const Eigen::Matrix3d& rotation);
std::pair<ShapeSpec, Similarity> normalize_to_unit_cube(const ShapeSpec& spec);

/// Marching cubes over a one-cell ramp of the signed distance, whose 0.5
/// level set coincides with occupancy_oracle. Throws EmptyShape.
TriangleMesh composite_ground_truth_mesh(const ShapeSpec& spec, int grid_resolution);

/// Area-weighted samples on the boundary of the solid (union boundary for
/// composites), with outward normals.
PointCloud sample_shape_surface(const ShapeSpec& spec, std::size_t n, Rng& rng);

struct SamplingConfig {
  std::size_t pool_size = 2048;
  std::size_t input_size = 300;
  double noise_sd = 0.05;
  std::size_t near_queries = 6144;
  double near_sd = 0.02;
  std::size_t far_queries = 2048;
  double far_sd = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainingSample {
  PointCloud cloud;  // network input P (no normals)
  std::vector<Vec3> queries;
  std::vector<std::uint8_t> labels;  // 1 = interior
  std::string shape_id;
};

TrainingSample make_training_sample(const ShapeSpec& spec, const SamplingConfig& cfg, Rng& rng);

struct CorpusSpec {
  std::size_t train_count = 500;
  std::size_t val_count = 50;
  std::size_t test_count = 50;
  int min_parts = 1;
  int max_parts = 4;
  std::uint64_t seed = 1;
  SamplingConfig sampling;

  void validate() const;
};

/// Random union of primitives with random poses, normalized to the unit cube.
ShapeSpec random_shape(const CorpusSpec& corpus, Rng& rng);

/// Independent generator stream for (seed, stream, index).
Rng derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

void to_json(nlohmann::json& j, const ShapeSpec& s);
void from_json(const nlohmann::json& j, ShapeSpec& s);
void to_json(nlohmann::json& j, const SamplingConfig& c);
void from_json(const nlohmann::json& j, SamplingConfig& c);
void to_json(nlohmann::json& j, const CorpusSpec& c);
void from_json(const nlohmann::json& j, CorpusSpec& c);

// Flat-file sample layout: cloud.xyz, queries.xyz, labels.txt, sample.json.
void write_xyz(const std::filesystem::path& path, std::span<const Vec3> points);
std::vector<Vec3> read_xyz(const std::filesystem::path& path);
void save_sample(const std::filesystem::path& dir, const TrainingSample& sample, const SamplingConfig& cfg,
                 std::uint64_t sample_seed);
TrainingSample load_sample(const std::filesystem::path& dir);

struct CorpusEntry {
  ShapeSpec shape;
  TrainingSample sample;
};

inline constexpr const char* kSplitNames[3] = {"train", "val", "test"};

/// Shape and sample `index` of split 0 (train), 1 (val) or 2 (test); each owns
/// the generator stream (corpus seed, split, index).
CorpusEntry make_corpus_entry(const CorpusSpec& corpus, int split, std::size_t index);

/// Entries [0, count) of a split, generated in parallel.
std::vector<CorpusEntry> make_split(const CorpusSpec& corpus, int split, std::size_t count);

/// corpus_dir/<split>/<shape_id>/ for every split, each sample directory also
/// holding its shape.json. Output bytes do not depend on the thread count.
void write_corpus(const std::filesystem::path& corpus_dir, const CorpusSpec& corpus);

/// Sample directories under corpus_dir/split in lexical order.
std::vector<TrainingSample> load_split(const std::filesystem::path& corpus_dir, const std::string& split);

}  // namespace occ
