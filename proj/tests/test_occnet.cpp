#include <doctest.h>

#include <numeric>

#include "checks.hpp"
#include "helpers.hpp"
#include "occ/occnet.hpp"
#include "occ/train.hpp"

using namespace occ;
using testing::thrown_kind;

namespace {

std::vector<Vec3> random_cloud(std::size_t n, Rng& rng) {
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(testing::uniform_in({Vec3::Constant(-0.4), Vec3::Constant(0.4)}, rng));
  return out;
}

NetworkConfig small_config() {
  NetworkConfig cfg;
  cfg.input_size = 40;
  cfg.blocks = {{24, 4}, {8, 6}, {8, 6}, {24, 4}, {40, 3}};
  cfg.classifier_hidden = {8};
  return cfg;
}

}  // namespace

TEST_SUITE("occnet") {

TEST_CASE("layout plans") {
  const auto wide = plan_network(NetworkConfig::wide());
  CHECK(wide.set_sizes == std::vector<std::size_t>{300, 256, 128, 16});
  CHECK(wide.query_width == 64 + 128 + 256 + 256 + 128 + 64 + 64);
  CHECK(wide.blocks[4].kind == BlockKind::Expand);
  CHECK(wide.blocks[4].skip_channels == 128);
  CHECK(wide.blocks[3].kind == BlockKind::Same);
  CHECK_FALSE(wide.blocks.back().point_path);
  for (const auto& b : wide.blocks)
    CHECK(b.sigma2 == doctest::Approx(1.0 / static_cast<double>(wide.set_sizes[b.source_set])));
  const auto params = make_params(NetworkConfig::wide());
  CHECK(params.dense_weights.back().cols() == 2);
  CHECK(params.dense_weights.front().rows() == wide.query_width);

  NetworkConfig bad = NetworkConfig::desk();
  bad.blocks = {{256, 8}, {128, 16}, {200, 8}, {300, 8}};
  CHECK(thrown_kind([&] { plan_network(bad); }) == ErrorKind::Config);
  bad.blocks = {{256, 8}, {128, 16}};
  CHECK(thrown_kind([&] { plan_network(bad); }) == ErrorKind::Config);
  bad.blocks = {{256, 0}, {300, 8}};
  CHECK(thrown_kind([&] { plan_network(bad); }) == ErrorKind::Config);

  const nlohmann::json j = NetworkConfig::wide();
  const auto back = j.get<NetworkConfig>();
  CHECK(nlohmann::json(back) == j);
}

TEST_CASE("probabilities are normalized and finite") {
  const auto cfg = small_config();
  const auto params = init_params(cfg, 3);
  Rng rng(1);
  const auto cloud = random_cloud(cfg.input_size, rng);
  const auto queries = random_cloud(50, rng);
  const Matrix p = forward_probabilities(cfg, params, cloud, queries);
  CHECK(p.rows() == 50);
  CHECK(p.cols() == 2);
  CHECK(p.allFinite());
  for (Eigen::Index r = 0; r < p.rows(); ++r) CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(thrown_kind([&] { forward_probabilities(cfg, params, std::span(cloud).first(30), queries); }) ==
        ErrorKind::DimensionMismatch);
}

TEST_CASE("permutation and joint translation invariance") {
  const auto cfg = small_config();
  const auto params = init_params(cfg, 4);
  Rng rng(2);
  auto cloud = random_cloud(cfg.input_size, rng);
  const auto queries = random_cloud(30, rng);
  const Matrix base = forward_probabilities(cfg, params, cloud, queries);

  auto shuffled = cloud;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK((forward_probabilities(cfg, params, shuffled, queries) - base).cwiseAbs().maxCoeff() < 1e-12);

  const Vec3 shift(0.1, -0.2, 0.05);
  auto moved = cloud;
  auto moved_q = queries;
  for (auto& p : moved) p += shift;
  for (auto& q : moved_q) q += shift;
  CHECK((forward_probabilities(cfg, params, moved, moved_q) - base).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("queries are independent of each other") {
  const auto cfg = small_config();
  const auto params = init_params(cfg, 5);
  Rng rng(3);
  const auto cloud = random_cloud(cfg.input_size, rng);
  const auto queries = random_cloud(12, rng);
  const Matrix batch = forward_probabilities(cfg, params, cloud, queries);
  Encoder enc(cfg, params, cloud);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const Matrix one = forward_probabilities(cfg, params, cloud, std::span(queries).subspan(i, 1));
    CHECK((one.row(0) - batch.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff() < 1e-12);
  }
  const Matrix cached = enc.probabilities(queries);
  CHECK((cached - batch).cwiseAbs().maxCoeff() < 1e-12);
  const auto interior = enc.interior(std::span(queries).first(5));
  for (int i = 0; i < 5; ++i) CHECK(interior[i] == doctest::Approx(batch(i, 1)).epsilon(1e-12));
}

TEST_CASE("loss values") {
  Matrix perfect(3, 2);
  perfect << 1, 0, 0, 1, 1, 0;
  const std::vector<std::uint8_t> labels = {0, 1, 0};
  CHECK(loss(perfect, labels) == 0.0);
  const Matrix half = Matrix::Constant(4, 2, 0.5);
  const std::vector<std::uint8_t> four = {0, 1, 1, 0};
  CHECK(loss(half, four) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  Matrix mixed(3, 2);
  mixed << 0.9, 0.1, 0.2, 0.8, 0.6, 0.4;
  const std::vector<std::uint8_t> lab = {0, 1, 1};
  CHECK(loss(mixed, lab) == doctest::Approx(-(std::log(0.9) + std::log(0.8) + std::log(0.4)) / 3.0).epsilon(1e-15));
  CHECK(thrown_kind([&] { loss(mixed, four); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("thresholding sends ties inside") {
  Matrix p(3, 2);
  p << 0.9, 0.1, 0.5, 0.5, 0.2, 0.8;
  CHECK(threshold_occupancy(p) == std::vector<std::uint8_t>{0, 1, 1});
  CHECK(threshold_occupancy(p, 0.85) == std::vector<std::uint8_t>{0, 0, 0});
}

TEST_CASE("network gradients match central differences") {
  Rng rng(2026);
  for (int trial = 0; trial < 5; ++trial) {
    auto t = checks::random_network_trial(rng);
    const auto r = checks::network_gradient_check(t);
    CHECK(r.parameters > 0);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("init statistics") {
  const auto cfg = NetworkConfig::desk();
  const auto a = init_params(cfg, 9), b = init_params(cfg, 9);
  const auto ta = a.tensors(), tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(*ta[i] == *tb[i]);
  for (const auto& blk : a.blocks) CHECK(blk.bias.isZero(0.0));
  for (const auto& bias : a.dense_biases) CHECK(bias.isZero(0.0));
  // The 16 -> 32 bottleneck conv holds 27 * 16 * 32 = 13824 weights.
  const auto& w = a.blocks[2].weights;
  REQUIRE(w.size() >= 10000);
  const double mean = w.mean();
  const double sd = std::sqrt((w.array() - mean).square().sum() / static_cast<double>(w.size() - 1));
  CHECK(std::abs(sd / (1.0 / std::sqrt(27.0 * 16.0)) - 1.0) < 0.1);
}

}  // TEST_SUITE
