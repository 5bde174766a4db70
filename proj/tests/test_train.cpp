#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "occ/train.hpp"

using namespace occ;
using testing::thrown_kind;
namespace fs = std::filesystem;

namespace {

NetworkConfig tiny_net() {
  NetworkConfig cfg;
  cfg.input_size = 64;
  cfg.blocks = {{32, 4}, {8, 8}, {8, 8}, {32, 4}, {64, 4}};
  cfg.classifier_hidden = {16};
  return cfg;
}

std::vector<TrainingSample> tiny_corpus(std::size_t input_size, std::size_t count, std::uint64_t seed) {
  CorpusSpec spec;
  spec.seed = seed;
  spec.sampling.input_size = input_size;
  std::vector<TrainingSample> out;
  for (const auto& e : make_split(spec, 0, count)) out.push_back(e.sample);
  return out;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "occ_test_train";
  fs::create_directories(dir);
  return dir / name;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.batch_size = 2;
  t.queries_per_cloud = 64;
  t.epochs = 3;
  t.seed = 5;
  t.record_wall_time = false;
  return t;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto corpus = tiny_corpus(64, 3, 1);
  auto cfg = quick_train();
  cfg.learning_rate = 0.0;
  Trainer t(tiny_net(), cfg, 1);
  const NetworkParams before = t.params();
  t.run(corpus, nullptr, {});
  CHECK(t.step() == t.total_steps(corpus.size()));
  const auto a = before.tensors(), b = t.params().tensors();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
}

TEST_CASE("identical seeds give identical logs and checkpoints") {
  const auto corpus = tiny_corpus(64, 4, 2);
  const auto val = tiny_corpus(64, 2, 3);
  auto cfg = quick_train();
  cfg.validate_every = 2;
  std::vector<std::string> logs[2];
  for (int run = 0; run < 2; ++run) {
    Trainer t(tiny_net(), cfg, 2);
    t.run(corpus, &val, [&](const nlohmann::json& j) { logs[run].push_back(j.dump()); });
    save_checkpoint(scratch("det" + std::to_string(run) + ".ocrn"), t.checkpoint());
  }
  CHECK(logs[0] == logs[1]);
  CHECK(logs[0].size() > 6);
  CHECK(read_bytes(scratch("det0.ocrn")) == read_bytes(scratch("det1.ocrn")));
}

TEST_CASE("resuming continues exactly") {
  const auto corpus = tiny_corpus(64, 4, 4);
  const auto cfg = quick_train();
  Trainer full(tiny_net(), cfg, 4);
  full.run(corpus, nullptr, {});

  Trainer first(tiny_net(), cfg, 4);
  first.run(corpus, nullptr, {}, 3);
  CHECK(first.step() == 3);
  save_checkpoint(scratch("partial.ocrn"), first.checkpoint());
  Trainer resumed(load_checkpoint(scratch("partial.ocrn")));
  resumed.run(corpus, nullptr, {});

  save_checkpoint(scratch("full.ocrn"), full.checkpoint());
  save_checkpoint(scratch("resumed.ocrn"), resumed.checkpoint());
  CHECK(read_bytes(scratch("full.ocrn")) == read_bytes(scratch("resumed.ocrn")));
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto corpus = tiny_corpus(64, 2, 6);
  Trainer t(tiny_net(), quick_train(), 6);
  t.run(corpus, nullptr, {}, 2);
  const auto path = scratch("rt.ocrn");
  save_checkpoint(path, t.checkpoint());
  const auto back = load_checkpoint(path);
  const auto a = t.params().tensors(), b = back.params.tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
  CHECK(back.adam.t == t.checkpoint().adam.t);
  CHECK(back.step == 2);
  CHECK(back.corpus_seed == 6);
  save_checkpoint(scratch("rt2.ocrn"), back);
  CHECK(read_bytes(path) == read_bytes(scratch("rt2.ocrn")));

  const std::string bytes = read_bytes(path);
  const auto write = [](const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; };
  const auto message = [](const fs::path& p) -> std::string {
    try {
      load_checkpoint(p);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Parse);
      return e.what();
    }
    return "";
  };
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 8, 8);
  const std::size_t arrays_start = 16 + header_len;
  // Cut inside the first parameter array, then inside the last second-moment array.
  write(scratch("cut.ocrn"), bytes.substr(0, arrays_start + 8 + 24));
  CHECK(message(scratch("cut.ocrn")).find("parameters[0]") != std::string::npos);
  write(scratch("cut2.ocrn"), bytes.substr(0, bytes.size() - 8));
  CHECK(message(scratch("cut2.ocrn")).find("adam.v") != std::string::npos);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write(scratch("magic.ocrn"), bad_magic);
  CHECK(message(scratch("magic.ocrn")).find("magic") != std::string::npos);
  std::string bad_header = bytes;
  bad_header[16] = '#';
  write(scratch("header.ocrn"), bad_header);
  CHECK(message(scratch("header.ocrn")).find("header") != std::string::npos);
  write(scratch("trail.ocrn"), bytes + "x");
  CHECK(message(scratch("trail.ocrn")).find("trailing") != std::string::npos);
  CHECK(thrown_kind([] { load_checkpoint("/nonexistent/ck.ocrn"); }) == ErrorKind::Io);
}

TEST_CASE("one small step descends on a frozen batch") {
  const auto corpus = tiny_corpus(64, 2, 7);
  auto cfg = quick_train();
  cfg.learning_rate = 1e-6;
  Trainer t(tiny_net(), cfg, 7);
  const std::vector<std::size_t> batch = {0, 1};
  const double before = t.batch_loss(corpus, batch, 0);
  t.run(corpus, nullptr, {}, 1);
  const double after = t.batch_loss(corpus, batch, 0);
  CHECK(after < before);
}

TEST_CASE("overfits two shapes") {
  // A sphere and a box; 200 steps on the desk network.
  SamplingConfig sampling;
  std::vector<TrainingSample> corpus;
  Rng rng(11);
  corpus.push_back(make_training_sample(ShapeSpec::sphere(0.4), sampling, rng));
  corpus.push_back(make_training_sample(ShapeSpec::box(0.7, 0.5, 0.6), sampling, rng));
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.queries_per_cloud = 512;
  cfg.epochs = 200;
  cfg.learning_rate = 3e-3;
  cfg.cosine_schedule = true;
  cfg.record_wall_time = false;
  Trainer t(NetworkConfig::desk(), cfg, 0);
  t.run(corpus, nullptr, {});
  const auto& losses = t.losses();
  REQUIRE(losses.size() == 200);
  const double best = *std::min_element(losses.begin(), losses.end());
  MESSAGE("initial loss " << losses.front() << ", best " << best << ", final " << losses.back());
  CHECK(best < 0.1 * losses.front());

  std::vector<Vec3> inner, outer;
  Rng dirs(3);
  std::normal_distribution<double> g;
  for (int i = 0; i < 50; ++i) {
    const Vec3 d = Vec3(g(dirs), g(dirs), g(dirs)).normalized();
    inner.push_back(0.2 * d);
    outer.push_back(0.6 * d);
  }
  const auto in = predict_occupancy(NetworkConfig::desk(), t.params(), corpus[0].cloud.points, inner);
  const auto out = predict_occupancy(NetworkConfig::desk(), t.params(), corpus[0].cloud.points, outer);
  CHECK(std::count(in.begin(), in.end(), 1) == 50);
  CHECK(std::count(out.begin(), out.end(), 0) == 50);

  const auto score = evaluate_classifier(NetworkConfig::desk(), t.params(), corpus);
  CHECK(score.accuracy > 0.9);
}

TEST_CASE("classifier scores of fixed predictors") {
  const auto net = tiny_net();
  auto corpus = tiny_corpus(64, 2, 8);
  auto params = make_params(net);  // all zero: P = 0.5 everywhere
  const auto uniform = evaluate_classifier(net, params, corpus);
  CHECK(uniform.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(uniform.accuracy == doctest::Approx(uniform.inside_fraction));  // ties go inside

  for (auto& s : corpus) std::fill(s.labels.begin(), s.labels.end(), 1);
  params.dense_biases.back() << -50.0, 50.0;
  const auto perfect = evaluate_classifier(net, params, corpus);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.loss < 1e-20);
  CHECK(perfect.queries == 2 * 8192);
  CHECK(evaluate_classifier(net, params, corpus, 100).queries == 200);
}

TEST_CASE("non-finite loss stops training with a diagnostic checkpoint") {
  const auto corpus = tiny_corpus(64, 2, 9);
  Trainer seed_run(tiny_net(), quick_train(), 9);
  auto ck = seed_run.checkpoint();
  ck.params.dense_weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  Trainer t(ck);
  const auto diag = scratch("diag.ocrn");
  fs::remove(diag);
  t.set_diagnostic_path(diag);
  CHECK(thrown_kind([&] { t.run(corpus, nullptr, {}); }) == ErrorKind::NonFiniteLoss);
  CHECK(fs::exists(diag));
}

TEST_CASE("config validation and hashing") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK(thrown_kind([&] { c.validate(); }) == ErrorKind::Config);
  c = TrainConfig{};
  c.learning_rate = -1.0;
  CHECK(thrown_kind([&] { c.validate(); }) == ErrorKind::Config);
  c = TrainConfig{};
  c.beta2 = 1.0;
  CHECK(thrown_kind([&] { c.validate(); }) == ErrorKind::Config);

  TrainConfig d;
  d.learning_rate = 5e-4;
  d.cosine_schedule = true;
  const nlohmann::json j = d;
  CHECK(nlohmann::json(j.get<TrainConfig>()) == j);
  CHECK(config_hash(NetworkConfig::desk(), TrainConfig{}) == config_hash(NetworkConfig::desk(), TrainConfig{}));
  CHECK(config_hash(NetworkConfig::desk(), TrainConfig{}) != config_hash(NetworkConfig::desk(), d));

  auto ck = Trainer(tiny_net(), TrainConfig{}, 0).checkpoint();
  ck.config_hash = "0000";
  CHECK(thrown_kind([&] { Trainer t(ck); }) == ErrorKind::Config);
}

}  // TEST_SUITE
