#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <cstdio>
#include <exception>

#include "occ/errors.hpp"
#include "occ/shapegen.hpp"

namespace occ {

namespace fs = std::filesystem;

namespace {

// Shortest representation that parses back to the same double.
void put_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return in;
}

}  // namespace

void write_xyz(const fs::path& path, std::span<const Vec3> points) {
  std::string text;
  text.reserve(points.size() * 64);
  for (const auto& p : points) {
    put_double(text, p.x());
    text += ' ';
    put_double(text, p.y());
    text += ' ';
    put_double(text, p.z());
    text += '\n';
  }
  auto out = open_out(path);
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

std::vector<Vec3> read_xyz(const fs::path& path) {
  auto in = open_in(path);
  std::vector<Vec3> points;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x() >> p.y() >> p.z()))
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": expected three coordinates");
    points.push_back(p);
  }
  if (points.empty()) fail(ErrorKind::Parse, path.string() + ": no points");
  return points;
}

void save_sample(const fs::path& dir, const TrainingSample& sample, const SamplingConfig& cfg, std::uint64_t sample_seed) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  write_xyz(dir / "cloud.xyz", sample.cloud.points);
  write_xyz(dir / "queries.xyz", sample.queries);
  {
    std::string text;
    text.reserve(sample.labels.size() * 2);
    for (auto l : sample.labels) {
      text += l ? '1' : '0';
      text += '\n';
    }
    auto out = open_out(dir / "labels.txt");
    out << text;
  }
  nlohmann::json side = {{"shape_id", sample.shape_id}, {"seed", sample_seed}, {"config", cfg},
                         {"cloud_size", sample.cloud.size()}, {"query_count", sample.queries.size()}};
  auto out = open_out(dir / "sample.json");
  out << side.dump(2) << '\n';
  if (!out) fail(ErrorKind::Io, "write failed in " + dir.string());
}

TrainingSample load_sample(const fs::path& dir) {
  TrainingSample s;
  s.cloud.points = read_xyz(dir / "cloud.xyz");
  s.queries = read_xyz(dir / "queries.xyz");
  {
    auto in = open_in(dir / "labels.txt");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line != "0" && line != "1") fail(ErrorKind::Parse, dir.string() + "/labels.txt: labels must be 0 or 1");
      s.labels.push_back(line == "1" ? 1 : 0);
    }
  }
  if (s.labels.size() != s.queries.size())
    fail(ErrorKind::Parse, dir.string() + ": label count does not match query count");
  auto in = open_in(dir / "sample.json");
  try {
    const auto side = nlohmann::json::parse(in);
    s.shape_id = side.value("shape_id", dir.filename().string());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, dir.string() + "/sample.json: " + e.what());
  }
  return s;
}

std::vector<TrainingSample> load_split(const fs::path& corpus_dir, const std::string& split) {
  const fs::path root = corpus_dir / split;
  if (!fs::is_directory(root)) fail(ErrorKind::Io, "missing corpus split " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<TrainingSample> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(load_sample(d));
  return out;
}

CorpusEntry make_corpus_entry(const CorpusSpec& corpus, int split, std::size_t index) {
  Rng rng = derived_rng(corpus.seed, static_cast<std::uint64_t>(split) + 1, index);
  CorpusEntry e;
  e.shape = random_shape(corpus, rng);
  e.sample = make_training_sample(e.shape, corpus.sampling, rng);
  char id[32];
  std::snprintf(id, sizeof(id), "%s_%05zu", kSplitNames[split], index);
  e.sample.shape_id = id;
  return e;
}

std::vector<CorpusEntry> make_split(const CorpusSpec& corpus, int split, std::size_t count) {
  corpus.validate();
  std::vector<CorpusEntry> out(count);
  std::exception_ptr error;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = make_corpus_entry(corpus, split, static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

void write_corpus(const fs::path& corpus_dir, const CorpusSpec& corpus) {
  corpus.validate();
  const std::size_t counts[3] = {corpus.train_count, corpus.val_count, corpus.test_count};
  for (int split = 0; split < 3; ++split) {
    const auto entries = make_split(corpus, split, counts[split]);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const fs::path dir = corpus_dir / kSplitNames[split] / entries[i].sample.shape_id;
      save_sample(dir, entries[i].sample, corpus.sampling, corpus.seed);
      auto out = open_out(dir / "shape.json");
      out << nlohmann::json(entries[i].shape).dump(2) << '\n';
      if (!out) fail(ErrorKind::Io, "write failed in " + dir.string());
    }
  }
}

}  // namespace occ
