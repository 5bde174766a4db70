// occrecon: corpus generation, training, reconstruction and evaluation.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "occ/errors.hpp"
#include "occ/extract.hpp"
#include "occ/marching_cubes.hpp"
#include "occ/metrics.hpp"
#include "occ/shapegen.hpp"
#include "occ/train.hpp"

#ifndef OCCRECON_VERSION
#define OCCRECON_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace occ;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::InvalidSpec: return kUsage;
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::EmptyField:
    case ErrorKind::TapeIncomplete: return kNumerical;
    default: return kData;
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

// --set a.b.c=value; the value is parsed as JSON when possible.
void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorKind::Config, "--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &root;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) fail(ErrorKind::Config, "--set path '" + key + "' crosses a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  (*node)[parts.back()] = value;
}

struct Common {
  std::vector<std::string> sets;
  std::string config;
  int threads = 0;
};

json resolve_config(const Common& c) {
  json root = json::object();
  if (!c.config.empty()) root = read_json_file(c.config);
  if (!root.is_object()) fail(ErrorKind::Config, "config root must be an object");
  for (const auto& s : c.sets) apply_override(root, s);
  return root;
}

template <class T>
T section(const json& root, const char* name, T fallback) {
  if (!root.contains(name)) return fallback;
  try {
    return root.at(name).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string(name) + ": " + e.what());
  }
}

class Manifest {
 public:
  Manifest(std::string command, const Common& c, int argc, char** argv) : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["tool_version"] = OCCRECON_VERSION;
    doc_["argv"] = std::vector<std::string>(argv, argv + argc);
    doc_["threads"] = c.threads;
    if (!c.config.empty()) doc_["config_path"] = c.config;
  }
  json& operator[](const char* key) { return doc_[key]; }
  void write(const fs::path& path) {
    doc_["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_text(path, doc_.dump(2) + "\n");
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

std::vector<int> parse_levels(const std::string& text) {
  std::vector<int> levels;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      levels.push_back(std::stoi(item));
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "--levels expects comma-separated integers");
    }
  }
  return levels;
}

struct Rotation {
  char axis = 'z';
  double degrees = 0.0;
  Eigen::Matrix3d matrix() const { return axis_angle_rotation(axis, degrees); }
};

std::optional<Rotation> parse_rotation(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto comma = text.find(',');
  Rotation r;
  try {
    if (comma != 1) throw std::invalid_argument("axis");
    r.axis = static_cast<char>(std::tolower(text[0]));
    r.degrees = std::stod(text.substr(comma + 1));
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "--rotate expects \"axis,degrees\", e.g. \"z,30\"");
  }
  if (r.axis != 'x' && r.axis != 'y' && r.axis != 'z') fail(ErrorKind::Config, "rotation axis must be x, y or z");
  return r;
}

std::vector<Vec3> load_cloud(const fs::path& path) {
  if (fs::is_directory(path)) return read_xyz(path / "cloud.xyz");
  return read_xyz(path);
}

// ---------------------------------------------------------------- gen

int cmd_gen(const Common& c, const fs::path& out_dir, std::optional<std::uint64_t> seed, int argc, char** argv) {
  const json root = resolve_config(c);
  CorpusSpec spec = section(root, "corpus", CorpusSpec{});
  if (seed) spec.seed = *seed;
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) fail(ErrorKind::Io, "cannot create " + out_dir.string());
  {
    const fs::path probe = out_dir / ".write_probe";
    std::ofstream t(probe);
    if (!t) fail(ErrorKind::Io, out_dir.string() + " is not writable");
    t.close();
    fs::remove(probe, ec);
  }
  write_corpus(out_dir, spec);
  write_text(out_dir / "corpus.json", json(spec).dump(2) + "\n");
  Manifest m("gen", c, argc, argv);
  m["corpus"] = spec;
  m["seeds"] = {{"corpus", spec.seed}};
  m["outputs"] = {out_dir.string()};
  m.write(out_dir / "manifest.json");
  std::cout << "wrote " << spec.train_count << "/" << spec.val_count << "/" << spec.test_count << " samples to "
            << out_dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- train

int cmd_train(const Common& c, const fs::path& corpus_dir, const fs::path& out, const std::string& resume,
              const std::string& log_path, int argc, char** argv) {
  const json root = resolve_config(c);
  const auto corpus = load_split(corpus_dir, "train");
  std::vector<TrainingSample> val;
  if (fs::is_directory(corpus_dir / "val")) val = load_split(corpus_dir, "val");
  std::uint64_t corpus_seed = 0;
  if (fs::exists(corpus_dir / "corpus.json")) corpus_seed = read_json_file(corpus_dir / "corpus.json").value("seed", 0ULL);

  std::optional<Trainer> trainer;
  if (!resume.empty()) {
    trainer.emplace(load_checkpoint(resume));
  } else {
    NetworkConfig net = section(root, "net", NetworkConfig::desk());
    if (!root.contains("net") || !root.at("net").contains("blocks")) net = NetworkConfig::desk(net.input_size);
    if (root.contains("net")) {
      const auto& j = root.at("net");
      if (j.contains("classifier_hidden")) net.classifier_hidden = j.at("classifier_hidden").get<std::vector<int>>();
      if (j.contains("width_scale")) net.width_scale = j.at("width_scale").get<double>();
    }
    net.validate();
    const TrainConfig tc = section(root, "train", TrainConfig{});
    tc.validate();
    trainer.emplace(net, tc, corpus_seed);
  }
  trainer->set_diagnostic_path(out.string() + ".nonfinite");

  const fs::path log_file = log_path.empty() ? fs::path(out.string() + ".log.jsonl") : fs::path(log_path);
  std::ofstream log(log_file, resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) fail(ErrorKind::Io, "cannot write " + log_file.string());
  const std::optional<std::size_t> stop =
      root.contains("stop_step") ? std::optional<std::size_t>(root.at("stop_step").get<std::size_t>()) : std::nullopt;
  trainer->run(corpus, val.empty() ? nullptr : &val, [&](const json& line) { log << line.dump() << '\n'; }, stop);
  log.flush();

  const Checkpoint ck = trainer->checkpoint();
  save_checkpoint(out, ck);
  Manifest m("train", c, argc, argv);
  m["net"] = ck.net;
  m["train"] = ck.train;
  m["seeds"] = {{"train", ck.train.seed}, {"corpus", ck.corpus_seed}};
  m["inputs"] = {corpus_dir.string()};
  if (!resume.empty()) m["resumed_from"] = resume;
  m["outputs"] = {out.string(), log_file.string()};
  m["steps"] = ck.step;
  m.write(out.string() + ".manifest.json");
  std::cout << "trained to step " << ck.step << ", checkpoint " << out.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- reconstruct

int cmd_reconstruct(const Common& c, const fs::path& checkpoint, const fs::path& cloud_path, const fs::path& out,
                    const std::string& levels_text, double iso, const std::string& rotate_text,
                    const std::string& grid_dump, int argc, char** argv) {
  const json root = resolve_config(c);
  const Checkpoint ck = load_checkpoint(checkpoint);
  ReconstructOptions opts;
  opts.levels = parse_levels(levels_text);
  opts.iso = iso;
  if (root.contains("reconstruct")) {
    const auto& r = root.at("reconstruct");
    opts.padding = r.value("padding", opts.padding);
    opts.dilation = r.value("dilation", opts.dilation);
    opts.batch = r.value("batch", opts.batch);
  }
  const auto rotation = parse_rotation(rotate_text);

  // A directory of sample directories reconstructs each into out/<id>.obj.
  std::vector<std::pair<fs::path, fs::path>> jobs;
  const bool batch_mode = fs::is_directory(cloud_path) && !fs::exists(cloud_path / "cloud.xyz");
  if (batch_mode) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(cloud_path))
      if (e.is_directory() && fs::exists(e.path() / "cloud.xyz")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) jobs.emplace_back(d, out / (d.filename().string() + ".obj"));
    std::error_code ec;
    fs::create_directories(out, ec);
  } else {
    jobs.emplace_back(cloud_path, out);
  }

  json produced = json::array();
  json failures = json::array();
  for (const auto& [in, dst] : jobs) {
    PointCloud cloud;
    cloud.points = load_cloud(in);
    if (rotation)
      for (auto& p : cloud.points) p = rotation->matrix() * p;
    try {
      const auto r = reconstruct(ck.net, ck.params, cloud, opts);
      save_mesh(r.mesh, dst);
      if (!grid_dump.empty() && !batch_mode) write_grid(grid_dump, r.grid.finest());
      produced.push_back({{"input", in.string()}, {"mesh", dst.string()}, {"evaluations", r.grid.evaluations},
                          {"vertices", r.mesh.vertices.size()}, {"triangles", r.mesh.triangles.size()}});
    } catch (const Error& e) {
      if (!batch_mode || e.kind() != ErrorKind::EmptyField) throw;
      failures.push_back({{"input", in.string()}, {"error", e.what()}});
      std::cerr << in.string() << ": " << e.what() << "\n";
    }
  }

  Manifest m("reconstruct", c, argc, argv);
  m["checkpoint"] = checkpoint.string();
  m["levels"] = opts.levels;
  m["iso"] = opts.iso;
  m["padding"] = opts.padding;
  m["dilation"] = opts.dilation;
  if (rotation) m["rotation"] = {{"axis", std::string(1, rotation->axis)}, {"degrees", rotation->degrees}};
  m["seeds"] = {{"train", ck.train.seed}, {"corpus", ck.corpus_seed}};
  m["inputs"] = {cloud_path.string()};
  m["outputs"] = produced;
  if (!failures.empty()) m["empty_fields"] = failures;
  m.write(batch_mode ? out / "manifest.json" : fs::path(out.string() + ".manifest.json"));
  std::cout << "reconstructed " << produced.size() << " mesh(es)";
  if (!failures.empty()) std::cout << ", " << failures.size() << " empty field(s)";
  std::cout << "\n";
  return kOk;
}

// ---------------------------------------------------------------- eval

struct GroundTruth {
  TriangleMesh mesh;
  std::optional<Solid> solid;
};

GroundTruth load_ground_truth(const fs::path& path, const std::optional<Rotation>& rot, int resolution) {
  fs::path p = path;
  if (fs::is_directory(p)) p = p / "shape.json";
  GroundTruth gt;
  if (p.extension() == ".json") {
    ShapeSpec spec;
    try {
      spec = read_json_file(p).get<ShapeSpec>();
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, p.string() + ": " + e.what());
    }
    if (rot) spec = rotated(spec, rot->matrix());
    gt.mesh = composite_ground_truth_mesh(spec, resolution);
    gt.solid = Solid::of(spec);
  } else {
    gt.mesh = load_mesh(p);
    if (rot) gt.mesh = transformed(gt.mesh, rot->matrix());
    if (!gt.mesh.watertight) fail(ErrorKind::NotWatertight, p.string() + " is not watertight");
  }
  return gt;
}

int cmd_eval(const Common& c, const fs::path& pred, const fs::path& gt_path, const fs::path& out, std::size_t samples,
             std::uint64_t seed, const std::string& rotate_text, int gt_resolution, int argc, char** argv) {
  const auto rotation = parse_rotation(rotate_text);
  if (samples < 1) fail(ErrorKind::Config, "--samples must be positive");

  std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> pairs;
  if (fs::is_directory(pred)) {
    std::vector<fs::path> meshes;
    for (const auto& e : fs::directory_iterator(pred)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".obj" || ext == ".off")) meshes.push_back(e.path());
    }
    std::sort(meshes.begin(), meshes.end());
    for (const auto& m : meshes) {
      const std::string id = m.stem().string();
      fs::path g = gt_path / id;
      if (!fs::exists(g)) g = gt_path / (id + ".json");
      if (!fs::exists(g)) g = gt_path / (id + ".obj");
      if (!fs::exists(g)) fail(ErrorKind::Io, "no ground truth for " + id + " under " + gt_path.string());
      pairs.push_back({id, {m, g}});
    }
    if (pairs.empty()) fail(ErrorKind::Io, "no meshes in " + pred.string());
  } else {
    pairs.push_back({pred.stem().string(), {pred, gt_path}});
  }

  json rows = json::array();
  std::vector<MetricReport> reports;
  for (const auto& [id, paths] : pairs) {
    const TriangleMesh p = load_mesh(paths.first);
    const GroundTruth gt = load_ground_truth(paths.second, rotation, gt_resolution);
    const auto r = evaluate_mesh(p, gt.mesh, samples, seed, gt.solid ? &*gt.solid : nullptr);
    reports.push_back(r);
    json row = r;
    row["id"] = id;
    rows.push_back(row);
  }
  json report = {{"mean", mean_report(reports)}, {"shapes", rows}, {"samples", samples}, {"seed", seed}};
  if (rotation) report["rotation"] = {{"axis", std::string(1, rotation->axis)}, {"degrees", rotation->degrees}};
  write_text(out, report.dump(2) + "\n");

  Manifest m("eval", c, argc, argv);
  m["seeds"] = {{"eval", seed}};
  m["samples"] = samples;
  m["inputs"] = {pred.string(), gt_path.string()};
  m["outputs"] = {out.string()};
  if (rotation) m["rotation"] = report["rotation"];
  m.write(out.string() + ".manifest.json");
  const auto mean = mean_report(reports);
  std::printf("iou %.4f  chamfer_l1 %.4f  normal_consistency %.4f  (%zu shape%s)\n", mean.iou.value,
              mean.chamfer_l1.value, mean.normal_consistency.value, reports.size(), reports.size() == 1 ? "" : "s");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Occupancy-field surface reconstruction from point clouds"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", OCCRECON_VERSION);
  Common common;
  app.add_option("--config", common.config, "JSON config with corpus/net/train/reconstruct sections");
  app.add_option("--set", common.sets, "Override a config value, e.g. --set train.learning_rate=5e-4")
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app.add_option("--threads", common.threads, "Worker threads (0: runtime default)")->check(CLI::NonNegativeNumber);

  auto* gen = app.add_subcommand("gen", "Generate a procedural train/val/test corpus");
  std::string gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Corpus seed (overrides the config)");

  auto* tr = app.add_subcommand("train", "Train the occupancy network");
  std::string tr_corpus, tr_out, tr_resume, tr_log;
  tr->add_option("--corpus", tr_corpus, "Corpus directory from gen")->required();
  tr->add_option("--out", tr_out, "Checkpoint to write")->required();
  tr->add_option("--resume", tr_resume, "Continue from this checkpoint");
  tr->add_option("--log", tr_log, "JSON-lines log (default <out>.log.jsonl)");

  auto* rc = app.add_subcommand("reconstruct", "Extract a mesh from a point cloud");
  std::string rc_ck, rc_cloud, rc_out, rc_levels = "64,128,256", rc_rotate, rc_grid;
  double rc_iso = 0.5;
  rc->add_option("--checkpoint", rc_ck, "Trained checkpoint")->required();
  rc->add_option("--cloud", rc_cloud, "XYZ file, sample directory, or directory of samples")->required();
  rc->add_option("--out", rc_out, "OBJ mesh (or directory in batch mode)")->required();
  rc->add_option("--levels", rc_levels, "Grid cells per axis, coarse to fine");
  rc->add_option("--iso", rc_iso, "Interior probability threshold");
  rc->add_option("--rotate", rc_rotate, "Rotate the input first, \"axis,degrees\"");
  rc->add_option("--grid-dump", rc_grid, "Write the finest grid as OGRD binary");

  auto* ev = app.add_subcommand("eval", "Score meshes against ground truth");
  std::string ev_pred, ev_gt, ev_out, ev_rotate;
  std::size_t ev_samples = 100000;
  std::uint64_t ev_seed = 0;
  int ev_res = 128;
  ev->add_option("--pred", ev_pred, "Predicted mesh or directory of meshes")->required();
  ev->add_option("--gt", ev_gt, "shape.json, sample directory, mesh, or directory of these")->required();
  ev->add_option("--out", ev_out, "Report JSON")->required();
  ev->add_option("--samples", ev_samples, "Monte-Carlo samples per metric direction");
  ev->add_option("--seed", ev_seed, "Sampling seed");
  ev->add_option("--rotate", ev_rotate, "Rotate the ground truth first, \"axis,degrees\"");
  ev->add_option("--gt-resolution", ev_res, "Grid cells for meshing procedural ground truth");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (common.threads > 0) omp_set_num_threads(common.threads);

  try {
    if (*gen) return cmd_gen(common, gen_out, gen_seed, argc, argv);
    if (*tr) return cmd_train(common, tr_corpus, tr_out, tr_resume, tr_log, argc, argv);
    if (*rc) return cmd_reconstruct(common, rc_ck, rc_cloud, rc_out, rc_levels, rc_iso, rc_rotate, rc_grid, argc, argv);
    if (*ev) return cmd_eval(common, ev_pred, ev_gt, ev_out, ev_samples, ev_seed, ev_rotate, ev_res, argc, argv);
  } catch (const Error& e) {
    std::cerr << "occrecon: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "occrecon: ConfigError: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "occrecon: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
