#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "occ/errors.hpp"
#include "occ/train.hpp"

namespace occ {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'O', 'C', 'R', 'N'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
bool get(std::istream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

void put_array(std::ostream& out, const Matrix& m) {
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.size()));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void get_array(std::istream& in, Matrix& m, const std::string& section) {
  std::uint64_t n = 0;
  if (!get(in, n)) fail(ErrorKind::Parse, "checkpoint truncated in " + section);
  if (n != static_cast<std::uint64_t>(m.size()))
    fail(ErrorKind::Parse, "checkpoint " + section + " holds " + std::to_string(n) + " values, expected " +
                               std::to_string(m.size()));
  if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(n * sizeof(double))))
    fail(ErrorKind::Parse, "checkpoint truncated in " + section);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string config_hash(const NetworkConfig& net, const TrainConfig& train) {
  const nlohmann::json j = {{"net", net}, {"train", train}};
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto tensors = ck.params.tensors();
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto* m : tensors) shapes.push_back({m->rows(), m->cols()});
  const nlohmann::json header = {{"net", ck.net},         {"train", ck.train},           {"epoch", ck.epoch},
                                 {"step", ck.step},       {"adam_t", ck.adam.t},        {"corpus_seed", ck.corpus_seed},
                                 {"config_hash", ck.config_hash}, {"tensors", shapes}};
  const std::string text = header.dump();

  std::ostringstream out(std::ios::binary);
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* m : tensors) put_array(out, *m);
  for (const auto& m : ck.adam.m) put_array(out, m);
  for (const auto& m : ck.adam.v) put_array(out, m);

  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorKind::Io, "cannot write checkpoint " + path.string());
  const std::string bytes = out.str();
  file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!file) fail(ErrorKind::Io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) fail(ErrorKind::Parse, "checkpoint magic is not OCRN");
  std::uint32_t version = 0;
  if (!get(in, version) || version != kVersion) fail(ErrorKind::Parse, "checkpoint version is unsupported");
  std::uint64_t len = 0;
  if (!get(in, len) || len > (1ULL << 30)) fail(ErrorKind::Parse, "checkpoint header length is invalid");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) fail(ErrorKind::Parse, "checkpoint header is truncated");

  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(text);
    ck.net = header.at("net").get<NetworkConfig>();
    ck.train = header.at("train").get<TrainConfig>();
    ck.epoch = header.at("epoch").get<std::uint64_t>();
    ck.step = header.at("step").get<std::uint64_t>();
    ck.adam.t = header.at("adam_t").get<std::uint64_t>();
    ck.corpus_seed = header.at("corpus_seed").get<std::uint64_t>();
    ck.config_hash = header.at("config_hash").get<std::string>();
    ck.params = make_params(ck.net);
    const auto& shapes = header.at("tensors");
    const auto tensors = ck.params.tensors();
    if (shapes.size() != tensors.size()) fail(ErrorKind::Parse, "checkpoint header tensor list does not match the network");
    for (std::size_t i = 0; i < tensors.size(); ++i)
      if (shapes[i].at(0).get<Eigen::Index>() != tensors[i]->rows() || shapes[i].at(1).get<Eigen::Index>() != tensors[i]->cols())
        fail(ErrorKind::Parse, "checkpoint header tensor " + std::to_string(i) + " has the wrong shape");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("checkpoint header: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Parse) throw;
    fail(ErrorKind::Parse, std::string("checkpoint header: ") + e.what());
  }

  auto tensors = ck.params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) get_array(in, *tensors[i], "parameters[" + std::to_string(i) + "]");
  const std::uint64_t t = ck.adam.t;
  ck.adam = AdamState::zeros_like(ck.params);
  for (std::size_t i = 0; i < tensors.size(); ++i) get_array(in, ck.adam.m[i], "adam.m[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < tensors.size(); ++i) get_array(in, ck.adam.v[i], "adam.v[" + std::to_string(i) + "]");
  ck.adam.t = t;
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::Parse, "checkpoint has trailing bytes after adam.v");
  return ck;
}

}  // namespace occ
