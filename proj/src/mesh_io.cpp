#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "occ/errors.hpp"
#include "occ/geometry.hpp"

namespace occ {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// OBJ face tokens look like "7", "7/2", "7//3" or "-1".
int parse_obj_index(const std::string& token, int vertex_count, int line_no) {
  const std::string head = token.substr(0, token.find('/'));
  int idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stoi(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": bad face index '" + token + "'");
  }
  if (idx < 0) idx = vertex_count + idx + 1;
  if (idx < 1 || idx > vertex_count)
    fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": face index " + head + " out of range");
  return idx - 1;
}

void append_fan(TriangleMesh& mesh, const std::vector<int>& poly) {
  for (std::size_t k = 1; k + 1 < poly.size(); ++k) mesh.triangles.push_back({poly[0], poly[k], poly[k + 1]});
}

// Next non-empty, non-comment line of an OFF stream.
bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

// 17 significant digits so a written mesh reads back bit-for-bit.
void write_coord(std::ostream& out, const Vec3& v) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g", v.x(), v.y(), v.z());
  out << buf;
}

}  // namespace

MeshFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = lower(path.extension().string());
  if (ext == ".obj") return MeshFormat::Obj;
  if (ext == ".off") return MeshFormat::Off;
  fail(ErrorKind::Parse, "unsupported mesh extension '" + ext + "' (expected .obj or .off)");
}

TriangleMesh read_obj(std::istream& in) {
  TriangleMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z()))
        fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": malformed vertex");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string token;
      while (ls >> token) poly.push_back(parse_obj_index(token, static_cast<int>(mesh.vertices.size()), line_no));
      if (poly.size() < 3) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": face with fewer than 3 vertices");
      append_fan(mesh, poly);
    }
  }
  finalize_mesh(mesh);
  return mesh;
}

TriangleMesh read_off(std::istream& in) {
  std::string line;
  if (!next_data_line(in, line)) fail(ErrorKind::Parse, "empty OFF file");
  std::istringstream header(line);
  std::string magic;
  header >> magic;
  if (magic != "OFF") fail(ErrorKind::Parse, "missing OFF header");

  long nv = -1, nf = -1, ne = 0;
  if (!(header >> nv >> nf)) {
    if (!next_data_line(in, line)) fail(ErrorKind::Parse, "missing OFF counts");
    std::istringstream counts(line);
    if (!(counts >> nv >> nf)) fail(ErrorKind::Parse, "malformed OFF counts");
    counts >> ne;
  }
  if (nv < 0 || nf < 0) fail(ErrorKind::Parse, "negative OFF counts");

  TriangleMesh mesh;
  mesh.vertices.reserve(nv);
  for (long i = 0; i < nv; ++i) {
    if (!next_data_line(in, line)) fail(ErrorKind::Parse, "truncated OFF vertex list");
    std::istringstream ls(line);
    Vec3 v;
    if (!(ls >> v.x() >> v.y() >> v.z())) fail(ErrorKind::Parse, "malformed OFF vertex " + std::to_string(i));
    mesh.vertices.push_back(v);
  }
  for (long f = 0; f < nf; ++f) {
    if (!next_data_line(in, line)) fail(ErrorKind::Parse, "truncated OFF face list");
    std::istringstream ls(line);
    int n = 0;
    if (!(ls >> n) || n < 3) fail(ErrorKind::Parse, "malformed OFF face " + std::to_string(f));
    std::vector<int> poly(n);
    for (int k = 0; k < n; ++k) {
      if (!(ls >> poly[k])) fail(ErrorKind::Parse, "malformed OFF face " + std::to_string(f));
      if (poly[k] < 0 || poly[k] >= nv) fail(ErrorKind::Parse, "OFF face index " + std::to_string(poly[k]) + " out of range");
    }
    append_fan(mesh, poly);
  }
  finalize_mesh(mesh);
  return mesh;
}

TriangleMesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return format == MeshFormat::Obj ? read_obj(in) : read_off(in);
}

TriangleMesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, format_from_path(path)); }

void write_obj(std::ostream& out, const TriangleMesh& mesh) {
  for (const auto& v : mesh.vertices) {
    out << "v ";
    write_coord(out, v);
    out << '\n';
  }
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

void write_off(std::ostream& out, const TriangleMesh& mesh) {
  out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.triangles.size() << " 0\n";
  for (const auto& v : mesh.vertices) {
    write_coord(out, v);
    out << '\n';
  }
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path) {
  const MeshFormat format = format_from_path(path);
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  if (format == MeshFormat::Obj)
    write_obj(out, mesh);
  else
    write_off(out, mesh);
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace occ
