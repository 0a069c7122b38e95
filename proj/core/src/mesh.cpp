// SPDX-License-Identifier: Apache-2.0
#include "hava/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace hava::mesh {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_long(std::string_view s, long long& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string fmt_path(const std::filesystem::path& p) { return p.string(); }

}  // namespace

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

TemplateMesh parse_obj(std::istream& in, const std::string& source_name) {
  std::vector<double> coords;
  std::vector<std::array<long long, 3>> raw_faces;
  std::vector<std::size_t> face_lines;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto tokens = split_ws(line);
    if (tokens.empty() || tokens[0].front() == '#') continue;
    if (tokens[0] == "v") {
      if (tokens.size() < 4) throw ParseError(source_name, lineno, "vertex record needs 3 coordinates");
      for (std::size_t k = 1; k <= 3; ++k) {
        double value = 0.0;
        if (!parse_double(tokens[k], value)) {
          throw ParseError(source_name, lineno, "bad vertex coordinate '" + std::string(tokens[k]) + "'");
        }
        coords.push_back(value);
      }
    } else if (tokens[0] == "f") {
      if (tokens.size() != 4) {
        throw ParseError(source_name, lineno,
                         "face has " + std::to_string(tokens.size() - 1) + " vertices; only triangles are supported");
      }
      std::array<long long, 3> face{};
      for (std::size_t k = 0; k < 3; ++k) {
        auto tok = tokens[k + 1];
        tok = tok.substr(0, tok.find('/'));
        if (!parse_long(tok, face[k])) {
          throw ParseError(source_name, lineno, "bad face index '" + std::string(tokens[k + 1]) + "'");
        }
      }
      raw_faces.push_back(face);
      face_lines.push_back(lineno);
    }
    // vn, vt, o, g, s, usemtl, mtllib and friends are ignored.
  }

  TemplateMesh mesh;
  const std::size_t n = coords.size() / 3;
  mesh.vertices = Matrix(n, 3, std::move(coords));
  mesh.faces.reserve(raw_faces.size());
  for (std::size_t f = 0; f < raw_faces.size(); ++f) {
    Face face{};
    for (std::size_t k = 0; k < 3; ++k) {
      const long long idx = raw_faces[f][k];
      if (idx < 1 || static_cast<std::size_t>(idx) > n) {
        throw ParseError(source_name, face_lines[f],
                         "face index " + std::to_string(idx) + " out of range [1, " + std::to_string(n) + "]");
      }
      face[k] = static_cast<std::uint32_t>(idx - 1);
    }
    mesh.faces.push_back(face);
  }
  return mesh;
}

TemplateMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open OBJ file " + fmt_path(path));
  return parse_obj(in, fmt_path(path));
}

void write_obj(const Matrix& vertices, std::span<const Face> faces, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write OBJ file " + fmt_path(path));
  char buf[128];
  for (std::size_t v = 0; v < vertices.rows(); ++v) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", vertices(v, 0), vertices(v, 1), vertices(v, 2));
    out << buf;
  }
  for (const auto& f : faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw std::runtime_error("write failed for " + fmt_path(path));
}

TemplateMesh build_adjacency(TemplateMesh mesh) {
  const std::size_t n = mesh.vertex_count();
  mesh.adjacency.assign(n, {});
  for (const auto& f : mesh.faces) {
    for (std::size_t k = 0; k < 3; ++k) {
      const auto a = f[k];
      const auto b = f[(k + 1) % 3];
      require(a < n && b < n, "build_adjacency: face index out of range");
      if (a == b) continue;
      mesh.adjacency[a].push_back(b);
      mesh.adjacency[b].push_back(a);
    }
  }
  for (auto& nbrs : mesh.adjacency) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  }
  return mesh;
}

double normalize_index(std::size_t v, std::size_t n) {
  require(n >= 2, "normalize_index: vertex count must be at least 2");
  require(v < n, "normalize_index: index out of range");
  return 2.0 * static_cast<double>(v) / static_cast<double>(n - 1) - 1.0;
}

std::vector<double> fourier_embed(double t, std::size_t bands) {
  std::vector<double> out(2 * bands);
  double freq = std::numbers::pi;
  for (std::size_t k = 0; k < bands; ++k) {
    out[2 * k] = std::sin(freq * t);
    out[2 * k + 1] = std::cos(freq * t);
    freq *= 2.0;
  }
  return out;
}

Matrix vertex_embedding(std::size_t n, std::size_t bands) {
  require(bands >= 1, "vertex_embedding: need at least one band");
  Matrix emb(n, 2 * bands);
  for (std::size_t v = 0; v < n; ++v) {
    const auto row = fourier_embed(normalize_index(v, n), bands);
    std::copy(row.begin(), row.end(), emb.row(v).begin());
  }
  return emb;
}

std::array<Vec3, 3> rotation_matrix(const RotationVector& p) {
  const double angle = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
  std::array<Vec3, 3> r{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
  if (angle < 1e-12) return r;
  const double x = p[0] / angle, y = p[1] / angle, z = p[2] / angle;
  const double s = std::sin(angle), c = std::cos(angle), t = 1.0 - c;
  r[0] = {c + x * x * t, x * y * t - z * s, x * z * t + y * s};
  r[1] = {y * x * t + z * s, c + y * y * t, y * z * t - x * s};
  r[2] = {z * x * t - y * s, z * y * t + x * s, c + z * z * t};
  return r;
}

Matrix apply_pose(const Matrix& vertices, const RotationVector& p, const Vec3& pivot) {
  require(vertices.cols() == 3, "apply_pose: vertices must be N x 3");
  if (std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) < 1e-12) return vertices;
  const auto r = rotation_matrix(p);
  Matrix out(vertices.rows(), 3);
  for (std::size_t v = 0; v < vertices.rows(); ++v) {
    const double d0 = vertices(v, 0) - pivot[0];
    const double d1 = vertices(v, 1) - pivot[1];
    const double d2 = vertices(v, 2) - pivot[2];
    for (std::size_t i = 0; i < 3; ++i) {
      out(v, i) = r[i][0] * d0 + r[i][1] * d1 + r[i][2] * d2 + pivot[i];
    }
  }
  return out;
}

Vec3 centroid(const Matrix& vertices) {
  Vec3 c{0, 0, 0};
  if (vertices.rows() == 0) return c;
  for (std::size_t v = 0; v < vertices.rows(); ++v)
    for (std::size_t i = 0; i < 3; ++i) c[i] += vertices(v, i);
  for (auto& x : c) x /= static_cast<double>(vertices.rows());
  return c;
}

RegionMask parse_region_mask(std::istream& in, std::size_t n, std::string name) {
  RegionMask mask{std::move(name), {}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    long long idx = 0;
    if (tokens.size() != 1 || !parse_long(tokens[0], idx)) {
      throw ParseError(mask.name, lineno, "expected one vertex index per line");
    }
    if (idx < 0 || static_cast<unsigned long long>(idx) >= n) {
      throw ParseError(mask.name, lineno,
                       "vertex index " + std::to_string(idx) + " out of range [0, " + std::to_string(n) + ")");
    }
    mask.indices.push_back(static_cast<std::uint32_t>(idx));
  }
  std::sort(mask.indices.begin(), mask.indices.end());
  mask.indices.erase(std::unique(mask.indices.begin(), mask.indices.end()), mask.indices.end());
  if (mask.indices.empty()) throw std::runtime_error("region mask '" + mask.name + "' is empty");
  return mask;
}

RegionMask load_region_mask(const std::filesystem::path& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open region mask " + fmt_path(path));
  return parse_region_mask(in, n, path.stem().string());
}

void write_region_mask(const RegionMask& mask, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write region mask " + fmt_path(path));
  out << "# region: " << mask.name << '\n';
  for (auto idx : mask.indices) out << idx << '\n';
}

void export_ply_colormap(const TemplateMesh& mesh, std::span<const double> scalars,
                         const std::filesystem::path& path) {
  const std::size_t n = mesh.vertex_count();
  require(scalars.size() == n, "export_ply_colormap: need one scalar per vertex");
  for (double s : scalars) require(std::isfinite(s), "export_ply_colormap: non-finite scalar");

  double lo = 0.0, hi = 0.0;
  if (n > 0) {
    auto [mn, mx] = std::minmax_element(scalars.begin(), scalars.end());
    lo = *mn;
    hi = *mx;
  }

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write PLY file " + fmt_path(path));
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << n << '\n'
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "property float error\n"
      << "element face " << mesh.faces.size() << '\n'
      << "property list uchar int vertex_indices\n"
      << "end_header\n";
  char buf[192];
  for (std::size_t v = 0; v < n; ++v) {
    const double t = hi > lo ? (scalars[v] - lo) / (hi - lo) : 0.0;
    const int red = static_cast<int>(std::lround(255.0 * t));
    const int blue = 255 - red;
    std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %d %d %d %.6f\n", mesh.vertices(v, 0), mesh.vertices(v, 1),
                  mesh.vertices(v, 2), red, 0, blue, scalars[v]);
    out << buf;
  }
  for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  if (!out) throw std::runtime_error("write failed for " + fmt_path(path));
}

TemplateMesh make_icosphere(std::size_t min_vertices, double radius) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {
      {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
      {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
  };
  std::vector<Face> faces = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
      {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
  };
  auto normalize = [](Vec3 v) {
    const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return Vec3{v[0] / len, v[1] / len, v[2] / len};
  };
  for (auto& v : verts) v = normalize(v);

  while (verts.size() < min_vertices) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      const auto idx = static_cast<std::uint32_t>(verts.size());
      verts.push_back(normalize({(verts[a][0] + verts[b][0]) / 2, (verts[a][1] + verts[b][1]) / 2,
                                 (verts[a][2] + verts[b][2]) / 2}));
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const auto ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  // Top-to-bottom ordering. Ring membership is decided on rounded z so that
  // vertices of one latitude ring sort by azimuth.
  std::vector<std::uint32_t> order(verts.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  auto ring = [&](std::uint32_t i) { return std::lround(verts[i][2] * 1e9); };
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (ring(a) != ring(b)) return ring(a) > ring(b);
    return std::atan2(verts[a][1], verts[a][0]) < std::atan2(verts[b][1], verts[b][0]);
  });
  std::vector<std::uint32_t> remap(verts.size());
  for (std::uint32_t newi = 0; newi < order.size(); ++newi) remap[order[newi]] = newi;

  TemplateMesh mesh;
  mesh.vertices = Matrix(verts.size(), 3);
  for (std::uint32_t newi = 0; newi < order.size(); ++newi)
    for (std::size_t k = 0; k < 3; ++k) mesh.vertices(newi, k) = radius * verts[order[newi]][k];
  mesh.faces.reserve(faces.size());
  for (const auto& f : faces) mesh.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
  return build_adjacency(std::move(mesh));
}

}  // namespace hava::mesh
