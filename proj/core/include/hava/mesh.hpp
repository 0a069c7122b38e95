// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hava/matrix.hpp"

namespace hava::mesh {

using Face = std::array<std::uint32_t, 3>;
using Vec3 = std::array<double, 3>;
/// Axis-angle rotation: direction is the axis, norm is the angle in radians.
using RotationVector = std::array<double, 3>;

/// Neutral head mesh. Vertex coordinates are in millimeters.
struct TemplateMesh {
  Matrix vertices;  // N x 3
  std::vector<Face> faces;
  /// Per-vertex strictly increasing neighbor lists. Empty until
  /// build_adjacency() has run.
  std::vector<std::vector<std::uint32_t>> adjacency;

  std::size_t vertex_count() const noexcept { return vertices.rows(); }
  bool has_adjacency() const noexcept { return adjacency.size() == vertices.rows(); }
};

struct RegionMask {
  std::string name;
  std::vector<std::uint32_t> indices;  // sorted, unique
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

TemplateMesh parse_obj(std::istream& in, const std::string& source_name = "<stream>");
TemplateMesh load_obj(const std::filesystem::path& path);
void write_obj(const Matrix& vertices, std::span<const Face> faces, const std::filesystem::path& path);

/// Undirected, deduplicated, sorted adjacency induced by the face edges.
TemplateMesh build_adjacency(TemplateMesh mesh);

/// Maps vertex index v of n onto [-1, 1] as 2v/(n-1) - 1.
double normalize_index(std::size_t v, std::size_t n);

/// [sin(2^0 pi t), cos(2^0 pi t), ..., sin(2^(K-1) pi t), cos(2^(K-1) pi t)].
std::vector<double> fourier_embed(double t, std::size_t bands);

/// N x 2K matrix whose row v is fourier_embed(normalize_index(v, N), K).
Matrix vertex_embedding(std::size_t n, std::size_t bands);

/// Rodrigues rotation matrix; norms below 1e-12 give the identity.
std::array<Vec3, 3> rotation_matrix(const RotationVector& p);

/// Rotates every row x to R(p)(x - pivot) + pivot.
Matrix apply_pose(const Matrix& vertices, const RotationVector& p, const Vec3& pivot);

Vec3 centroid(const Matrix& vertices);

RegionMask parse_region_mask(std::istream& in, std::size_t n, std::string name);
RegionMask load_region_mask(const std::filesystem::path& path, std::size_t n);
void write_region_mask(const RegionMask& mask, const std::filesystem::path& path);

/// ASCII PLY with x y z red green blue error per vertex and the mesh faces.
/// Colors ramp linearly from blue (min scalar) to red (max scalar).
void export_ply_colormap(const TemplateMesh& mesh, std::span<const double> scalars,
                         const std::filesystem::path& path);

/// Subdivided icosahedron projected to a sphere of `radius`, refined until it
/// has at least `min_vertices` vertices. Vertices are ordered top to bottom
/// (descending z, then azimuth) so nearby indices are spatially close.
TemplateMesh make_icosphere(std::size_t min_vertices, double radius);

}  // namespace hava::mesh
