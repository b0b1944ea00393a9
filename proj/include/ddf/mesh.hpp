#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ddf/vec.hpp"

namespace ddf {

using Face = std::array<std::uint32_t, 3>;

/// Indexed triangle soup with a cached bounding box.
///
/// Meshes are treated as immutable values once built; every mutating
/// operation (normalize, transforms) returns a new mesh.
class TriangleMesh {
public:
  TriangleMesh() = default;

  /// Validates face indices and computes the bounding box.
  TriangleMesh(std::vector<Vec3> vertices, std::vector<Face> faces)
      : vertices_(std::move(vertices)), faces_(std::move(faces)) {
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      for (auto idx : faces_[f]) {
        if (idx >= vertices_.size()) {
          throw DataError("face " + std::to_string(f) + " references vertex " +
                          std::to_string(idx) + " but the mesh has " +
                          std::to_string(vertices_.size()) + " vertices");
        }
      }
    }
    for (const auto& v : vertices_) bbox_.expand(v);
  }

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Face>& faces() const { return faces_; }
  const Aabb& bbox() const { return bbox_; }
  std::size_t num_faces() const { return faces_.size(); }
  std::size_t num_vertices() const { return vertices_.size(); }
  bool empty() const { return faces_.empty(); }

  std::array<Vec3, 3> triangle(std::size_t f) const {
    const Face& fc = faces_[f];
    return {vertices_[fc[0]], vertices_[fc[1]], vertices_[fc[2]]};
  }

  /// Unnormalized (p1 - p0) x (p2 - p0).
  Vec3 face_cross(std::size_t f) const {
    const auto [a, b, c] = triangle(f);
    return cross(b - a, c - a);
  }

  double face_area(std::size_t f) const { return 0.5 * norm(face_cross(f)); }

  Vec3 face_normal(std::size_t f) const { return normalized(face_cross(f)); }

  double total_area() const {
    double s = 0.0;
    for (std::size_t f = 0; f < faces_.size(); ++f) s += face_area(f);
    return s;
  }

  Aabb face_bbox(std::size_t f) const {
    Aabb b;
    for (const auto& p : triangle(f)) b.expand(p);
    return b;
  }

private:
  std::vector<Vec3> vertices_;
  std::vector<Face> faces_;
  Aabb bbox_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

inline double parse_double(std::string_view tok, std::size_t line) {
  // std::from_chars for double is available in libstdc++ >= 11.
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
    throw DataError("line " + std::to_string(line) + ": bad number '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace detail

/// Parses ASCII OBJ from a stream. Only `v` and `f` records are used; polygons
/// are fan-triangulated around their first corner. Negative (relative)
/// indices are resolved against the vertices read so far.
inline TriangleMesh parse_obj(std::istream& in) {
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  std::string raw;
  std::size_t line_no = 0;
  std::vector<std::int64_t> poly;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto toks = detail::split_ws(line);
    if (toks[0] == "v") {
      if (toks.size() < 4) {
        throw DataError("line " + std::to_string(line_no) + ": vertex needs 3 coordinates");
      }
      verts.push_back({detail::parse_double(toks[1], line_no), detail::parse_double(toks[2], line_no),
                       detail::parse_double(toks[3], line_no)});
    } else if (toks[0] == "f") {
      if (toks.size() < 4) {
        throw DataError("line " + std::to_string(line_no) + ": face needs at least 3 vertices");
      }
      poly.clear();
      for (std::size_t i = 1; i < toks.size(); ++i) {
        // "v", "v/vt", "v//vn", "v/vt/vn": the vertex index is the first field.
        std::string_view t = toks[i].substr(0, toks[i].find('/'));
        std::int64_t idx = 0;
        const auto res = std::from_chars(t.data(), t.data() + t.size(), idx);
        if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || idx == 0) {
          throw DataError("line " + std::to_string(line_no) + ": bad face index '" +
                          std::string(toks[i]) + "'");
        }
        const std::int64_t resolved = idx > 0 ? idx - 1 : static_cast<std::int64_t>(verts.size()) + idx;
        if (resolved < 0 || resolved >= static_cast<std::int64_t>(verts.size())) {
          throw DataError("line " + std::to_string(line_no) + ": face index " + std::to_string(idx) +
                          " out of range");
        }
        poly.push_back(resolved);
      }
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
        faces.push_back({static_cast<std::uint32_t>(poly[0]), static_cast<std::uint32_t>(poly[k]),
                         static_cast<std::uint32_t>(poly[k + 1])});
      }
    }
    // vn, vt, o, g, s, usemtl, mtllib: ignored.
  }
  return TriangleMesh(std::move(verts), std::move(faces));
}

inline TriangleMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mesh file '" + path + "'");
  try {
    return parse_obj(in);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void write_obj(std::ostream& out, const TriangleMesh& mesh) {
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices()) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& f : mesh.faces()) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

inline void save_mesh(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write mesh file '" + path + "'");
  write_obj(out, mesh);
}

/// Applies p -> scale * (p - center) to every vertex.
inline TriangleMesh transformed(const TriangleMesh& mesh, const Vec3& center, double scale) {
  std::vector<Vec3> v;
  v.reserve(mesh.num_vertices());
  for (const auto& p : mesh.vertices()) v.push_back((p - center) * scale);
  return TriangleMesh(std::move(v), mesh.faces());
}

/// Centers the mesh at the origin and scales it uniformly so that the longest
/// bounding-box edge has length 2.
inline TriangleMesh normalize(const TriangleMesh& mesh) {
  if (mesh.num_vertices() == 0) throw DataError("cannot normalize an empty mesh");
  const Aabb& b = mesh.bbox();
  const Vec3 e = b.extent();
  const double longest = std::max({e.x, e.y, e.z});
  if (!(longest > 0.0)) throw DataError("cannot normalize a mesh with a zero-extent bounding box");
  return transformed(mesh, b.center(), 2.0 / longest);
}

}  // namespace ddf
