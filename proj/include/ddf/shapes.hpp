#pragma once

// Procedural watertight test meshes. All faces are wound counter-clockwise
// when seen from outside.

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "ddf/mesh.hpp"

namespace ddf::shapes {

/// Subdivided icosahedron projected onto a sphere. Level 0 has 20 faces and
/// every level multiplies the face count by 4.
inline TriangleMesh icosphere(int subdivisions, double radius = 1.0, const Vec3& center = {}) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p = normalized(p);
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back(normalized((v[a] + v[b]) * 0.5));
      const auto idx = static_cast<std::uint32_t>(v.size() - 1);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const auto a = mid(tri[0], tri[1]);
      const auto b = mid(tri[1], tri[2]);
      const auto c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  for (auto& p : v) p = center + p * radius;
  return TriangleMesh(std::move(v), std::move(f));
}

/// Axis-aligned box with 8 shared vertices and 12 faces.
inline TriangleMesh box(const Vec3& lo, const Vec3& hi) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i) {
    v.push_back({(i & 1) ? hi.x : lo.x, (i & 2) ? hi.y : lo.y, (i & 4) ? hi.z : lo.z});
  }
  std::vector<Face> f = {
      {0, 2, 3}, {0, 3, 1},  // -z
      {4, 5, 7}, {4, 7, 6},  // +z
      {0, 1, 5}, {0, 5, 4},  // -y
      {2, 6, 7}, {2, 7, 3},  // +y
      {0, 4, 6}, {0, 6, 2},  // -x
      {1, 3, 7}, {1, 7, 5},  // +x
  };
  return TriangleMesh(std::move(v), std::move(f));
}

inline TriangleMesh cube(double half = 1.0) { return box({-half, -half, -half}, {half, half, half}); }

/// Square in the plane z = `z`, normal +z, spanning [-half, half]^2.
inline TriangleMesh plane(double half = 1.0, double z = 0.0) {
  std::vector<Vec3> v = {{-half, -half, z}, {half, -half, z}, {half, half, z}, {-half, half, z}};
  return TriangleMesh(std::move(v), {{0, 1, 2}, {0, 2, 3}});
}

/// Star-shaped bumpy sphere: an icosphere whose vertices are pushed radially by
/// a smooth band-limited displacement. Watertight, non-convex, and free of
/// self-intersections for amplitudes below 1.
inline TriangleMesh blob(int subdivisions = 4, double amplitude = 0.3) {
  TriangleMesh base = icosphere(subdivisions);
  std::vector<Vec3> v;
  v.reserve(base.num_vertices());
  for (const auto& p : base.vertices()) {
    const double bump = std::sin(3.0 * p.x + 0.4) * std::cos(2.0 * p.y - 0.3) * std::sin(4.0 * p.z + 1.1) +
                        0.5 * std::cos(5.0 * p.x * p.y + 2.0 * p.z);
    const double r = 1.0 + amplitude * bump / 1.5;
    v.push_back(p * r);
  }
  return TriangleMesh(std::move(v), base.faces());
}

}  // namespace ddf::shapes
