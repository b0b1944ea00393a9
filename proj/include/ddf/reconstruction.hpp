#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ddf/field.hpp"
#include "ddf/neural_field.hpp"
#include "ddf/parallel.hpp"

namespace ddf {

/// Scalar samples on the vertices of a regular grid spanning `box`.
/// Vertex (i, j, k) sits at box.lo + (i, j, k) * spacing; values are
/// non-negative distances or +inf where the field saw nothing.
struct ScalarGrid {
  std::array<int, 3> res{0, 0, 0};
  Aabb box;
  std::vector<double> values;

  ScalarGrid() = default;
  ScalarGrid(std::array<int, 3> r, const Aabb& b, double fill = 0.0)
      : res(r), box(b), values(static_cast<std::size_t>(r[0]) * r[1] * r[2], fill) {
    for (int a = 0; a < 3; ++a) {
      if (r[a] < 2) throw Error("grid needs at least 2 vertices per axis");
    }
  }

  static ScalarGrid cubic(int n, const Aabb& b, double fill = 0.0) { return ScalarGrid({n, n, n}, b, fill); }

  std::size_t size() const { return values.size(); }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(res[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(res[1]) * k);
  }
  double& at(int i, int j, int k) { return values[index(i, j, k)]; }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }

  Vec3 spacing() const {
    const Vec3 e = box.extent();
    return {e.x / (res[0] - 1), e.y / (res[1] - 1), e.z / (res[2] - 1)};
  }
  double voxel_size() const {
    const Vec3 s = spacing();
    return std::max({s.x, s.y, s.z});
  }
  Vec3 position(int i, int j, int k) const {
    const Vec3 s = spacing();
    return box.lo + Vec3{i * s.x, j * s.y, k * s.z};
  }
  Vec3 position(std::size_t idx) const {
    const std::size_t nx = static_cast<std::size_t>(res[0]), ny = static_cast<std::size_t>(res[1]);
    return position(static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny)));
  }
};

/// Fills a grid from an arbitrary function of position.
inline ScalarGrid sample_grid(int resolution, const Aabb& box, const std::function<double(const Vec3&)>& f) {
  ScalarGrid g = ScalarGrid::cubic(resolution, box);
  parallel_for(0, g.size(), [&](std::size_t i) { g.values[i] = f(g.position(i)); }, 256);
  return g;
}

/// Default extraction level for unsigned fields: max(0.5 voxel, 0.01).
inline double default_iso(const ScalarGrid& g) { return std::max(0.5 * g.voxel_size(), 0.01); }

struct UdfGridOptions {
  int resolution = 64;
  std::size_t n_dirs = 512;
  std::size_t chunk = 64;      // grid vertices per batched evaluation
  std::size_t prefilter = 0;   // > 0: vertices whose first k directions all miss are recorded as misses
  double margin = 0.0;         // grid box = backend bounds grown by this fraction of their longest edge
};

/// UDF on a grid over the backend's bounds (plus `margin`). Mesh backends use the exact
/// closest-point distance; other backends the sampled directional minimum.
/// A neural backend is evaluated without marching, so vertices farther
/// than its supervision band read as misses (+inf).
template <DdfBackend B>
ScalarGrid udf_grid(const B& backend, const UdfGridOptions& opt) {
  if (opt.resolution < 8) throw Error("udf grid resolution must be >= 8");
  if (!(opt.margin >= 0.0)) throw Error("udf grid margin must be non-negative");
  const Aabb b = backend.bounds();
  const Vec3 e = b.extent();
  ScalarGrid g = ScalarGrid::cubic(opt.resolution, b.inflated(opt.margin * std::max({e.x, e.y, e.z})), kInf);
  if constexpr (std::same_as<B, OracleField> || std::same_as<B, BruteForceField>) {
    parallel_for(0, g.size(), [&](std::size_t i) { g.values[i] = udf_exact(backend, g.position(i)); }, 256);
  } else {
    auto eval = [&](const auto& field) {
      const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
      const std::size_t n_chunks = (g.size() + chunk - 1) / chunk;
      parallel_for(0, n_chunks, [&](std::size_t c) {
        const std::size_t lo = c * chunk, hi = std::min(g.size(), lo + chunk);
        std::vector<std::size_t> ids;
        std::vector<Vec3> xs;
        for (std::size_t i = lo; i < hi; ++i) {
          ids.push_back(i);
          xs.push_back(g.position(i));
        }
        if (opt.prefilter > 0 && opt.prefilter < opt.n_dirs) {
          std::vector<OrientedPoint> probe;
          for (const Vec3& x : xs) {
            for (std::size_t d = 0; d < opt.prefilter; ++d) probe.push_back(make_oriented(x, spiral_direction(d)));
          }
          const auto t = detail::distances(field, std::span<const OrientedPoint>(probe));
          std::vector<std::size_t> keep_ids;
          std::vector<Vec3> keep_xs;
          for (std::size_t k = 0; k < xs.size(); ++k) {
            bool any = false;
            for (std::size_t d = 0; d < opt.prefilter; ++d) any = any || t[k * opt.prefilter + d] < kInf;
            if (!any) continue;
            keep_ids.push_back(ids[k]);
            keep_xs.push_back(xs[k]);
          }
          ids = std::move(keep_ids);
          xs = std::move(keep_xs);
        }
        if (xs.empty()) return;
        const auto vals = udf_batch(field, std::span<const Vec3>(xs), opt.n_dirs);
        for (std::size_t k = 0; k < ids.size(); ++k) g.values[ids[k]] = vals[k].t();
      });
    };
    if constexpr (std::same_as<B, NeuralField>) {
      eval(backend.with_march(false));
    } else {
      eval(backend);
    }
  }
  return g;
}

/// Extracted level set plus, per output vertex, the grid edge it lies on
/// (edge id = 3 * vertex index + axis).
struct IsoSurface {
  TriangleMesh mesh;
  std::vector<std::uint64_t> vertex_edges;
};

namespace detail {

// Cube corners are numbered by bits (x = 1, y = 2, z = 4). Each face lists
// its corners counter-clockwise as seen from outside the cell.
inline constexpr std::array<std::array<int, 4>, 6> kCubeFaces = {{
    {0, 4, 6, 2},  // -x
    {1, 3, 7, 5},  // +x
    {0, 1, 5, 4},  // -y
    {2, 6, 7, 3},  // +y
    {0, 2, 3, 1},  // -z
    {4, 5, 7, 6},  // +z
}};

/// Local edge key for the edge between two adjacent corners.
constexpr int edge_key(int a, int b) {
  const int lo = std::min(a, b);
  const int axis = (a ^ b) == 1 ? 0 : ((a ^ b) == 2 ? 1 : 2);
  return lo * 3 + axis;
}

/// Directed level-set segments inside one cell, chained into closed loops
/// of local edge keys. Around each face, crossings alternate between
/// "rising" (below -> above, walking counter-clockwise) and "falling";
/// each rising crossing links to a falling one, so every crossing edge has
/// one incoming and one outgoing link. Faces with four crossings are
/// resolved with the bilinear saddle value, which both cells sharing the
/// face compute identically.
inline std::vector<std::vector<int>> cell_loops(const std::array<double, 8>& f, double iso) {
  std::array<int, 24> next;
  next.fill(-1);
  for (const auto& face : kCubeFaces) {
    std::array<int, 4> order{};  // crossing sequence around the face
    std::array<bool, 4> is_rising{};
    int nc = 0;
    for (int e = 0; e < 4; ++e) {
      const int a = face[e], b = face[(e + 1) % 4];
      const bool ba = f[a] < iso, bb = f[b] < iso;
      if (ba == bb) continue;
      order[nc] = edge_key(a, b);
      is_rising[nc] = ba;
      ++nc;
    }
    if (nc == 0) continue;
    if (nc == 2) {
      const int r = is_rising[0] ? order[0] : order[1];
      const int l = is_rising[0] ? order[1] : order[0];
      next[r] = l;
      continue;
    }
    // Four crossings: corners alternate below / above.
    const double a = f[face[0]], b = f[face[1]], c = f[face[2]], d = f[face[3]];
    const double saddle = (a * c - b * d) / (a + c - b - d);
    const bool below_connected = saddle < iso;
    for (int k = 0; k < 4; ++k) {
      if (!is_rising[k]) continue;
      next[order[k]] = below_connected ? order[(k + 1) % 4] : order[(k + 3) % 4];
    }
  }
  std::vector<std::vector<int>> loops;
  std::array<bool, 24> used{};
  for (int s = 0; s < 24; ++s) {
    if (next[s] < 0 || used[s]) continue;
    std::vector<int> loop;
    int e = s;
    while (!used[e]) {
      used[e] = true;
      loop.push_back(e);
      e = next[e];
      if (e < 0) throw Error("marching cubes produced an open loop");
    }
    loops.push_back(std::move(loop));
  }
  return loops;
}

}  // namespace detail

/// Marching cubes at level `iso`. Triangles are wound so their normals
/// point toward increasing field values; vertices on shared grid edges are
/// shared, numbered in cell order. +inf values count as above any level.
inline IsoSurface extract_isosurface(const ScalarGrid& g, double iso) {
  if (!(iso > 0.0) || !std::isfinite(iso)) throw Error("iso level must be positive and finite");
  double big = 0.0;
  for (double v : g.values) {
    if (std::isfinite(v)) big = std::max(big, v);
  }
  big = std::max(2.0 * big, 2.0 * iso);
  auto value = [&](std::size_t idx) {
    const double v = g.values[idx];
    return std::isfinite(v) ? v : big;
  };

  const int cx = g.res[0] - 1, cy = g.res[1] - 1, cz = g.res[2] - 1;
  // Per z-slab triangle lists of global edge ids, merged in order.
  std::vector<std::vector<std::array<std::uint64_t, 3>>> slabs(static_cast<std::size_t>(cz));
  parallel_for(0, static_cast<std::size_t>(cz), [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    auto& tris = slabs[kk];
    for (int j = 0; j < cy; ++j) {
      for (int i = 0; i < cx; ++i) {
        std::array<double, 8> f;
        std::array<std::uint64_t, 8> vid;
        bool any_below = false, any_above = false;
        for (int c = 0; c < 8; ++c) {
          const std::size_t idx = g.index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
          vid[c] = idx;
          f[c] = value(idx);
          (f[c] < iso ? any_below : any_above) = true;
        }
        if (!any_below || !any_above) continue;
        for (const auto& loop : detail::cell_loops(f, iso)) {
          std::vector<std::uint64_t> ids(loop.size());
          for (std::size_t q = 0; q < loop.size(); ++q) {
            const int key = loop[q];
            ids[q] = vid[key / 3] * 3 + static_cast<std::uint64_t>(key % 3);
          }
          // Loops run with the below region on the left; reverse the fan.
          for (std::size_t q = 1; q + 1 < ids.size(); ++q) tris.push_back({ids[0], ids[q + 1], ids[q]});
        }
      }
    }
  });

  IsoSurface out;
  std::unordered_map<std::uint64_t, std::uint32_t> vmap;
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  auto vertex = [&](std::uint64_t edge) {
    const auto [it, inserted] = vmap.try_emplace(edge, static_cast<std::uint32_t>(verts.size()));
    if (inserted) {
      const std::size_t a = edge / 3;
      const int axis = static_cast<int>(edge % 3);
      const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(g.res[0])
                                                            : static_cast<std::size_t>(g.res[0]) * g.res[1]);
      const std::size_t b = a + stride;
      const double fa = value(a), fb = value(b);
      const double t = (iso - fa) / (fb - fa);
      const Vec3 pa = g.position(a), pb = g.position(b);
      verts.push_back(pa + (pb - pa) * t);
      out.vertex_edges.push_back(edge);
    }
    return it->second;
  };
  for (const auto& slab : slabs) {
    for (const auto& t : slab) {
      const Face fc{vertex(t[0]), vertex(t[1]), vertex(t[2])};
      if (fc[0] == fc[1] || fc[1] == fc[2] || fc[0] == fc[2]) continue;
      if (squared_norm(cross(verts[fc[1]] - verts[fc[0]], verts[fc[2]] - verts[fc[0]])) == 0.0) continue;
      faces.push_back(fc);
    }
  }
  out.mesh = TriangleMesh(std::move(verts), std::move(faces));
  return out;
}

inline TriangleMesh marching_cubes(const ScalarGrid& g, double iso) { return extract_isosurface(g, iso).mesh; }

/// Moves every vertex to the first hit along its nearest-hit direction
/// among `n_dirs` spiral directions: x -> x + phi(x, d) d. Any hit lies on
/// the field's surface, so this removes the iso offset of a UDF shell.
/// Vertices with no hit stay put. A neural backend is probed without
/// marching, matching `udf_grid`.
template <DdfBackend B>
TriangleMesh project_to_surface(const TriangleMesh& mesh, const B& backend, std::size_t n_dirs, std::size_t chunk = 64) {
  if (n_dirs < 1) throw Error("projection needs at least one direction");
  std::vector<Vec3> verts = mesh.vertices();
  std::vector<Vec3> dirs(n_dirs);
  for (std::size_t i = 0; i < n_dirs; ++i) dirs[i] = spiral_direction(i);
  auto run = [&](const auto& field) {
    const std::size_t n_chunks = (verts.size() + chunk - 1) / chunk;
    parallel_for(0, n_chunks, [&](std::size_t c) {
      const std::size_t lo = c * chunk, hi = std::min(verts.size(), lo + chunk);
      std::vector<OrientedPoint> pts;
      pts.reserve((hi - lo) * n_dirs);
      for (std::size_t i = lo; i < hi; ++i) {
        for (const Vec3& d : dirs) pts.push_back(make_oriented(verts[i], d));
      }
      const auto t = detail::distances(field, std::span<const OrientedPoint>(pts));
      for (std::size_t i = lo; i < hi; ++i) {
        const std::size_t base = (i - lo) * n_dirs;
        std::size_t best = base;
        for (std::size_t k = base; k < base + n_dirs; ++k) {
          if (t[k] < t[best]) best = k;
        }
        if (t[best] < kInf) verts[i] = verts[i] + pts[best].direction_vec() * t[best];
      }
    });
  };
  if constexpr (std::same_as<B, NeuralField>) {
    run(backend.with_march(false));
  } else {
    run(backend);
  }
  return TriangleMesh(std::move(verts), mesh.faces());
}

/// Field value linearly interpolated at an extracted vertex along its edge.
inline double edge_value_at(const ScalarGrid& g, std::uint64_t edge, const Vec3& p) {
  const std::size_t a = edge / 3;
  const int axis = static_cast<int>(edge % 3);
  const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(g.res[0])
                                                        : static_cast<std::size_t>(g.res[0]) * g.res[1]);
  const Vec3 pa = g.position(a), pb = g.position(a + stride);
  const double t = (p[axis] - pa[axis]) / (pb[axis] - pa[axis]);
  return g.values[a] + t * (g.values[a + stride] - g.values[a]);
}

}  // namespace ddf
