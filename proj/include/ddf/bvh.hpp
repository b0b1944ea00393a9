#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "ddf/mesh.hpp"
#include "ddf/rng.hpp"

namespace ddf {

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length

  Vec3 at(double t) const { return origin + direction * t; }
};

struct HitRecord {
  double t = 0.0;
  std::uint32_t face = 0;
  Vec3 geometric_normal;  // unit, oriented by the face winding
  double u = 0.0, v = 0.0;  // barycentric weights of vertices 1 and 2
};

/// Moller-Trumbore with |det| < 1e-9 treated as parallel (no hit).
/// Returns t and the barycentric pair without range filtering on t.
struct TriangleHit {
  double t, u, v;
};

inline constexpr double kDetEpsilon = 1e-9;

inline std::optional<TriangleHit> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b,
                                                     const Vec3& c) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pvec = cross(ray.direction, e2);
  const double det = dot(e1, pvec);
  if (std::abs(det) < kDetEpsilon) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tvec = ray.origin - a;
  const double u = dot(tvec, pvec) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qvec = cross(tvec, e1);
  const double v = dot(ray.direction, qvec) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  return TriangleHit{dot(e2, qvec) * inv, u, v};
}

namespace detail {

/// Strict "closer than" ordering used by both the BVH and the linear scan so
/// the two agree exactly when several faces share the nearest t.
inline bool closer(double t, std::uint32_t face, double best_t, std::uint32_t best_face) {
  return t < best_t || (t == best_t && face < best_face);
}

inline HitRecord make_hit(const TriangleMesh& mesh, std::uint32_t f, const TriangleHit& h) {
  return {h.t, f, mesh.face_normal(f), h.u, h.v};
}

/// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
inline Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

}  // namespace detail

/// Nearest hit by testing every face.
inline std::optional<HitRecord> intersect_linear(const TriangleMesh& mesh, const Ray& ray, double t_min,
                                                 double t_max) {
  double best_t = kInf;
  std::uint32_t best_face = UINT32_MAX;
  TriangleHit best{};
  for (std::uint32_t f = 0; f < mesh.num_faces(); ++f) {
    const auto [a, b, c] = mesh.triangle(f);
    const auto h = intersect_triangle(ray, a, b, c);
    if (!h || h->t < t_min || h->t > t_max) continue;
    if (detail::closer(h->t, f, best_t, best_face)) {
      best_t = h->t;
      best_face = f;
      best = *h;
    }
  }
  if (best_face == UINT32_MAX) return std::nullopt;
  return detail::make_hit(mesh, best_face, best);
}

struct SurfacePointQuery {
  double distance;
  Vec3 point;
  std::uint32_t face;
};

/// Bounding volume hierarchy over a mesh's faces: median split on the
/// longest centroid axis, at most `kLeafSize` triangles per leaf.
///
/// The Bvh keeps a reference to its mesh; the mesh must outlive it.
class Bvh {
public:
  static constexpr std::uint32_t kLeafSize = 4;

  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // leaf: offset into order(); inner: index of the right child
    std::uint32_t count = 0;  // triangles in a leaf; 0 marks an inner node (left child = self + 1)
    bool leaf() const { return count > 0; }
  };

  explicit Bvh(const TriangleMesh& mesh) : mesh_(&mesh) {
    if (mesh.empty()) throw DataError("cannot build a BVH over an empty mesh");
    const std::size_t n = mesh.num_faces();
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0u);
    boxes_.resize(n);
    centroids_.resize(n);
    for (std::size_t f = 0; f < n; ++f) {
      boxes_[f] = mesh.face_bbox(f);
      const auto [a, b, c] = mesh.triangle(f);
      centroids_[f] = (a + b + c) / 3.0;
    }
    nodes_.reserve(2 * n / kLeafSize + 1);
    build(0, static_cast<std::uint32_t>(n));
    boxes_.clear();
    boxes_.shrink_to_fit();
    centroids_.clear();
    centroids_.shrink_to_fit();
  }

  const TriangleMesh& mesh() const { return *mesh_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::uint32_t>& order() const { return order_; }

  std::size_t depth() const { return depth_from(0); }

  /// Nearest hit with t in [t_min, t_max]; identical to intersect_linear.
  std::optional<HitRecord> intersect(const Ray& ray, double t_min, double t_max) const {
    const Vec3 inv{1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z};
    double best_t = kInf;
    std::uint32_t best_face = UINT32_MAX;
    TriangleHit best{};
    std::uint32_t stack[64];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const Node& node = nodes_[stack[--sp]];
      double t0, t1;
      const double limit = std::min(t_max, best_t);
      if (!node.box.ray_interval(ray.origin, inv, t_min, limit, t0, t1)) continue;
      if (node.leaf()) {
        for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
          const std::uint32_t f = order_[i];
          const auto [a, b, c] = mesh_->triangle(f);
          const auto h = intersect_triangle(ray, a, b, c);
          if (!h || h->t < t_min || h->t > t_max) continue;
          if (detail::closer(h->t, f, best_t, best_face)) {
            best_t = h->t;
            best_face = f;
            best = *h;
          }
        }
        continue;
      }
      const std::uint32_t self = static_cast<std::uint32_t>(&node - nodes_.data());
      const std::uint32_t left = self + 1, right = node.first;
      // Push the farther child first so the nearer one is popped next.
      double l0, l1, r0, r1;
      const bool hit_l = nodes_[left].box.ray_interval(ray.origin, inv, t_min, limit, l0, l1);
      const bool hit_r = nodes_[right].box.ray_interval(ray.origin, inv, t_min, limit, r0, r1);
      if (hit_l && hit_r) {
        if (l0 <= r0) {
          stack[sp++] = right;
          stack[sp++] = left;
        } else {
          stack[sp++] = left;
          stack[sp++] = right;
        }
      } else if (hit_l) {
        stack[sp++] = left;
      } else if (hit_r) {
        stack[sp++] = right;
      }
    }
    if (best_face == UINT32_MAX) return std::nullopt;
    return detail::make_hit(*mesh_, best_face, best);
  }

  /// Every hit with t >= t_min, unsorted.
  void all_hits(const Ray& ray, double t_min, std::vector<HitRecord>& out) const {
    out.clear();
    const Vec3 inv{1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z};
    std::uint32_t stack[64];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const std::uint32_t idx = stack[--sp];
      const Node& node = nodes_[idx];
      double t0, t1;
      if (!node.box.ray_interval(ray.origin, inv, t_min, kInf, t0, t1)) continue;
      if (!node.leaf()) {
        stack[sp++] = node.first;
        stack[sp++] = idx + 1;
        continue;
      }
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t f = order_[i];
        const auto [a, b, c] = mesh_->triangle(f);
        const auto h = intersect_triangle(ray, a, b, c);
        if (h && h->t >= t_min) out.push_back(detail::make_hit(*mesh_, f, *h));
      }
    }
  }

  /// Exact closest point on the mesh surface.
  SurfacePointQuery closest_point(const Vec3& p) const {
    double best_d2 = kInf;
    Vec3 best_p;
    std::uint32_t best_face = 0;
    std::uint32_t stack[64];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const std::uint32_t idx = stack[--sp];
      const Node& node = nodes_[idx];
      if (node.box.squared_distance(p) > best_d2) continue;
      if (node.leaf()) {
        for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
          const std::uint32_t f = order_[i];
          const auto [a, b, c] = mesh_->triangle(f);
          const Vec3 q = detail::closest_on_triangle(p, a, b, c);
          const double d2 = squared_norm(q - p);
          if (d2 < best_d2 || (d2 == best_d2 && f < best_face)) {
            best_d2 = d2;
            best_p = q;
            best_face = f;
          }
        }
        continue;
      }
      const std::uint32_t left = idx + 1, right = node.first;
      const double dl = nodes_[left].box.squared_distance(p);
      const double dr = nodes_[right].box.squared_distance(p);
      if (dl <= dr) {
        stack[sp++] = right;
        stack[sp++] = left;
      } else {
        stack[sp++] = left;
        stack[sp++] = right;
      }
    }
    return {std::sqrt(best_d2), best_p, best_face};
  }

private:
  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto index = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    Aabb box, cbox;
    for (std::uint32_t i = begin; i < end; ++i) {
      box.expand(boxes_[order_[i]]);
      cbox.expand(centroids_[order_[i]]);
    }
    nodes_[index].box = box;
    if (end - begin <= kLeafSize) {
      nodes_[index].first = begin;
      nodes_[index].count = end - begin;
      return index;
    }
    const int axis = cbox.longest_axis();
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double ca = centroids_[a][axis], cb = centroids_[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    build(begin, mid);
    const std::uint32_t right = build(mid, end);
    nodes_[index].first = right;
    nodes_[index].count = 0;
    return index;
  }

  std::size_t depth_from(std::uint32_t idx) const {
    const Node& n = nodes_[idx];
    if (n.leaf()) return 1;
    return 1 + std::max(depth_from(idx + 1), depth_from(n.first));
  }

  const TriangleMesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
  std::vector<Aabb> boxes_;
  std::vector<Vec3> centroids_;
};

/// Point-in-solid test by crossing parity along a ray (odd = inside).
///
/// Points outside the mesh bounding box are outside. A parity ray is treated
/// as degenerate when a hit lies within 1e-7 (barycentric) of a triangle
/// edge, two crossings are closer than 1e-7 in t, or the point sits on the
/// surface; degenerate rays are re-shot along new directions (up to 8
/// retries) and the final answer is the majority over all attempts.
/// Requires a closed mesh.
class InsideTester {
public:
  static constexpr int kMaxAttempts = 9;
  static constexpr double kGrazeEps = 1e-7;

  explicit InsideTester(const Bvh& bvh) : bvh_(&bvh) {
    Rng rng(0x5EEDF00Dull);
    for (auto& d : dirs_) {
      // Uniform on the sphere; fixed so the test is reproducible and thread-safe.
      const double z = uniform(rng, -1.0, 1.0);
      const double phi = uniform(rng, 0.0, kTwoPi);
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      d = {r * std::cos(phi), r * std::sin(phi), z};
    }
  }

  /// Parity along one specific direction; nullopt when the ray is degenerate.
  std::optional<bool> parity(const Vec3& p, const Vec3& dir, std::vector<HitRecord>& scratch) const {
    bvh_->all_hits({p, dir}, 0.0, scratch);
    std::vector<double> ts;
    ts.reserve(scratch.size());
    for (const auto& h : scratch) {
      const double w = 1.0 - h.u - h.v;
      if (h.t < kGrazeEps || h.u < kGrazeEps || h.v < kGrazeEps || w < kGrazeEps) return std::nullopt;
      ts.push_back(h.t);
    }
    std::sort(ts.begin(), ts.end());
    for (std::size_t i = 1; i < ts.size(); ++i) {
      if (ts[i] - ts[i - 1] < kGrazeEps) return std::nullopt;
    }
    return (ts.size() % 2) == 1;
  }

  bool operator()(const Vec3& p) const {
    if (!bvh_->mesh().bbox().contains(p)) return false;
    std::vector<HitRecord> scratch;
    int votes_inside = 0;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const auto r = parity(p, dirs_[attempt], scratch);
      if (r) return *r;
      // Degenerate: still count the raw crossing parity toward the vote.
      votes_inside += (scratch.size() % 2) == 1 ? 1 : 0;
    }
    return 2 * votes_inside > kMaxAttempts;
  }

  const std::array<Vec3, kMaxAttempts>& directions() const { return dirs_; }

private:
  const Bvh* bvh_;
  std::array<Vec3, kMaxAttempts> dirs_;
};

inline bool is_inside(const Bvh& bvh, const Vec3& p) { return InsideTester(bvh)(p); }

}  // namespace ddf
