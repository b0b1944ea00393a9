#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <concepts>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "ddf/bvh.hpp"
#include "ddf/mesh.hpp"

namespace ddf {

/// Viewing direction as two angles: theta0 is the azimuth in [0, 2pi),
/// theta1 the polar angle in [0, pi] measured from +z.
struct Direction2 {
  double theta0 = 0.0;
  double theta1 = 0.0;
  friend constexpr bool operator==(const Direction2&, const Direction2&) = default;
};

inline Vec3 dir_to_vec(const Direction2& d) {
  const double s1 = std::sin(d.theta1);
  return {std::cos(d.theta0) * s1, std::sin(d.theta0) * s1, std::cos(d.theta1)};
}

/// Inverse of dir_to_vec for unit vectors; the azimuth is wrapped into
/// [0, 2pi) and is 0 at the poles.
inline Direction2 vec_to_dir(const Vec3& v) {
  const double rho = std::hypot(v.x, v.y);
  const double polar = std::atan2(rho, v.z);
  double azimuth = rho > 0.0 ? std::atan2(v.y, v.x) : 0.0;
  if (azimuth < 0.0) azimuth += kTwoPi;
  if (azimuth >= kTwoPi) azimuth -= kTwoPi;
  return {azimuth, polar};
}

struct OrientedPoint {
  Vec3 position;
  Direction2 direction;

  Vec3 direction_vec() const { return dir_to_vec(direction); }
};

inline OrientedPoint make_oriented(const Vec3& position, const Vec3& direction) {
  return {position, vec_to_dir(direction)};
}

/// x + t * theta.
inline Vec3 advance(const OrientedPoint& p, double t) { return p.position + p.direction_vec() * t; }

/// Field value: a non-negative distance or an explicit miss (conceptually +inf).
class DdfValue {
public:
  static DdfValue miss() { return DdfValue(); }
  static DdfValue at(double t) { return DdfValue(t); }

  bool hit() const { return hit_; }
  double t() const { return hit_ ? t_ : kInf; }

  friend bool operator==(const DdfValue&, const DdfValue&) = default;

private:
  DdfValue() = default;
  explicit DdfValue(double t) : t_(t), hit_(true) {}
  double t_ = 0.0;
  bool hit_ = false;
};

/// Distance plus outward-facing normal (n . theta < 0) at the first surface hit.
struct SurfaceHit {
  double t = 0.0;
  Vec3 normal;
  bool degenerate_normal = false;  // neural backends only: gradient vanished
};

/// Uniform query surface shared by the oracle, brute-force, and neural fields.
template <typename B>
concept DdfBackend = requires(const B& b, const OrientedPoint& p) {
  { b.query(p) } -> std::same_as<DdfValue>;
  { b.trace(p) } -> std::same_as<std::optional<SurfaceHit>>;
  { b.normal(p) } -> std::same_as<Vec3>;
  { b.bounds() } -> std::convertible_to<Aabb>;
};

template <typename B>
concept BatchDdfBackend = DdfBackend<B> && requires(const B& b, std::span<const OrientedPoint> in,
                                                    std::span<DdfValue> out,
                                                    std::span<std::optional<SurfaceHit>> hits) {
  b.query_batch(in, out);
  b.trace_batch(in, hits);
};

/// Flips `n` so that it faces against the viewing direction.
inline Vec3 face_against(const Vec3& n, const Vec3& view) { return dot(n, view) > 0.0 ? -n : n; }

/// Field domain for a mesh: its bounding box grown by 5% of the longest edge.
inline Aabb field_bounds(const TriangleMesh& mesh) {
  const Vec3 e = mesh.bbox().extent();
  return mesh.bbox().inflated(0.05 * std::max({e.x, e.y, e.z}));
}

/// Exact field backed by ray casting against the mesh. `Accelerated`
/// selects BVH traversal; otherwise every face is tested.
template <bool Accelerated>
class MeshField {
public:
  explicit MeshField(std::shared_ptr<const TriangleMesh> mesh)
      : mesh_(std::move(mesh)), bvh_(std::make_shared<const Bvh>(*mesh_)), bounds_(field_bounds(*mesh_)) {}
  explicit MeshField(TriangleMesh mesh) : MeshField(std::make_shared<const TriangleMesh>(std::move(mesh))) {}

  const TriangleMesh& mesh() const { return *mesh_; }
  const Bvh& bvh() const { return *bvh_; }
  Aabb bounds() const { return bounds_; }
  std::shared_ptr<const TriangleMesh> mesh_ptr() const { return mesh_; }

  std::optional<HitRecord> hit_record(const OrientedPoint& p) const {
    const Ray ray{p.position, p.direction_vec()};
    if constexpr (Accelerated) {
      return bvh_->intersect(ray, 0.0, kInf);
    } else {
      return intersect_linear(*mesh_, ray, 0.0, kInf);
    }
  }

  DdfValue query(const OrientedPoint& p) const {
    const auto h = hit_record(p);
    return h ? DdfValue::at(h->t) : DdfValue::miss();
  }

  std::optional<SurfaceHit> trace(const OrientedPoint& p) const {
    const auto h = hit_record(p);
    if (!h) return std::nullopt;
    return SurfaceHit{h->t, face_against(h->geometric_normal, p.direction_vec()), false};
  }

  /// Hit face's geometric normal, flipped so that n . theta < 0.
  Vec3 normal(const OrientedPoint& p) const {
    const auto h = trace(p);
    if (!h) throw Error("no surface in direction");
    return h->normal;
  }

  /// Whether the query origin lies inside the (closed) mesh; the field is
  /// answered geometrically there but such queries have no training meaning.
  bool origin_inside(const OrientedPoint& p) const { return is_inside(*bvh_, p.position); }

private:
  std::shared_ptr<const TriangleMesh> mesh_;
  std::shared_ptr<const Bvh> bvh_;
  Aabb bounds_;
};

using OracleField = MeshField<true>;
using BruteForceField = MeshField<false>;

template <DdfBackend B>
DdfValue query(const B& backend, const OrientedPoint& p) {
  return backend.query(p);
}

template <DdfBackend B>
bool visibility(const B& backend, const OrientedPoint& p) {
  return backend.query(p).hit();
}

/// q(x, theta) = x + phi(x, theta) theta.
template <DdfBackend B>
Vec3 surface_point(const B& backend, const OrientedPoint& p) {
  const DdfValue v = backend.query(p);
  if (!v.hit()) throw Error("no surface in direction");
  return advance(p, v.t());
}

template <DdfBackend B>
Vec3 field_normal(const B& backend, const OrientedPoint& p) {
  return backend.normal(p);
}

/// |phi(x, theta) - phi(x + t theta, theta) - t|; +inf when the advanced
/// point no longer sees the surface.
template <DdfBackend B>
double check_eikonal(const B& backend, const OrientedPoint& p, double t) {
  const DdfValue a = backend.query(p);
  const DdfValue b = backend.query({advance(p, t), p.direction});
  if (!a.hit() || !b.hit()) return kInf;
  return std::abs(a.t() - b.t() - t);
}

/// Finite-difference residual of the gradient-consistency identity
///   phi(x, theta') - phi(x, theta) ~= phi(x, theta) * (d_x phi . (theta' - theta))
/// for the small rotation theta' = theta + omega x theta. d_x phi is taken by
/// central differences with step `h`.
template <DdfBackend B>
double gradient_consistency_fd(const B& backend, const OrientedPoint& p, const Vec3& omega, double h = 1e-5) {
  const Vec3 v = p.direction_vec();
  const Vec3 v2 = normalized(v + cross(omega, v));
  const Direction2 d2 = vec_to_dir(v2);
  const DdfValue phi = backend.query(p);
  const DdfValue phi2 = backend.query({p.position, d2});
  if (!phi.hit() || !phi2.hit()) return kInf;
  Vec3 grad;
  for (int a = 0; a < 3; ++a) {
    Vec3 e;
    e[a] = h;
    const DdfValue fp = backend.query({p.position + e, p.direction});
    const DdfValue fm = backend.query({p.position - e, p.direction});
    if (!fp.hit() || !fm.hit()) return kInf;
    grad[a] = (fp.t() - fm.t()) / (2.0 * h);
  }
  const double lhs = phi2.t() - phi.t();
  const double rhs = phi.t() * dot(grad, v2 - v);
  return std::abs(lhs - rhs);
}

// ---------------------------------------------------------------------------
// Unsigned distance: UDF(x) = min over theta of phi(x, theta).
// ---------------------------------------------------------------------------

/// i-th direction of a nested low-discrepancy sphere sequence: a 2D
/// Kronecker lattice (plastic-number generator) pushed through the
/// equal-area cylinder map. Prefixes are nested, so a larger direction
/// budget always contains every direction of a smaller one.
inline Vec3 spiral_direction(std::size_t i) {
  constexpr double g = 1.32471795724474602596;
  constexpr double a1 = 1.0 / g;
  constexpr double a2 = 1.0 / (g * g);
  const double di = static_cast<double>(i);
  double u = 0.5 + a1 * di;
  double w = 0.5 + a2 * di;
  u -= std::floor(u);
  w -= std::floor(w);
  const double z = 1.0 - 2.0 * u;
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = kTwoPi * w;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

inline std::vector<Direction2> spiral_directions(std::size_t n) {
  std::vector<Direction2> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = vec_to_dir(spiral_direction(i));
  return out;
}

namespace detail {

template <DdfBackend B>
void query_many(const B& backend, std::span<const OrientedPoint> pts, std::span<DdfValue> out) {
  if constexpr (BatchDdfBackend<B>) {
    backend.query_batch(pts, out);
  } else {
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = backend.query(pts[i]);
  }
}

template <DdfBackend B>
std::vector<double> distances(const B& backend, std::span<const OrientedPoint> pts) {
  std::vector<DdfValue> vals(pts.size(), DdfValue::miss());
  query_many(backend, pts, std::span<DdfValue>(vals));
  std::vector<double> t(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) t[i] = vals[i].t();
  return t;
}

/// Prefix lengths at which the sampled UDF polishes its current best
/// direction: powers of two from 8, n >> k, and n itself. The set for 2n
/// contains the set for n.
inline std::vector<std::size_t> udf_levels(std::size_t n) {
  std::vector<std::size_t> lv;
  for (std::size_t l = 8; l < n; l *= 2) lv.push_back(l);
  for (std::size_t l = n; l >= 8; l >>= 1) lv.push_back(l);
  lv.push_back(n);
  std::sort(lv.begin(), lv.end());
  lv.erase(std::unique(lv.begin(), lv.end()), lv.end());
  return lv;
}

/// Search half-width for polishing direction i; depends on i only.
inline double polish_spacing(std::size_t i) {
  const std::size_t l = std::max<std::size_t>(8, std::bit_ceil(i + 1));
  return std::sqrt(4.0 * kPi / static_cast<double>(l));
}

/// Golden-section refinement along two tangent axes of each job's start
/// direction, run in lockstep so every step is one batched query.
/// `best[j]` enters as the value at the start direction and leaves as the
/// smallest value seen.
template <DdfBackend B>
void polish_batch(const B& backend, std::span<const Vec3> xs, std::span<const Vec3> start, std::span<const double> spacing,
                  std::span<double> best) {
  constexpr int kIters = 10;
  constexpr double kInvPhi = 0.6180339887498949;
  const std::size_t m = xs.size();
  std::vector<Vec3> center(start.begin(), start.end());
  std::vector<std::array<Vec3, 2>> axes(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto [u, w] = orthonormal_frame(start[j]);
    axes[j] = {u, w};
  }
  std::vector<double> lo(m), hi(m), c(m), d(m), fc(m), fd(m);
  std::vector<OrientedPoint> pts;
  for (int ax = 0; ax < 2; ++ax) {
    auto dir = [&](std::size_t j, double a) {
      return normalized(center[j] * std::cos(a) + axes[j][ax] * std::sin(a));
    };
    pts.resize(2 * m);
    for (std::size_t j = 0; j < m; ++j) {
      lo[j] = -spacing[j];
      hi[j] = spacing[j];
      c[j] = hi[j] - kInvPhi * (hi[j] - lo[j]);
      d[j] = lo[j] + kInvPhi * (hi[j] - lo[j]);
      pts[2 * j] = make_oriented(xs[j], dir(j, c[j]));
      pts[2 * j + 1] = make_oriented(xs[j], dir(j, d[j]));
    }
    auto t = distances(backend, std::span<const OrientedPoint>(pts));
    for (std::size_t j = 0; j < m; ++j) {
      fc[j] = t[2 * j];
      fd[j] = t[2 * j + 1];
    }
    pts.resize(m);
    for (int k = 0; k < kIters; ++k) {
      std::vector<std::uint8_t> took_c(m);
      for (std::size_t j = 0; j < m; ++j) {
        took_c[j] = fc[j] < fd[j];
        if (took_c[j]) {
          hi[j] = d[j];
          d[j] = c[j];
          fd[j] = fc[j];
          c[j] = hi[j] - kInvPhi * (hi[j] - lo[j]);
          pts[j] = make_oriented(xs[j], dir(j, c[j]));
        } else {
          lo[j] = c[j];
          c[j] = d[j];
          fc[j] = fd[j];
          d[j] = lo[j] + kInvPhi * (hi[j] - lo[j]);
          pts[j] = make_oriented(xs[j], dir(j, d[j]));
        }
      }
      t = distances(backend, std::span<const OrientedPoint>(pts));
      for (std::size_t j = 0; j < m; ++j) (took_c[j] ? fc[j] : fd[j]) = t[j];
    }
    for (std::size_t j = 0; j < m; ++j) {
      const double a = fc[j] < fd[j] ? c[j] : d[j];
      const double fa = std::min(fc[j], fd[j]);
      if (fa < best[j]) {
        best[j] = fa;
        center[j] = dir(j, a);
      }
    }
  }
}

}  // namespace detail

/// Sampled UDF at many points: minimum of phi over the first `n_dirs` spiral
/// directions, plus a golden-section polish around the best direction at
/// each prefix level. The polish result depends only on (x, direction
/// index) and the level set for 2n contains that for n, so doubling
/// `n_dirs` never increases a value. Points where every probe misses get a
/// miss.
template <DdfBackend B>
std::vector<DdfValue> udf_batch(const B& backend, std::span<const Vec3> xs, std::size_t n_dirs) {
  if (n_dirs < 2) throw Error("udf needs at least 2 directions");
  const std::size_t n = xs.size();
  std::vector<Vec3> dirs(n_dirs);
  for (std::size_t i = 0; i < n_dirs; ++i) dirs[i] = spiral_direction(i);
  std::vector<OrientedPoint> pts(n * n_dirs);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t i = 0; i < n_dirs; ++i) pts[p * n_dirs + i] = make_oriented(xs[p], dirs[i]);
  }
  const std::vector<double> t = detail::distances(backend, std::span<const OrientedPoint>(pts));

  std::vector<double> result(n, kInf);
  std::vector<std::size_t> best_i(n, SIZE_MAX), polished_i(n, SIZE_MAX);
  std::size_t from = 0;
  for (const std::size_t level : detail::udf_levels(n_dirs)) {
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t i = from; i < level; ++i) {
        if (t[p * n_dirs + i] < result[p]) {
          result[p] = t[p * n_dirs + i];
          best_i[p] = i;
        }
      }
    }
    from = level;
    std::vector<std::size_t> todo;
    for (std::size_t p = 0; p < n; ++p) {
      if (best_i[p] != SIZE_MAX && best_i[p] != polished_i[p]) todo.push_back(p);
    }
    if (todo.empty()) continue;
    std::vector<Vec3> x(todo.size()), start(todo.size());
    std::vector<double> spacing(todo.size()), best(todo.size());
    for (std::size_t k = 0; k < todo.size(); ++k) {
      const std::size_t p = todo[k];
      x[k] = xs[p];
      start[k] = dirs[best_i[p]];
      spacing[k] = detail::polish_spacing(best_i[p]);
      best[k] = t[p * n_dirs + best_i[p]];
    }
    detail::polish_batch(backend, std::span<const Vec3>(x), std::span<const Vec3>(start),
                         std::span<const double>(spacing), std::span<double>(best));
    for (std::size_t k = 0; k < todo.size(); ++k) {
      const std::size_t p = todo[k];
      result[p] = std::min(result[p], best[k]);
      polished_i[p] = best_i[p];
    }
  }
  std::vector<DdfValue> out(n, DdfValue::miss());
  for (std::size_t p = 0; p < n; ++p) {
    if (result[p] < kInf) out[p] = DdfValue::at(result[p]);
  }
  return out;
}

template <DdfBackend B>
DdfValue udf(const B& backend, const Vec3& x, std::size_t n_dirs) {
  return udf_batch(backend, std::span<const Vec3>(&x, 1), n_dirs)[0];
}

/// Exact closest-point distance to the mesh; a lower bound of the sampled UDF.
template <bool A>
double udf_exact(const MeshField<A>& field, const Vec3& x) {
  return field.bvh().closest_point(x).distance;
}

}  // namespace ddf
