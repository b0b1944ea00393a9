#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace ddf {

/// Base exception for every recoverable failure in the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, meshes, datasets).
class DataError : public Error {
public:
  using Error::Error;
};

/// Numerical breakdown (NaN loss, degenerate gradient).
class NumericError : public Error {
public:
  using Error::Error;
};

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  constexpr Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  constexpr Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

  friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend constexpr Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;

  friend std::ostream& operator<<(std::ostream& os, const Vec3& v) {
    return os << '(' << v.x << ", " << v.y << ", " << v.z << ')';
  }
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
constexpr double squared_norm(const Vec3& v) { return dot(v, v); }

inline Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  return n > 0.0 ? v / n : v;
}

constexpr Vec3 cwise_min(const Vec3& a, const Vec3& b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}
constexpr Vec3 cwise_max(const Vec3& a, const Vec3& b) {
  return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}

/// Orthonormal pair (u, w) completing `n` to a right-handed frame.
/// Uses the axis of `n`'s smallest absolute component as the seed so the
/// construction is well conditioned for every input direction.
inline std::pair<Vec3, Vec3> orthonormal_frame(const Vec3& n) {
  const double ax = std::abs(n.x), ay = std::abs(n.y), az = std::abs(n.z);
  Vec3 seed;
  if (ax <= ay && ax <= az) {
    seed = {1, 0, 0};
  } else if (ay <= az) {
    seed = {0, 1, 0};
  } else {
    seed = {0, 0, 1};
  }
  const Vec3 u = normalized(cross(n, seed));
  const Vec3 w = cross(n, u);
  return {u, w};
}

struct Aabb {
  Vec3 lo{kInf, kInf, kInf};
  Vec3 hi{-kInf, -kInf, -kInf};

  constexpr bool empty() const { return lo.x > hi.x || lo.y > hi.y || lo.z > hi.z; }
  constexpr void expand(const Vec3& p) { lo = cwise_min(lo, p); hi = cwise_max(hi, p); }
  constexpr void expand(const Aabb& b) { lo = cwise_min(lo, b.lo); hi = cwise_max(hi, b.hi); }
  constexpr Vec3 extent() const { return hi - lo; }
  constexpr Vec3 center() const { return (lo + hi) * 0.5; }

  constexpr bool contains(const Vec3& p, double eps = 0.0) const {
    return p.x >= lo.x - eps && p.x <= hi.x + eps && p.y >= lo.y - eps && p.y <= hi.y + eps &&
           p.z >= lo.z - eps && p.z <= hi.z + eps;
  }
  constexpr bool contains(const Aabb& b, double eps = 0.0) const {
    return contains(b.lo, eps) && contains(b.hi, eps);
  }

  int longest_axis() const {
    const Vec3 e = extent();
    if (e.x >= e.y && e.x >= e.z) return 0;
    return e.y >= e.z ? 1 : 2;
  }

  double diagonal() const { return norm(extent()); }

  /// Box grown by `margin` on every side.
  Aabb inflated(double margin) const {
    return {lo - Vec3{margin, margin, margin}, hi + Vec3{margin, margin, margin}};
  }

  /// Squared distance from `p` to the box (0 inside).
  double squared_distance(const Vec3& p) const {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double v = p[a] < lo[a] ? lo[a] - p[a] : (p[a] > hi[a] ? p[a] - hi[a] : 0.0);
      d2 += v * v;
    }
    return d2;
  }

  /// Slab test; returns the parametric entry/exit interval clipped to [t0, t1].
  bool ray_interval(const Vec3& origin, const Vec3& inv_dir, double t0, double t1, double& t_enter,
                    double& t_exit) const {
    for (int a = 0; a < 3; ++a) {
      double tn = (lo[a] - origin[a]) * inv_dir[a];
      double tf = (hi[a] - origin[a]) * inv_dir[a];
      if (tn > tf) std::swap(tn, tf);
      // NaN arises only for an origin on a slab plane with a zero direction
      // component; the comparisons below then leave the interval unchanged.
      tf *= 1.0 + 4.0 * std::numeric_limits<double>::epsilon();
      if (tn > t0) t0 = tn;
      if (tf < t1) t1 = tf;
      if (t0 > t1) return false;
    }
    t_enter = t0;
    t_exit = t1;
    return true;
  }
};

}  // namespace ddf
