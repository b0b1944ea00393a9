#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "ddf/mesh.hpp"
#include "ddf/parallel.hpp"
#include "ddf/rng.hpp"
#include "ddf/sampler.hpp"

namespace ddf {

struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// n points on the mesh surface: faces drawn proportional to area, then a
/// folded barycentric sample on the face.
inline PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.empty()) throw DataError("cannot sample an empty mesh");
  std::vector<double> cdf(mesh.num_faces());
  double acc = 0.0;
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    acc += mesh.face_area(f);
    cdf[f] = acc;
  }
  if (!(acc > 0.0)) throw DataError("mesh has zero total area");
  Rng rng = make_rng(seed, {0x5355'5246ULL});
  PointCloud pc;
  pc.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = uniform01(rng) * acc;
    std::size_t f = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
    f = std::min(f, cdf.size() - 1);
    while (mesh.face_area(f) <= 0.0 && f > 0) --f;
    double a = uniform01(rng), b = uniform01(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    pc.points.push_back(barycentric_point(mesh.triangle(f), a, b));
  }
  return pc;
}

/// Exact nearest-neighbor index over a uniform bucket grid. Queries expand
/// cubic shells of cells until no unvisited cell can hold a closer point.
class PointIndex {
public:
  explicit PointIndex(const std::vector<Vec3>& pts) : pts_(&pts) {
    if (pts.empty()) throw Error("cannot index an empty point cloud");
    for (const auto& p : pts) box_.expand(p);
    const Vec3 e = box_.extent();
    const double vol = std::max(e.x, 1e-12) * std::max(e.y, 1e-12) * std::max(e.z, 1e-12);
    cell_ = std::cbrt(vol / std::max<double>(1.0, static_cast<double>(pts.size()) / 2.0));
    cell_ = std::max({cell_, 1e-9 * std::max(1.0, box_.diagonal()), std::max({e.x, e.y, e.z}) / 511.0});
    const double max_cells = 8.0 * static_cast<double>(pts.size()) + 64.0;
    for (;;) {
      for (int a = 0; a < 3; ++a) dims_[a] = static_cast<long>(std::floor(e[a] / cell_)) + 1;
      if (static_cast<double>(dims_[0]) * static_cast<double>(dims_[1]) * static_cast<double>(dims_[2]) <= max_cells) break;
      cell_ *= 1.25;
    }
    const std::size_t n_cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
    std::vector<std::uint32_t> count(n_cells + 1, 0);
    std::vector<std::size_t> cell_of(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      cell_of[i] = flat(cell_coords(pts[i]));
      ++count[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < n_cells; ++c) count[c + 1] += count[c];
    start_ = count;
    items_.resize(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) items_[count[cell_of[i]]++] = static_cast<std::uint32_t>(i);
  }

  /// Minimum squared distance from q to the indexed points.
  double nearest_squared(const Vec3& q) const {
    std::array<long, 3> c;
    long r0 = 0;
    for (int a = 0; a < 3; ++a) {
      c[a] = static_cast<long>(std::clamp(std::floor((q[a] - box_.lo[a]) / cell_), -1e9, 1e9));
      r0 = std::max({r0, -c[a], c[a] - (dims_[a] - 1)});
    }
    double best = kInf;
    for (long r = r0;; ++r) {
      bool covered = true;
      for (int a = 0; a < 3; ++a) covered = covered && c[a] - r <= 0 && c[a] + r >= dims_[a] - 1;
      visit_shell(c, r, q, best);
      if (covered) break;
      // Distance from q to the outside of the visited block of cells.
      double margin = kInf;
      for (int a = 0; a < 3; ++a) {
        const double lo = box_.lo[a] + static_cast<double>(c[a] - r) * cell_;
        const double hi = box_.lo[a] + static_cast<double>(c[a] + r + 1) * cell_;
        margin = std::min({margin, q[a] - lo, hi - q[a]});
      }
      if (margin > 0.0 && best <= margin * margin) break;
    }
    return best;
  }

private:
  std::array<long, 3> cell_coords(const Vec3& p) const {
    std::array<long, 3> c;
    for (int a = 0; a < 3; ++a) {
      c[a] = std::clamp(static_cast<long>(std::floor((p[a] - box_.lo[a]) / cell_)), 0L, dims_[a] - 1);
    }
    return c;
  }
  std::size_t flat(const std::array<long, 3>& c) const {
    return static_cast<std::size_t>(c[0] + dims_[0] * (c[1] + dims_[1] * c[2]));
  }

  void visit_cell(long x, long y, long z, const Vec3& q, double& best) const {
    if (x < 0 || y < 0 || z < 0 || x >= dims_[0] || y >= dims_[1] || z >= dims_[2]) return;
    const std::size_t f = flat({x, y, z});
    for (std::uint32_t k = start_[f]; k < start_[f + 1]; ++k) {
      best = std::min(best, squared_norm((*pts_)[items_[k]] - q));
    }
  }

  // Cells at Chebyshev distance exactly r from c (clipped to the grid).
  void visit_shell(const std::array<long, 3>& c, long r, const Vec3& q, double& best) const {
    const long x0 = std::max(c[0] - r, 0L), x1 = std::min(c[0] + r, dims_[0] - 1);
    const long y0 = std::max(c[1] - r, 0L), y1 = std::min(c[1] + r, dims_[1] - 1);
    const long z0 = std::max(c[2] - r, 0L), z1 = std::min(c[2] + r, dims_[2] - 1);
    for (long z = z0; z <= z1; ++z) {
      for (long y = y0; y <= y1; ++y) {
        const bool face = std::abs(z - c[2]) == r || std::abs(y - c[1]) == r;
        if (face) {
          for (long x = x0; x <= x1; ++x) visit_cell(x, y, z, q, best);
        } else {
          if (c[0] - r >= 0) visit_cell(c[0] - r, y, z, q, best);
          if (r > 0 && c[0] + r < dims_[0]) visit_cell(c[0] + r, y, z, q, best);
        }
      }
    }
  }

  const std::vector<Vec3>* pts_;
  Aabb box_;
  double cell_ = 1.0;
  std::array<long, 3> dims_{1, 1, 1};
  std::vector<std::uint32_t> start_;
  std::vector<std::uint32_t> items_;
};

/// Squared distance from each point of `from` to its nearest neighbor in `to`.
inline std::vector<double> sided_profile(const PointCloud& from, const PointCloud& to) {
  if (to.empty()) throw Error("target point cloud is empty");
  const PointIndex index(to.points);
  std::vector<double> d(from.size());
  parallel_for(0, from.size(), [&](std::size_t i) { d[i] = index.nearest_squared(from.points[i]); }, 256);
  return d;
}

inline double sided_distance(const Vec3& p, const PointCloud& to) {
  if (to.empty()) throw Error("target point cloud is empty");
  return PointIndex(to.points).nearest_squared(p);
}

/// w1 / |P1| sum min ||p1 - p2||^2 + w2 / |P2| sum min ||p2 - p1||^2.
inline double chamfer(const PointCloud& p1, const PointCloud& p2, double w1 = 1.0, double w2 = 1.0) {
  if (p1.empty() || p2.empty()) throw Error("chamfer needs non-empty point clouds");
  double s1 = 0.0, s2 = 0.0;
  for (double v : sided_profile(p1, p2)) s1 += v;
  for (double v : sided_profile(p2, p1)) s2 += v;
  return w1 * s1 / static_cast<double>(p1.size()) + w2 * s2 / static_cast<double>(p2.size());
}

/// Harmonic mean of precision (share of p1 within Euclidean distance tau of
/// p2) and recall (share of p2 within tau of p1).
inline double f_score(const PointCloud& p1, const PointCloud& p2, double tau) {
  if (!(tau > 0.0)) throw Error("f-score threshold must be positive");
  if (p1.empty() || p2.empty()) throw Error("f-score needs non-empty point clouds");
  auto share = [tau](const std::vector<double>& d) {
    std::size_t k = 0;
    for (double v : d) k += v <= tau * tau ? 1 : 0;
    return static_cast<double>(k) / static_cast<double>(d.size());
  };
  const double precision = share(sided_profile(p1, p2));
  const double recall = share(sided_profile(p2, p1));
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

/// Linear-interpolated percentile (q in [0, 100]) of a value list.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw Error("percentile of an empty list");
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] + frac * (v[i + 1] - v[i]) : v[i];
}

inline constexpr double kChamferReportScale = 1e3;

struct EvalConfig {
  std::size_t n_points = 30000;
  std::uint64_t seed = 1;
  double tau = 0.01;
  double w1 = 1.0, w2 = 1.0;
};

struct MetricRow {
  std::string metric;
  double value = 0.0;
  std::string parameters;
};

/// Mesh-vs-mesh report. An empty prediction yields chamfer = inf and
/// f-score = 0 instead of an error.
inline std::vector<MetricRow> evaluate_meshes(const TriangleMesh& pred, const TriangleMesh& gt, const EvalConfig& cfg) {
  const std::string sampling =
      "points=" + std::to_string(cfg.n_points) + ";seed=" + std::to_string(cfg.seed) + ";squared=1";
  const PointCloud g = sample_surface(gt, cfg.n_points, cfg.seed * 2 + 1);
  std::vector<MetricRow> rows;
  if (pred.empty() || !(pred.total_area() > 0.0)) {
    rows.push_back({"chamfer_x1e3", kInf, sampling + ";empty_prediction=1"});
    rows.push_back({"f_score", 0.0, sampling + ";tau=" + std::to_string(cfg.tau) + ";empty_prediction=1"});
    return rows;
  }
  const PointCloud p = sample_surface(pred, cfg.n_points, cfg.seed * 2);
  const auto d_pg = sided_profile(p, g);
  const auto d_gp = sided_profile(g, p);
  double s1 = 0.0, s2 = 0.0;
  for (double v : d_pg) s1 += v;
  for (double v : d_gp) s2 += v;
  const double cd = cfg.w1 * s1 / static_cast<double>(p.size()) + cfg.w2 * s2 / static_cast<double>(g.size());
  auto share = [&](const std::vector<double>& d) {
    std::size_t k = 0;
    for (double v : d) k += v <= cfg.tau * cfg.tau ? 1 : 0;
    return static_cast<double>(k) / static_cast<double>(d.size());
  };
  const double prec = share(d_pg), rec = share(d_gp);
  const double fs = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  rows.push_back({"chamfer_x1e3", cd * kChamferReportScale, sampling + ";w1=1;w2=1"});
  rows.push_back({"f_score", fs, sampling + ";tau=" + std::to_string(cfg.tau)});
  rows.push_back({"precision", prec, "tau=" + std::to_string(cfg.tau)});
  rows.push_back({"recall", rec, "tau=" + std::to_string(cfg.tau)});
  for (double q : {50.0, 90.0, 99.0}) {
    rows.push_back({"sided_pred_to_gt_p" + std::to_string(static_cast<int>(q)), percentile(d_pg, q), sampling});
    rows.push_back({"sided_gt_to_pred_p" + std::to_string(static_cast<int>(q)), percentile(d_gp, q), sampling});
  }
  return rows;
}

inline double metric_value(const std::vector<MetricRow>& rows, const std::string& name) {
  for (const auto& r : rows) {
    if (r.metric == name) return r.value;
  }
  throw Error("metric '" + name + "' not in report");
}

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "metric,value,parameters\n";
  const auto old = out.precision(17);
  for (const auto& r : rows) out << r.metric << ',' << r.value << ',' << r.parameters << '\n';
  out.precision(old);
}

}  // namespace ddf
