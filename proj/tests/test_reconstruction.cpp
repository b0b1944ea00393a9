#include <gtest/gtest.h>

#include <map>

#include "ddf/ddf.hpp"
#include "oracles.hpp"

using namespace ddf;

namespace {

// Closed-form directional distance to a sphere; not a mesh, so the grid
// goes through the sampled directional minimum.
struct AnalyticSphere {
  double r = 0.8;

  std::optional<double> hit_t(const OrientedPoint& p) const {
    const Vec3 d = p.direction_vec(), o = p.position;
    const double b = dot(o, d), c = dot(o, o) - r * r;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double s = std::sqrt(disc);
    if (-b - s >= 0.0) return -b - s;
    if (-b + s >= 0.0) return -b + s;
    return std::nullopt;
  }
  DdfValue query(const OrientedPoint& p) const {
    const auto t = hit_t(p);
    return t ? DdfValue::at(*t) : DdfValue::miss();
  }
  std::optional<SurfaceHit> trace(const OrientedPoint& p) const {
    const auto t = hit_t(p);
    if (!t) return std::nullopt;
    return SurfaceHit{*t, face_against(normalized(advance(p, *t)), p.direction_vec()), false};
  }
  Vec3 normal(const OrientedPoint& p) const { return trace(p).value().normal; }
  Aabb bounds() const { return Aabb{{-1, -1, -1}, {1, 1, 1}}; }
};
static_assert(DdfBackend<AnalyticSphere>);

double sphere_udf(const Vec3& v) { return std::abs(norm(v) - 0.8); }

const Aabb kUnitBox{{-1, -1, -1}, {1, 1, 1}};

bool watertight(const TriangleMesh& m) {
  std::map<std::pair<std::size_t, std::size_t>, int> count;
  for (const auto& f : m.faces()) {
    for (int e = 0; e < 3; ++e) {
      std::size_t a = f[e], b = f[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++count[{a, b}];
    }
  }
  for (const auto& [k, c] : count) {
    if (c != 2) return false;
  }
  return !count.empty();
}

}  // namespace

TEST(UdfGrid, AnalyticSphereValues) {
  UdfGridOptions opt;
  opt.resolution = 32;
  opt.n_dirs = 2048;
  const auto g = udf_grid(AnalyticSphere{}, opt);
  ASSERT_EQ(g.size(), 32u * 32u * 32u);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Vec3 p = g.position(i);
    ASSERT_TRUE(std::isfinite(g.values[i])) << "every grid vertex sees the sphere";
    EXPECT_GE(g.values[i], sphere_udf(p) - 1e-12);
    worst = std::max(worst, g.values[i] - sphere_udf(p));
  }
  EXPECT_LT(worst, 0.02);
}

TEST(UdfGrid, MoreDirectionsNeverIncrease) {
  UdfGridOptions a, b;
  a.resolution = b.resolution = 12;
  a.n_dirs = 128;
  b.n_dirs = 256;
  const auto ga = udf_grid(AnalyticSphere{}, a);
  const auto gb = udf_grid(AnalyticSphere{}, b);
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_LE(gb.values[i], ga.values[i]);
}

TEST(UdfGrid, MeshBackendIsExact) {
  const OracleField f(shapes::icosphere(3, 0.8));
  UdfGridOptions opt;
  opt.resolution = 10;
  const auto g = udf_grid(f, opt);
  const auto& mesh = f.mesh();
  for (std::size_t i = 0; i < g.size(); i += 7) {
    double best = kInf;
    const Vec3 p = g.position(i);
    for (std::size_t k = 0; k < mesh.num_faces(); ++k) {
      const auto [a, b, c] = mesh.triangle(k);
      best = std::min(best, norm(p - detail::closest_on_triangle(p, a, b, c)));
    }
    EXPECT_NEAR(g.values[i], best, 1e-12);
  }
}

TEST(UdfGrid, MarginGrowsBox) {
  UdfGridOptions opt;
  opt.resolution = 8;
  opt.n_dirs = 16;
  opt.margin = 0.25;
  const auto g = udf_grid(AnalyticSphere{}, opt);
  EXPECT_NEAR(g.box.lo.x, -1.5, 1e-12);
  EXPECT_NEAR(g.box.hi.z, 1.5, 1e-12);
  opt.margin = -0.1;
  EXPECT_THROW(udf_grid(AnalyticSphere{}, opt), Error);
  opt.margin = 0.0;
  opt.resolution = 4;
  EXPECT_THROW(udf_grid(AnalyticSphere{}, opt), Error);
}

TEST(Extract, ConstantGridIsEmpty) {
  const auto g = ScalarGrid::cubic(16, kUnitBox, 0.5);
  EXPECT_TRUE(marching_cubes(g, 0.1).empty());
  const auto inf = ScalarGrid::cubic(16, kUnitBox, kInf);
  EXPECT_TRUE(marching_cubes(inf, 0.1).empty());
}

TEST(Extract, SphereShellsAtIso) {
  const auto g = sample_grid(64, kUnitBox, sphere_udf);
  const auto m = marching_cubes(g, 0.02);
  ASSERT_FALSE(m.empty());
  double sum = 0.0;
  for (const Vec3& v : m.vertices()) {
    const double r = norm(v);
    EXPECT_TRUE(std::abs(r - 0.78) < 0.01 || std::abs(r - 0.82) < 0.01) << r;
    sum += r;
  }
  EXPECT_NEAR(sum / m.num_vertices(), 0.8, 0.02 * 0.8);
  EXPECT_TRUE(watertight(m));
}

TEST(Extract, BoxExtents) {
  const OracleField f(shapes::box({-0.5, -0.3, -0.2}, {0.5, 0.3, 0.2}));
  UdfGridOptions opt;
  opt.resolution = 48;
  opt.margin = 0.2;
  const auto g = udf_grid(f, opt);
  const double iso = default_iso(g);
  const auto m = marching_cubes(g, iso);
  ASSERT_FALSE(m.empty());
  const Aabb b = m.bbox();
  const double vox = g.voxel_size();
  EXPECT_NEAR(b.hi.x, 0.5 + iso, 2 * vox);
  EXPECT_NEAR(b.lo.y, -0.3 - iso, 2 * vox);
  EXPECT_NEAR(b.hi.z, 0.2 + iso, 2 * vox);
}

TEST(Extract, VerticesSitOnTheLevelSet) {
  const auto g = sample_grid(24, kUnitBox, [](const Vec3& p) { return std::abs(norm(p - Vec3{0.1, 0, 0}) - 0.6); });
  const double iso = default_iso(g);
  const auto iso_s = extract_isosurface(g, iso);
  ASSERT_EQ(iso_s.vertex_edges.size(), iso_s.mesh.num_vertices());
  for (std::size_t i = 0; i < iso_s.mesh.num_vertices(); ++i) {
    EXPECT_NEAR(edge_value_at(g, iso_s.vertex_edges[i], iso_s.mesh.vertices()[i]), iso, 1e-6);
  }
}

TEST(Extract, FinerGridIsCloser) {
  const auto gt = shapes::icosphere(4, 0.8);
  const OracleField f(gt);
  EvalConfig ec;
  ec.n_points = 5000;
  double prev = kInf;
  for (int res : {32, 64}) {
    UdfGridOptions opt;
    opt.resolution = res;
    opt.margin = 0.1;
    const auto g = udf_grid(f, opt);
    const auto m = marching_cubes(g, default_iso(g));
    const double cd = metric_value(evaluate_meshes(m, gt, ec), "chamfer_x1e3");
    EXPECT_LE(cd, prev) << res;
    prev = cd;
  }
}

TEST(Project, LandsOnAnalyticSphere) {
  const auto g = sample_grid(24, kUnitBox, sphere_udf);
  const auto m = marching_cubes(g, default_iso(g));
  const auto p = project_to_surface(m, AnalyticSphere{}, 256);
  ASSERT_EQ(p.num_vertices(), m.num_vertices());
  EXPECT_EQ(p.faces(), m.faces());
  for (const Vec3& v : p.vertices()) EXPECT_NEAR(norm(v), 0.8, 1e-9);
}
