#include <gtest/gtest.h>

#include "ddf/ddf.hpp"
#include "oracles.hpp"

using namespace ddf;

namespace {

PointCloud cloud(std::vector<Vec3> pts) { return PointCloud{std::move(pts)}; }

}  // namespace

TEST(SampleSurface, PointsLieOnTheTriangle) {
  const TriangleMesh tri({{0, 0, 0}, {2, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  const auto pc = sample_surface(tri, 5000, 3);
  ASSERT_EQ(pc.size(), 5000u);
  for (const Vec3& p : pc.points) {
    EXPECT_EQ(p.z, 0.0);
    EXPECT_GE(p.x, -1e-15);
    EXPECT_GE(p.y, -1e-15);
    EXPECT_LE(p.x / 2 + p.y, 1.0 + 1e-12);
  }
}

TEST(SampleSurface, ProportionalToArea) {
  // Areas 1 and 3, in planes z = 0 and z = 5.
  const TriangleMesh m({{0, 0, 0}, {2, 0, 0}, {0, 1, 0}, {0, 0, 5}, {3, 0, 5}, {0, 2, 5}}, {{0, 1, 2}, {3, 4, 5}});
  const std::size_t n = 20000;
  const auto pc = sample_surface(m, n, 11);
  std::size_t small = 0;
  for (const Vec3& p : pc.points) small += p.z < 1.0 ? 1 : 0;
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  EXPECT_LT(std::abs(double(small) - 0.25 * n), 3 * sigma);
}

TEST(SampleSurface, SeededAndRejectsEmpty) {
  const auto m = shapes::icosphere(2);
  EXPECT_EQ(sample_surface(m, 100, 5).points, sample_surface(m, 100, 5).points);
  EXPECT_NE(sample_surface(m, 100, 5).points, sample_surface(m, 100, 6).points);
  EXPECT_THROW(sample_surface(TriangleMesh{}, 10, 1), DataError);
}

TEST(Chamfer, Examples) {
  const auto a = cloud({{0, 0, 0}, {1, 2, 3}});
  EXPECT_EQ(chamfer(a, a), 0.0);
  EXPECT_EQ(chamfer(cloud({{0, 0, 0}}), cloud({{1, 0, 0}})), 2.0);
  EXPECT_EQ(chamfer(cloud({{0, 0, 0}}), cloud({{1, 0, 0}}), 0.5, 0.0), 0.5);
  EXPECT_THROW(chamfer(PointCloud{}, a), Error);
}

TEST(Chamfer, IndexMatchesBruteForce) {
  for (std::uint32_t seed : {1u, 2u, 3u}) {
    const auto p = oracle::random_points(500, -1.0, 1.0, seed);
    auto q = oracle::random_points(500, -0.5, 1.5, seed + 100);
    q.resize(300 + seed * 50);
    EXPECT_NEAR(chamfer(cloud(p), cloud(q)), oracle::chamfer(p, q, 1.0, 1.0), 1e-12);
    EXPECT_NEAR(chamfer(cloud(p), cloud(q), 0.3, 1.7), oracle::chamfer(p, q, 0.3, 1.7), 1e-12);
  }
}

TEST(Chamfer, ClusteredCloudMatchesBruteForce) {
  // Mostly tight cluster plus far outliers stresses the bucket search.
  auto p = oracle::random_points(400, 0.0, 0.01, 7);
  p.push_back({5, 5, 5});
  p.push_back({-3, 0, 2});
  const auto q = oracle::random_points(200, -4.0, 6.0, 8);
  for (const Vec3& x : q) EXPECT_NEAR(sided_distance(x, cloud(p)), oracle::nearest_sq(x, p), 1e-12);
}

TEST(Chamfer, SymmetricAndScalesQuadratically) {
  const auto p = oracle::random_points(300, -1.0, 1.0, 4);
  const auto q = oracle::random_points(200, -1.0, 1.0, 5);
  const double c = chamfer(cloud(p), cloud(q));
  EXPECT_NEAR(c, chamfer(cloud(q), cloud(p)), 1e-15);
  std::vector<Vec3> ps, qs;
  for (const Vec3& x : p) ps.push_back(x * 3.0);
  for (const Vec3& x : q) qs.push_back(x * 3.0);
  EXPECT_NEAR(chamfer(cloud(ps), cloud(qs)), 9.0 * c, 1e-12);
}

TEST(SidedDistance, Examples) {
  EXPECT_EQ(sided_distance({0, 0, 0}, cloud({{3, 4, 0}, {10, 0, 0}})), 25.0);
  EXPECT_EQ(sided_distance({1, 2, 3}, cloud({{0, 0, 0}, {1, 2, 3}})), 0.0);
  const auto prof = sided_profile(cloud({{0, 0, 0}, {0, 0, 2}}), cloud({{0, 0, 1}}));
  EXPECT_EQ(prof, (std::vector<double>{1.0, 1.0}));
}

TEST(FScore, Examples) {
  const auto p = oracle::random_points(100, -1.0, 1.0, 9);
  EXPECT_EQ(f_score(cloud(p), cloud(p), 0.01), 1.0);
  auto far = p;
  for (Vec3& x : far) x += Vec3{10, 0, 0};
  EXPECT_EQ(f_score(cloud(p), cloud(far), 0.01), 0.0);
  EXPECT_THROW(f_score(cloud(p), cloud(p), 0.0), Error);
  // Half the prediction matches: precision 1/2, recall 1.
  const auto half = f_score(cloud({{0, 0, 0}, {5, 0, 0}}), cloud({{0, 0, 0}}), 0.1);
  EXPECT_NEAR(half, 2.0 * 0.5 * 1.0 / 1.5, 1e-15);
}

TEST(Evaluate, IdenticalMeshesScoreWell) {
  const auto m = shapes::icosphere(3);
  EvalConfig cfg;
  cfg.n_points = 5000;
  cfg.tau = 0.05;
  // Two independent samplings: the residual is the sampling spacing.
  const auto rows = evaluate_meshes(m, m, cfg);
  EXPECT_LT(metric_value(rows, "chamfer_x1e3"), 3.0);
  EXPECT_GT(metric_value(rows, "f_score"), 0.9);
  EXPECT_THROW(metric_value(rows, "nope"), Error);
}

TEST(Evaluate, EmptyPredictionIsInfinite) {
  const auto rows = evaluate_meshes(TriangleMesh{}, shapes::icosphere(2), {});
  EXPECT_TRUE(std::isinf(metric_value(rows, "chamfer_x1e3")));
  EXPECT_EQ(metric_value(rows, "f_score"), 0.0);
}

TEST(Evaluate, ReportedChamferMatchesOracle) {
  const auto a = shapes::icosphere(2), b = shapes::icosphere(2, 1.1);
  EvalConfig cfg;
  cfg.n_points = 800;
  cfg.seed = 4;
  const auto rows = evaluate_meshes(a, b, cfg);
  const auto pa = sample_surface(a, 800, 8), pb = sample_surface(b, 800, 9);
  EXPECT_NEAR(metric_value(rows, "chamfer_x1e3"), 1e3 * oracle::chamfer(pa.points, pb.points, 1, 1), 1e-9);
}

TEST(Percentile, Interpolates) {
  EXPECT_EQ(percentile({3, 1, 2}, 50), 2.0);
  EXPECT_EQ(percentile({0, 10}, 25), 2.5);
  EXPECT_EQ(percentile({4}, 99), 4.0);
}
