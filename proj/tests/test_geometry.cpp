#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "shapecon/error.hpp"
#include "shapecon/geometry.hpp"

using namespace shapecon;

namespace {

PointCloud random_cloud(Rng& rng, std::size_t n) {
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = {rng.normal(), rng.normal(), rng.normal()};
  return PointCloud(std::move(pts));
}

}  // namespace

TEST(PointCloud, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(PointCloud(std::vector<Vec3>{}), Error);
  EXPECT_THROW(PointCloud(std::vector<Vec3>{{0.0, NAN, 0.0}}), Error);
  EXPECT_THROW(PointCloud(std::vector<Vec3>{{INFINITY, 0.0, 0.0}}), Error);
  try {
    PointCloud(std::vector<Vec3>{});
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "empty cloud");
  }
}

TEST(Normalize, UnitSphereContract) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    auto c = random_cloud(rng, 50);
    auto n = normalize_bounding_sphere(c);
    const Vec3 ctr = centroid(n);
    for (double v : ctr) EXPECT_NEAR(v, 0.0, 1e-12);
    double r = 0.0;
    for (const auto& p : n.points()) r = std::max(r, norm(p));
    EXPECT_NEAR(r, 1.0, 1e-12);
  }
}

TEST(Normalize, TwoPoints) {
  PointCloud c(std::vector<Vec3>{{0, 0, 0}, {2, 0, 0}});
  auto n = normalize_bounding_sphere(c);
  EXPECT_DOUBLE_EQ(n[0][0], -1.0);
  EXPECT_DOUBLE_EQ(n[1][0], 1.0);
}

TEST(Normalize, ZeroRadiusThrows) {
  PointCloud c(std::vector<Vec3>{{1, 2, 3}, {1, 2, 3}});
  EXPECT_THROW(normalize_bounding_sphere(c), Error);
}

TEST(Quaternion, AxisAngleQuarterTurn) {
  const auto q = Quaternion::from_axis_angle({0, 0, 1}, std::numbers::pi / 2);
  const Vec3 r = rotate(Vec3{1, 0, 0}, q);
  EXPECT_NEAR(r[0], 0.0, 1e-15);
  EXPECT_NEAR(r[1], 1.0, 1e-15);
  EXPECT_NEAR(r[2], 0.0, 1e-15);
}

TEST(Quaternion, RotationMatrixIsOrthonormal) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto m = random_unit_quaternion(rng).rotation_matrix();
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * m[j * 3 + k];
        EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-12);
      }
    }
    const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                       m[2] * (m[3] * m[7] - m[4] * m[6]);
    EXPECT_NEAR(det, 1.0, 1e-12);
  }
}

TEST(Quaternion, CompositionMatchesSequentialRotation) {
  Rng rng(3);
  const auto a = random_unit_quaternion(rng), b = random_unit_quaternion(rng);
  const Vec3 p{0.3, -0.7, 1.1};
  const Vec3 seq = rotate(rotate(p, b), a);
  const Vec3 comp = rotate(p, (a * b).normalized());
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(seq[k], comp[k], 1e-12);
}

TEST(Quaternion, NonUnitRejected) {
  PointCloud c(std::vector<Vec3>{{1, 0, 0}});
  EXPECT_THROW(rotate(c, Quaternion{2, 0, 0, 0}), Error);
}

// Haar measure on SO(3): the image of a fixed axis is uniform on the sphere
// (coordinate mean 0, second moment 1/3), and the angle density
// (1 - cos t) / pi gives E[cos t] = -1/2, so E[trace R] = 1 + 2 E[cos t] = 0.
TEST(Quaternion, ShoemakeMomentsMatchHaar) {
  Rng rng(4);
  const int n = 200000;
  double mz = 0.0, mz2 = 0.0, trace = 0.0;
  for (int t = 0; t < n; ++t) {
    const auto m = random_unit_quaternion(rng).rotation_matrix();
    mz += m[8];
    mz2 += m[8] * m[8];
    trace += m[0] + m[4] + m[8];
  }
  EXPECT_NEAR(mz / n, 0.0, 5 * std::sqrt(1.0 / 3.0 / n));
  EXPECT_NEAR(mz2 / n, 1.0 / 3.0, 0.005);
  EXPECT_NEAR(trace / n, 0.0, 0.01);
}

TEST(Distance, Metrics) {
  const Vec3 p{1, 0, 0}, q{0, 2, 0};
  EXPECT_DOUBLE_EQ(distance(Metric::euclidean, p, q), std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(distance(Metric::chebyshev, p, q), 2.0);
  EXPECT_DOUBLE_EQ(distance(Metric::cosine, p, q), 1.0);
  EXPECT_DOUBLE_EQ(distance(Metric::cosine, p, Vec3{3, 0, 0}), 0.0);
  EXPECT_THROW(distance(Metric::cosine, p, Vec3{0, 0, 0}), Error);
  EXPECT_EQ(parse_metric("chebyshev"), Metric::chebyshev);
  EXPECT_THROW(parse_metric("manhattan"), Error);
}

TEST(Isometry, RotationAndTranslationPreserveDistances) {
  Rng rng(5);
  const auto c = random_cloud(rng, 40);
  const auto d0 = distance_matrix(c);
  const auto r = rotate(c, random_unit_quaternion(rng));
  const auto d1 = distance_matrix(r);
  for (std::size_t i = 0; i < d0.size(); ++i) EXPECT_NEAR(d0[i], d1[i], 1e-9);
}
