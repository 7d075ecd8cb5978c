#include <gtest/gtest.h>

#include <chmass/model_geometry.hpp>

using namespace chmass;

namespace {

Vec point(int n, std::uint64_t seed, double rmax) {
  auto rng = make_rng(seed, 1);
  return random_ball_point(rng, n, rmax);
}

Vec direction(int n, std::uint64_t seed, std::uint64_t i) {
  auto rng = make_rng(seed, 2, i);
  return random_normal(rng, n);
}

// constant holomorphic sectional curvature 4k: K(X,Y) = k (1 + 3 cos^2 of the Kahler angle)
double expected_sectional(const Mat& G, const Mat& J, const Vec& X, const Vec& Y, double k) {
  const double xx = X.dot(G * X), yy = Y.dot(G * Y), xy = X.dot(G * Y);
  const double w = X.dot(G * J * Y);
  return k * (1 + 3 * w * w / (xx * yy - xy * xy));
}

}  // namespace

TEST(ModelGeometry, ComplexStructureSquaresToMinusOne) {
  for (int m = 1; m <= 4; ++m) {
    Mat J = complex_structure(m);
    EXPECT_LT((J * J + Mat::Identity(2 * m, 2 * m)).norm(), 1e-15);
  }
}

TEST(ModelGeometry, ComplexRoundTrip) {
  Vec p = point(6, 3, 0.9);
  EXPECT_LT((to_real(to_complex(p)) - p).norm(), 1e-15);
}

TEST(ModelGeometry, ChMetricIsHermitianAndPositive) {
  ChModel ch{3};
  Vec p = point(6, 5, 0.95);
  Mat G = ch.G(p);
  EXPECT_LT((ch.J.transpose() * G * ch.J - G).norm(), 1e-12);
  Eigen::SelfAdjointEigenSolver<Mat> es(G);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(ModelGeometry, ChMetricAtOriginIsEuclidean) {
  ChModel ch{2};
  EXPECT_LT((ch.G(Vec::Zero(4)) - Mat::Identity(4, 4)).norm(), 1e-15);
}

TEST(ModelGeometry, OutsideBallThrows) {
  ChModel ch{2};
  Vec p = Vec::Zero(4);
  p[0] = 1.0;
  EXPECT_THROW(ch.G(p), domain_error);
  EXPECT_THROW(PoincareBall{3}.G(Vec::Ones(3)), domain_error);
}

TEST(ModelGeometry, AnalyticChristoffelMatchesFiniteDifferences) {
  for (int m = 2; m <= 3; ++m) {
    ChModel ch{m};
    Vec p = point(2 * m, 11 + m, 0.8);
    Mat a = christoffel(ch, p), f = christoffel_fd(ch, p);
    EXPECT_LT((a - f).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, a.cwiseAbs().maxCoeff())) << "m=" << m;
  }
}

TEST(ModelGeometry, ChSectionalCurvatureClosedForm) {
  for (int m = 2; m <= 3; ++m) {
    ChModel ch{m};
    Vec p = point(2 * m, 17, 0.7);
    Mat G = ch.G(p);
    for (int i = 0; i < 4; ++i) {
      Vec X = direction(2 * m, 19, 2 * i), Y = direction(2 * m, 19, 2 * i + 1);
      auto s = riemann(ch, p, X, Y);
      EXPECT_NEAR(s.sectional, expected_sectional(G, ch.J, X, Y, -1.0), 1e-5);
      EXPECT_NEAR(s.holomorphic, -4.0, 1e-5);
    }
  }
}

TEST(ModelGeometry, ChTotallyRealPlaneHasCurvatureMinusOne) {
  ChModel ch{2};
  Vec p = Vec::Zero(4);
  p[0] = 0.3;
  p[2] = -0.2;
  // X, Y spanning a totally real plane: g(X, JY) = 0 at p
  Mat G = ch.G(p);
  Vec X = Vec::Unit(4, 0);
  Vec Y = Vec::Unit(4, 2);
  Y -= (Y.dot(G * ch.J * X) / (ch.J * X).dot(G * ch.J * X)) * (ch.J * X);
  ASSERT_NEAR(X.dot(G * ch.J * Y), 0.0, 1e-14);
  EXPECT_NEAR(riemann(ch, p, X, Y).sectional, -1.0, 1e-5);
}

TEST(ModelGeometry, ScalarCurvatures) {
  for (int m = 2; m <= 3; ++m) {
    Vec p = point(2 * m, 23, 0.6);
    EXPECT_NEAR(scal(ChModel{m}, p), -4.0 * m * (m + 1), 1e-4);
    EXPECT_NEAR(scal(fubini_study(m), p), 4.0 * m * (m + 1), 1e-4);
  }
  for (int n = 3; n <= 5; ++n) {
    Vec p = point(n, 29, 0.6);
    EXPECT_NEAR(scal(PoincareBall{n}, p), -double(n * (n - 1)), 1e-4);
  }
}

TEST(ModelGeometry, FubiniStudyHolomorphicCurvature) {
  auto fs = fubini_study(2);
  Vec p = point(4, 31, 1.5);
  Vec X = direction(4, 37, 0);
  EXPECT_NEAR(riemann(fs, p, X, direction(4, 37, 1)).holomorphic, 4.0, 1e-5);
}

TEST(ModelGeometry, PoincareSectionalCurvature) {
  PoincareBall pb{4};
  Vec p = point(4, 41, 0.7);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(riemann(pb, p, direction(4, 43, 2 * i), direction(4, 43, 2 * i + 1)).sectional, -1.0, 1e-5);
}

TEST(ModelGeometry, FiniteDifferenceCurvatureAgrees) {
  ChModel ch{2};
  Vec p = point(4, 47, 0.5);
  Vec X = direction(4, 53, 0), Y = direction(4, 53, 1);
  EXPECT_NEAR(riemann(ch, p, X, Y, true).sectional, riemann(ch, p, X, Y).sectional, 1e-5);
}

TEST(ModelGeometry, DegeneratePlaneThrows) {
  ChModel ch{2};
  Vec X = Vec::Unit(4, 1);
  EXPECT_THROW(riemann(ch, Vec::Zero(4), X, 2.0 * X), domain_error);
}

TEST(ModelGeometry, RadialGeodesicOfChModel) {
  // from the origin, unit speed: Euclidean radius tanh(t)
  ChModel ch{2};
  Vec v = Vec::Zero(4);
  v[1] = 1;
  auto g = geodesic(ch, Vec::Zero(4), v, 2.0, 8);
  ASSERT_FALSE(g.truncated);
  for (std::size_t i = 0; i < g.t.size(); ++i) EXPECT_NEAR(g.points[i].norm(), std::tanh(g.t[i]), 1e-9);
  EXPECT_LT(g.speed_drift, 1e-8);
}

TEST(ModelGeometry, RadialGeodesicOfPoincareBall) {
  PoincareBall pb{3};
  auto g = geodesic(pb, Vec::Zero(3), Vec::Unit(3, 2), 3.0, 6);
  for (std::size_t i = 0; i < g.t.size(); ++i) EXPECT_NEAR(g.points[i].norm(), std::tanh(g.t[i] / 2), 1e-9);
}

TEST(ModelGeometry, GeodesicLeavingFlatChartIsNotTruncated) {
  auto g = geodesic(Euclidean{2}, Vec::Zero(2), Vec::Unit(2, 0), 5.0, 5);
  EXPECT_FALSE(g.truncated);
  EXPECT_NEAR(g.points.back()[0], 5.0, 1e-9);
}

TEST(ModelGeometry, CoordinateMapsRoundTrip) {
  for (double r : {0.1, 1.0, 3.0, 8.0}) {
    Coords c = coords_from_r(r);
    EXPECT_NEAR(c.s, std::tanh(r), 1e-15);
    EXPECT_NEAR(c.x, std::pow(std::sinh(r), 2), 1e-12 * c.x);
    EXPECT_NEAR(coords_from_s(c.s).r, r, 1e-9 * std::exp(2 * r));
    EXPECT_NEAR(coords_from_t(c.t).x, c.x, 1e-9 * c.x);
    EXPECT_NEAR(coords_from_x(c.x).r, r, 1e-12 * std::max(1.0, r));
  }
  EXPECT_THROW(coords_from_s(1.0), domain_error);
  EXPECT_THROW(coords_from_t(0.0), domain_error);
}
