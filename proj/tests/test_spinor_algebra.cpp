#include <gtest/gtest.h>

#include <chmass/spinor_algebra.hpp>

using namespace chmass;

namespace {

Vec point(int n, std::uint64_t seed, std::uint64_t i, double rmax) {
  auto rng = make_rng(seed, 1, i);
  return random_ball_point(rng, n, rmax);
}

Vec direction(int n, std::uint64_t seed, std::uint64_t i) {
  auto rng = make_rng(seed, 2, i);
  return random_normal(rng, n);
}

}  // namespace

TEST(SpinorAlgebra, CliffordRelations) {
  for (int m = 1; m <= 4; ++m) {
    const auto& cm = clifford_model(m);
    const int N = 1 << m;
    for (int a = 0; a < 2 * m; ++a)
      for (int b = 0; b < 2 * m; ++b) {
        CMat ac = cm.gam[a] * cm.gam[b] + cm.gam[b] * cm.gam[a];
        CMat want = CMat::Identity(N, N) * (a == b ? -2.0 : 0.0);
        EXPECT_LT((ac - want).norm(), 1e-14);
      }
  }
}

TEST(SpinorAlgebra, CliffordMultiplicationIsSkewHermitianOnAnyMetric) {
  const int m = 3;
  Mat G = ChModel{m}.G(point(2 * m, 3, 0, 0.8));
  UnitaryCoframe fr = unitary_coframe(G);
  EXPECT_LT(fr.gram_defect(), 1e-12);
  Vec X = direction(2 * m, 5, 0);
  CMat c = clifford_matrix(X, fr);
  EXPECT_LT((c + c.adjoint()).norm(), 1e-12);
  const int N = 1 << m;
  EXPECT_LT((c * c + X.dot(G * X) * CMat::Identity(N, N)).norm(), 1e-10);
}

TEST(SpinorAlgebra, KahlerFormActsByGrade) {
  const int m = 3;
  CMat om = omega_matrix(m);
  for (int s = 0; s < (1 << m); ++s) {
    CVec e = CVec::Unit(1 << m, s);
    const double k = grade_of(s);
    EXPECT_LT((om * e - cplx(0, m - 2 * k) * e).norm(), 1e-14);
  }
}

TEST(SpinorAlgebra, LabelCounts) {
  // C(m, l-1) + C(m, l)
  EXPECT_EQ(killing_labels(2).size(), 3u);
  EXPECT_EQ(killing_labels(3).size(), 6u);
  EXPECT_EQ(killing_labels(4).size(), 10u);
  EXPECT_EQ(killing_l(2), 1);
  EXPECT_EQ(killing_l(3), 2);
  EXPECT_EQ(killing_l(4), 2);
}

TEST(SpinorAlgebra, InvalidLabelsAreRejected) {
  EXPECT_THROW(validate_label(3, {false, {0, 1}}), domain_error);
  EXPECT_THROW(validate_label(3, {true, {1, 1}}), domain_error);
  EXPECT_THROW(validate_label(2, {true, {2}}), domain_error);
  EXPECT_NO_THROW(validate_label(3, {true, {0, 2}}));
}

TEST(SpinorAlgebra, FamilyNormsMatchClosedForms) {
  for (int m = 2; m <= 4; ++m)
    for (auto& lab : killing_labels(m))
      for (int i = 0; i < 5; ++i) {
        Vec p = point(2 * m, 7, i, 0.9);
        auto sp = killing_family(m, lab, p);
        auto nn = killing_norms(m, lab, p);
        const double q = p.squaredNorm();
        EXPECT_NEAR(sp.phi.norm2(), nn.total, 1e-10 * nn.total) << lab.name();
        EXPECT_NEAR(sp.lo().norm2(), nn.lo, 1e-10 * nn.total) << lab.name();
        EXPECT_NEAR(sp.hi().norm2(), nn.hi, 1e-10 * nn.total) << lab.name();
        // total = lo + hi and a pointwise lower bound
        EXPECT_NEAR(nn.total, nn.lo + nn.hi, 1e-12 * nn.total);
        EXPECT_GE(nn.total * (1 - q), 1 - q - 1e-12);
      }
}

TEST(SpinorAlgebra, ModelFamiliesAreKilling) {
  for (int m = 2; m <= 3; ++m)
    for (auto& lab : killing_labels(m))
      for (int i = 0; i < 3; ++i) {
        Vec p = point(2 * m, 11, i, 0.7);
        auto r = killing_residual(m, lab, p, direction(2 * m, 13, i));
        EXPECT_LT(r.residual / r.norm, 1e-6) << lab.name();
      }
}

TEST(SpinorAlgebra, PerturbedFamilyIsNotKilling) {
  const int m = 2;
  for (auto& lab : killing_labels(m)) {
    auto r = perturbed_residual(m, lab, point(2 * m, 17, 0, 0.5), Vec::Unit(2 * m, 0), 0.1);
    EXPECT_GT(r.residual / r.norm, 1e-3) << lab.name();
  }
}

TEST(SpinorAlgebra, FamilyHasFullRank) {
  for (int m = 2; m <= 4; ++m) {
    std::vector<Vec> pts;
    for (int i = 0; i < 6; ++i) pts.push_back(point(2 * m, 19, i, 0.8));
    EXPECT_EQ(family_rank(m, pts), static_cast<int>(killing_labels(m).size())) << "m=" << m;
  }
}

TEST(SpinorAlgebra, QMapGivesConstantFormsOfFixedLength) {
  for (int m = 2; m <= 3; ++m) {
    Mat omega = ambient_omega(m);
    for (auto& lab : killing_labels(m)) {
      Mat B0 = q_map(m, lab, point(2 * m, 23, 0, 0.7), true).beta;
      for (int i = 1; i < 4; ++i) {
        auto q = q_map(m, lab, point(2 * m, 23, i, 0.7), true);
        EXPECT_LT((q.beta - B0).norm(), 1e-6) << lab.name();
        EXPECT_LT(q.xi_skew, 1e-10);
      }
      EXPECT_NEAR(pairing(B0, B0), m + 1, 1e-8) << lab.name();
      const double target = m % 2 ? 0.0 : (lab.breve ? -1.0 : 1.0);
      EXPECT_NEAR(pairing(B0, omega), target, 1e-8) << lab.name();
    }
  }
}

TEST(SpinorAlgebra, QMapOddDimensionXiOmegaEqualsU) {
  const int m = 3;
  for (auto& lab : killing_labels(m)) {
    auto q = q_map(m, lab, point(2 * m, 29, 0, 0.6));
    EXPECT_NEAR(q.xi_omega, q.s.u, 1e-8) << lab.name();
  }
}

TEST(SpinorAlgebra, QMapAgreesWithAnalyticU) {
  // u of the matched form equals |phi|^2
  const int m = 2;
  for (auto& lab : killing_labels(m)) {
    Vec p = point(2 * m, 31, 0, 0.7);
    Mat B = beta_of_family(m, lab, p);
    Vec p2 = point(2 * m, 31, 1, 0.7);
    EXPECT_NEAR(u_of_beta(B, p2), killing_family(m, lab, p2).phi.norm2(), 1e-6) << lab.name();
  }
}

TEST(SpinorAlgebra, NormSquaredSolvesThirdOrderEquation) {
  const int m = 2;
  for (auto& lab : killing_labels(m)) {
    Vec p = point(2 * m, 37, 0, 0.5);
    auto u = [&](const Vec& x) { return killing_family(m, lab, x).phi.norm2(); };
    EXPECT_LT(third_order_residual(ChModel{m}, u, p, direction(2 * m, 41, 0)).norm(), 1e-4) << lab.name();
  }
}

TEST(SpinorAlgebra, LemmaIdentities) {
  const int m = 2;
  std::vector<Vec> pts{point(2 * m, 43, 0, 0.6), point(2 * m, 43, 1, 0.6)};
  auto rep = lemma_checks(m, killing_labels(m), pts);
  ASSERT_FALSE(rep.max_violation.empty());
  for (auto& [k, v] : rep.max_violation) EXPECT_LT(v, 1e-6) << k;
}

TEST(SpinorAlgebra, QMapIsEquivariant) {
  const int m = 2;
  for (auto& lab : killing_labels(m))
    EXPECT_LT(q_equivariance_defect(m, lab, {0.4, -0.9, 1.3}, point(2 * m, 47, 0, 0.6)), 1e-6) << lab.name();
}
