#include <gtest/gtest.h>

#include <chmass/mass_engine.hpp>

using namespace chmass;

namespace {

const MomentumProfile& appendix2() {
  static MomentumProfile P = MomentumProfile::custom(BumpSpec{}, 2);
  return P;
}

Vec point(int n, std::uint64_t seed, double rmax) {
  auto rng = make_rng(seed, 1);
  return random_ball_point(rng, n, rmax);
}

template <Perturbation P>
double dh_defect(const P& pert, const Vec& p, double h = 1e-6) {
  auto dh = pert.dh(p);
  double worst = 0, scale = 0;
  for (int k = 0; k < pert.dim(); ++k) {
    Vec e = Vec::Unit(pert.dim(), k) * h;
    Mat fd = (pert.h(p + e) - pert.h(p - e)) / (2 * h);
    worst = std::max(worst, (fd - dh[k]).cwiseAbs().maxCoeff());
    scale = std::max(scale, dh[k].cwiseAbs().maxCoeff());
  }
  return worst / std::max(scale, 1e-300);
}

// sum over a rule of f(dir)
template <class F>
double integrate(const SphereRule& r, F f) {
  double s = 0;
  for (auto& n : r.nodes) s += n.weight * f(n.dir);
  return s;
}

}  // namespace

TEST(MassEngine, SphereVolumes) {
  EXPECT_NEAR(unit_sphere_volume(2), 2 * pi, 1e-14);
  EXPECT_NEAR(unit_sphere_volume(3), 4 * pi, 1e-14);
  EXPECT_NEAR(unit_sphere_volume(4), 2 * pi * pi, 1e-13);
  EXPECT_NEAR(unit_sphere_volume(6), pi * pi * pi, 1e-12);
}

TEST(MassEngine, GaussLegendreIsExactForPolynomials) {
  auto [x, w] = gauss_legendre(5, 0.0, 1.0);
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * std::pow(x[i], 9);
  EXPECT_NEAR(s, 0.1, 1e-15);
  auto [x4, w4] = gauss_legendre(4, -1.0, 1.0);
  EXPECT_EQ(x4.size(), 4u);
}

TEST(MassEngine, HopfRuleMoments) {
  for (int m = 2; m <= 3; ++m) {
    // Gauss-Legendre in the polar angles is spectrally accurate, not exact
    auto r = hopf_rule(m, 20, 6);
    const double vol = unit_sphere_volume(2 * m), tol = 1e-11 * vol;
    EXPECT_NEAR(r.total(), vol, tol);
    // |w_j|^2 averages to 1/m, |w_j|^4 to 2/(m(m+1))
    for (int j = 0; j < m; ++j) {
      EXPECT_NEAR(integrate(r, [&](const Vec& d) { return std::norm(to_complex(d)[j]); }), vol / m, tol);
      EXPECT_NEAR(integrate(r, [&](const Vec& d) { return std::pow(std::norm(to_complex(d)[j]), 2); }),
                  2 * vol / (m * (m + 1)), tol);
    }
    for (auto& n : r.nodes) ASSERT_NEAR(n.dir.norm(), 1.0, 1e-14);
  }
}

TEST(MassEngine, HypersphericalRuleMoments) {
  for (int n = 3; n <= 5; ++n) {
    auto r = hyperspherical_rule(n, 24, 12);
    const double vol = unit_sphere_volume(n), tol = 1e-11 * vol;
    EXPECT_NEAR(r.total(), vol, tol);
    EXPECT_NEAR(integrate(r, [](const Vec& d) { return d[0] * d[0]; }), vol / n, tol);
    EXPECT_NEAR(integrate(r, [&](const Vec& d) { return d[n - 1] * d[n - 1]; }), vol / n, tol);
  }
}

TEST(MassEngine, AreaFactorAndNormal) {
  Vec d = Vec::Unit(4, 1);
  EXPECT_NEAR(area_factor(Mat::Identity(4, 4), d, 0.5), 0.125, 1e-15);
  // on the model: a^{m-1} sqrt(a + b q) s^{2m-1} with a = 1/(1-q), a + bq = 1/(1-q)^2
  const double s = 0.8, q = s * s;
  Mat G = metric_ch(s * d);
  EXPECT_NEAR(area_factor(G, d, s), std::pow(s, 3) / (1 - q) / (1 - q), 1e-12);
  Vec nu = outward_normal(G, d);
  EXPECT_NEAR(nu.dot(G * nu), 1.0, 1e-14);
  EXPECT_LT((nu - (1 - q) * d).norm(), 1e-14);
}

TEST(MassEngine, PerturbationDerivatives) {
  Vec p = point(4, 3, 0.9);
  EXPECT_LT(dh_defect(ProfilePerturbationField{appendix2()}, p), 1e-6);
  EXPECT_LT(dh_defect(ConformalCHPerturbation{2, 0.3, 3.0}, p), 1e-7);
  EXPECT_LT(dh_defect(ConformalRHPerturbation{4, 0.3, 3.0}, p), 1e-7);
  BallMap f{boost_matrix(2, 0, 0.3) * diagonal_phase({0.1, 0.2, 0.3})};
  EXPECT_LT(dh_defect(PulledPerturbation<ConformalCHPerturbation>{{2, 0.3, 3.0}, f}, p), 1e-7);
}

TEST(MassEngine, TraceDivergenceAgainstFiniteDifferences) {
  Vec p = point(4, 5, 0.7);
  EXPECT_NEAR(div_trace_fd_order(ChModel{2}, ConformalCHPerturbation{2, 0.2, 3.0}, p, 1e-2), 2.0, 0.1);
  TraceDiv z = trace_div(ChModel{2}, ZeroPerturbation{4}, p);
  EXPECT_EQ(z.trace, 0.0);
  EXPECT_EQ(z.sum().norm(), 0.0);
}

TEST(MassEngine, ConformalTraceIsDimensionTimesFactor) {
  ConformalCHPerturbation c{2, 0.2, 3.0};
  Vec p = point(4, 7, 0.8);
  EXPECT_NEAR(trace_div(ChModel{2}, c, p).trace, 4 * c.phi(p.squaredNorm()), 1e-13);
}

TEST(MassEngine, ModelHasZeroMass) {
  auto basis = mass_basis(2);
  QuadratureSpec quad{8, 8};
  auto rep = mass_of_betas(ProfilePerturbationField{theta_model(ProfileKind::ch, 2)}, basis, {2, 3, 4}, quad);
  for (auto& row : rep.rows) {
    for (double v : row.values) EXPECT_EQ(v, 0.0) << row.id;
    EXPECT_EQ(row.fit.limit, 0.0);
    EXPECT_EQ(row.fit.flag, MassFlag::finite);
  }
  // the subtraction route at moderate radius
  DifferencePerturbation<ProfileMetric, ChModel> diff{ProfileMetric{theta_model(ProfileKind::ch, 2)}, ChModel{2}};
  std::vector<Mat> Bs;
  for (auto& b : basis) Bs.push_back(b.B);
  for (double v : ch_mass_at(diff, Bs, 2.5, ch_rule(2, quad)).values) EXPECT_LT(std::abs(v), 1e-6);
}

TEST(MassEngine, AppendixSphereIntegralMatchesFrozenOracle) {
  // mpmath, 30 digits: tests/oracles/appendix_mass.py
  struct Row {
    double R;
    std::vector<double> eps;
    double value;
  };
  const std::vector<Row> rows{{2, {1, 0, 0}, 5.15659257070118},  {2, {0, 0, 1}, 10.8968652561964},
                              {2, {1, 1, 1}, 21.2100503975988},  {3, {1, 0, 0}, 5.32197568316064},
                              {3, {0, 0, 1}, 10.7234197274812}, {3, {1, 1, 1}, 21.3673710938025}};
  ProfilePerturbationField app{appendix2()};
  SphereRule rule = hopf_rule(2, 24, 24);
  for (auto& r : rows) {
    const double v = ch_mass_at(app, {beta_diag(r.eps)}, r.R, rule).values[0];
    EXPECT_NEAR(v, r.value, 1e-7 * r.value) << "R=" << r.R;
  }
}

TEST(MassEngine, AppendixFunctionalLimitAndShape) {
  auto rep = mass_functional(ProfilePerturbationField{appendix2()}, {2, 2.5, 3, 3.5, 4, 4.5}, {24, 24});
  std::map<std::string, double> lim;
  for (auto& row : rep.rows) {
    EXPECT_EQ(row.fit.flag, MassFlag::finite) << row.id;
    lim[row.id] = row.fit.limit;
  }
  // U(m) invariance: only the diagonal forms see the radial perturbation, d0 = d1
  EXPECT_NEAR(lim["d0"], lim["d1"], 1e-8 * lim["d0"]);
  EXPECT_NEAR(lim["d2"], 2 * lim["d0"], 1e-3 * lim["d2"]);
  EXPECT_NEAR(lim["d0"] + lim["d1"] + lim["d2"], 21.38, 0.01);
  for (auto& id : {"re01", "im01", "re02", "im02", "re12", "im12"}) EXPECT_LT(std::abs(lim[id]), 1e-8) << id;
}

TEST(MassEngine, MassIsLinearInTheForm) {
  ProfilePerturbationField app{appendix2()};
  SphereRule rule = hopf_rule(2, 12, 12);
  auto basis = ambient_basis(2);
  Mat B = 0.7 * basis[0].B - 1.3 * basis[3].B + 2.0 * basis[2].B;
  auto v = ch_mass_at(app, {basis[0].B, basis[3].B, basis[2].B, B}, 2.5, rule).values;
  EXPECT_NEAR(v[3], 0.7 * v[0] - 1.3 * v[1] + 2.0 * v[2], 1e-10 * std::abs(v[3]));
}

TEST(MassEngine, AlphaFormOfTheIntegrandAgrees) {
  ProfilePerturbationField app{appendix2()};
  SphereRule rule = hopf_rule(2, 8, 8);
  Mat B = ambient_basis(2)[2].B;
  const double a = ch_mass_at(app, {B}, 3.0, rule).values[0];
  const double b = ch_mass_at(app, {B}, 3.0, rule, true).values[0];
  EXPECT_NEAR(a, b, 1e-12 * std::abs(a));
}

TEST(MassEngine, RealHyperbolicClosedForm) {
  const int n = 4;
  const double eps = 0.1, a = n;
  ConformalRHPerturbation pert{n, eps, a};
  Vec V = Vec::Unit(n + 1, 0);
  SphereRule rule = hyperspherical_rule(n, 8, 12);
  for (double R : {2.0, 4.0, 6.0}) {
    const double want = 0.25 * (n - 1) * unit_sphere_volume(n) * eps * std::exp(-a * R) * std::pow(std::sinh(R), n - 1) *
                        (a * std::cosh(R) + std::sinh(R));
    EXPECT_NEAR(rh_mass_at(pert, {V}, R, rule).values[0], want, 1e-9 * want) << "R=" << R;
  }
  auto row = rh_mass(pert, V, {3, 4, 5, 6, 7, 8}, 8, 12);
  const double limit = eps * unit_sphere_volume(n) * (n * n - 1) / std::pow(2.0, n + 2);
  EXPECT_NEAR(row.fit.limit, limit, 1e-3 * limit);
}

TEST(MassEngine, RealHyperbolicModelIsZero) {
  SphereRule rule = hyperspherical_rule(4, 6, 8);
  EXPECT_EQ(rh_mass_at(ZeroPerturbation{4}, {Vec::Unit(5, 0)}, 3.0, rule).values[0], 0.0);
}

TEST(MassEngine, BoostEquivariance) {
  // the mass of the pulled-back metric paired with beta equals the mass paired with the pushed form
  ProfilePerturbationField app{appendix2()};
  CMat U = boost_matrix(2, 0, 0.3);
  PulledPerturbation<ProfilePerturbationField> pulled{app, BallMap{U}};
  std::vector<double> R{2.5, 3, 3.5, 4, 4.5};
  Mat B = ambient_diag(2, 2);
  const double direct = mass_of_beta(app, {"d2", B}, R, {24, 24}).fit.limit;
  const double moved = mass_of_beta(pulled, {"d2*", pu_action(U, B)}, R, {24, 24}).fit.limit;
  EXPECT_NEAR(moved, direct, 2e-2 * direct);
}

TEST(MassEngine, ExtrapolationOfSyntheticSequences) {
  std::vector<double> R{2, 2.5, 3, 3.5, 4, 4.5};
  std::vector<double> conv, grow, zero(R.size(), 0.0);
  for (double r : R) {
    conv.push_back(3 + 2 * std::exp(-1.5 * r));
    grow.push_back(std::exp(2 * r));
  }
  auto c = extrapolate(R, conv);
  EXPECT_EQ(c.flag, MassFlag::finite);
  EXPECT_NEAR(c.limit, 3.0, 1e-8);
  EXPECT_NEAR(c.kappa, 1.5, 1e-4);
  EXPECT_EQ(extrapolate(R, grow).flag, MassFlag::diverging);
  auto z = extrapolate(R, zero);
  EXPECT_EQ(z.flag, MassFlag::finite);
  EXPECT_EQ(z.limit, 0.0);
  std::vector<double> noisy{1, -1, 1, -1, 1, -1};
  EXPECT_EQ(extrapolate(R, noisy).flag, MassFlag::noisy);
  EXPECT_THROW(extrapolate({1, 2}, {1, 2}), domain_error);
  EXPECT_THROW(extrapolate({1, 1, 2}, {1, 2, 3}), domain_error);
}

TEST(MassEngine, SlowDecayIsFlaggedDiverging) {
  ConformalCHPerturbation slow{2, 0.1, 2.0};
  auto row = mass_of_beta(slow, {"d2", ambient_diag(2, 2)}, {2, 2.5, 3, 3.5, 4, 4.5}, {8, 8});
  EXPECT_EQ(row.fit.flag, MassFlag::diverging);
}

TEST(MassEngine, DifferenceRatio) {
  EXPECT_NEAR(max_difference_ratio({0, 1, 1.5, 1.75}), 0.5, 1e-15);
  EXPECT_EQ(max_difference_ratio({1, 1, 1}), 0.0);
}
