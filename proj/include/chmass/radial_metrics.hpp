#pragma once

#include "model_geometry.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>

#include <memory>

namespace chmass {

// U(m)-invariant Kahler metrics described by a momentum profile Theta(x).
// In the ball chart, with q = |w|^2 and x(q) fixed by dx/dq = Theta(x)/(2q),
//   g = (x/q) |dw|^2 + ((Theta/2 - x)/q^2) (p p^T + Jp Jp^T).

enum class ProfileKind { flat, ch, fs, custom };

inline std::string to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::flat: return "flat";
    case ProfileKind::ch: return "ch";
    case ProfileKind::fs: return "fs";
    case ProfileKind::custom: return "custom";
  }
  return "?";
}

inline ProfileKind profile_kind_from(const std::string& s) {
  if (s == "flat") return ProfileKind::flat;
  if (s == "ch") return ProfileKind::ch;
  if (s == "fs") return ProfileKind::fs;
  if (s == "custom") return ProfileKind::custom;
  throw config_error("unknown profile kind: " + s);
}

struct BumpSpec {
  double z0 = 1.0, z1 = 2.0;
  double sharpness = 1.0;  // chi ~ exp(-sharpness / ((z - z0)(z1 - z)))
};

// normalized bump chi with support [z0, z1] inside [1, inf)
class Bump {
 public:
  explicit Bump(BumpSpec s) : spec_(s) {
    if (!(s.z0 >= 1.0)) throw domain_error("bump support must lie inside [1, inf)");
    if (!(s.z1 > s.z0)) throw domain_error("bump support must have z1 > z0");
    if (!(s.sharpness > 0)) throw domain_error("bump sharpness must be positive");
    static thread_local boost::math::quadrature::tanh_sinh<double> ts;
    norm_ = ts.integrate([&](double z) { return raw(z); }, s.z0, s.z1);
    m1_ = ts.integrate([&](double z) { return z * raw(z); }, s.z0, s.z1) / norm_;
  }

  const BumpSpec& spec() const { return spec_; }
  double first_moment() const { return m1_; }

  double chi(double z) const { return raw(z) / norm_; }
  double dchi(double z) const {
    if (z <= spec_.z0 || z >= spec_.z1) return 0.0;
    const double u = (z - spec_.z0) * (spec_.z1 - z);
    const double du = spec_.z1 + spec_.z0 - 2 * z;
    return chi(z) * spec_.sharpness * du / (u * u);
  }

  // C0(x) = int_{z0}^x chi, C1(x) = int_{z0}^x z chi
  double c0(double x) const {
    if (x <= spec_.z0) return 0.0;
    if (x >= spec_.z1) return 1.0;
    return integrate([&](double z) { return chi(z); }, x);
  }
  double c1(double x) const {
    if (x <= spec_.z0) return 0.0;
    if (x >= spec_.z1) return m1_;
    return integrate([&](double z) { return z * chi(z); }, x);
  }
  // F(x) = int_0^x int_0^y chi = x C0(x) - C1(x); F' = C0; F'' = chi
  double F(double x) const {
    if (x <= spec_.z0) return 0.0;
    if (x >= spec_.z1) return x - m1_;
    return integrate([&](double z) { return (x - z) * chi(z); }, x);
  }

 private:
  double raw(double z) const {
    if (z <= spec_.z0 || z >= spec_.z1) return 0.0;
    return std::exp(-spec_.sharpness / ((z - spec_.z0) * (spec_.z1 - z)));
  }
  template <class G>
  double integrate(G&& g, double x) const {
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(g, spec_.z0, x, 3, 1e-13);
  }

  BumpSpec spec_;
  double norm_ = 1, m1_ = 0;
};

// the exp_sinh abscissa tables are costly to build, so keep one per thread
inline boost::math::quadrature::exp_sinh<double>& half_line() {
  static thread_local boost::math::quadrature::exp_sinh<double> es;
  return es;
}

// value and x-derivatives up to order 2
struct Jet2 {
  double v = 0, d1 = 0, d2 = 0;
};

// alpha(x) = x^{1-m} F(x)
inline Jet2 alpha_jet(const Bump& bump, int m, double x) {
  if (x <= bump.spec().z0) return {};
  const double F = bump.F(x), F1 = bump.c0(x), F2 = bump.chi(x);
  const double k = 1.0 - m;
  return {std::pow(x, k) * F, k * std::pow(x, k - 1) * F + std::pow(x, k) * F1,
          k * (k - 1) * std::pow(x, k - 2) * F + 2 * k * std::pow(x, k - 1) * F1 + std::pow(x, k) * F2};
}

inline double alpha_of_x(const Bump& bump, int m, double x) {
  if (m < 2) throw domain_error("alpha_of_x: m >= 2 required");
  if (x < 0) throw domain_error("alpha_of_x: x >= 0 required");
  return alpha_jet(bump, m, x).v;
}

class MomentumProfile {
 public:
  static MomentumProfile model(ProfileKind k, int m) {
    if (k == ProfileKind::custom) throw domain_error("use MomentumProfile::custom for bump profiles");
    MomentumProfile p;
    p.kind_ = k;
    p.m_ = m;
    return p;
  }

  // Theta = Theta_ch - alpha; rejects bumps that break positivity
  static MomentumProfile custom(const BumpSpec& spec, int m) {
    if (m < 2) throw domain_error("custom profile needs m >= 2");
    MomentumProfile p;
    p.kind_ = ProfileKind::custom;
    p.m_ = m;
    p.bump_ = std::make_shared<Bump>(spec);
    for (double lx = -3; lx <= 6.0 + 1e-12; lx += 0.01) {
      const double x = std::pow(10.0, lx);
      if (!(p.theta(x) > 0)) throw domain_error("custom profile: Theta not positive at x = " + std::to_string(x));
    }
    p.d_tail_ = p.d_tail(p.bump_->spec().z1);
    p.d_mid_ = p.d_mid(p.bump_->spec().z0) + p.d_tail_;
    return p;
  }

  ProfileKind kind() const { return kind_; }
  int m() const { return m_; }
  const Bump* bump() const { return bump_.get(); }
  double x_max() const { return kind_ == ProfileKind::fs ? 1.0 : std::numeric_limits<double>::infinity(); }

  static Jet2 theta_model(ProfileKind k, double x) {
    switch (k) {
      case ProfileKind::flat: return {2 * x, 2, 0};
      case ProfileKind::ch: return {2 * x + 2 * x * x, 2 + 4 * x, 4};
      case ProfileKind::fs: return {2 * x - 2 * x * x, 2 - 4 * x, -4};
      default: break;
    }
    throw domain_error("theta_model: not a model kind");
  }

  Jet2 theta_jet(double x) const {
    if (kind_ != ProfileKind::custom) return theta_model(kind_, x);
    Jet2 t = theta_model(ProfileKind::ch, x), a = alpha_jet(*bump_, m_, x);
    return {t.v - a.v, t.d1 - a.d1, t.d2 - a.d2};
  }
  double theta(double x) const { return theta_jet(x).v; }
  Jet2 alpha(double x) const { return kind_ == ProfileKind::custom ? alpha_jet(*bump_, m_, x) : Jet2{}; }

  // Theta''(0), Theta'''(0) for the expansion of s_Theta at the origin
  std::pair<double, double> theta_at_origin() const {
    switch (kind_) {
      case ProfileKind::flat: return {0, 0};
      case ProfileKind::fs: return {-4, 0};
      default: return {4, 0};
    }
  }

  // D(x) = int_x^inf alpha / (Theta Theta_ch): the gap between the gauges of
  // Theta and Theta_ch, both anchored at x = inf
  double gauge_gap(double x) const {
    if (kind_ != ProfileKind::custom) return 0.0;
    const auto& s = bump_->spec();
    if (x <= s.z0) return d_mid_;
    if (x < s.z1) return d_mid(x) + d_tail_;
    return d_tail(x);
  }

 private:
  double gap_integrand(double t) const {
    const double a = alpha_jet(*bump_, m_, t).v;
    return a / (theta(t) * theta_model(ProfileKind::ch, t).v);
  }
  double d_mid(double x) const {
    // the integrand carries ~1e-14 noise from the inner bump quadrature, so a
    // tighter target only drives the bisection to full depth
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate([&](double t) { return gap_integrand(t); }, x,
                                                                        bump_->spec().z1, 6, 1e-12);
  }
  double d_tail(double x) const {
    const double M1 = bump_->first_moment();
    const int m = m_;
    auto f = [&](double t) {
      const double s = x + t;
      const double a = std::pow(s, 1.0 - m) * (s - M1);
      const double th0 = 2 * s + 2 * s * s;
      return a / ((th0 - a) * th0);
    };
    return half_line().integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-14);
  }

  ProfileKind kind_ = ProfileKind::ch;
  int m_ = 2;
  std::shared_ptr<Bump> bump_;
  double d_tail_ = 0, d_mid_ = 0;
};

inline MomentumProfile theta_model(ProfileKind k, int m = 2) { return MomentumProfile::model(k, m); }
inline MomentumProfile theta_custom(const BumpSpec& spec, int m) { return MomentumProfile::custom(spec, m); }

// Scalar curvature of the profile metric. The bracket
//   2m(m-1)/x - (x^{m-1} Theta)''/x^{m-1}
// equals -2m(m+1) on the model, half of its Riemannian scalar curvature
// -4m(m+1); we return the Riemannian normalization.
inline double scal_profile(const MomentumProfile& P, double x) {
  const int m = P.m();
  if (!(x > 0)) throw domain_error("scal_profile: x > 0 required");
  double bracket;
  const bool smooth_origin = P.kind() != ProfileKind::custom || x <= P.bump()->spec().z0;
  if (x < 1e-4 && smooth_origin) {
    auto [t2, t3] = P.theta_at_origin();
    bracket = -((m - 1) * (m - 2) * t2 / 2 + 2 * (m - 1) * t2 + t2) - ((m - 1) * (m - 2) * t3 / 6 + (m - 1) * t3 + t3) * x;
  } else {
    Jet2 t = P.theta_jet(x);
    bracket = 2.0 * m * (m - 1) / x - ((m - 1) * (m - 2) * t.v / (x * x) + 2.0 * (m - 1) * t.d1 / x + t.d2);
  }
  return 2 * bracket;
}

// -------------------------------------------------------------------------
// chart identification

struct ChartCoeffs {
  double x = 0;
  RadialCoeffs g;  // a, da/dq, b, db/dq
};

// the complex hyperbolic chart values at q
inline ChartCoeffs chart_ch(double q) { return {q / (1 - q), ch_coeffs(q)}; }

// Perturbation of a custom profile from the model, computed directly from
// delta = x - x0 so that nothing cancels at large radius:
//   Delta a = delta/q,  Delta b = (Delta Theta/2 - delta)/q^2,
//   Delta Theta = delta (2 + 4 x0 + 2 delta) - alpha(x).
struct ProfilePerturbation {
  double x0 = 0, delta = 0, dtheta = 0;
  RadialCoeffs h;  // Delta a, d/dq, Delta b, d/dq
};

inline ProfilePerturbation profile_perturbation(const MomentumProfile& P, double q) {
  if (!(q > 0 && q < 1)) throw domain_error("profile_perturbation: q in (0,1) required");
  ProfilePerturbation out;
  const double x0 = q / (1 - q);
  out.x0 = x0;
  if (P.kind() != ProfileKind::custom) {
    if (P.kind() != ProfileKind::ch) throw domain_error("profile_perturbation: only ch and custom profiles are asymptotic to the model");
    return out;
  }
  const double z0 = P.bump()->spec().z0;
  const double D0 = P.gauge_gap(0.0);
  const double qs = std::exp(2 * D0) * q;
  if (qs <= z0 / (1 + z0)) {
    // inside the bump-free core the metric is the model dilated by exp(D0)
    const double e = std::exp(2 * D0);
    const double s = 1 / (1 - qs), s0 = 1 / (1 - q);
    out.delta = qs * s - x0;
    out.dtheta = 2 * (out.delta + x0) + 2 * std::pow(out.delta + x0, 2) - (2 * x0 + 2 * x0 * x0);
    out.h = {e * s - s0, e * e * s * s - s0 * s0, e * e * s * s - s0 * s0, 2 * e * e * e * s * s * s - 2 * s0 * s0 * s0};
    return out;
  }
  auto g = [&](double d) { return 0.5 * (std::log1p(d / x0) - std::log1p(d / (1 + x0))) - P.gauge_gap(x0 + d); };
  double lo = 0, hi = std::max(1e-3, x0 * 1e-3);
  if (g(lo) >= 0) {
    out.delta = 0;
  } else {
    while (g(hi) < 0) {
      lo = hi;
      hi *= 2;
      if (hi > 1e12 * (1 + x0)) throw domain_error("profile_perturbation: gauge root not bracketed");
    }
    std::uintmax_t it = 200;
    auto r = boost::math::tools::toms748_solve(g, lo, hi, boost::math::tools::eps_tolerance<double>(52), it);
    out.delta = 0.5 * (r.first + r.second);
  }
  const double d = out.delta, x = x0 + d;
  Jet2 a = P.alpha(x);
  const double th0x0 = 2 * x0 + 2 * x0 * x0, th0p = 2 + 4 * x0;
  out.dtheta = d * (2 + 4 * x0 + 2 * d) - a.v;
  const double thx = th0x0 + out.dtheta;
  const double ddelta = out.dtheta / (2 * q);
  const double ddtheta = (th0p * out.dtheta + (4 * d - a.d1) * thx) / (2 * q);
  const double num_b = out.dtheta / 2 - d;
  out.h = {d / q, ddelta / q - d / (q * q), num_b / (q * q), (ddtheta / 2 - ddelta) / (q * q) - 2 * num_b / (q * q * q)};
  return out;
}

// Chart coefficients of a profile metric at q.
inline ChartCoeffs chart_of_profile(const MomentumProfile& P, double q) {
  if (!(q > 0 && q < 1)) throw domain_error("chart_of_profile: q in (0,1) required");
  auto from_x = [&](double x, double dxdq) {
    Jet2 t = P.theta_jet(x);
    const double a = x / q, b = (t.v / 2 - x) / (q * q);
    const double da = dxdq / q - x / (q * q);
    const double db = (t.d1 * dxdq / 2 - dxdq) / (q * q) - 2 * b / q;
    return ChartCoeffs{x, {a, da, b, db}};
  };
  switch (P.kind()) {
    case ProfileKind::flat: return from_x(q, 1.0);
    case ProfileKind::fs: return from_x(q / (1 + q), 1 / ((1 + q) * (1 + q)));
    case ProfileKind::ch: {
      const double x = q / (1 - q);
      return from_x(x, P.theta(x) / (2 * q));
    }
    case ProfileKind::custom: {
      ProfilePerturbation pp = profile_perturbation(P, q);
      RadialCoeffs c = ch_coeffs(q);
      return {pp.x0 + pp.delta, {c.a + pp.h.a, c.da + pp.h.da, c.b + pp.h.b, c.db + pp.h.db}};
    }
  }
  throw domain_error("chart_of_profile: unknown kind");
}

// Independent route for profiles with quadratic growth: solve
//   -int_x^inf ds/Theta(s) = log|w|
// by quadrature and root finding, then read off the coefficients.
inline ChartCoeffs chart_by_gauge(const MomentumProfile& P, double q) {
  if (P.kind() == ProfileKind::flat || P.kind() == ProfileKind::fs)
    throw domain_error("chart_by_gauge: profile has no gauge anchored at infinity");
  auto t_of = [&](double x) {
    return -half_line().integrate([&](double s) { return 1.0 / P.theta(x + s); }, 0.0, std::numeric_limits<double>::infinity(), 1e-15);
  };
  const double target = 0.5 * std::log(q);
  auto g = [&](double x) { return t_of(x) - target; };
  double lo = 1e-12, hi = 1.0;
  while (g(hi) < 0) {
    lo = hi;
    hi *= 4;
  }
  std::uintmax_t it = 200;
  auto r = boost::math::tools::toms748_solve(g, lo, hi, boost::math::tools::eps_tolerance<double>(52), it);
  const double x = 0.5 * (r.first + r.second);
  Jet2 t = P.theta_jet(x);
  const double dxdq = t.v / (2 * q);
  const double a = x / q, b = (t.v / 2 - x) / (q * q);
  return {x, {a, dxdq / q - x / (q * q), b, (t.d1 * dxdq / 2 - dxdq) / (q * q) - 2 * b / q}};
}

// metric field of a profile in the ball chart
struct ProfileMetric {
  MomentumProfile P;
  int dim() const { return 2 * P.m(); }
  double chart_radius() const { return P.kind() == ProfileKind::fs || P.kind() == ProfileKind::flat ? 1e300 : 1.0; }

  RadialCoeffs coeffs(double q) const {
    if (q < 1e-14) {
      // the origin limit: the dilation of the model core, or the models themselves
      const double D0 = P.gauge_gap(0.0);
      const double e = std::exp(2 * D0);
      switch (P.kind()) {
        case ProfileKind::flat: return {1, 0, 0, 0};
        case ProfileKind::fs: return {1, -1, -1, 2};
        default: return {e, e * e, e * e, 2 * e * e * e};
      }
    }
    return chart_of_profile(P, q).g;
  }
  Mat G(const Vec& p) const { return radial_metric(p, complex_structure(P.m()), coeffs(p.squaredNorm())); }
  std::vector<Mat> dG(const Vec& p) const {
    return radial_metric_derivs(p, complex_structure(P.m()), coeffs(p.squaredNorm()));
  }
};

inline Mat metric_of_profile(const MomentumProfile& P, const Vec& p) {
  BallPoint::make(p);
  return ProfileMetric{P}.G(p);
}

// -------------------------------------------------------------------------
// decay diagnostics of the custom profile against the model

struct DecaySample {
  double R = 0, q = 0;
  double trace = 0;  // tr_{g0}(g - g0)
  double norm = 0;   // |g - g0|_{g0}
};

inline DecaySample decay_sample(const MomentumProfile& P, double R) {
  const int m = P.m();
  const double s = std::tanh(R), q = s * s;
  ProfilePerturbation pp = profile_perturbation(P, q);
  RadialCoeffs c = ch_coeffs(q);
  // eigenvalues of g0^{-1} h: on span(p, Jp) and on its complement
  const double e_par = (pp.h.a + pp.h.b * q) / (c.a + c.b * q);
  const double e_perp = pp.h.a / c.a;
  return {R, q, 2 * e_par + (2 * m - 2) * e_perp, std::sqrt(2 * e_par * e_par + (2 * m - 2) * e_perp * e_perp)};
}

struct SlopeFit {
  double slope = 0, intercept = 0, rms = 0;
};

// least squares fit of log|y| = intercept - slope * R
inline SlopeFit fit_decay(const std::vector<double>& R, const std::vector<double>& y) {
  const std::size_t n = R.size();
  Mat A(n, 2);
  Vec b(n);
  for (std::size_t i = 0; i < n; ++i) {
    A(i, 0) = 1;
    A(i, 1) = -R[i];
    b[i] = std::log(std::abs(y[i]));
  }
  Vec c = A.colPivHouseholderQr().solve(b);
  return {c[1], c[0], std::sqrt((A * c - b).squaredNorm() / n)};
}

struct ProfileRow {
  double x, theta0, theta, alpha, scal0, scal, margin, conv;
};

// (x^{m-1} alpha)''
inline double convexity(const MomentumProfile& P, double x) {
  const int m = P.m();
  const Jet2 a = P.alpha(x);
  const double k = m - 1;
  return k * (k - 1) * std::pow(x, k - 2) * a.v + 2 * k * std::pow(x, k - 1) * a.d1 + std::pow(x, k) * a.d2;
}

// rows for profile.csv on a log grid
inline std::vector<ProfileRow> profile_table(const MomentumProfile& P, double lx0 = -3, double lx1 = 5, int n = 161) {
  const int m = P.m();
  MomentumProfile P0 = theta_model(ProfileKind::ch, m);
  std::vector<ProfileRow> rows;
  for (int i = 0; i < n; ++i) {
    const double x = std::pow(10.0, lx0 + (lx1 - lx0) * i / (n - 1));
    const double s0 = scal_profile(P0, x), s = scal_profile(P, x);
    rows.push_back({x, P0.theta(x), P.theta(x), P.alpha(x).v, s0, s, s - s0, convexity(P, x)});
  }
  return rows;
}

}  // namespace chmass
