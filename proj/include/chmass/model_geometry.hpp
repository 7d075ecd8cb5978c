#pragma once

#include "core.hpp"

#include <boost/numeric/odeint.hpp>

#include <functional>
#include <limits>
#include <optional>

namespace chmass {

// Standard complex structure on R^{2m} = C^m with real coordinates
// (Re w1, Im w1, Re w2, ...); J e_x = e_y.
inline Mat complex_structure(int m) {
  Mat J = Mat::Zero(2 * m, 2 * m);
  for (int k = 0; k < m; ++k) {
    J(2 * k + 1, 2 * k) = 1.0;
    J(2 * k, 2 * k + 1) = -1.0;
  }
  return J;
}

inline CVec to_complex(const Vec& p) {
  const int m = static_cast<int>(p.size()) / 2;
  CVec w(m);
  for (int k = 0; k < m; ++k) w[k] = cplx(p[2 * k], p[2 * k + 1]);
  return w;
}

inline Vec to_real(const CVec& w) {
  Vec p(2 * w.size());
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    p[2 * k] = w[k].real();
    p[2 * k + 1] = w[k].imag();
  }
  return p;
}

struct BallPoint {
  Vec w;

  static BallPoint make(const Vec& w, double eps_boundary = 1e-9) {
    if (w.size() == 0) throw domain_error("empty ball point");
    if (!(w.norm() < 1.0 - eps_boundary)) throw domain_error("point outside the unit ball");
    return BallPoint{w};
  }
  int m() const { return static_cast<int>(w.size()) / 2; }
};

// -------------------------------------------------------------------------
// metric fields

template <class F>
concept MetricField = requires(const F& f, const Vec& p) {
  { f.dim() } -> std::convertible_to<int>;
  { f.G(p) } -> std::convertible_to<Mat>;
};

// fields that can also return exact first derivatives dG[k] = d_k G
template <class F>
concept AnalyticMetric = MetricField<F> && requires(const F& f, const Vec& p) {
  { f.dG(p) } -> std::convertible_to<std::vector<Mat>>;
};

template <class F>
concept ChartBounded = requires(const F& f) {
  { f.chart_radius() } -> std::convertible_to<double>;
};

struct Euclidean {
  int n;
  int dim() const { return n; }
  Mat G(const Vec&) const { return Mat::Identity(n, n); }
  std::vector<Mat> dG(const Vec&) const { return std::vector<Mat>(n, Mat::Zero(n, n)); }
};

// Coefficients of a U(m)-invariant metric G = a(q) I + b(q) (p p^T + Jp Jp^T),
// q = |p|^2, with q-derivatives.
struct RadialCoeffs {
  double a = 0, da = 0, b = 0, db = 0;
};

inline Mat hopf_projector(const Vec& p, const Mat& J) {
  Vec Jp = J * p;
  return p * p.transpose() + Jp * Jp.transpose();
}

inline Mat radial_metric(const Vec& p, const Mat& J, const RadialCoeffs& c) {
  const int n = static_cast<int>(p.size());
  return c.a * Mat::Identity(n, n) + c.b * hopf_projector(p, J);
}

inline std::vector<Mat> radial_metric_derivs(const Vec& p, const Mat& J, const RadialCoeffs& c) {
  const int n = static_cast<int>(p.size());
  Vec Jp = J * p;
  Mat P = hopf_projector(p, J);
  std::vector<Mat> out(n);
  for (int k = 0; k < n; ++k) {
    Mat dP = Mat::Zero(n, n);
    dP.row(k) += p.transpose();
    dP.col(k) += p;
    dP += J.col(k) * Jp.transpose() + Jp * J.col(k).transpose();
    out[k] = 2.0 * p[k] * (c.da * Mat::Identity(n, n) + c.db * P) + c.b * dP;
  }
  return out;
}

inline RadialCoeffs ch_coeffs(double q) {
  const double s = 1.0 / (1.0 - q);
  return {s, s * s, s * s, 2.0 * s * s * s};
}

// Complex hyperbolic metric, holomorphic sectional curvature -4, in ball
// coordinates. Radial form (ds^2 + (J ds)^2 + s^2 (1 - s^2) g_FS)/(1 - s^2)^2,
// written in Cartesian form so the origin is not special.
inline Mat metric_ch(const Vec& p) {
  const int m = static_cast<int>(p.size()) / 2;
  const double q = p.squaredNorm();
  if (!(q < 1.0)) throw domain_error("metric_ch: point outside the ball");
  return radial_metric(p, complex_structure(m), ch_coeffs(q));
}

inline Mat metric_ch(const BallPoint& p) { return metric_ch(p.w); }

struct ChModel {
  int m;
  Mat J;
  explicit ChModel(int m_) : m(m_), J(complex_structure(m_)) {}
  int dim() const { return 2 * m; }
  double chart_radius() const { return 1.0; }
  Mat G(const Vec& p) const {
    const double q = p.squaredNorm();
    if (!(q < 1.0)) throw domain_error("ChModel: point outside the ball");
    return radial_metric(p, J, ch_coeffs(q));
  }
  std::vector<Mat> dG(const Vec& p) const { return radial_metric_derivs(p, J, ch_coeffs(p.squaredNorm())); }
};

// General U(m)-invariant Kahler metric given by its radial coefficients;
// covers profile metrics and potential-based test metrics.
struct RadialKahler {
  int m;
  Mat J;
  std::function<RadialCoeffs(double)> coeffs;
  double radius = 1.0;

  RadialKahler(int m_, std::function<RadialCoeffs(double)> c, double r = 1.0)
      : m(m_), J(complex_structure(m_)), coeffs(std::move(c)), radius(r) {}
  int dim() const { return 2 * m; }
  double chart_radius() const { return radius; }
  Mat G(const Vec& p) const { return radial_metric(p, J, coeffs(p.squaredNorm())); }
  std::vector<Mat> dG(const Vec& p) const { return radial_metric_derivs(p, J, coeffs(p.squaredNorm())); }
};

// Kahler metric from a radial potential phi(q): a = phi', b = phi''.
inline RadialKahler potential_metric(int m, std::function<double(double)> d1,
                                     std::function<double(double)> d2, std::function<double(double)> d3,
                                     double radius = 1.0) {
  return RadialKahler(
      m, [=](double q) { return RadialCoeffs{d1(q), d2(q), d2(q), d3(q)}; }, radius);
}

// Fubini-Study metric (holomorphic sectional curvature +4) in an affine chart.
inline RadialKahler fubini_study(int m) {
  return RadialKahler(
      m,
      [](double q) {
        const double s = 1.0 / (1.0 + q);
        return RadialCoeffs{s, -s * s, -s * s, 2.0 * s * s * s};
      },
      std::numeric_limits<double>::infinity());
}

// Real hyperbolic space, Poincare ball, sectional curvature -1.
struct PoincareBall {
  int n;
  int dim() const { return n; }
  double chart_radius() const { return 1.0; }
  Mat G(const Vec& p) const {
    const double q = p.squaredNorm();
    if (!(q < 1.0)) throw domain_error("PoincareBall: point outside the ball");
    return 4.0 / ((1 - q) * (1 - q)) * Mat::Identity(n, n);
  }
  std::vector<Mat> dG(const Vec& p) const {
    const double q = p.squaredNorm();
    std::vector<Mat> out(n);
    for (int k = 0; k < n; ++k) out[k] = 16.0 * p[k] / std::pow(1 - q, 3) * Mat::Identity(n, n);
    return out;
  }
};

inline Mat metric_rh(const Vec& p) { return PoincareBall{static_cast<int>(p.size())}.G(p); }

// -------------------------------------------------------------------------
// Christoffel symbols, stored as an n x n^2 matrix: Gam(k, i*n + j) = Gamma^k_ij.

inline double gam(const Mat& Gam, int k, int i, int j) { return Gam(k, i * Gam.rows() + j); }

inline Mat christoffel_from(const Mat& G, const std::vector<Mat>& dG) {
  const int n = static_cast<int>(G.rows());
  Mat Gi = G.inverse();
  Mat low(n, n * n);  // Gamma_{l,ij}
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) low(l, i * n + j) = 0.5 * (dG[i](j, l) + dG[j](i, l) - dG[l](i, j));
  return Gi * low;
}

template <MetricField F>
std::vector<Mat> metric_derivs_fd(const F& f, const Vec& p, double h) {
  const int n = f.dim();
  std::vector<Mat> dG(n);
  for (int k = 0; k < n; ++k) dG[k] = fd_dir([&](const Vec& x) { return Mat(f.G(x)); }, p, Vec::Unit(n, k), h);
  return dG;
}

template <MetricField F>
Mat christoffel_fd(const F& f, const Vec& p, double h = 0) {
  if (h <= 0) h = fd_step(p);
  Mat G = f.G(p);
  if (std::abs(G.determinant()) < 1e-300) throw domain_error("christoffel: singular metric");
  return christoffel_from(G, metric_derivs_fd(f, p, h));
}

// closed-form fast path when the field provides exact derivatives
template <MetricField F>
Mat christoffel(const F& f, const Vec& p) {
  if constexpr (AnalyticMetric<F>) {
    return christoffel_from(f.G(p), f.dG(p));
  } else {
    return christoffel_fd(f, p);
  }
}

// -------------------------------------------------------------------------
// curvature: R(X,Y) = [nabla_X, nabla_Y] - nabla_[X,Y],
// R(d_c, d_d) d_b = R^a_{bcd} d_a

struct RiemannTensor {
  int n;
  std::vector<double> r;  // index ((a*n + b)*n + c)*n + d
  double operator()(int a, int b, int c, int d) const { return r[((a * n + b) * n + c) * n + d]; }
};

template <MetricField F>
RiemannTensor riemann_tensor(const F& f, const Vec& p, bool force_fd = false, double h = 0) {
  const int n = f.dim();
  if (h <= 0) h = fd_step(p, 1e-3);
  auto gfun = [&](const Vec& x) -> Mat { return force_fd ? christoffel_fd(f, x) : christoffel(f, x); };
  Mat Gam = gfun(p);
  std::vector<Mat> dGam(n);
  for (int c = 0; c < n; ++c) dGam[c] = fd_dir(gfun, p, Vec::Unit(n, c), h);
  RiemannTensor R{n, std::vector<double>(static_cast<std::size_t>(n) * n * n * n, 0.0)};
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          double v = dGam[c](a, d * n + b) - dGam[d](a, c * n + b);
          for (int e = 0; e < n; ++e) v += Gam(a, c * n + e) * Gam(e, d * n + b) - Gam(a, d * n + e) * Gam(e, c * n + b);
          R.r[((a * n + b) * n + c) * n + d] = v;
        }
  return R;
}

struct CurvatureSample {
  Vec X, Y;
  Mat R;  // R(X,Y) acting on tangent vectors
  double sectional = 0;
  double holomorphic = std::numeric_limits<double>::quiet_NaN();
};

inline Mat curvature_operator(const RiemannTensor& R, const Vec& X, const Vec& Y) {
  const int n = R.n;
  Mat out = Mat::Zero(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double v = 0;
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) v += R(a, b, c, d) * X[c] * Y[d];
      out(a, b) = v;
    }
  return out;
}

inline double sectional_from(const Mat& G, const Mat& Rxy, const Vec& X, const Vec& Y) {
  const double area2 = X.dot(G * X) * Y.dot(G * Y) - std::pow(X.dot(G * Y), 2);
  if (area2 <= 1e-14 * X.dot(G * X) * Y.dot(G * Y)) throw domain_error("degenerate plane");
  return (Rxy * Y).dot(G * X) / area2;
}

template <MetricField F>
CurvatureSample riemann(const F& f, const Vec& p, const Vec& X, const Vec& Y, bool force_fd = false) {
  RiemannTensor R = riemann_tensor(f, p, force_fd);
  Mat G = f.G(p);
  CurvatureSample s{X, Y, curvature_operator(R, X, Y)};
  s.sectional = sectional_from(G, s.R, X, Y);
  if (f.dim() % 2 == 0) {
    Mat J = complex_structure(f.dim() / 2);
    Vec JX = J * X;
    s.holomorphic = sectional_from(G, curvature_operator(R, X, JX), X, JX);
  }
  return s;
}

inline double scal_from(const Mat& G, const RiemannTensor& R) {
  const int n = R.n;
  Mat Gi = G.inverse();
  double s = 0;
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < n; ++d) {
      double ric = 0;
      for (int a = 0; a < n; ++a) ric += R(a, b, a, d);
      s += Gi(b, d) * ric;
    }
  return s;
}

template <MetricField F>
double scal(const F& f, const Vec& p, bool force_fd = false) {
  return scal_from(f.G(p), riemann_tensor(f, p, force_fd));
}

// -------------------------------------------------------------------------
// geodesics

struct GeodesicResult {
  std::vector<double> t;
  std::vector<Vec> points;
  std::vector<Vec> velocities;
  bool truncated = false;
  double speed_drift = 0;  // max | |gamma'|_g - 1 |
};

namespace detail {
struct left_chart {};
}  // namespace detail

template <MetricField F>
GeodesicResult geodesic(const F& f, const Vec& p, const Vec& v, double length, int samples = 64,
                        double tol = 1e-12) {
  namespace ode = boost::numeric::odeint;
  const int n = f.dim();
  Mat G0 = f.G(p);
  const double nv = std::sqrt(v.dot(G0 * v));
  if (!(nv > 0)) throw domain_error("geodesic: zero initial velocity");
  std::vector<double> y(2 * n);
  for (int i = 0; i < n; ++i) {
    y[i] = p[i];
    y[n + i] = v[i] / nv;
  }
  double radius = std::numeric_limits<double>::infinity();
  if constexpr (ChartBounded<F>) radius = f.chart_radius();

  auto rhs = [&](const std::vector<double>& s, std::vector<double>& ds, double) {
    Vec x = Eigen::Map<const Vec>(s.data(), n);
    if (x.norm() >= radius * (1 - 1e-9)) throw detail::left_chart{};
    Vec u = Eigen::Map<const Vec>(s.data() + n, n);
    Mat Gam = christoffel(f, x);
    for (int k = 0; k < n; ++k) {
      ds[k] = u[k];
      double acc = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) acc += Gam(k, i * n + j) * u[i] * u[j];
      ds[n + k] = -acc;
    }
  };

  GeodesicResult out;
  auto observe = [&](const std::vector<double>& s, double t) {
    Vec x = Eigen::Map<const Vec>(s.data(), n);
    Vec u = Eigen::Map<const Vec>(s.data() + n, n);
    out.t.push_back(t);
    out.points.push_back(x);
    out.velocities.push_back(u);
    out.speed_drift = std::max(out.speed_drift, std::abs(std::sqrt(u.dot(f.G(x) * u)) - 1.0));
  };
  auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<std::vector<double>>());
  try {
    ode::integrate_const(stepper, rhs, y, 0.0, length, length / samples, observe);
  } catch (const detail::left_chart&) {
    out.truncated = true;
  }
  return out;
}

// -------------------------------------------------------------------------
// radial coordinates on the model: geodesic radius r, Euclidean radius
// s = tanh r, t = log s, momentum coordinate x = s^2/(1 - s^2) = sinh^2 r

struct Coords {
  double r, s, t, x;
};

inline Coords coords_from_r(double r) {
  if (!(r > 0)) throw domain_error("coord_maps: r must be positive");
  const double e = std::exp(-2 * r);
  return {r, std::tanh(r), std::log1p(-2 * e / (1 + e)), std::pow(std::sinh(r), 2)};
}

inline Coords coords_from_s(double s) {
  if (!(s > 0 && s < 1)) throw domain_error("coord_maps: s must lie in (0,1)");
  const double x = s * s / ((1 - s) * (1 + s));
  return {std::atanh(s), s, std::log(s), x};
}

inline Coords coords_from_t(double t) {
  if (!(t < 0)) throw domain_error("coord_maps: t must be negative");
  const double x = 1.0 / std::expm1(-2 * t);
  return {std::asinh(std::sqrt(x)), std::exp(t), t, x};
}

inline Coords coords_from_x(double x) {
  if (!(x > 0)) throw domain_error("coord_maps: x must be positive");
  return {std::asinh(std::sqrt(x)), std::sqrt(x / (1 + x)), 0.5 * (std::log(x) - std::log1p(x)), x};
}

}  // namespace chmass
