#pragma once

#include "hyperbolic_connections.hpp"
#include "radial_metrics.hpp"

#include <array>

#include <boost/math/special_functions/legendre.hpp>

namespace chmass {

// -------------------------------------------------------------------------
// perturbations h = g - g0 of a background metric, with exact first derivatives

template <class P>
concept Perturbation = requires(const P& x, const Vec& p) {
  { x.dim() } -> std::convertible_to<int>;
  { x.h(p) } -> std::convertible_to<Mat>;
  { x.dh(p) } -> std::convertible_to<std::vector<Mat>>;
};

struct ZeroPerturbation {
  int n;
  int dim() const { return n; }
  Mat h(const Vec&) const { return Mat::Zero(n, n); }
  std::vector<Mat> dh(const Vec&) const { return std::vector<Mat>(n, Mat::Zero(n, n)); }
};

// appendix metric minus the model, from the profile gauge solution
struct ProfilePerturbationField {
  MomentumProfile P;
  int dim() const { return 2 * P.m(); }
  // nodes of one sphere share a handful of q values; exact-key memo per thread
  RadialCoeffs coeffs(const Vec& p) const {
    struct Entry {
      const void* bump;
      int kind, m;
      double q;
      RadialCoeffs c;
    };
    thread_local std::array<Entry, 8> memo{};
    thread_local std::size_t next = 0;
    const double q = p.squaredNorm();
    const int kind = static_cast<int>(P.kind());
    for (auto& e : memo)
      if (e.m == P.m() && e.q == q && e.kind == kind && e.bump == P.bump()) return e.c;
    RadialCoeffs c = profile_perturbation(P, q).h;
    memo[next++ % memo.size()] = {P.bump(), kind, P.m(), q, c};
    return c;
  }
  Mat h(const Vec& p) const { return radial_metric(p, complex_structure(P.m()), coeffs(p)); }
  std::vector<Mat> dh(const Vec& p) const { return radial_metric_derivs(p, complex_structure(P.m()), coeffs(p)); }
};

// g = (1 + eps sech^a r) g_CH, i.e. phi = eps (1 - q)^{a/2}; decays like e^{-a r}.
// Not Kahler; used as a control outside the decay hypotheses.
struct ConformalCHPerturbation {
  int m;
  double eps, a;
  int dim() const { return 2 * m; }
  double phi(double q) const { return eps * std::pow(1 - q, a / 2); }
  double dphi(double q) const { return -eps * (a / 2) * std::pow(1 - q, a / 2 - 1); }
  Mat h(const Vec& p) const { return phi(p.squaredNorm()) * metric_ch(p); }
  std::vector<Mat> dh(const Vec& p) const {
    ChModel ch{m};
    auto d0 = ch.dG(p);
    Mat G0 = ch.G(p);
    const double q = p.squaredNorm(), f = phi(q), df = dphi(q);
    for (int k = 0; k < 2 * m; ++k) d0[k] = f * d0[k] + 2 * p[k] * df * G0;
    return d0;
  }
};

// g = (1 + eps e^{-a r}) g_RH on the Poincare ball, e^{-r} = (1 - s)/(1 + s)
struct ConformalRHPerturbation {
  int n;
  double eps, a;
  int dim() const { return n; }
  double phi(double s) const { return eps * std::pow((1 - s) / (1 + s), a); }
  Mat h(const Vec& p) const { return phi(p.norm()) * metric_rh(p); }
  std::vector<Mat> dh(const Vec& p) const {
    PoincareBall pb{n};
    auto d0 = pb.dG(p);
    Mat G0 = pb.G(p);
    const double s = p.norm(), f = phi(s);
    const double dfds = -2 * a * f / (1 - s * s);
    for (int k = 0; k < n; ++k) d0[k] = f * d0[k] + dfds * (p[k] / s) * G0;
    return d0;
  }
};

// h = F - background, for any analytic metric field (used for two-path checks)
template <AnalyticMetric F, AnalyticMetric B>
struct DifferencePerturbation {
  F f;
  B background;
  int dim() const { return f.dim(); }
  Mat h(const Vec& p) const { return f.G(p) - background.G(p); }
  std::vector<Mat> dh(const Vec& p) const {
    auto a = f.dG(p), b = background.dG(p);
    for (std::size_t k = 0; k < a.size(); ++k) a[k] -= b[k];
    return a;
  }
};

// pullback by a ball automorphism; the model is invariant so h pulls back alone
template <Perturbation P>
struct PulledPerturbation {
  P base;
  BallMap map;
  int dim() const { return base.dim(); }
  Mat h(const Vec& p) const {
    Mat D = map.jacobian(p);
    return D.transpose() * base.h(map(p)) * D;
  }
  std::vector<Mat> dh(const Vec& p) const {
    const int n = dim();
    Mat D = map.jacobian(p);
    auto dD = map.jacobian_derivs(p);
    Vec fp = map(p);
    Mat H = base.h(fp);
    auto dH = base.dh(fp);
    std::vector<Mat> out(n);
    for (int k = 0; k < n; ++k) {
      Mat dHk = Mat::Zero(n, n);
      for (int l = 0; l < n; ++l) dHk += D(l, k) * dH[l];
      out[k] = dD[k].transpose() * H * D + D.transpose() * H * dD[k] + D.transpose() * dHk * D;
    }
    return out;
  }
};

// background plus perturbation as a metric field
template <AnalyticMetric B, Perturbation P>
struct PerturbedMetric {
  B background;
  P pert;
  int dim() const { return background.dim(); }
  Mat G(const Vec& p) const { return background.G(p) + pert.h(p); }
  std::vector<Mat> dG(const Vec& p) const {
    auto a = background.dG(p), b = pert.dh(p);
    for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
    return a;
  }
};

// -------------------------------------------------------------------------
// the boundary one-form

struct TraceDiv {
  double trace = 0;  // tr_{g0} h
  Vec dtrace;        // d tr_{g0} h
  Vec div;           // Div_{g0} h = -g0^{ij} (nabla_i h)_{j.}
  Vec sum() const { return dtrace + div; }
};

template <AnalyticMetric B, Perturbation P>
TraceDiv trace_div(const B& bg, const P& pert, const Vec& p) {
  const int n = bg.dim();
  Mat G0 = bg.G(p);
  auto dG0 = bg.dG(p);
  Mat Gi = G0.inverse();
  Mat Gam = christoffel_from(G0, dG0);
  Mat H = pert.h(p);
  auto dH = pert.dh(p);
  TraceDiv out;
  out.trace = (Gi * H).trace();
  out.dtrace = Vec(n);
  Mat GiH = Gi * H;
  for (int k = 0; k < n; ++k) out.dtrace[k] = (Gi * dH[k]).trace() - (Gi * dG0[k] * GiH).trace();
  out.div = Vec::Zero(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (Gi(i, j) == 0.0) continue;
      for (int l = 0; l < n; ++l) {
        double nab = dH[i](j, l);
        for (int k = 0; k < n; ++k) nab -= gam(Gam, k, i, j) * H(k, l) + gam(Gam, k, i, l) * H(j, k);
        out.div[l] -= Gi(i, j) * nab;
      }
    }
  return out;
}

// Self-convergence check of trace_div against finite differences of h,
// returns the observed order from steps h and h/2.
template <AnalyticMetric B, Perturbation P>
double div_trace_fd_order(const B& bg, const P& pert, const Vec& p, double h) {
  struct FDPert {
    const P& base;
    double step;
    int dim() const { return base.dim(); }
    Mat h(const Vec& x) const { return base.h(x); }
    std::vector<Mat> dh(const Vec& x) const {
      std::vector<Mat> out(dim());
      for (int k = 0; k < dim(); ++k) {
        Vec e = Vec::Unit(dim(), k) * step;
        out[k] = (base.h(x + e) - base.h(x - e)) / (2 * step);
      }
      return out;
    }
  };
  Vec exact = trace_div(bg, pert, p).sum();
  const double e1 = (trace_div(bg, FDPert{pert, h}, p).sum() - exact).norm();
  const double e2 = (trace_div(bg, FDPert{pert, h / 2}, p).sum() - exact).norm();
  return std::log2(e1 / e2);
}

// lambda = (d tr h + Div h) u - 1/2 tr h du
inline Vec ch_oneform(const TraceDiv& td, double u, const Vec& du) { return td.sum() * u - 0.5 * td.trace * du; }

// the same integrand written with alpha = J du: (d tr h + Div h) u + 1/2 tr h J alpha
inline Vec ch_oneform_alpha(const TraceDiv& td, double u, const Vec& alpha, const Mat& J) {
  return td.sum() * u + 0.5 * td.trace * J_covector(J, alpha);
}

// lambda = (d tr h + Div h) u - tr h du + h(grad u, .)
inline Vec rh_oneform(const TraceDiv& td, const Mat& H, const Mat& G0, double u, const Vec& du) {
  return td.sum() * u - td.trace * du + H * (G0.inverse() * du);
}

// -------------------------------------------------------------------------
// sphere rules

struct SphereNode {
  Vec dir;        // unit Euclidean direction
  double weight;  // round-sphere measure weight
};

struct SphereRule {
  int dim = 0;  // ambient real dimension
  std::string kind;
  std::vector<SphereNode> nodes;
  double total() const {
    double s = 0;
    for (auto& n : nodes) s += n.weight;
    return s;
  }
};

inline double unit_sphere_volume(int n) {  // S^{n-1} in R^n
  return 2 * std::pow(pi, n / 2.0) / std::tgamma(n / 2.0);
}

// Gauss-Legendre nodes and weights on [a, b]
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int k, double a, double b) {
  std::vector<double> x, w;
  auto zeros = boost::math::legendre_p_zeros<double>(k);  // non-negative zeros
  std::vector<double> all;
  for (double z : zeros) {
    all.push_back(z);
    if (z > 0) all.push_back(-z);
  }
  std::sort(all.begin(), all.end());
  for (double z : all) {
    const double dp = boost::math::legendre_p_prime<double>(k, z);
    const double wt = 2 / ((1 - z * z) * dp * dp);
    x.push_back(a + (b - a) * (z + 1) / 2);
    w.push_back(wt * (b - a) / 2);
  }
  return {x, w};
}

// S^{2m-1} in C^m via nested Hopf coordinates:
//   w_j = (prod_{i<j} sin t_i) cos t_j e^{i f_j}, the last without the cosine,
// measure prod_j cos t_j sin^{2(m-j)-1} t_j dt_j prod df_j
inline SphereRule hopf_rule(int m, int n_theta, int n_phase) {
  SphereRule rule{2 * m, "hopf-gauss-trapezoid", {}};
  auto [tx, tw] = gauss_legendre(n_theta, 0, pi / 2);
  const int nt = m - 1;
  std::vector<int> ti(nt, 0), fi(m, 0);
  const double dphi = 2 * pi / n_phase;
  std::size_t total = 1;
  for (int i = 0; i < nt; ++i) total *= n_theta;
  for (int i = 0; i < m; ++i) total *= n_phase;
  rule.nodes.reserve(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t r = idx;
    for (int i = 0; i < m; ++i) {
      fi[i] = static_cast<int>(r % n_phase);
      r /= n_phase;
    }
    for (int i = 0; i < nt; ++i) {
      ti[i] = static_cast<int>(r % n_theta);
      r /= n_theta;
    }
    CVec w(m);
    double rad = 1, wt = 1;
    for (int j = 0; j < m; ++j) {
      double mod = rad;
      if (j < nt) {
        const double t = tx[ti[j]];
        mod = rad * std::cos(t);
        wt *= tw[ti[j]] * std::cos(t) * std::pow(std::sin(t), 2 * (m - j - 1) - 1);
        rad *= std::sin(t);
      }
      w[j] = std::polar(mod, fi[j] * dphi);
      wt *= dphi;
    }
    rule.nodes.push_back({to_real(w), wt});
  }
  return rule;
}

// S^{n-1} in R^n via hyperspherical angles, Gauss in the polar angles and
// trapezoid in the last one
inline SphereRule hyperspherical_rule(int n, int n_theta, int n_phase) {
  SphereRule rule{n, "hyperspherical-gauss-trapezoid", {}};
  auto [tx, tw] = gauss_legendre(n_theta, 0, pi);
  const int nt = n - 2;
  std::size_t total = n_phase;
  for (int i = 0; i < nt; ++i) total *= n_theta;
  const double dphi = 2 * pi / n_phase;
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t r = idx;
    const int fi = static_cast<int>(r % n_phase);
    r /= n_phase;
    Vec x(n);
    double rad = 1, wt = dphi;
    for (int j = 0; j < nt; ++j) {
      const int k = static_cast<int>(r % n_theta);
      r /= n_theta;
      const double t = tx[k];
      x[j] = rad * std::cos(t);
      wt *= tw[k] * std::pow(std::sin(t), n - 2 - j);
      rad *= std::sin(t);
    }
    x[n - 2] = rad * std::cos(fi * dphi);
    x[n - 1] = rad * std::sin(fi * dphi);
    rule.nodes.push_back({x, wt});
  }
  return rule;
}

// area element of the Euclidean sphere |p| = s in the metric G, per unit
// round measure: s^{n-1} sqrt(det G) |d|p||_G
inline double area_factor(const Mat& G, const Vec& dir, double s) {
  const int n = static_cast<int>(dir.size());
  Mat Gi = G.inverse();
  return std::pow(s, n - 1) * std::sqrt(G.determinant()) * std::sqrt(dir.dot(Gi * dir));
}

// outward G-unit normal of the sphere |p| = s
inline Vec outward_normal(const Mat& G, const Vec& dir) {
  Vec v = G.inverse() * dir;
  return v / std::sqrt(v.dot(G * v));
}

// -------------------------------------------------------------------------
// mass integrals on spheres

enum class Model { ch, rh };

// Euclidean radius of the geodesic sphere of model radius R
inline double ball_radius(Model model, double R) { return model == Model::ch ? std::tanh(R) : std::tanh(R / 2); }

// u functions on RH^n: u_V = V_0 X_0 + sum V_i X_i on the hyperboloid lift
inline double u_rh(const Vec& V, const Vec& p) {
  const double q = p.squaredNorm();
  return (V[0] * (1 + q) + 2 * V.tail(p.size()).dot(p)) / (1 - q);
}
inline Vec du_rh(const Vec& V, const Vec& p) {
  const double q = p.squaredNorm();
  const double u = u_rh(V, p);
  return (2 * V[0] * p + 2 * V.tail(p.size())) / (1 - q) + u * 2 * p / (1 - q);
}

struct SphereValues {
  double R = 0;
  std::vector<double> values;  // one per input form
};

// -1/4 int_{S_R} lambda(nu) dA for every form in `betas`
template <Perturbation P>
SphereValues ch_mass_at(const P& pert, const std::vector<Mat>& betas, double R, const SphereRule& rule,
                        bool alpha_form = false) {
  const int n = pert.dim();
  const int m = n / 2;
  const double s = ball_radius(Model::ch, R);
  ChModel bg{m};
  Mat J = complex_structure(m);
  const std::size_t nb = betas.size();
  std::vector<double> contrib(rule.nodes.size() * nb, 0.0);
  parallel_for(rule.nodes.size(), [&](std::size_t i) {
    const auto& node = rule.nodes[i];
    Vec p = s * node.dir;
    Mat G0 = bg.G(p);
    TraceDiv td = trace_div(bg, pert, p);
    Vec nu = outward_normal(G0, node.dir);
    const double dA = node.weight * area_factor(G0, node.dir, s);
    for (std::size_t b = 0; b < nb; ++b) {
      const double u = u_of_beta(betas[b], p);
      Vec du = du_of_beta(betas[b], p);
      Vec lam = alpha_form ? ch_oneform_alpha(td, u, J_covector(J, du), J) : ch_oneform(td, u, du);
      contrib[i * nb + b] = lam.dot(nu) * dA;
    }
  });
  SphereValues out{R, std::vector<double>(nb, 0.0)};
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    for (std::size_t b = 0; b < nb; ++b) out.values[b] += contrib[i * nb + b];
  for (auto& v : out.values) v *= -0.25;
  return out;
}

template <Perturbation P>
SphereValues rh_mass_at(const P& pert, const std::vector<Vec>& us, double R, const SphereRule& rule) {
  const int n = pert.dim();
  const double s = ball_radius(Model::rh, R);
  PoincareBall bg{n};
  const std::size_t nb = us.size();
  std::vector<double> contrib(rule.nodes.size() * nb, 0.0);
  parallel_for(rule.nodes.size(), [&](std::size_t i) {
    const auto& node = rule.nodes[i];
    Vec p = s * node.dir;
    Mat G0 = bg.G(p);
    TraceDiv td = trace_div(bg, pert, p);
    Mat H = pert.h(p);
    Vec nu = outward_normal(G0, node.dir);
    const double dA = node.weight * area_factor(G0, node.dir, s);
    for (std::size_t b = 0; b < nb; ++b)
      contrib[i * nb + b] = rh_oneform(td, H, G0, u_rh(us[b], p), du_rh(us[b], p)).dot(nu) * dA;
  });
  SphereValues out{R, std::vector<double>(nb, 0.0)};
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    for (std::size_t b = 0; b < nb; ++b) out.values[b] += contrib[i * nb + b];
  for (auto& v : out.values) v *= -0.25;
  return out;
}

// -------------------------------------------------------------------------
// extrapolation R -> infinity

enum class MassFlag { finite, diverging, noisy };

inline std::string to_string(MassFlag f) {
  switch (f) {
    case MassFlag::finite: return "finite";
    case MassFlag::diverging: return "diverging";
    case MassFlag::noisy: return "noisy";
  }
  return "?";
}

struct Extrapolation {
  double limit = 0;
  double kappa = 0;
  double amplitude = 0;
  double residual = 0;  // RMS fit residual relative to max(|limit|, scale)
  bool fallback = false;
  MassFlag flag = MassFlag::finite;
};

struct ExtrapolationOptions {
  double noise_tol = 1e-2;    // relative residual above which the fit is noisy
  double zero_tol = 1e-9;     // absolute size below which the data are treated as zero
  double rel_zero = 1e-8;     // same, relative to the largest entry of a report
  double kappa_min = -12, kappa_max = 12;
};

// fit v(R) = v_inf + c exp(-kappa R): scan kappa, linear least squares for
// (v_inf, c), then golden-section refinement around the best scan point
inline Extrapolation extrapolate(const std::vector<double>& R, const std::vector<double>& v,
                                 const ExtrapolationOptions& opt = {}) {
  const std::size_t n = R.size();
  if (n != v.size() || n < 3) throw domain_error("extrapolate: need at least 3 samples");
  for (std::size_t i = 1; i < n; ++i)
    if (!(R[i] > R[i - 1])) throw domain_error("extrapolate: R schedule must be increasing");
  Extrapolation out;
  double vmax = 0;
  for (double x : v) {
    if (!std::isfinite(x)) {
      out.flag = MassFlag::noisy;
      out.limit = std::numeric_limits<double>::quiet_NaN();
      return out;
    }
    vmax = std::max(vmax, std::abs(x));
  }
  if (vmax <= opt.zero_tol) {
    double mean = 0;
    for (double x : v) mean += x;
    out.limit = mean / n;
    return out;
  }
  auto solve = [&](double kappa, double& vinf, double& c) {
    Mat A(n, 2);
    Vec b(n);
    for (std::size_t i = 0; i < n; ++i) {
      A(i, 0) = 1;
      A(i, 1) = std::exp(-kappa * (R[i] - R[0]));
      b[i] = v[i];
    }
    Vec x = A.colPivHouseholderQr().solve(b);
    vinf = x[0];
    c = x[1];
    return std::sqrt((A * x - b).squaredNorm() / n);
  };
  const int scan = 481;
  double best_k = 0, best_r = std::numeric_limits<double>::infinity();
  for (int i = 0; i < scan; ++i) {
    const double k = opt.kappa_min + (opt.kappa_max - opt.kappa_min) * i / (scan - 1);
    if (std::abs(k) < 1e-3) continue;
    double a, c;
    const double r = solve(k, a, c);
    if (r < best_r) {
      best_r = r;
      best_k = k;
    }
  }
  const double step = (opt.kappa_max - opt.kappa_min) / (scan - 1);
  double lo = best_k - step, hi = best_k + step;
  const double g = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 80; ++it) {
    const double k1 = hi - g * (hi - lo), k2 = lo + g * (hi - lo);
    double a, c;
    if (solve(k1, a, c) < solve(k2, a, c)) hi = k2;
    else lo = k1;
  }
  out.kappa = 0.5 * (lo + hi);
  best_r = solve(out.kappa, out.limit, out.amplitude);
  out.amplitude *= std::exp(out.kappa * R[0]);
  const double scale = std::max(std::abs(out.limit), vmax * 1e-2);
  out.residual = best_r / scale;

  bool monotone_growth = true;
  for (std::size_t i = 1; i < n; ++i) monotone_growth = monotone_growth && std::abs(v[i]) > std::abs(v[i - 1]);
  const double last_step = std::abs(v[n - 1] - v[n - 2]), prev_step = std::abs(v[n - 2] - v[n - 3]);
  if (out.kappa <= 0.05 && monotone_growth && last_step >= prev_step) {
    out.flag = MassFlag::diverging;
    out.limit = std::numeric_limits<double>::infinity() * (v[n - 1] > 0 ? 1 : -1);
    return out;
  }
  if (out.kappa <= 0.05 || !std::isfinite(out.limit)) {
    // ill-conditioned: last value with the last difference as the error bar
    out.fallback = true;
    out.limit = v[n - 1];
    out.residual = last_step / std::max(std::abs(v[n - 1]), opt.zero_tol);
  }
  out.flag = out.residual > opt.noise_tol ? MassFlag::noisy : MassFlag::finite;
  return out;
}

// -------------------------------------------------------------------------
// reports

struct MassRow {
  std::string id;
  std::vector<double> R, values;
  Extrapolation fit;
};

struct MassReport {
  std::vector<MassRow> rows;
  std::vector<double> functional() const {
    std::vector<double> out;
    for (auto& r : rows) out.push_back(r.fit.limit);
    return out;
  }
};

struct QuadratureSpec {
  int n_theta = 24;
  int n_phase = 24;
};

inline SphereRule ch_rule(int m, const QuadratureSpec& q) { return hopf_rule(m, q.n_theta, q.n_phase); }

template <Perturbation P>
MassReport mass_of_betas(const P& pert, const std::vector<NamedForm>& betas, const std::vector<double>& R_schedule,
                         const QuadratureSpec& quad, const ExtrapolationOptions& opt = {}) {
  const int m = pert.dim() / 2;
  SphereRule rule = ch_rule(m, quad);
  std::vector<Mat> Bs;
  for (auto& b : betas) Bs.push_back(b.B);
  MassReport rep;
  for (auto& b : betas) rep.rows.push_back({b.id, {}, {}, {}});
  for (double R : R_schedule) {
    SphereValues sv = ch_mass_at(pert, Bs, R, rule);
    for (std::size_t i = 0; i < betas.size(); ++i) {
      rep.rows[i].R.push_back(R);
      rep.rows[i].values.push_back(sv.values[i]);
    }
  }
  double scale = 0;
  for (auto& r : rep.rows)
    for (double v : r.values) scale = std::max(scale, std::abs(v));
  ExtrapolationOptions o = opt;
  o.zero_tol = std::max(opt.zero_tol, opt.rel_zero * scale);
  for (auto& r : rep.rows) r.fit = extrapolate(r.R, r.values, o);
  return rep;
}

template <Perturbation P>
MassRow mass_of_beta(const P& pert, const NamedForm& beta, const std::vector<double>& R_schedule,
                     const QuadratureSpec& quad, const ExtrapolationOptions& opt = {}) {
  return mass_of_betas(pert, {beta}, R_schedule, quad, opt).rows.front();
}

// basis of the space the functional lives on: the primitive part for odd m,
// all of Lambda^2_J R^{2m,2} for even m
inline std::vector<NamedForm> mass_basis(int m) { return m % 2 ? primitive_basis(m) : ambient_basis(m); }

template <Perturbation P>
MassReport mass_functional(const P& pert, const std::vector<double>& R_schedule, const QuadratureSpec& quad,
                           const ExtrapolationOptions& opt = {}) {
  return mass_of_betas(pert, mass_basis(pert.dim() / 2), R_schedule, quad, opt);
}

template <Perturbation P>
MassRow rh_mass(const P& pert, const Vec& V, const std::vector<double>& R_schedule, int n_theta, int n_phase,
                const ExtrapolationOptions& opt = {}) {
  SphereRule rule = hyperspherical_rule(pert.dim(), n_theta, n_phase);
  MassRow row{"rh", {}, {}, {}};
  for (double R : R_schedule) {
    row.R.push_back(R);
    row.values.push_back(rh_mass_at(pert, {V}, R, rule).values[0]);
  }
  row.fit = extrapolate(row.R, row.values, opt);
  return row;
}

// Successive differences of a converging sequence: max ratio d_{i+1}/d_i
inline double max_difference_ratio(const std::vector<double>& v) {
  double worst = 0;
  for (std::size_t i = 2; i < v.size(); ++i) {
    const double d0 = std::abs(v[i - 1] - v[i - 2]), d1 = std::abs(v[i] - v[i - 1]);
    worst = std::max(worst, d0 > 0 ? d1 / d0 : (d1 > 0 ? std::numeric_limits<double>::infinity() : 0.0));
  }
  return worst;
}

}  // namespace chmass
