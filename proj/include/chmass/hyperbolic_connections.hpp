#pragma once

#include "model_geometry.hpp"

#include <map>

namespace chmass {

// -------------------------------------------------------------------------
// the bundle E = Lambda^2_J T* + T* + R

struct SectionE {
  Mat xi;     // J-invariant 2-form, antisymmetric 2m x 2m
  Vec alpha;  // covector
  double u = 0;

  static SectionE zero(int m) { return {Mat::Zero(2 * m, 2 * m), Vec::Zero(2 * m), 0.0}; }
};

inline Mat wedge(const Vec& a, const Vec& b) { return a * b.transpose() - b * a.transpose(); }

// Frobenius-orthonormal basis of the J-invariant antisymmetric matrices,
// i.e. real (1,1)-forms: dy_k^dx_k and the real/imaginary parts of
// dw_j ^ dwbar_k for j < k.  Dimension m^2.
inline std::vector<Mat> lamJ_basis(int m) {
  const int n = 2 * m;
  std::vector<Mat> out;
  for (int k = 0; k < m; ++k) {
    Mat B = Mat::Zero(n, n);
    B(2 * k + 1, 2 * k) = 1;
    B(2 * k, 2 * k + 1) = -1;
    out.push_back(B / std::sqrt(2.0));
  }
  for (int j = 0; j < m; ++j)
    for (int k = j + 1; k < m; ++k) {
      Vec xj = Vec::Unit(n, 2 * j), yj = Vec::Unit(n, 2 * j + 1);
      Vec xk = Vec::Unit(n, 2 * k), yk = Vec::Unit(n, 2 * k + 1);
      out.push_back(0.5 * (wedge(xj, xk) + wedge(yj, yk)));
      out.push_back(0.5 * (wedge(xj, yk) - wedge(yj, xk)));
    }
  return out;
}

inline int fiber_dim(int m) { return (m + 1) * (m + 1); }

struct FiberLayout {
  int m;
  std::vector<Mat> basis;
  explicit FiberLayout(int m_) : m(m_), basis(lamJ_basis(m_)) {}
  int nb() const { return m * m; }
  int dim() const { return fiber_dim(m); }

  Vec pack(const SectionE& s) const {
    Vec v(dim());
    for (int k = 0; k < nb(); ++k) v[k] = (basis[k].array() * s.xi.array()).sum();
    v.segment(nb(), 2 * m) = s.alpha;
    v[dim() - 1] = s.u;
    return v;
  }
  SectionE unpack(const Vec& v) const {
    SectionE s = SectionE::zero(m);
    for (int k = 0; k < nb(); ++k) s.xi += v[k] * basis[k];
    s.alpha = v.segment(nb(), 2 * m);
    s.u = v[dim() - 1];
    return s;
  }
};

// |xi|^2 with |e^i ^ e^j|^2 = 1 for orthonormal i < j
inline double form_norm2(const Mat& a, const Mat& b, const Mat& Gi) { return 0.5 * (Gi * a * Gi * b.transpose()).trace(); }

inline Mat kahler_form(const Mat& G, const Mat& J) { return G * J; }

// J on covectors: (J alpha)(X) = -alpha(JX)
inline Vec J_covector(const Mat& J, const Vec& a) { return -(J.transpose() * a); }

// h_c(xi, alpha, u) = |xi|^2 + u^2 + |alpha|^2/(2c); c = -1 is the model case
inline double h_metric(const Mat& G, const SectionE& s, double c = -1.0) {
  Mat Gi = G.inverse();
  return form_norm2(s.xi, s.xi, Gi) + s.u * s.u + s.alpha.dot(Gi * s.alpha) / (2 * c);
}

inline Mat fiber_gram(const FiberLayout& L, const Mat& G, double c = -1.0) {
  const int d = L.dim();
  Mat Gi = G.inverse();
  Mat out = Mat::Zero(d, d);
  for (int i = 0; i < L.nb(); ++i)
    for (int j = 0; j < L.nb(); ++j) out(i, j) = form_norm2(L.basis[i], L.basis[j], Gi);
  out.block(L.nb(), L.nb(), 2 * L.m, 2 * L.m) = Gi / (2 * c);
  out(d - 1, d - 1) = 1.0;
  return out;
}

// (number of positive, number of negative) eigenvalues
inline std::pair<int, int> signature(const Mat& S, double tol = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
  int pos = 0, neg = 0;
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()[i] > tol * scale) ++pos;
    else if (es.eigenvalues()[i] < -tol * scale) ++neg;
  }
  return {pos, neg};
}

// Gamma_X as a matrix: (Gamma_X)(c, a) = X^i Gamma^c_{ia}
inline Mat gamma_along(const Mat& Gam, const Vec& X) {
  const int n = static_cast<int>(X.size());
  Mat out = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    if (X[i] != 0.0) out += X[i] * Gam.block(0, i * n, n, n);
  return out;
}

// Zeroth-order part A_X of nabla^c: nabla_X sigma = d_X sigma + A_X sigma, where
//   nabla_X xi    = nabla^g_X xi + (X^ ^ alpha + (JX)^ ^ J alpha)/2
//   nabla_X alpha = nabla^g_X alpha - 2c iota_X (xi + u Omega)
//   nabla_X u     = d_X u + (J alpha)(X)
inline SectionE connection_term(double c, const Mat& G, const Mat& Gam, const Mat& J, const Vec& X, const SectionE& s) {
  Mat GX = gamma_along(Gam, X);
  Vec Xf = G * X, JXf = G * (J * X);
  Vec Ja = J_covector(J, s.alpha);
  SectionE out;
  out.xi = -(GX.transpose() * s.xi + s.xi * GX) + 0.5 * (wedge(Xf, s.alpha) + wedge(JXf, Ja));
  Mat Om = kahler_form(G, J);
  out.alpha = -(GX.transpose() * s.alpha) - 2 * c * (s.xi.transpose() * X + s.u * (Om.transpose() * X));
  out.u = Ja.dot(X);
  return out;
}

inline Mat connection_matrix(const FiberLayout& L, double c, const Mat& G, const Mat& Gam, const Mat& J, const Vec& X) {
  const int d = L.dim();
  Mat A(d, d);
  for (int k = 0; k < d; ++k) A.col(k) = L.pack(connection_term(c, G, Gam, J, X, L.unpack(Vec::Unit(d, k))));
  return A;
}

template <MetricField F>
Mat connection_matrix_at(const FiberLayout& L, double c, const F& f, const Vec& p, const Vec& X) {
  return connection_matrix(L, c, f.G(p), christoffel(f, p), complex_structure(L.m), X);
}

template <class SF>
concept SectionFieldE = requires(const SF& s, const Vec& p) {
  { s(p) } -> std::convertible_to<SectionE>;
};

// nabla^c_X sigma at p for a section field, derivative by finite differences
template <MetricField F, SectionFieldE SF>
SectionE nabla_ch(double c, const F& f, const SF& field, const Vec& X, const Vec& p, double h = 0) {
  const int m = f.dim() / 2;
  if (h <= 0) h = fd_step(p);
  FiberLayout L(m);
  Vec d = fd_dir([&](const Vec& x) { return Vec(L.pack(field(x))); }, p, X, h);
  SectionE out = L.unpack(d);
  SectionE a = connection_term(c, f.G(p), christoffel(f, p), complex_structure(m), X, field(p));
  out.xi += a.xi;
  out.alpha += a.alpha;
  out.u += a.u;
  return out;
}

// -------------------------------------------------------------------------
// the real hyperbolic analogue on T* + R:
//   nabla_X (alpha, u) = (nabla^g_X alpha - u g(X,.), d_X u - alpha(X))

struct RHSection {
  Vec alpha;
  double u = 0;
};

inline Mat rh_connection_matrix(const Mat& G, const Mat& Gam, const Vec& X) {
  const int n = static_cast<int>(X.size());
  Mat GX = gamma_along(Gam, X);
  Mat A = Mat::Zero(n + 1, n + 1);
  A.block(0, 0, n, n) = -GX.transpose();
  A.block(0, n, n, 1) = -(G * X);
  A.block(n, 0, 1, n) = -X.transpose();
  return A;
}

template <MetricField F, class SF>
RHSection nabla_rh(const F& f, const SF& field, const Vec& X, const Vec& p, double h = 0) {
  const int n = f.dim();
  if (h <= 0) h = fd_step(p);
  auto packed = [&](const Vec& x) {
    RHSection s = field(x);
    Vec v(n + 1);
    v.head(n) = s.alpha;
    v[n] = s.u;
    return v;
  };
  Vec v = fd_dir(packed, p, X, h) + rh_connection_matrix(f.G(p), christoffel(f, p), X) * packed(p);
  return {v.head(n), v[n]};
}

// -------------------------------------------------------------------------
// curvature of nabla^c

// C_{X,Y}(gamma) = X^ ^ i_Y gamma - Y^ ^ i_X gamma + (JX)^ ^ i_{JY} gamma - (JY)^ ^ i_{JX} gamma
inline Mat c_operator(const Mat& G, const Mat& J, const Vec& X, const Vec& Y, const Mat& gamma) {
  Vec JX = J * X, JY = J * Y;
  auto iota = [&](const Vec& V) -> Vec { return gamma.transpose() * V; };
  return wedge(G * X, iota(Y)) - wedge(G * Y, iota(X)) + wedge(G * JX, iota(JY)) - wedge(G * JY, iota(JX));
}

inline Vec c_operator(const Mat& G, const Mat& J, const Vec& X, const Vec& Y, const Vec& gamma) {
  Vec JX = J * X, JY = J * Y;
  return (G * X) * gamma.dot(Y) - (G * Y) * gamma.dot(X) + (G * JX) * gamma.dot(JY) - (G * JY) * gamma.dot(JX);
}

struct CurvatureE {
  Mat fd;         // commutator estimate from finite differences of A
  Mat predicted;  // closed-form block formula
};

// Predicted blocks, with Rm the Levi-Civita curvature acting on forms:
//   xi -> Rm(xi) - c C(xi),  alpha -> Rm(alpha) - c (C(alpha) + 2 Omega(X,Y) J alpha),  u -> 0
template <MetricField F>
CurvatureE curvature_e(double c, const F& f, const Vec& p, const Vec& X, const Vec& Y, double h = 0) {
  const int m = f.dim() / 2;
  FiberLayout L(m);
  Mat J = complex_structure(m);
  if (h <= 0) h = fd_step(p, 1e-3);
  auto AX = [&](const Vec& x) { return connection_matrix_at(L, c, f, x, X); };
  auto AY = [&](const Vec& x) { return connection_matrix_at(L, c, f, x, Y); };
  Mat ax = AX(p), ay = AY(p);
  CurvatureE out;
  out.fd = fd_dir(AY, p, X, h) - fd_dir(AX, p, Y, h) + ax * ay - ay * ax;

  Mat G = f.G(p);
  Mat Rxy = curvature_operator(riemann_tensor(f, p), X, Y);
  const double OmXY = X.dot(G * J * Y);
  const int d = L.dim();
  out.predicted = Mat::Zero(d, d);
  for (int k = 0; k < d; ++k) {
    SectionE s = L.unpack(Vec::Unit(d, k));
    SectionE r;
    r.xi = -(Rxy.transpose() * s.xi + s.xi * Rxy) - c * c_operator(G, J, X, Y, s.xi);
    r.alpha = -(Rxy.transpose() * s.alpha) -
              c * (c_operator(G, J, X, Y, Vec(s.alpha)) + 2 * OmXY * J_covector(J, s.alpha));
    r.u = 0;
    out.predicted.col(k) = L.pack(r);
  }
  return out;
}

// -------------------------------------------------------------------------
// parallel transport and holonomy

struct Curve {
  std::function<Vec(double)> pos;
  std::function<Vec(double)> vel;
  double t0 = 0, t1 = 1;
};

inline Curve segment_curve(const Vec& a, const Vec& b) {
  return {[=](double t) { return Vec(a + t * (b - a)); }, [=](double) { return Vec(b - a); }, 0, 1};
}

// small closed loop at p in the plane (X, Y), radius rho
inline Curve circle_loop(const Vec& p, const Vec& X, const Vec& Y, double rho) {
  const double w = 2 * pi;
  return {[=](double t) { return Vec(p + rho * ((std::cos(w * t) - 1) * X + std::sin(w * t) * Y)); },
          [=](double t) { return Vec(rho * w * (-std::sin(w * t) * X + std::cos(w * t) * Y)); }, 0, 1};
}

// go out along a segment, run a loop, come back
inline Curve lasso(const Vec& base, const Vec& at, const Vec& X, const Vec& Y, double rho) {
  Curve out_seg = segment_curve(base, at), loop = circle_loop(at, X, Y, rho), back = segment_curve(at, base);
  return {[=](double t) {
            if (t < 1) return out_seg.pos(t);
            if (t < 2) return loop.pos(t - 1);
            return back.pos(t - 2);
          },
          [=](double t) {
            if (t < 1) return out_seg.vel(t);
            if (t < 2) return loop.vel(t - 1);
            return back.vel(t - 2);
          },
          0, 3};
}

struct TransportResult {
  Mat value;  // transported state (vector or matrix of columns)
  bool ok = true;
};

// Solve dS/dt = -A(gamma(t), gamma'(t)) S for a matrix of fiber columns.
// Segment breakpoints at integer t are respected so the stepper never
// crosses a kink of a piecewise curve.
inline TransportResult transport_matrix(const std::function<Mat(const Vec&, const Vec&)>& A, const Curve& curve,
                                        const Mat& S0, double tol = 1e-10) {
  namespace ode = boost::numeric::odeint;
  const int d = static_cast<int>(S0.rows()), k = static_cast<int>(S0.cols());
  std::vector<double> y(S0.data(), S0.data() + d * k);
  auto rhs = [&](const std::vector<double>& s, std::vector<double>& ds, double t) {
    Eigen::Map<const Mat> S(s.data(), d, k);
    Eigen::Map<Mat> dS(ds.data(), d, k);
    dS = -A(curve.pos(t), curve.vel(t)) * S;
  };
  TransportResult out;
  auto stepper = ode::make_controlled(tol, tol, ode::runge_kutta_dopri5<std::vector<double>>());
  double a = curve.t0;
  while (a < curve.t1 - 1e-14) {
    double b = std::min(curve.t1, std::floor(a + 1e-12) + 1.0);
    try {
      ode::integrate_adaptive(stepper, rhs, y, a, b, (b - a) / 50);
    } catch (const std::exception&) {
      out.ok = false;
      break;
    }
    a = b;
  }
  out.value = Eigen::Map<const Mat>(y.data(), d, k);
  return out;
}

template <MetricField F>
TransportResult transport_e(double c, const F& f, const Vec& sigma0, const Curve& curve, double tol = 1e-10) {
  const int m = f.dim() / 2;
  FiberLayout L(m);
  Mat J = complex_structure(m);
  auto A = [&](const Vec& x, const Vec& v) { return connection_matrix(L, c, f.G(x), christoffel(f, x), J, v); };
  return transport_matrix(A, curve, sigma0, tol);
}

struct ParallelSpace {
  int dim = 0;
  Mat basis;                    // columns, orthonormal in the fiber coordinates at the base point
  std::vector<double> singular;  // singular values of the stacked (Hol - I)
  bool ok = true;
};

inline ParallelSpace fixed_space(const std::vector<Mat>& hols, double threshold) {
  ParallelSpace out;
  if (hols.empty()) return out;
  const int d = static_cast<int>(hols[0].rows());
  Mat S(d * static_cast<int>(hols.size()), d);
  for (std::size_t i = 0; i < hols.size(); ++i) S.block(d * i, 0, d, d) = hols[i] - Mat::Identity(d, d);
  Eigen::JacobiSVD<Mat> svd(S, Eigen::ComputeFullV);
  Vec sv = svd.singularValues();
  out.singular.assign(sv.data(), sv.data() + sv.size());
  std::vector<int> idx;
  for (int i = 0; i < d; ++i)
    if (sv[i] < threshold) idx.push_back(i);
  out.dim = static_cast<int>(idx.size());
  out.basis = Mat(d, out.dim);
  for (int j = 0; j < out.dim; ++j) out.basis.col(j) = svd.matrixV().col(idx[j]);
  return out;
}

struct LoopFamily {
  Vec base;
  int count = 40;
  double spread = 0.3;  // Euclidean distance of loop centers from the base point
  double rho = 0.05;
  std::uint64_t seed = 7;
};

inline std::vector<Curve> make_loops(const LoopFamily& fam) {
  const int n = static_cast<int>(fam.base.size());
  std::vector<Curve> loops;
  for (int i = 0; i < fam.count; ++i) {
    auto rng = make_rng(fam.seed, 31, i);
    Vec at = fam.base + random_ball_point(rng, n, fam.spread);
    Vec X = random_normal(rng, n).normalized();
    Vec Y = random_normal(rng, n);
    Y = (Y - Y.dot(X) * X).normalized();
    loops.push_back(lasso(fam.base, at, X, Y, fam.rho));
  }
  return loops;
}

template <MetricField F>
ParallelSpace parallel_space_dim(double c, const F& f, const LoopFamily& fam, double threshold = 1e-6) {
  const int m = f.dim() / 2;
  FiberLayout L(m);
  Mat J = complex_structure(m);
  auto loops = make_loops(fam);
  std::vector<Mat> hols(loops.size());
  std::vector<char> ok(loops.size(), 1);
  parallel_for(loops.size(), [&](std::size_t i) {
    auto A = [&](const Vec& x, const Vec& v) { return connection_matrix(L, c, f.G(x), christoffel(f, x), J, v); };
    auto r = transport_matrix(A, loops[i], Mat::Identity(L.dim(), L.dim()));
    hols[i] = r.value;
    ok[i] = r.ok;
  });
  ParallelSpace out = fixed_space(hols, threshold);
  out.ok = std::all_of(ok.begin(), ok.end(), [](char b) { return b != 0; });
  return out;
}

template <MetricField F>
ParallelSpace parallel_space_dim_rh(const F& f, const LoopFamily& fam, double threshold = 1e-6) {
  const int n = f.dim();
  auto loops = make_loops(fam);
  std::vector<Mat> hols(loops.size());
  std::vector<char> ok(loops.size(), 1);
  parallel_for(loops.size(), [&](std::size_t i) {
    auto A = [&](const Vec& x, const Vec& v) { return rh_connection_matrix(f.G(x), christoffel(f, x), v); };
    auto r = transport_matrix(A, loops[i], Mat::Identity(n + 1, n + 1));
    hols[i] = r.value;
    ok[i] = r.ok;
  });
  ParallelSpace out = fixed_space(hols, threshold);
  out.ok = std::all_of(ok.begin(), ok.end(), [](char b) { return b != 0; });
  return out;
}

// -------------------------------------------------------------------------
// third order equation for the u component of a parallel section:
//   nabla_X Hess u = 2 du(X) g + X^ (.) du + (JX)^ (.) J du,  a (.) b = a b^T + b a^T

template <class UF>
Vec gradient_fd(const UF& u, const Vec& p, double h) {
  const int n = static_cast<int>(p.size());
  Vec g(n);
  for (int k = 0; k < n; ++k) g[k] = fd_dir(u, p, Vec::Unit(n, k), h);
  return g;
}

template <class UF>
Mat hessian_fd(const UF& u, const Vec& p, double h) {
  const int n = static_cast<int>(p.size());
  Mat H(n, n);
  for (int k = 0; k < n; ++k) H.col(k) = fd_dir([&](const Vec& x) { return gradient_fd(u, x, h); }, p, Vec::Unit(n, k), h);
  return 0.5 * (H + H.transpose());
}

template <MetricField F, class UF>
Mat covariant_hessian(const F& f, const UF& u, const Vec& p, double h) {
  Mat Gam = christoffel(f, p);
  Vec du = gradient_fd(u, p, h);
  const int n = static_cast<int>(p.size());
  Mat H = hessian_fd(u, p, h);
  for (int k = 0; k < n; ++k) H -= du[k] * Gam.block(k, 0, 1, n * n).reshaped(n, n).transpose();
  return H;
}

template <MetricField F, class UF>
Mat third_order_residual(const F& f, const UF& u, const Vec& p, const Vec& X, double h = 0) {
  if (h <= 0) h = fd_step(p, 2e-3);
  const int m = f.dim() / 2;
  Mat J = complex_structure(m);
  Mat G = f.G(p);
  Mat Gam = christoffel(f, p);
  Mat GX = gamma_along(Gam, X);
  Mat H = covariant_hessian(f, u, p, h);
  Mat dH = fd_dir([&](const Vec& x) { return covariant_hessian(f, u, x, h); }, p, X, h);
  Mat lhs = dH - GX.transpose() * H - H * GX;
  Vec du = gradient_fd(u, p, h);
  Vec Xf = G * X, JXf = G * (J * X), Jdu = J_covector(J, du);
  Mat rhs = 2 * du.dot(X) * G + Xf * du.transpose() + du * Xf.transpose() + JXf * Jdu.transpose() +
            Jdu * JXf.transpose();
  return lhs - rhs;
}

// -------------------------------------------------------------------------
// ambient picture: R^{2m,2} = C^{m,1}, AdS lift and the map theta_z

inline Mat ambient_eta(int m) {
  Mat e = Mat::Identity(2 * m + 2, 2 * m + 2);
  e(2 * m, 2 * m) = -1;
  e(2 * m + 1, 2 * m + 1) = -1;
  return e;
}

inline CMat ambient_eta_c(int m) {
  CMat e = CMat::Identity(m + 1, m + 1);
  e(m, m) = -1;
  return e;
}

// signature pairing of 2-forms, <B, C> = 1/2 B_ij C_kl eta^ik eta^jl
inline double pairing(const Mat& B, const Mat& C) {
  const int m = static_cast<int>(B.rows()) / 2 - 1;
  Mat e = ambient_eta(m);
  return 0.5 * (e * B * e * C.transpose()).trace();
}

// omega(X, Y) = <X, J Y>
inline Mat ambient_omega(int m) { return ambient_eta(m) * complex_structure(m + 1); }

// dy_k ^ dx_k, k = 0..m (index m is the timelike complex direction)
inline Mat ambient_diag(int m, int k) {
  Mat B = Mat::Zero(2 * m + 2, 2 * m + 2);
  B(2 * k + 1, 2 * k) = 1;
  B(2 * k, 2 * k + 1) = -1;
  return B;
}

inline Mat beta_diag(const std::vector<double>& eps) {
  const int m = static_cast<int>(eps.size()) - 1;
  Mat B = Mat::Zero(2 * m + 2, 2 * m + 2);
  for (int k = 0; k <= m; ++k) B += eps[k] * ambient_diag(m, k);
  return B;
}

struct NamedForm {
  std::string id;
  Mat B;
};

// basis of Lambda^2_J R^{2m,2}: dimension (m+1)^2
inline std::vector<NamedForm> ambient_basis(int m) {
  const int n = 2 * m + 2;
  std::vector<NamedForm> out;
  for (int k = 0; k <= m; ++k) out.push_back({"d" + std::to_string(k), ambient_diag(m, k)});
  for (int j = 0; j <= m; ++j)
    for (int k = j + 1; k <= m; ++k) {
      Vec xj = Vec::Unit(n, 2 * j), yj = Vec::Unit(n, 2 * j + 1);
      Vec xk = Vec::Unit(n, 2 * k), yk = Vec::Unit(n, 2 * k + 1);
      std::string s = std::to_string(j) + std::to_string(k);
      out.push_back({"re" + s, wedge(xj, xk) + wedge(yj, yk)});
      out.push_back({"im" + s, wedge(xj, yk) - wedge(yj, xk)});
    }
  return out;
}

// primitive part: (m+1)^2 - 1 elements orthogonal to omega
inline std::vector<NamedForm> primitive_basis(int m) {
  std::vector<NamedForm> out;
  for (int k = 0; k + 1 < m; ++k)
    out.push_back({"d" + std::to_string(k) + "-d" + std::to_string(k + 1), ambient_diag(m, k) - ambient_diag(m, k + 1)});
  out.push_back({"d" + std::to_string(m - 1) + "+d" + std::to_string(m), ambient_diag(m, m - 1) + ambient_diag(m, m)});
  auto all = ambient_basis(m);
  for (std::size_t i = m + 1; i < all.size(); ++i) out.push_back(all[i]);
  return out;
}

struct AdSLift {
  Vec z;
  static AdSLift of(const Vec& p) {
    const int m = static_cast<int>(p.size()) / 2;
    const double q = p.squaredNorm();
    if (!(q < 1)) throw domain_error("AdS lift: point outside the ball");
    Vec z(2 * m + 2);
    z.head(2 * m) = p;
    z[2 * m] = 1;
    z[2 * m + 1] = 0;
    return {z / std::sqrt(1 - q)};
  }
};

// differential of the projection pi(z) = z'/z_{m+1} at the lift of p
inline Mat dpi(const Vec& p) {
  const int m = static_cast<int>(p.size()) / 2;
  const double c = 1.0 / std::sqrt(1 - p.squaredNorm());
  Mat L = Mat::Zero(2 * m, 2 * m + 2);
  L.block(0, 0, 2 * m, 2 * m) = Mat::Identity(2 * m, 2 * m) / c;
  for (int k = 0; k < m; ++k) {
    // -w_k V_{m+1} / c as a real 2x2 block
    const double a = p[2 * k], b = p[2 * k + 1];
    L(2 * k, 2 * m) = -a / c;
    L(2 * k, 2 * m + 1) = b / c;
    L(2 * k + 1, 2 * m) = -b / c;
    L(2 * k + 1, 2 * m + 1) = -a / c;
  }
  return L;
}

inline Mat horizontal_projector(const Vec& z) {
  const int m = static_cast<int>(z.size()) / 2 - 1;
  Mat e = ambient_eta(m), Ja = complex_structure(m + 1);
  Vec Jz = Ja * z;
  return Mat::Identity(z.size(), z.size()) + z * (e * z).transpose() + Jz * (e * Jz).transpose();
}

// theta_z(xi, alpha, u) = (dpi)^* xi + u Jnu ^ nu + (nu ^ alpha + Jnu ^ J alpha)/2, with
// nu the position covector <z, .> and pullbacks through the horizontal projection
inline Mat theta_z(const Vec& p, const SectionE& s) {
  const int m = static_cast<int>(p.size()) / 2;
  Vec z = AdSLift::of(p).z;
  Mat e = ambient_eta(m), Ja = complex_structure(m + 1);
  Mat LP = dpi(p) * horizontal_projector(z);
  Vec nu = e * z, Jnu = e * (Ja * z);
  Vec a = LP.transpose() * s.alpha;
  Vec Ja_ = J_covector(Ja, a);
  return LP.transpose() * s.xi * LP + s.u * wedge(Jnu, nu) + 0.5 * (wedge(nu, a) + wedge(Jnu, Ja_));
}

inline Mat theta_matrix(const Vec& p, const FiberLayout& L, const std::vector<Mat>& amb_basis) {
  const int d = L.dim();
  Mat M(d, d);
  for (int k = 0; k < d; ++k) {
    Mat B = theta_z(p, L.unpack(Vec::Unit(d, k)));
    for (int i = 0; i < d; ++i) M(i, k) = (amb_basis[i].array() * B.array()).sum();
  }
  return M;
}

inline SectionE theta_z_inv(const Vec& p, const Mat& B) {
  const int m = static_cast<int>(p.size()) / 2;
  FiberLayout L(m);
  auto amb = lamJ_basis(m + 1);
  Mat M = theta_matrix(p, L, amb);
  Vec b(L.dim());
  for (int i = 0; i < L.dim(); ++i) b[i] = (amb[i].array() * B.array()).sum();
  return L.unpack(M.partialPivLu().solve(b));
}

// u component of the parallel section matching B: u(p) = B(Jz, z)
inline double u_of_beta(const Mat& B, const Vec& p) {
  const int m = static_cast<int>(p.size()) / 2;
  Vec z = AdSLift::of(p).z;
  return (complex_structure(m + 1) * z).dot(B * z);
}

inline Vec du_of_beta(const Mat& B, const Vec& p) {
  const int m = static_cast<int>(p.size()) / 2;
  const int n = 2 * m;
  const double q = p.squaredNorm();
  Vec z = AdSLift::of(p).z;
  Mat Ja = complex_structure(m + 1);
  Mat S = Ja.transpose() * B;
  S = 0.5 * (S + S.transpose());
  Vec Sz = 2.0 * (S * z);
  Vec g(n);
  const double c = 1.0 / std::sqrt(1 - q);
  // dz/dp_k = c e_k + z p_k/(1-q)
  for (int k = 0; k < n; ++k) g[k] = Sz[k] * c + Sz.dot(z) * p[k] / (1 - q);
  return g;
}

// Section field of the parallel section attached to a constant ambient form
inline auto section_of_beta(const Mat& B) {
  return [B](const Vec& p) { return theta_z_inv(p, B); };
}

// real (interleaved) representation of a complex matrix
inline Mat real_rep(const CMat& U) {
  Mat R(2 * U.rows(), 2 * U.cols());
  for (Eigen::Index j = 0; j < U.rows(); ++j)
    for (Eigen::Index k = 0; k < U.cols(); ++k) {
      const double a = U(j, k).real(), b = U(j, k).imag();
      R(2 * j, 2 * k) = a;
      R(2 * j, 2 * k + 1) = -b;
      R(2 * j + 1, 2 * k) = b;
      R(2 * j + 1, 2 * k + 1) = a;
    }
  return R;
}

inline bool is_pseudo_unitary(const CMat& U, double tol = 1e-10) {
  const int m = static_cast<int>(U.rows()) - 1;
  CMat e = ambient_eta_c(m);
  return (U.adjoint() * e * U - e).norm() <= tol;
}

// pullback of B by U in U(m,1)
inline Mat pu_action(const CMat& U, const Mat& B) {
  if (!is_pseudo_unitary(U)) throw domain_error("pu_action: matrix is not in U(m,1)");
  Mat R = real_rep(U);
  return R.transpose() * B * R;
}

// boost of rapidity t in the complex plane spanned by z_k and z_{m+1}
inline CMat boost_matrix(int m, int k, double t) {
  CMat U = CMat::Identity(m + 1, m + 1);
  U(k, k) = std::cosh(t);
  U(m, m) = std::cosh(t);
  U(k, m) = std::sinh(t);
  U(m, k) = std::sinh(t);
  return U;
}

inline CMat diagonal_phase(const std::vector<double>& theta) {
  CMat U = CMat::Zero(theta.size(), theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) U(k, k) = std::polar(1.0, theta[k]);
  return U;
}

// induced ball automorphism f(w) = (Uz)'/(Uz)_{m+1}, z = (w, 1); then
// u_{pu_action(U,B)} = u_B o f
struct BallMap {
  CMat U;
  int m() const { return static_cast<int>(U.rows()) - 1; }

  Vec operator()(const Vec& p) const {
    const int mm = m();
    CVec z(mm + 1);
    z.head(mm) = to_complex(p);
    z[mm] = 1;
    CVec Uz = U * z;
    return to_real(Uz.head(mm) / Uz[mm]);
  }
  // complex Jacobian df_i/dw_j
  CMat jacobian_c(const Vec& p) const {
    const int mm = m();
    CVec z(mm + 1);
    z.head(mm) = to_complex(p);
    z[mm] = 1;
    CVec Uz = U * z;
    const cplx s = Uz[mm];
    CMat D(mm, mm);
    for (int i = 0; i < mm; ++i)
      for (int j = 0; j < mm; ++j) D(i, j) = (U(i, j) * s - Uz[i] * U(mm, j)) / (s * s);
    return D;
  }
  // d/dw_l of the complex Jacobian
  std::vector<CMat> hessian_c(const Vec& p) const {
    const int mm = m();
    CVec z(mm + 1);
    z.head(mm) = to_complex(p);
    z[mm] = 1;
    CVec Uz = U * z;
    const cplx s = Uz[mm];
    std::vector<CMat> H(mm, CMat(mm, mm));
    for (int l = 0; l < mm; ++l)
      for (int i = 0; i < mm; ++i)
        for (int j = 0; j < mm; ++j)
          H[l](i, j) = -(U(i, j) * U(mm, l) + U(i, l) * U(mm, j)) / (s * s) + 2.0 * Uz[i] * U(mm, j) * U(mm, l) / (s * s * s);
    return H;
  }
  Mat jacobian(const Vec& p) const { return real_rep(jacobian_c(p)); }
  // d/dp_k of the real Jacobian
  std::vector<Mat> jacobian_derivs(const Vec& p) const {
    const int mm = m();
    auto H = hessian_c(p);
    std::vector<Mat> out(2 * mm);
    for (int l = 0; l < mm; ++l) {
      out[2 * l] = real_rep(H[l]);
      out[2 * l + 1] = real_rep(cplx(0, 1) * H[l]);
    }
    return out;
  }
};

}  // namespace chmass
