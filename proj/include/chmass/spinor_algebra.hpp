#pragma once

#include "hyperbolic_connections.hpp"

#include <map>
#include <mutex>

namespace chmass {

// Spinors are modelled on Lambda^{0,*}, with basis dwbar_I indexed by bitmask I.
// In a unitary frame E_j (real frame e_{2j} = E_j, e_{2j+1} = J E_j):
//   E_j  acts as  eps_j - iota_j,     J E_j  acts as  i (eps_j + iota_j)
// which is sqrt(2)(exterior - interior) on the (0,1) part once a unit
// dwbar_j is identified with sqrt(2) thetabar_j.

struct CliffordModel {
  int m = 0;
  std::vector<CMat> gam;  // 2m generators in the real frame order
};

inline CliffordModel build_clifford(int m) {
  const int N = 1 << m;
  CliffordModel cm{m, {}};
  for (int j = 0; j < m; ++j) {
    CMat E = CMat::Zero(N, N), I = CMat::Zero(N, N);
    for (int s = 0; s < N; ++s) {
      const double sign = (popcount(static_cast<unsigned>(s) & ((1u << j) - 1)) % 2) ? -1.0 : 1.0;
      if (!((s >> j) & 1)) E(s | (1 << j), s) = sign;
      else I(s & ~(1 << j), s) = sign;
    }
    cm.gam.push_back(E - I);
    cm.gam.push_back(cplx(0, 1) * (E + I));
  }
  return cm;
}

inline const CliffordModel& clifford_model(int m) {
  static std::mutex mu;
  static std::map<int, CliffordModel> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(m);
  if (it == cache.end()) it = cache.emplace(m, build_clifford(m)).first;
  return it->second;
}

struct Spinor {
  CVec coeffs;  // components in the unitary frame
  double weight = 1.0;

  int m() const { return static_cast<int>(std::lround(std::log2(static_cast<double>(coeffs.size())))); }
  CVec value() const { return weight * coeffs; }
  double norm2() const { return weight * weight * coeffs.squaredNorm(); }
  Spinor operator+(const Spinor& o) const { return {(value() + o.value()) / weight, weight}; }
  Spinor operator-(const Spinor& o) const { return {(value() - o.value()) / weight, weight}; }
};

// Hermitian product, linear in the first slot
inline cplx hprod(const Spinor& a, const Spinor& b) { return b.value().dot(a.value()); }

struct UnitaryCoframe {
  int m = 0;
  CMat T;  // columns: unitary (1,0) frame in the d/dw basis, upper triangular
  Mat E;   // real orthonormal frame as columns
  Mat G;
  double detT() const { return T.determinant().real(); }
  double gram_defect() const { return (E.transpose() * G * E - Mat::Identity(2 * m, 2 * m)).norm(); }
};

inline CMat hermitian_of(const Mat& G) {
  const int m = static_cast<int>(G.rows()) / 2;
  CMat h(m, m);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < m; ++k) {
      const int xj = 2 * j, yj = xj + 1, xk = 2 * k, yk = xk + 1;
      h(j, k) = 0.25 * cplx(G(xj, xk) + G(yj, yk), G(xj, yk) - G(yj, xk));
    }
  return h;
}

inline UnitaryCoframe unitary_coframe(const Mat& G) {
  const int m = static_cast<int>(G.rows()) / 2;
  CMat h = hermitian_of(G);
  auto ip = [&](const CVec& u, const CVec& v) { return (u.transpose() * h * v.conjugate())(0, 0); };
  UnitaryCoframe fr{m, CMat::Zero(m, m), Mat::Zero(2 * m, 2 * m), G};
  for (int j = 0; j < m; ++j) {
    CVec v = CVec::Unit(m, j);
    for (int i = 0; i < j; ++i) v -= ip(v, fr.T.col(i)) * fr.T.col(i);
    fr.T.col(j) = v / std::sqrt(ip(v, v).real());
  }
  Mat J = complex_structure(m);
  for (int j = 0; j < m; ++j) {
    Vec Ej = Vec::Zero(2 * m);
    for (int k = 0; k < m; ++k) {
      Ej[2 * k] += fr.T(k, j).real() / std::sqrt(2.0);
      Ej[2 * k + 1] += fr.T(k, j).imag() / std::sqrt(2.0);
    }
    fr.E.col(2 * j) = Ej;
    fr.E.col(2 * j + 1) = J * Ej;
  }
  return fr;
}

// Clifford multiplication by a coordinate tangent vector X
inline CMat clifford_matrix(const Vec& X, const UnitaryCoframe& fr) {
  const auto& cm = clifford_model(fr.m);
  Vec comp = fr.E.transpose() * fr.G * X;
  CMat c = CMat::Zero(1 << fr.m, 1 << fr.m);
  for (int a = 0; a < 2 * fr.m; ++a) c += comp[a] * cm.gam[a];
  return c;
}

inline Spinor clifford(const Vec& X, const Spinor& psi, const UnitaryCoframe& fr) {
  return {clifford_matrix(X, fr) * psi.coeffs, psi.weight};
}

// X^{1,0} = (X - i JX)/2
inline CMat clifford_matrix_10(const Vec& X, const UnitaryCoframe& fr) {
  Mat J = complex_structure(fr.m);
  return 0.5 * (clifford_matrix(X, fr) - cplx(0, 1) * clifford_matrix(J * X, fr));
}

inline int grade_of(int mask) { return popcount(static_cast<unsigned>(mask)); }

inline Spinor projector_k(const Spinor& psi, int k) {
  Spinor out{CVec::Zero(psi.coeffs.size()), psi.weight};
  for (Eigen::Index s = 0; s < psi.coeffs.size(); ++s)
    if (grade_of(static_cast<int>(s)) == k) out.coeffs[s] = psi.coeffs[s];
  return out;
}

// c(Omega) = sum_j (J E_j).E_j. ; acts as i(m - 2k) on grade k
inline CMat omega_matrix(int m) {
  const auto& cm = clifford_model(m);
  CMat c = CMat::Zero(1 << m, 1 << m);
  for (int j = 0; j < m; ++j) c += cm.gam[2 * j + 1] * cm.gam[2 * j];
  return c;
}

inline Spinor omega_action(const Spinor& psi) { return {omega_matrix(psi.m()) * psi.coeffs, psi.weight}; }

inline Spinor omega_action_graded(const Spinor& psi) {
  const int m = psi.m();
  Spinor out = psi;
  for (Eigen::Index s = 0; s < psi.coeffs.size(); ++s)
    out.coeffs[s] *= cplx(0, m - 2 * grade_of(static_cast<int>(s)));
  return out;
}

// flips the sign of grade l; input must live in grades l-1 and l
inline Spinor tilde(const Spinor& psi, int l, double tol = 1e-12) {
  Spinor out = psi;
  const double scale = std::max(1.0, psi.coeffs.norm());
  for (Eigen::Index s = 0; s < psi.coeffs.size(); ++s) {
    const int g = grade_of(static_cast<int>(s));
    if (g == l) out.coeffs[s] = -out.coeffs[s];
    else if (g != l - 1 && std::abs(psi.coeffs[s]) > tol * scale)
      throw domain_error("tilde: spinor has components outside grades l-1, l");
  }
  return out;
}

// -------------------------------------------------------------------------
// (0,*)-forms as sparse maps bitmask -> coefficient

using Form01 = std::map<int, cplx>;

inline int sign_before(int mask, int k) { return (popcount(static_cast<unsigned>(mask) & ((1u << k) - 1)) % 2) ? -1 : 1; }

// (sum_k v_k dwbar_k) ^ form
inline Form01 wedge01(const CVec& v, const Form01& form, int m) {
  Form01 out;
  for (auto [I, f] : form)
    for (int k = 0; k < m; ++k) {
      if (((I >> k) & 1) || v[k] == cplx(0)) continue;
      out[I | (1 << k)] += double(sign_before(I, k)) * v[k] * f;
    }
  return out;
}

// contraction with sum_k v_k d/dwbar_k
inline Form01 iota01(const CVec& v, const Form01& form, int m) {
  Form01 out;
  for (auto [I, f] : form)
    for (int k = 0; k < m; ++k) {
      if (!((I >> k) & 1)) continue;
      out[I & ~(1 << k)] += double(sign_before(I, k)) * v[k] * f;
    }
  return out;
}

inline std::vector<int> mask_indices(int mask, int m) {
  std::vector<int> out;
  for (int i = 0; i < m; ++i)
    if ((mask >> i) & 1) out.push_back(i);
  return out;
}

// express dwbar_I in the frame: dwbar_I = sum_J det(conj T[I,J]) thetabar_J (sqrt 2)^{|J|}
inline CVec form_to_coeffs(const Form01& form, const CMat& T) {
  const int m = static_cast<int>(T.rows());
  const int N = 1 << m;
  CVec out = CVec::Zero(N);
  CMat Tc = T.conjugate();
  for (auto [I, f] : form) {
    auto Il = mask_indices(I, m);
    const int k = static_cast<int>(Il.size());
    for (int Jm = 0; Jm < N; ++Jm) {
      if (grade_of(Jm) != k) continue;
      auto Jl = mask_indices(Jm, m);
      cplx d = 1.0;
      if (k > 0) {
        CMat sub(k, k);
        for (int a = 0; a < k; ++a)
          for (int b = 0; b < k; ++b) sub(a, b) = Tc(Il[a], Jl[b]);
        d = sub.determinant();
      }
      out[Jm] += f * d * std::pow(std::sqrt(2.0), k);
    }
  }
  return out;
}

// -------------------------------------------------------------------------
// Killing spinor families on the model

struct KillingLabel {
  bool breve = false;
  std::vector<int> idx;  // 0-based, strictly increasing

  std::string name() const {
    std::string s = breve ? "b" : "a";
    s += "(";
    for (std::size_t i = 0; i < idx.size(); ++i) s += (i ? "," : "") + std::to_string(idx[i] + 1);
    return s + ")";
  }
};

inline bool is_even(int m) { return m % 2 == 0; }
inline int killing_l(int m) { return is_even(m) ? m / 2 : (m + 1) / 2; }

inline double killing_c(int m) {
  const double l = killing_l(m);
  if (is_even(m)) return std::pow(2.0, 1 - l - l * l / (2 * l + 1));
  return std::pow(std::sqrt(2.0), 2.5 - 3 * l);
}

// exponent of det T in the weight of the spinor bundle factor
inline double killing_weight_exponent(int m) {
  const double l = killing_l(m);
  return is_even(m) ? l / (2 * l + 1) : 0.5;
}

inline void validate_label(int m, const KillingLabel& lab) {
  const int l = killing_l(m);
  const int want = lab.breve ? l : l - 1;
  if (static_cast<int>(lab.idx.size()) != want) throw domain_error("killing label " + lab.name() + ": wrong length");
  for (std::size_t i = 0; i < lab.idx.size(); ++i) {
    if (lab.idx[i] < 0 || lab.idx[i] >= m) throw domain_error("killing label " + lab.name() + ": index out of range");
    if (i && lab.idx[i] <= lab.idx[i - 1]) throw domain_error("killing label " + lab.name() + ": indices not increasing");
  }
}

inline std::vector<KillingLabel> killing_labels(int m) {
  const int l = killing_l(m);
  std::vector<KillingLabel> out;
  for (auto& c : combinations(m, l - 1)) out.push_back({false, c});
  for (auto& c : combinations(m, l)) out.push_back({true, c});
  return out;
}

struct FormPair {
  Form01 lo, hi;
};

// the (0,*) forms of phi_{l-1} and phi_l at w, before the bundle weight
inline FormPair killing_forms(int m, const KillingLabel& lab, const CVec& w) {
  validate_label(m, lab);
  const int l = killing_l(m);
  const double c = killing_c(m);
  const double q = w.squaredNorm();
  int I = 0;
  for (int i : lab.idx) I |= 1 << i;
  Form01 base{{I, 1.0}};
  if (lab.breve) base = iota01(w.conjugate(), base, m);
  FormPair out;
  for (auto [k, v] : base) out.lo[k] = c * v / std::pow(1 - q, l);
  for (auto [k, v] : wedge01(w, base, m)) out.hi[k] = double(l) * v / std::pow(1 - q, l + 1);
  if (lab.breve) out.hi[I] += double(l) / std::pow(1 - q, l);
  const cplx pref = c / (cplx(0, 2.0 * l));
  for (auto& [k, v] : out.hi) v *= pref;
  return out;
}

struct SpinorPair {
  Spinor phi, tilde;
  Spinor lo() const { return {0.5 * (phi.coeffs + tilde.coeffs), phi.weight}; }
  Spinor hi() const { return {0.5 * (phi.coeffs - tilde.coeffs), phi.weight}; }
};

inline SpinorPair spinor_from_forms(const FormPair& f, const UnitaryCoframe& fr) {
  const double wt = std::pow(fr.detT(), killing_weight_exponent(fr.m));
  CVec lo = form_to_coeffs(f.lo, fr.T), hi = form_to_coeffs(f.hi, fr.T);
  return {{lo + hi, wt}, {lo - hi, wt}};
}

inline SpinorPair killing_family(int m, const KillingLabel& lab, const Vec& p) {
  if (static_cast<int>(p.size()) != 2 * m) throw domain_error("killing_family: dimension mismatch");
  BallPoint::make(p);
  return spinor_from_forms(killing_forms(m, lab, to_complex(p)), unitary_coframe(metric_ch(p)));
}

// control: a family multiplied by the non-constant factor 1 + eps p_0,
// which breaks the Killing equation at relative size about eps
inline SpinorPair perturbed_family(int m, const KillingLabel& lab, const Vec& p, double eps) {
  SpinorPair sp = killing_family(m, lab, p);
  const double f = 1 + eps * p[0];
  sp.phi.coeffs *= f;
  sp.tilde.coeffs *= f;
  return sp;
}

// closed-form norms on the model
struct FamilyNorms {
  double total, lo, hi;
};

inline FamilyNorms killing_norms(int m, const KillingLabel& lab, const Vec& p) {
  validate_label(m, lab);
  CVec w = to_complex(p);
  const double q = w.squaredNorm();
  double wa = 0;
  for (int i : lab.idx) wa += std::norm(w[i]);
  const double wc = q - wa;
  if (!lab.breve) return {(1 - wa + wc) / (1 - q), (1 - wa) / (1 - q), wc / (1 - q)};
  return {(1 - wc + wa) / (1 - q), wa / (1 - q), (1 - wc) / (1 - q)};
}

// pullback of a family by the ball map of a diagonal phase matrix
inline SpinorPair killing_family_rotated(int m, const KillingLabel& lab, const std::vector<double>& theta, const Vec& p) {
  CVec w = to_complex(p);
  CVec lam(m);
  for (int k = 0; k < m; ++k) lam[k] = std::polar(1.0, theta[k] - theta[m]);
  FormPair f = killing_forms(m, lab, CVec(lam.cwiseProduct(w)));
  for (auto* part : {&f.lo, &f.hi})
    for (auto& [I, v] : *part)
      for (int i : mask_indices(I, m)) v *= std::conj(lam[i]);
  return spinor_from_forms(f, unitary_coframe(metric_ch(p)));
}

// -------------------------------------------------------------------------
// spin connection and the Killing residual

// nabla_X psi for a spinor field given in the Gram-Schmidt frame of f;
// `twisted` adds the connection of the line bundle used for even m
template <MetricField F, class SF>
CVec spin_derivative(const F& f, const SF& field, const Vec& p, const Vec& X, bool twisted, double h) {
  const int m = f.dim() / 2;
  const int n = 2 * m;
  const auto& cm = clifford_model(m);
  auto val = [&](const Vec& x) -> CVec { return field(x).value(); };
  CVec dphi = fd_dir(val, p, X, h);
  auto frameE = [&](const Vec& x) -> Mat { return unitary_coframe(f.G(x)).E; };
  Mat G = f.G(p);
  UnitaryCoframe fr = unitary_coframe(G);
  Mat nablaE = fd_dir(frameE, p, X, h) + gamma_along(christoffel(f, p), X) * fr.E;
  Mat om = fr.E.transpose() * G * nablaE;  // om(b,a) = g(e_b, nabla_X e_a)
  CMat Gm = CMat::Zero(1 << m, 1 << m);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (a != b) Gm += 0.25 * om(b, a) * cm.gam[a] * cm.gam[b];
  CVec phi = field(p).value();
  CVec out = dphi + Gm * phi;
  if (twisted) {
    cplx tr = 0;
    for (int j = 0; j < m; ++j) tr += cplx(0, om(2 * j + 1, 2 * j));
    out += tr / (2.0 * (m + 1)) * phi;
  }
  return out;
}

struct KillingResidual {
  double residual = 0;  // |nabla_X phi + (i/2) X.phi + (1/2)(JX).phi~|
  double norm = 0;      // |phi|
  double fd_noise = 0;  // change of the residual when the step is doubled
};

template <MetricField F, class PF>
KillingResidual killing_residual_field(const F& f, const PF& pair_field, const Vec& p, const Vec& X, bool twisted,
                                       double h = 0) {
  const int m = f.dim() / 2;
  if (h <= 0) h = fd_step(p);
  UnitaryCoframe fr = unitary_coframe(f.G(p));
  SpinorPair sp = pair_field(p);
  Mat J = complex_structure(m);
  auto phi_field = [&](const Vec& x) { return pair_field(x).phi; };
  CVec alg = cplx(0, 0.5) * (clifford_matrix(X, fr) * sp.phi.value()) + 0.5 * (clifford_matrix(J * X, fr) * sp.tilde.value());
  CVec r1 = spin_derivative(f, phi_field, p, X, twisted, h) + alg;
  CVec r2 = spin_derivative(f, phi_field, p, X, twisted, 2 * h) + alg;
  return {r1.norm(), std::sqrt(sp.phi.norm2()), (r1 - r2).norm()};
}

inline KillingResidual killing_residual(int m, const KillingLabel& lab, const Vec& p, const Vec& X, double h = 0) {
  validate_label(m, lab);
  return killing_residual_field(ChModel{m}, [&](const Vec& x) { return killing_family(m, lab, x); }, p, X,
                                is_even(m), h);
}

inline KillingResidual perturbed_residual(int m, const KillingLabel& lab, const Vec& p, const Vec& X, double eps) {
  validate_label(m, lab);
  return killing_residual_field(ChModel{m}, [&](const Vec& x) { return perturbed_family(m, lab, x, eps); }, p, X,
                                is_even(m));
}

// -------------------------------------------------------------------------
// the map Q: phi -> (xi, alpha, u)

struct QResult {
  SectionE s;
  Mat beta;                // matched constant ambient form
  double xi_omega = 0;     // (xi, Omega)
  double xi_skew = 0;      // |xi + xi^T|
};

// alpha = J du, with du by finite differences or, when `clifford_du` is set,
// from du(X) = -2i (X.phi, phi)
template <class PF>
QResult q_map_field(int m, const PF& pair_field, const Vec& p, double h = 0, bool clifford_du = false) {
  if (h <= 0) h = fd_step(p);
  const int n = 2 * m;
  Mat G = metric_ch(p);
  UnitaryCoframe fr = unitary_coframe(G);
  SpinorPair sp = pair_field(p);
  Mat J = complex_structure(m);
  std::vector<CMat> cl(n);
  for (int k = 0; k < n; ++k) cl[k] = clifford_matrix(Vec::Unit(n, k), fr);
  CVec ph = sp.phi.value(), pt = sp.tilde.value();
  QResult out;
  out.s = SectionE::zero(m);
  out.s.u = sp.phi.norm2();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.s.xi(i, j) = ph.dot(cl[i] * (cl[j] * pt)).imag();
  out.xi_skew = (out.s.xi + out.s.xi.transpose()).norm();
  out.s.xi = 0.5 * (out.s.xi - out.s.xi.transpose());
  Vec du(n);
  if (clifford_du) {
    for (int k = 0; k < n; ++k) du[k] = (cplx(0, -2) * ph.dot(cl[k] * ph)).real();
  } else {
    du = gradient_fd([&](const Vec& x) { return pair_field(x).phi.norm2(); }, p, h);
  }
  out.s.alpha = J_covector(J, du);
  out.xi_omega = form_norm2(out.s.xi, kahler_form(G, J), G.inverse());
  out.beta = theta_z(p, out.s);
  return out;
}

inline QResult q_map(int m, const KillingLabel& lab, const Vec& p, bool clifford_du = false) {
  return q_map_field(m, [&](const Vec& x) { return killing_family(m, lab, x); }, p, 0, clifford_du);
}

// ambient form attached to a family, averaged over a few points as a
// consistency check (it is constant for genuine Killing spinors)
inline Mat beta_of_family(int m, const KillingLabel& lab, const Vec& p) { return q_map(m, lab, p).beta; }

struct LemmaReport {
  std::map<std::string, double> max_violation;
};

// Identities for Killing spinors, evaluated at the given points with unit
// coordinate directions X, Y, Z drawn from the seed.
inline LemmaReport lemma_checks(int m, const std::vector<KillingLabel>& labels, const std::vector<Vec>& points,
                                std::uint64_t seed = 1) {
  LemmaReport rep;
  auto bump = [&](const std::string& k, double v) {
    double& slot = rep.max_violation[k];
    slot = std::max(slot, v);
  };
  const int n = 2 * m;
  const int l = killing_l(m);
  Mat J = complex_structure(m);
  ChModel ch{m};
  for (std::size_t li = 0; li < labels.size(); ++li)
    for (std::size_t pi_ = 0; pi_ < points.size(); ++pi_) {
      const Vec& p = points[pi_];
      auto rng = make_rng(seed, 11, li * 1000 + pi_);
      Vec X = random_normal(rng, n).normalized(), Y = random_normal(rng, n).normalized();
      Vec Z = random_normal(rng, n).normalized();
      const auto& lab = labels[li];
      auto pf = [&](const Vec& x) { return killing_family(m, lab, x); };
      SpinorPair sp = pf(p);
      UnitaryCoframe fr = unitary_coframe(metric_ch(p));
      Spinor phi = sp.phi, pt = sp.tilde;
      auto cX = [&](const Vec& V, const Spinor& s) { return clifford(V, s, fr); };
      const double h = fd_step(p);

      // trucs
      bump("trucs_sum", std::abs(hprod(cX(X, phi), phi) + hprod(cX(X, pt), pt)));
      bump("trucs_J", std::abs(hprod(cX(J * X, phi), phi) - cplx(0, 1) * hprod(cX(X, pt), phi)));
      Spinor lo = sp.lo(), hi = sp.hi();
      Spinor lo10{clifford_matrix_10(X, fr) * lo.coeffs, lo.weight};
      bump("trucs_10", std::abs(hprod(cX(X, phi), phi) - cplx(0, 2 * hprod(lo10, hi).imag())));
      bump("grade_check", (projector_k(lo, l - 1).coeffs - lo.coeffs).norm());

      // der1, der2
      auto u = [&](const Vec& x) { return pf(x).phi.norm2(); };
      const double du = fd_dir(u, p, X, h);
      bump("der1", std::abs(cplx(du) + cplx(0, 2) * hprod(cX(X, phi), phi)));
      Mat H = covariant_hessian(ch, u, p, fd_step(p, 1e-3));
      Mat G = metric_ch(p);
      const double lhs = X.dot(H * Y);
      const double rhs = 2 * X.dot(G * Y) * phi.norm2() - 2 * hprod(cX(Y, cX(J * X, pt)), phi).imag();
      bump("der2", std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));

      // algxi: the Q section is nabla^CH-parallel, and (xi, Omega) = u
      QResult qr = q_map(m, lab, p);
      if (!is_even(m)) bump("algxi_omega", std::abs(qr.xi_omega - qr.s.u));
      bump("xi_skew", qr.xi_skew);
      auto qfield = [&](const Vec& x) { return q_map(m, lab, x, true).s; };
      SectionE d = nabla_ch(-1.0, ch, qfield, Z, p);
      bump("algxi_alpha", d.alpha.norm());
      bump("algxi_xi", d.xi.norm());
    }
  return rep;
}

// rank of the family sampled at a set of points
inline int family_rank(int m, const std::vector<Vec>& points, double rel_tol = 1e-8) {
  auto labels = killing_labels(m);
  const int N = 1 << m;
  Eigen::MatrixXcd A(N * points.size(), labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j)
    for (std::size_t i = 0; i < points.size(); ++i)
      A.block(N * i, j, N, 1) = killing_family(m, labels[j], points[i]).phi.value();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(A);
  const auto& sv = svd.singularValues();
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > rel_tol * sv[0]) ++r;
  return r;
}

// pu_action(U, Q(phi)) against Q(U.phi) for diagonal U
inline double q_equivariance_defect(int m, const KillingLabel& lab, const std::vector<double>& theta, const Vec& p) {
  CMat U = diagonal_phase(theta);
  Mat lhs = pu_action(U, beta_of_family(m, lab, p));
  Mat rhs = q_map_field(m, [&](const Vec& x) { return killing_family_rotated(m, lab, theta, x); }, p).beta;
  return (lhs - rhs).norm();
}

}  // namespace chmass
