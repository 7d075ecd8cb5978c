#pragma once

#include "mass_engine.hpp"
#include "spinor_algebra.hpp"

#include <json.hpp>

#include <boost/version.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace chmass {

using json = nlohmann::ordered_json;

inline constexpr const char* tool_version = "1.0.0";

// -------------------------------------------------------------------------
// configuration

struct Tolerances {
  double flat = 1e-5;
  double curvature_agreement = 1e-5;  // relative, FD curvature vs closed form on a non-model metric
  double killing = 1e-4;              // relative residual
  double killing_control = 1e-3;      // the perturbed family must exceed this
  double norm = 1e-10;
  double qmap = 1e-8;
  double third_order = 1e-4;
  double lemma = 1e-6;
  double mass = 1e-6;
  double fit = 1e-2;
  double nonneg = 1e-6;
  double equivariance = 0.02;
  double refinement = 5e-3;
  double decay = 0.05;
  double margin = 1e-10;
  double two_path = 1e-10;
  double display = 1e-12;
  double linearity = 1e-10;
  double rh = 1e-3;
};

struct MassParts {
  bool model = true, appendix = true, orbit = true, equivariance = true, controls = true, rh = true;
};

struct ExperimentConfig {
  int m = 2;
  std::uint64_t seed = 20240601;
  int samples = 20;
  int norm_samples = 100;
  std::vector<double> R_schedule{2, 2.5, 3, 3.5, 4, 4.5};
  std::vector<double> decay_R{3, 3.5, 4, 4.5, 5, 5.5, 6};
  QuadratureSpec quad{24, 24};
  bool quad_given = false;
  BumpSpec bump;
  Tolerances tol;
  int loops = 12;
  double hol_threshold = 1e-6;
  double boost = 0.3;
  int orbit_images = 2;
  MassParts parts;
  std::vector<std::string> inputs;  // for `report`

  bool odd() const { return m % 2 == 1; }
  bool even() const { return !odd(); }
};

// m = 2 runs at the full default; higher m trades phase nodes for runtime
inline QuadratureSpec default_quadrature(int m) { return m <= 2 ? QuadratureSpec{24, 24} : QuadratureSpec{12, 8}; }

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw config_error(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw config_error(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw config_error(where + "." + key + ": " + e.what());
  }
}

inline void read_positive(const json& j, const char* key, double& out, const std::string& where) {
  read(j, key, out, where);
  if (!(out > 0) || !std::isfinite(out)) throw config_error(where + "." + key + " must be positive");
}

inline void check_increasing(const std::vector<double>& v, const std::string& what) {
  if (v.size() < 3) throw config_error(what + " needs at least 3 values");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]) || v[i] <= 0) throw config_error(what + " values must be positive");
    if (i && !(v[i] > v[i - 1])) throw config_error(what + " must be strictly increasing");
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  using detail::read;
  ExperimentConfig c;
  detail::reject_unknown(j,
                         {"m", "seed", "samples", "norm_samples", "R_schedule", "decay_R", "quadrature", "bump",
                          "tolerances", "holonomy", "boost", "orbit_images", "mass_parts", "inputs"},
                         "config");
  read(j, "m", c.m, "config");
  if (c.m < 2 || c.m > 4) throw config_error("config.m must be 2, 3 or 4");
  read(j, "seed", c.seed, "config");
  read(j, "samples", c.samples, "config");
  read(j, "norm_samples", c.norm_samples, "config");
  if (c.samples < 1 || c.norm_samples < 1) throw config_error("config: sample counts must be positive");
  read(j, "R_schedule", c.R_schedule, "config");
  detail::check_increasing(c.R_schedule, "config.R_schedule");
  read(j, "decay_R", c.decay_R, "config");
  detail::check_increasing(c.decay_R, "config.decay_R");
  c.quad = default_quadrature(c.m);
  if (j.contains("quadrature")) {
    const auto& q = j.at("quadrature");
    detail::reject_unknown(q, {"n_theta", "n_phase"}, "config.quadrature");
    read(q, "n_theta", c.quad.n_theta, "config.quadrature");
    read(q, "n_phase", c.quad.n_phase, "config.quadrature");
    if (c.quad.n_theta < 2 || c.quad.n_phase < 2) throw config_error("config.quadrature: node counts must be >= 2");
    c.quad_given = true;
  }
  if (j.contains("bump")) {
    const auto& b = j.at("bump");
    detail::reject_unknown(b, {"z0", "z1", "sharpness"}, "config.bump");
    read(b, "z0", c.bump.z0, "config.bump");
    read(b, "z1", c.bump.z1, "config.bump");
    read(b, "sharpness", c.bump.sharpness, "config.bump");
  }
  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    const std::string w = "config.tolerances";
    detail::reject_unknown(t,
                           {"flat", "curvature_agreement", "killing", "killing_control", "norm", "qmap", "third_order",
                            "lemma", "mass", "fit", "nonneg", "equivariance", "refinement", "decay", "margin",
                            "two_path", "display", "linearity", "rh"},
                           w);
    auto& T = c.tol;
    detail::read_positive(t, "flat", T.flat, w);
    detail::read_positive(t, "curvature_agreement", T.curvature_agreement, w);
    detail::read_positive(t, "killing", T.killing, w);
    detail::read_positive(t, "killing_control", T.killing_control, w);
    detail::read_positive(t, "norm", T.norm, w);
    detail::read_positive(t, "qmap", T.qmap, w);
    detail::read_positive(t, "third_order", T.third_order, w);
    detail::read_positive(t, "lemma", T.lemma, w);
    detail::read_positive(t, "mass", T.mass, w);
    detail::read_positive(t, "fit", T.fit, w);
    detail::read_positive(t, "nonneg", T.nonneg, w);
    detail::read_positive(t, "equivariance", T.equivariance, w);
    detail::read_positive(t, "refinement", T.refinement, w);
    detail::read_positive(t, "decay", T.decay, w);
    detail::read_positive(t, "margin", T.margin, w);
    detail::read_positive(t, "two_path", T.two_path, w);
    detail::read_positive(t, "display", T.display, w);
    detail::read_positive(t, "linearity", T.linearity, w);
    detail::read_positive(t, "rh", T.rh, w);
  }
  if (j.contains("holonomy")) {
    const auto& h = j.at("holonomy");
    detail::reject_unknown(h, {"loops", "threshold"}, "config.holonomy");
    read(h, "loops", c.loops, "config.holonomy");
    detail::read_positive(h, "threshold", c.hol_threshold, "config.holonomy");
    if (c.loops < 1) throw config_error("config.holonomy.loops must be positive");
  }
  read(j, "boost", c.boost, "config");
  read(j, "orbit_images", c.orbit_images, "config");
  if (c.orbit_images < 0) throw config_error("config.orbit_images must be >= 0");
  if (j.contains("mass_parts")) {
    const auto& p = j.at("mass_parts");
    detail::reject_unknown(p, {"model", "appendix", "orbit", "equivariance", "controls", "rh"}, "config.mass_parts");
    read(p, "model", c.parts.model, "config.mass_parts");
    read(p, "appendix", c.parts.appendix, "config.mass_parts");
    read(p, "orbit", c.parts.orbit, "config.mass_parts");
    read(p, "equivariance", c.parts.equivariance, "config.mass_parts");
    read(p, "controls", c.parts.controls, "config.mass_parts");
    read(p, "rh", c.parts.rh, "config.mass_parts");
  }
  read(j, "inputs", c.inputs, "config");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config parse error: " + std::string(e.what()));
  }
  return parse_config(j);
}

inline json to_json(const ExperimentConfig& c) {
  const auto& T = c.tol;
  return json{{"m", c.m},
              {"parity", c.odd() ? "odd" : "even"},
              {"seed", c.seed},
              {"samples", c.samples},
              {"norm_samples", c.norm_samples},
              {"R_schedule", c.R_schedule},
              {"decay_R", c.decay_R},
              {"quadrature", {{"n_theta", c.quad.n_theta}, {"n_phase", c.quad.n_phase}}},
              {"bump", {{"z0", c.bump.z0}, {"z1", c.bump.z1}, {"sharpness", c.bump.sharpness}}},
              {"tolerances",
               {{"flat", T.flat},
                {"curvature_agreement", T.curvature_agreement},
                {"killing", T.killing},
                {"killing_control", T.killing_control},
                {"norm", T.norm},
                {"qmap", T.qmap},
                {"third_order", T.third_order},
                {"lemma", T.lemma},
                {"mass", T.mass},
                {"fit", T.fit},
                {"nonneg", T.nonneg},
                {"equivariance", T.equivariance},
                {"refinement", T.refinement},
                {"decay", T.decay},
                {"margin", T.margin},
                {"two_path", T.two_path},
                {"display", T.display},
                {"linearity", T.linearity},
                {"rh", T.rh}}},
              {"holonomy", {{"loops", c.loops}, {"threshold", c.hol_threshold}}},
              {"boost", c.boost},
              {"orbit_images", c.orbit_images},
              {"mass_parts",
               {{"model", c.parts.model},
                {"appendix", c.parts.appendix},
                {"orbit", c.parts.orbit},
                {"equivariance", c.parts.equivariance},
                {"controls", c.parts.controls},
                {"rh", c.parts.rh}}},
              {"inputs", c.inputs}};
}

// -------------------------------------------------------------------------
// reports

struct Check {
  std::string name;
  bool pass = false;
  double measured = 0;
  double tolerance = 0;
  std::string relation;  // how measured compares to tolerance for a pass
  json detail = json::object();
};

inline Check check_le(std::string name, double measured, double tol, json detail = json::object()) {
  return {std::move(name), std::isfinite(measured) && measured <= tol, measured, tol, "<=", std::move(detail)};
}
inline Check check_ge(std::string name, double measured, double tol, json detail = json::object()) {
  return {std::move(name), std::isfinite(measured) && measured >= tol, measured, tol, ">=", std::move(detail)};
}
inline Check check_eq(std::string name, double measured, double expected, json detail = json::object()) {
  return {std::move(name), measured == expected, measured, expected, "==", std::move(detail)};
}

struct RunReport {
  std::string command;
  ExperimentConfig config;
  std::vector<Check> checks;
  json data = json::object();  // command-specific results
  std::vector<std::vector<std::string>> mass_rows;
  std::vector<ProfileRow> profile_rows;
  std::vector<std::pair<std::string, double>> timing;

  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
  const Check* find(const std::string& name) const {
    for (auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
  void add(Check c) { checks.push_back(std::move(c)); }
};

inline json environment_stamp() {
  return json{{"tool", "chmass"},
              {"version", tool_version},
              {"compiler", __VERSION__},
              {"cxx", static_cast<long>(__cplusplus)},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"boost", BOOST_LIB_VERSION}};
}

inline json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const Check& c) {
  json j{{"name", c.name}, {"pass", c.pass}, {"measured", c.measured}, {"tolerance", c.tolerance}, {"relation", c.relation}};
  if (!c.detail.empty()) j["detail"] = c.detail;
  return j;
}

inline json to_json(const RunReport& r) {
  json checks = json::array();
  for (auto& c : r.checks) checks.push_back(to_json(c));
  json j{{"command", r.command}, {"pass", r.all_pass()}, {"environment", environment_stamp()},
         {"config", to_json(r.config)}, {"checks", checks}};
  if (!r.data.empty()) j["data"] = r.data;
  return j;
}

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_;
};

// -------------------------------------------------------------------------
// sampling helpers

inline std::vector<Vec> sample_points(const ExperimentConfig& c, std::uint64_t stream, int count, double rmin,
                                      double rmax) {
  std::vector<Vec> pts;
  for (int i = 0; i < count; ++i) {
    auto rng = make_rng(c.seed, stream, i);
    Vec d = random_normal(rng, 2 * c.m).normalized();
    std::uniform_real_distribution<double> ud(rmin, rmax);
    pts.push_back(d * ud(rng));
  }
  return pts;
}

inline Vec sample_direction(const ExperimentConfig& c, std::uint64_t stream, int index, int n) {
  auto rng = make_rng(c.seed, stream, index);
  return random_normal(rng, n).normalized();
}

// -------------------------------------------------------------------------
// flatness: curvature of the CH connection, fiber signature, holonomy

inline RunReport cmd_flatness(const ExperimentConfig& c) {
  RunReport rep{"flatness", c, {}, {}, {}, {}, {}};
  Stopwatch sw;
  const int m = c.m, n = 2 * m;
  ChModel ch{m};

  auto pts = sample_points(c, 1, c.samples, 0.0, 0.7);
  std::vector<double> flat(pts.size()), pred(pts.size());
  std::vector<Vec> Xs, Ys;
  for (int i = 0; i < c.samples; ++i) {
    Vec X = sample_direction(c, 2, i, n), Y = sample_direction(c, 3, i, n);
    Y = (Y - Y.dot(X) * X).normalized();
    Xs.push_back(X);
    Ys.push_back(Y);
  }
  parallel_for(pts.size(), [&](std::size_t i) {
    auto ce = curvature_e(-1.0, ch, pts[i], Xs[i], Ys[i]);
    flat[i] = ce.fd.norm();
    pred[i] = ce.predicted.norm();
  });
  const auto worst = std::max_element(flat.begin(), flat.end()) - flat.begin();
  rep.add(check_le("flat_model", flat[worst], c.tol.flat,
                   {{"worst_point", vec_json(pts[worst])},
                    {"X", vec_json(Xs[worst])},
                    {"Y", vec_json(Ys[worst])},
                    {"samples", c.samples}}));
  rep.add(check_le("flat_model_closed_form", *std::max_element(pred.begin(), pred.end()), c.tol.flat));

  // the other member of the connection family is not flat
  {
    const int k = std::min(c.samples, 5);
    double least = std::numeric_limits<double>::infinity();
    for (int i = 0; i < k; ++i) least = std::min(least, curvature_e(+1.0, ch, pts[i], Xs[i], Ys[i]).fd.norm());
    rep.add(check_ge("control_wrong_sign_not_flat", least, 1e3 * c.tol.flat, {{"c", 1.0}, {"samples", k}}));
  }

  // on a non-model Kahler metric the FD curvature matches the closed-form blocks
  MomentumProfile P = MomentumProfile::custom(c.bump, m);
  PerturbedMetric<ChModel, ProfilePerturbationField> app{ch, {P}};
  {
    auto far = sample_points(c, 4, std::min(c.samples, 5), 0.8, 0.9);
    double worst_rel = 0, least = std::numeric_limits<double>::infinity();
    Vec at = far[0];
    for (std::size_t i = 0; i < far.size(); ++i) {
      auto ce = curvature_e(-1.0, app, far[i], Xs[i], Ys[i]);
      const double rel = (ce.fd - ce.predicted).norm() / ce.fd.norm();
      least = std::min(least, ce.fd.norm());
      if (rel > worst_rel) {
        worst_rel = rel;
        at = far[i];
      }
    }
    rep.add(check_le("curvature_blocks_nonmodel", worst_rel, c.tol.curvature_agreement, {{"worst_point", vec_json(at)}}));
    rep.add(check_ge("control_nonmodel_not_flat", least, 1e3 * c.tol.flat));
  }

  // fiber signature (m^2 + 1, 2m)
  {
    FiberLayout L(m);
    int bad = 0;
    Vec at = pts[0];
    std::pair<int, int> sig{0, 0};
    for (auto& p : pts) {
      auto s = signature(fiber_gram(L, ch.G(p), -1.0));
      if (s != std::make_pair(m * m + 1, 2 * m)) {
        ++bad;
        at = p;
        sig = s;
      }
      if (bad == 0) sig = s;
    }
    rep.add(check_eq("signature_positive", sig.first, m * m + 1, {{"point", vec_json(at)}}));
    rep.add(check_eq("signature_negative", sig.second, 2 * m, {{"point", vec_json(at)}}));
  }

  // holonomy fixed space
  {
    LoopFamily fam;
    fam.base = Vec::Zero(n);
    fam.count = c.loops;
    fam.seed = c.seed;
    auto ps = parallel_space_dim(-1.0, ch, fam, c.hol_threshold);
    rep.add(check_eq("holonomy_dim_ch", ps.dim, (m + 1) * (m + 1), {{"loops", c.loops}, {"transport_ok", ps.ok}}));
    auto pr = parallel_space_dim_rh(PoincareBall{n}, fam, c.hol_threshold);
    rep.add(check_eq("holonomy_dim_rh", pr.dim, n + 1, {{"n", n}, {"transport_ok", pr.ok}}));
    // potential -log(1 - q) + 0.3 q^2 is Kahler but not locally CH
    auto bent = potential_metric(
        m, [](double q) { return 1 / (1 - q) + 0.6 * q; }, [](double q) { return 1 / ((1 - q) * (1 - q)) + 0.6; },
        [](double q) { return 2 / std::pow(1 - q, 3); });
    auto pa = parallel_space_dim(-1.0, bent, fam, c.hol_threshold);
    rep.add(check_ge("control_holonomy_nonmodel_drops", (m + 1) * (m + 1) - pa.dim, 1, {{"dim", pa.dim}}));
    rep.data["holonomy"] = {{"ch", ps.dim}, {"rh", pr.dim}, {"perturbed_potential", pa.dim}};
  }
  rep.timing.push_back({"flatness", sw.seconds()});
  return rep;
}

// -------------------------------------------------------------------------
// Killing spinors and the map Q

inline RunReport cmd_killing(const ExperimentConfig& c) {
  RunReport rep{"killing", c, {}, {}, {}, {}, {}};
  Stopwatch sw;
  const int m = c.m, n = 2 * m;
  auto labels = killing_labels(m);
  auto pts = sample_points(c, 11, c.samples, 0.0, 0.7);
  const std::size_t nl = labels.size(), np = pts.size();

  std::vector<double> res(nl * np), ctl(nl * np);
  parallel_for(nl * np, [&](std::size_t k) {
    const auto& lab = labels[k / np];
    const Vec& p = pts[k % np];
    Vec X = sample_direction(c, 12, static_cast<int>(k), n);
    auto r = killing_residual(m, lab, p, X);
    res[k] = r.residual / r.norm;
    // along e_0 the perturbing factor has full gradient
    auto q = perturbed_residual(m, lab, p, Vec::Unit(n, 0), 0.1);
    ctl[k] = q.residual / q.norm;
  });
  {
    auto w = std::max_element(res.begin(), res.end()) - res.begin();
    rep.add(check_le("killing_residual", res[w], c.tol.killing,
                     {{"label", labels[w / np].name()}, {"point", vec_json(pts[w % np])}, {"families", nl}}));
    auto l = std::min_element(ctl.begin(), ctl.end()) - ctl.begin();
    rep.add(check_ge("control_perturbed_spinor", ctl[l], c.tol.killing_control,
                     {{"label", labels[l / np].name()}, {"point", vec_json(pts[l % np])}}));
  }

  // closed-form norms of the family and its two graded pieces
  {
    auto npts = sample_points(c, 13, c.norm_samples, 0.0, 0.9);
    double worst = 0;
    std::string wl;
    Vec at = npts[0];
    for (auto& lab : labels)
      for (auto& p : npts) {
        auto sp = killing_family(m, lab, p);
        auto nn = killing_norms(m, lab, p);
        const double e = std::max({std::abs(sp.phi.norm2() - nn.total), std::abs(sp.lo().norm2() - nn.lo),
                                   std::abs(sp.hi().norm2() - nn.hi)}) /
                         std::max(1.0, nn.total);
        if (e > worst) {
          worst = e;
          wl = lab.name();
          at = p;
        }
      }
    rep.add(check_le("norm_identities", worst, c.tol.norm, {{"label", wl}, {"point", vec_json(at)}}));
  }

  // Q-map coherence
  {
    double bb = 0, bw = 0, xo = 0, spread = 0;
    json where = json::object();
    Mat omega = ambient_omega(m);
    json betas = json::object();
    for (auto& lab : labels) {
      Mat B0;
      for (std::size_t i = 0; i < np; ++i) {
        auto q = q_map(m, lab, pts[i], true);
        if (i == 0) B0 = q.beta;
        spread = std::max(spread, (q.beta - B0).norm());
        const double e1 = std::abs(pairing(q.beta, q.beta) - (m + 1));
        const double target = c.odd() ? 0.0 : (lab.breve ? -1.0 : 1.0);
        const double e2 = std::abs(pairing(q.beta, omega) - target);
        const double e3 = c.odd() ? std::abs(q.xi_omega - q.s.u) : 0.0;
        if (e1 > bb) bb = e1, where["beta_beta"] = {{"label", lab.name()}, {"point", vec_json(pts[i])}};
        if (e2 > bw) bw = e2, where["beta_omega"] = {{"label", lab.name()}, {"point", vec_json(pts[i])}};
        if (e3 > xo) xo = e3, where["xi_omega"] = {{"label", lab.name()}, {"point", vec_json(pts[i])}};
      }
      betas[lab.name()] = vec_json(Eigen::Map<const Vec>(B0.data(), B0.size()));
    }
    rep.add(check_le("q_beta_beta", bb, c.tol.qmap, where.value("beta_beta", json::object())));
    rep.add(check_le("q_beta_omega", bw, c.tol.qmap, where.value("beta_omega", json::object())));
    if (c.odd()) rep.add(check_le("q_xi_omega_minus_u", xo, c.tol.qmap, where.value("xi_omega", json::object())));
    rep.add(check_le("q_beta_constant", spread, c.tol.qmap * 100));
    rep.data["betas"] = betas;
  }

  // u = |phi|^2 solves the third order equation
  {
    const int k = std::min<int>(3, static_cast<int>(np));
    std::vector<double> r(nl * k);
    parallel_for(nl * k, [&](std::size_t idx) {
      const auto& lab = labels[idx / k];
      const Vec& p = pts[idx % k];
      Vec X = sample_direction(c, 14, static_cast<int>(idx), n);
      r[idx] = third_order_residual(ChModel{m}, [&](const Vec& x) { return killing_family(m, lab, x).phi.norm2(); }, p, X)
                   .norm();
    });
    auto w = std::max_element(r.begin(), r.end()) - r.begin();
    rep.add(check_le("q_third_order", r[w], c.tol.third_order,
                     {{"label", labels[w / k].name()}, {"point", vec_json(pts[w % k])}}));
  }

  if (m <= 3) {
    std::vector<Vec> lp(pts.begin(), pts.begin() + std::min<std::size_t>(3, np));
    auto lr = lemma_checks(m, labels, lp, c.seed);
    double worst = 0;
    std::string key;
    json all = json::object();
    for (auto& [k, v] : lr.max_violation) {
      all[k] = v;
      if (v > worst) worst = v, key = k;
    }
    rep.add(check_le("lemma_identities", worst, c.tol.lemma, {{"worst", key}, {"all", all}}));
  }

  rep.add(check_eq("family_rank", family_rank(m, {pts[0], Vec(0.5 * pts[1 % np]), Vec(-pts[2 % np])}),
                   static_cast<double>(nl)));

  {
    double worst = 0;
    for (std::size_t i = 0; i < nl; ++i) {
      std::vector<double> th(m + 1);
      for (int k = 0; k <= m; ++k) th[k] = 0.3 * k + 0.1 * static_cast<double>(i);
      worst = std::max(worst, q_equivariance_defect(m, labels[i], th, pts[i % np]));
    }
    rep.add(check_le("q_equivariance", worst, 1e-6));
  }
  rep.timing.push_back({"killing", sw.seconds()});
  return rep;
}

// -------------------------------------------------------------------------
// mass

inline void append_rows(RunReport& rep, const std::string& prefix, const MassReport& mr) {
  for (auto& row : mr.rows)
    for (std::size_t i = 0; i < row.R.size(); ++i)
      rep.mass_rows.push_back({prefix + ":" + row.id, fmt_double(row.R[i]), fmt_double(row.values[i]),
                               fmt_double(row.fit.limit), fmt_double(row.fit.kappa), to_string(row.fit.flag)});
}

inline json functional_json(const MassReport& mr) {
  json j = json::array();
  for (auto& r : mr.rows)
    j.push_back({{"id", r.id},
                 {"limit", r.fit.limit},
                 {"kappa", r.fit.kappa},
                 {"residual", r.fit.residual},
                 {"fallback", r.fit.fallback},
                 {"flag", to_string(r.fit.flag)}});
  return j;
}

inline double max_abs_limit(const MassReport& mr) {
  double s = 0;
  for (auto& r : mr.rows)
    if (std::isfinite(r.fit.limit)) s = std::max(s, std::abs(r.fit.limit));
  return s;
}

// elements of the distinguished orbits: Q-images of the Killing families and
// their images under seeded U(m,1) elements
inline std::vector<NamedForm> orbit_elements(const ExperimentConfig& c) {
  const int m = c.m;
  std::vector<NamedForm> out;
  Vec p0 = Vec::Zero(2 * m);
  p0[0] = 0.1;
  for (auto& lab : killing_labels(m)) {
    Mat B = q_map(m, lab, p0, true).beta;
    out.push_back({lab.name(), B});
    for (int i = 0; i < c.orbit_images; ++i) {
      auto rng = make_rng(c.seed, 21, static_cast<std::uint64_t>(out.size()));
      std::uniform_real_distribution<double> ut(-0.6, 0.6), ua(0, 2 * pi);
      std::uniform_int_distribution<int> uk(0, m - 1);
      std::vector<double> th(m + 1);
      for (auto& t : th) t = ua(rng);
      CMat U = diagonal_phase(th) * boost_matrix(m, uk(rng), ut(rng));
      out.push_back({lab.name() + "*g" + std::to_string(i + 1), pu_action(U, B)});
    }
  }
  return out;
}

inline QuadratureSpec refined4(const QuadratureSpec& q, int m) {
  // four times the nodes: two angular dimensions doubled
  if (m == 2) return {q.n_theta, 2 * q.n_phase};
  if (m == 3) return {2 * q.n_theta, q.n_phase};
  return {2 * q.n_theta, q.n_phase};
}

inline RunReport cmd_mass(const ExperimentConfig& c) {
  RunReport rep{"mass", c, {}, {}, {}, {}, {}};
  const int m = c.m, n = 2 * m;
  const auto& R = c.R_schedule;
  ChModel ch{m};
  auto basis = mass_basis(m);

  if (c.parts.model) {
    Stopwatch sw;
    auto worst_of = [](const MassReport& mr) {
      std::pair<double, std::string> w{0.0, ""};
      for (auto& row : mr.rows)
        for (double v : row.values)
          if (std::abs(v) > w.first) w = {std::abs(v), row.id};
      return w;
    };
    // the model profile through the same perturbation route as the appendix metric
    auto mr = mass_of_betas(ProfilePerturbationField{MomentumProfile::model(ProfileKind::ch, m)}, basis, R, c.quad);
    auto [worst, wid] = worst_of(mr);
    rep.add(check_le("model_mass_zero", std::max(worst, max_abs_limit(mr)), c.tol.mass, {{"beta", wid}}));
    append_rows(rep, "model", mr);
    rep.data["model_functional"] = functional_json(mr);

    // second path: profile chart minus closed form. The subtraction costs
    // about e^{(2m+2)R} ulps of the model metric, so only moderate radii are usable.
    const double r_cut = 21.0 / (2 * m + 2);
    std::vector<double> Rs;
    for (double r : R)
      if (r <= r_cut + 1e-12) Rs.push_back(r);
    if (!Rs.empty()) {
      DifferencePerturbation<ProfileMetric, ChModel> diff{ProfileMetric{MomentumProfile::model(ProfileKind::ch, m)}, ch};
      MassReport dr;
      for (auto& b : basis) dr.rows.push_back({b.id, {}, {}, {}});
      SphereRule rule = ch_rule(m, c.quad);
      std::vector<Mat> Bs;
      for (auto& b : basis) Bs.push_back(b.B);
      for (double r : Rs) {
        auto sv = ch_mass_at(diff, Bs, r, rule);
        for (std::size_t i = 0; i < Bs.size(); ++i) dr.rows[i].values.push_back(sv.values[i]);
      }
      auto [w2, id2] = worst_of(dr);
      rep.add(check_le("model_mass_two_path", w2, c.tol.mass, {{"beta", id2}, {"R_max", Rs.back()}}));
    }
    rep.timing.push_back({"model", sw.seconds()});
  }

  MomentumProfile P = MomentumProfile::custom(c.bump, m);
  ProfilePerturbationField app{P};
  MassReport amr;
  double scale = 1;
  if (c.parts.appendix || c.parts.orbit || c.parts.equivariance) {
    Stopwatch sw;
    amr = mass_of_betas(app, basis, R, c.quad);
    scale = std::max(max_abs_limit(amr), 1e-300);
    append_rows(rep, "appendix", amr);
    rep.data["functional"] = functional_json(amr);
    rep.timing.push_back({"appendix", sw.seconds()});
  }

  if (c.parts.appendix) {
    Stopwatch sw;
    int bad = 0;
    double worst_res = 0;
    std::string wid;
    for (auto& row : amr.rows) {
      if (row.fit.flag != MassFlag::finite) ++bad, wid = row.id;
      if (row.fit.residual > worst_res) worst_res = row.fit.residual, wid = bad ? wid : row.id;
    }
    rep.add(check_eq("appendix_all_finite", bad, 0, {{"beta", wid}}));
    rep.add(check_le("appendix_fit_residual", worst_res, c.tol.fit, {{"beta", wid}}));

    // growth bookkeeping: norm decay a = 2m, differences contract by at least
    // 2 exp(-(a - m - 1/2) dR) per step on rows that are not zero
    const double a = 2 * m;
    double worst_ratio = 0, bound = 0;
    for (auto& row : amr.rows) {
      double mx = 0;
      for (double v : row.values) mx = std::max(mx, std::abs(v));
      if (mx <= 1e-6 * scale) continue;
      worst_ratio = std::max(worst_ratio, max_difference_ratio(row.values));
    }
    bound = 2 * std::exp(-(a - m - 0.5) * (R[1] - R[0]));
    rep.add(check_le("appendix_growth_bookkeeping", worst_ratio, bound, {{"a", a}}));

    // refinement of the angular rule by 4x at the last radius
    QuadratureSpec fine = refined4(c.quad, m);
    std::vector<Mat> Bs;
    for (auto& b : basis) Bs.push_back(b.B);
    auto coarse = ch_mass_at(app, Bs, R.back(), ch_rule(m, c.quad));
    auto finev = ch_mass_at(app, Bs, R.back(), ch_rule(m, fine));
    double worst_ref = 0;
    for (std::size_t i = 0; i < Bs.size(); ++i)
      worst_ref = std::max(worst_ref, std::abs(coarse.values[i] - finev.values[i]) / scale);
    rep.add(check_le("appendix_refinement", worst_ref, c.tol.refinement,
                     {{"coarse", {{"n_theta", c.quad.n_theta}, {"n_phase", c.quad.n_phase}}},
                      {"fine", {{"n_theta", fine.n_theta}, {"n_phase", fine.n_phase}}}}));

    // linearity on random combinations at a fixed radius
    double worst_lin = 0;
    SphereRule rule = ch_rule(m, c.quad);
    for (int i = 0; i < 3; ++i) {
      auto rng = make_rng(c.seed, 22, i);
      std::uniform_int_distribution<std::size_t> ub(0, basis.size() - 1);
      std::normal_distribution<double> nd;
      const std::size_t i1 = ub(rng), i2 = ub(rng);
      const double x1 = nd(rng), x2 = nd(rng);
      auto v = ch_mass_at(app, {basis[i1].B, basis[i2].B, Mat(x1 * basis[i1].B + x2 * basis[i2].B)}, R.front(), rule);
      worst_lin = std::max(worst_lin, std::abs(v.values[2] - x1 * v.values[0] - x2 * v.values[1]) / scale);
    }
    rep.add(check_le("mass_linearity", worst_lin, c.tol.linearity));

    // the two displays of the integrand
    double worst_disp = 0;
    Mat J = complex_structure(m);
    for (int i = 0; i < c.samples; ++i) {
      auto rng = make_rng(c.seed, 23, i);
      Vec p = random_ball_point(rng, n, 0.95);
      Mat B = Mat::Zero(n + 2, n + 2);
      for (auto& b : ambient_basis(m)) B += random_normal(rng, 1)[0] * b.B;
      auto td = trace_div(ch, app, p);
      const double u = u_of_beta(B, p);
      Vec du = du_of_beta(B, p);
      Vec l1 = ch_oneform(td, u, du), l2 = ch_oneform_alpha(td, u, J_covector(J, du), J);
      worst_disp = std::max(worst_disp, (l1 - l2).norm() / std::max(l1.norm(), 1e-300));
    }
    rep.add(check_le("display_forms_agree", worst_disp, c.tol.display));
    rep.timing.push_back({"appendix_checks", sw.seconds()});
  }

  if (c.parts.orbit) {
    Stopwatch sw;
    auto elems = orbit_elements(c);
    auto orb = mass_of_betas(app, elems, R, c.quad);
    append_rows(rep, "orbit", orb);
    double least = std::numeric_limits<double>::infinity(), worst_res = 0;
    std::string wid;
    int bad = 0;
    for (auto& row : orb.rows) {
      if (row.fit.flag != MassFlag::finite) ++bad;
      worst_res = std::max(worst_res, row.fit.residual);
      if (row.fit.limit < least) least = row.fit.limit, wid = row.id;
    }
    rep.add(check_ge("orbit_nonnegative", least / scale, -c.tol.nonneg, {{"beta", wid}, {"scale", scale}}));
    rep.add(check_eq("orbit_all_finite", bad, 0));
    rep.add(check_le("orbit_fit_residual", worst_res, c.tol.fit));
    rep.data["orbit"] = functional_json(orb);
    rep.timing.push_back({"orbit", sw.seconds()});
  }

  if (c.parts.equivariance) {
    Stopwatch sw;
    CMat U = boost_matrix(m, 0, c.boost);
    PulledPerturbation<ProfilePerturbationField> pulled{app, BallMap{U}};
    std::vector<NamedForm> moved;
    for (auto& b : basis) moved.push_back({b.id, pu_action(U, b.B)});
    auto pm = mass_of_betas(pulled, moved, R, c.quad);
    append_rows(rep, "pulled", pm);
    double worst = 0;
    std::string wid;
    for (std::size_t i = 0; i < basis.size(); ++i) {
      const double d = std::abs(pm.rows[i].fit.limit - amr.rows[i].fit.limit) / scale;
      if (!(d <= worst)) worst = d, wid = basis[i].id;
    }
    rep.add(check_le("equivariance", worst, c.tol.equivariance, {{"beta", wid}, {"boost", c.boost}}));
    rep.data["pulled_functional"] = functional_json(pm);
    rep.timing.push_back({"equivariance", sw.seconds()});
  }

  if (c.parts.controls) {
    Stopwatch sw;
    // g - g0 ~ e^{-m r}: outside the decay hypothesis, the values must blow up
    ConformalCHPerturbation slow{m, 0.01, static_cast<double>(m)};
    auto row = mass_of_beta(slow, basis.back(), R, c.quad);
    MassReport mr;
    mr.rows.push_back(row);
    append_rows(rep, "control_slow", mr);
    rep.add({"control_slow_decay_diverges", row.fit.flag == MassFlag::diverging, row.values.back(), 0, "diverging",
             {{"flag", to_string(row.fit.flag)}}});
    rep.timing.push_back({"controls", sw.seconds()});
  }

  if (c.parts.rh) {
    Stopwatch sw;
    // conformal radial perturbations of RH^n, n = 4; closed form of the
    // sphere integral for phi = eps e^{-a r} and u = cosh r:
    //   (n-1)/4 vol(S^{n-1}) eps e^{-a R} sinh^{n-1} R (a cosh R + sinh R)
    const int rn = 4;
    const double eps = 0.1;
    Vec V = Vec::Zero(rn + 1);
    V[0] = 1;
    std::vector<double> rR{2, 3, 4, 5, 6, 7};
    auto closed = [&](double a, double r) {
      return 0.25 * (rn - 1) * unit_sphere_volume(rn) * eps * std::exp(-a * r) * std::pow(std::sinh(r), rn - 1) *
             (a * std::cosh(r) + std::sinh(r));
    };
    auto r1 = rh_mass(ConformalRHPerturbation{rn, eps, double(rn)}, V, rR, 8, 12);
    double worst = 0;
    for (std::size_t i = 0; i < rR.size(); ++i)
      worst = std::max(worst, std::abs(r1.values[i] - closed(rn, rR[i])) / std::abs(closed(rn, rR[i])));
    const double exact_limit = eps * unit_sphere_volume(rn) * (rn * rn - 1) / std::pow(2.0, rn + 2);
    rep.add(check_le("rh_closed_form", worst, c.tol.rh));
    rep.add(check_le("rh_limit", std::abs(r1.fit.limit - exact_limit) / exact_limit, c.tol.fit,
                     {{"limit", r1.fit.limit}, {"exact", exact_limit}}));
    auto r2 = rh_mass(ConformalRHPerturbation{rn, eps, double(rn + 1)}, V, rR, 8, 12);
    const double mx = *std::max_element(r2.values.begin(), r2.values.end());
    const double mn = *std::min_element(r2.values.begin(), r2.values.end());
    rep.add(check_ge("rh_fast_decay_sign", mn, 0.0, {{"trace_sign", 1}}));
    rep.add(check_le("rh_fast_decay_limit", std::abs(r2.fit.limit) / mx, c.tol.fit, {{"limit", r2.fit.limit}}));
    auto r0 = rh_mass(ZeroPerturbation{rn}, V, rR, 8, 12);
    rep.add(check_le("rh_model_zero", std::abs(r0.fit.limit), c.tol.mass));
    MassReport mr;
    r1.id = "a=n";
    r2.id = "a=n+1";
    mr.rows = {r1, r2};
    append_rows(rep, "rh", mr);
    rep.timing.push_back({"rh", sw.seconds()});
  }
  return rep;
}

// -------------------------------------------------------------------------
// appendix example: profile, decay, two-path checks

inline RunReport cmd_appendix(const ExperimentConfig& c) {
  RunReport rep{"appendix", c, {}, {}, {}, {}, {}};
  Stopwatch sw;
  const int m = c.m, n = 2 * m;
  MomentumProfile P = MomentumProfile::custom(c.bump, m);
  rep.profile_rows = profile_table(P);
  {
    double mm = std::numeric_limits<double>::infinity(), mc = mm, xm = 0, xc = 0;
    for (auto& r : rep.profile_rows) {
      if (r.margin < mm) mm = r.margin, xm = r.x;
      if (r.conv < mc) mc = r.conv, xc = r.x;
    }
    rep.add(check_ge("scal_margin", mm, -c.tol.margin, {{"x", xm}}));
    rep.add(check_ge("convexity", mc, -c.tol.margin, {{"x", xc}}));
  }

  std::vector<double> tr, nr;
  for (double R : c.decay_R) {
    auto d = decay_sample(P, R);
    tr.push_back(d.trace);
    nr.push_back(d.norm);
  }
  auto ft = fit_decay(c.decay_R, tr), fn = fit_decay(c.decay_R, nr);
  rep.add(check_le("decay_trace_2m", std::abs(ft.slope - 2 * m) / (2 * m), c.tol.decay,
                   {{"slope", ft.slope}, {"target", 2 * m}, {"rms", ft.rms}}));
  rep.add(check_le("decay_norm_2m", std::abs(fn.slope - 2 * m) / (2 * m), c.tol.decay,
                   {{"slope", fn.slope}, {"target", 2 * m}, {"rms", fn.rms}}));
  rep.data["decay"] = {{"R", c.decay_R}, {"trace", tr}, {"norm", nr}, {"trace_slope", ft.slope}, {"norm_slope", fn.slope}};

  {
    auto pts = sample_points(c, 31, c.samples, 0.0, 0.95);
    MomentumProfile P0 = MomentumProfile::model(ProfileKind::ch, m);
    double worst = 0, worst_chart = 0;
    Vec at = pts[0];
    for (auto& p : pts) {
      Mat G1 = metric_of_profile(P0, p), G2 = metric_ch(p);
      const double e = (G1 - G2).norm() / G2.norm();
      if (e > worst) worst = e, at = p;
      const double q = p.squaredNorm();
      auto a = chart_of_profile(P, q), b = chart_by_gauge(P, q);
      worst_chart = std::max(worst_chart, std::abs(a.x - b.x) / std::max(1.0, std::abs(a.x)));
    }
    rep.add(check_le("two_path_model_metric", worst, c.tol.two_path, {{"worst_point", vec_json(at)}}));
    rep.add(check_le("two_path_chart", worst_chart, c.tol.two_path));
    (void)n;
  }

  {
    bool rejected = false;
    std::string why;
    try {
      MomentumProfile::custom(BumpSpec{0.5, 1.0, 1.0}, m);
    } catch (const domain_error& e) {
      rejected = true;
      why = e.what();
    }
    rep.add({"control_bad_support_rejected", rejected, rejected ? 1.0 : 0.0, 1, "==", {{"reason", why}}});
  }
  rep.timing.push_back({"appendix", sw.seconds()});
  return rep;
}

// -------------------------------------------------------------------------
// output

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

inline std::string mass_csv(const RunReport& r) {
  std::ostringstream os;
  os << "beta_id,R,value,est_limit,kappa,flag\n";
  for (auto& row : r.mass_rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << "\n";
  }
  return os.str();
}

inline std::string profile_csv(const RunReport& r) {
  std::ostringstream os;
  os << "x,theta0,theta,alpha,scal0,scal,margin,convexity\n";
  for (auto& p : r.profile_rows)
    os << fmt_double(p.x) << "," << fmt_double(p.theta0) << "," << fmt_double(p.theta) << "," << fmt_double(p.alpha)
       << "," << fmt_double(p.scal0) << "," << fmt_double(p.scal) << "," << fmt_double(p.margin) << ","
       << fmt_double(p.conv) << "\n";
  return os.str();
}

inline std::string summary_table(const std::vector<std::pair<std::string, const json*>>& runs) {
  std::ostringstream os;
  for (auto& [label, j] : runs) {
    os << label << "  " << ((*j).value("pass", false) ? "PASS" : "FAIL") << "\n";
    for (auto& c : (*j)["checks"]) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "  %-4s %-34s %-14s %s %s\n", c.value("pass", false) ? "ok" : "FAIL",
                    c.value("name", "").c_str(), c["measured"].dump().c_str(), c.value("relation", "").c_str(),
                    c["tolerance"].dump().c_str());
      os << buf;
    }
  }
  return os.str();
}

// mass.csv and profile.csv are header-only when the command produced no rows;
// timing.json carries wall-clock data and is outside the determinism guarantee
inline void write_outputs(const RunReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json j = to_json(r);
  write_text(dir / "report.json", j.dump(2) + "\n");
  write_text(dir / "mass.csv", mass_csv(r));
  write_text(dir / "profile.csv", profile_csv(r));
  json t = json::object();
  for (auto& [k, v] : r.timing) t[k] = v;
  t["threads"] = thread_cap();
  write_text(dir / "timing.json", t.dump(2) + "\n");
  write_text(dir / "summary.txt", summary_table({{r.command + " (m=" + std::to_string(r.config.m) + ")", &j}}));
}

// -------------------------------------------------------------------------
// report: merge earlier runs

struct MergeResult {
  json merged;
  bool pass = true;
  std::string table;
};

inline MergeResult cmd_report(const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw config_error("report: no inputs given");
  std::vector<std::pair<std::string, json>> runs;
  for (auto& in : inputs) {
    std::filesystem::path p(in);
    if (std::filesystem::is_directory(p)) p /= "report.json";
    std::ifstream f(p);
    if (!f) throw config_error("report: missing input " + p.string());
    try {
      runs.push_back({p.parent_path().string(), json::parse(f)});
    } catch (const nlohmann::json::exception& e) {
      throw config_error("report: cannot parse " + p.string() + ": " + e.what());
    }
    if (!runs.back().second.contains("command") || !runs.back().second.contains("checks"))
      throw config_error("report: " + p.string() + " is not a run report");
  }
  std::stable_sort(runs.begin(), runs.end(), [](auto& a, auto& b) {
    const auto ka = std::make_pair(a.second["command"].template get<std::string>(), a.second["config"]["m"].template get<int>());
    const auto kb = std::make_pair(b.second["command"].template get<std::string>(), b.second["config"]["m"].template get<int>());
    return ka < kb;
  });

  MergeResult out;
  json arr = json::array(), conflicts = json::array();
  std::map<std::pair<std::string, int>, std::size_t> seen;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    auto& [src, j] = runs[i];
    const auto key = std::make_pair(j["command"].get<std::string>(), j["config"]["m"].get<int>());
    if (auto it = seen.find(key); it != seen.end()) {
      const json& other = runs[it->second].second;
      if (other["config"] != j["config"])
        conflicts.push_back({{"command", key.first}, {"m", key.second}, {"inputs", {runs[it->second].first, src}}});
    } else {
      seen[key] = i;
    }
    out.pass = out.pass && j.value("pass", false);
    arr.push_back({{"source", src}, {"command", j["command"]}, {"m", j["config"]["m"]}, {"seed", j["config"]["seed"]},
                   {"pass", j["pass"]}, {"checks", j["checks"]}});
  }
  if (!conflicts.empty()) out.pass = false;
  out.merged = {{"environment", environment_stamp()}, {"pass", out.pass}, {"conflicts", conflicts}, {"runs", arr}};
  std::vector<std::pair<std::string, const json*>> rows;
  std::vector<std::string> labels;
  for (auto& r : arr)
    labels.push_back(r["command"].get<std::string>() + " (m=" + std::to_string(r["m"].get<int>()) + ") " +
                     r["source"].get<std::string>());
  for (std::size_t i = 0; i < arr.size(); ++i) rows.push_back({labels[i], &arr[i]});
  out.table = summary_table(rows);
  if (!conflicts.empty()) out.table += "conflicting configurations: " + conflicts.dump() + "\n";
  return out;
}

inline RunReport run_command(const std::string& cmd, const ExperimentConfig& c) {
  if (cmd == "flatness") return cmd_flatness(c);
  if (cmd == "killing") return cmd_killing(c);
  if (cmd == "mass") return cmd_mass(c);
  if (cmd == "appendix") return cmd_appendix(c);
  throw config_error("unknown command " + cmd);
}

}  // namespace chmass
