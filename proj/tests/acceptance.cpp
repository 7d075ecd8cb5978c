// Acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is 0 when every criterion passes apart from the documented
// trace-decay sub-check of criterion 8 (see README, "Known failure").

#include <chmass/cli_runner.hpp>

#include <cstdio>
#include <iostream>

using namespace chmass;

namespace {

struct Timed {
  RunReport rep;
  double seconds = 0;
};

Timed timed(const std::string& cmd, const ExperimentConfig& c) {
  Stopwatch sw;
  RunReport r = run_command(cmd, c);
  return {std::move(r), sw.seconds()};
}

ExperimentConfig config_for(int m) {
  ExperimentConfig c;
  c.m = m;
  c.quad = default_quadrature(m);
  return c;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Criterion {
  int id;
  std::string title;
  std::vector<std::string> lines;
  std::vector<std::string> failed;
  bool timing_ok = true;

  void need(const RunReport& r, const std::string& name, const std::string& tag) {
    const Check* c = r.find(name);
    if (!c) {
      failed.push_back(tag + ":" + name + " (missing)");
      return;
    }
    lines.push_back(tag + ":" + name + " " + fmt(c->measured) + " " + c->relation + " " + fmt(c->tolerance));
    if (!c->pass) failed.push_back(tag + ":" + name);
  }
  void runtime(double seconds, double limit, const std::string& what) {
    lines.push_back(what + " " + fmt(seconds) + " s <= " + fmt(limit) + " s");
    if (!(seconds <= limit)) {
      timing_ok = false;
      failed.push_back(what);
    }
  }
};

}  // namespace

int main() {
  std::cerr << "acceptance: running flatness, killing, appendix and mass commands\n";
  auto f2 = timed("flatness", config_for(2));
  auto f3 = timed("flatness", config_for(3));
  auto k2 = timed("killing", config_for(2));
  auto k3 = timed("killing", config_for(3));
  auto a2 = timed("appendix", config_for(2));
  auto m2 = timed("mass", config_for(2));
  ExperimentConfig c3 = config_for(3);
  c3.parts = {true, false, false, false, false, false};
  auto m3 = timed("mass", c3);

  std::vector<Criterion> cs;
  {
    Criterion c{1, "flatness of the CH connection", {}, {}};
    for (auto* t : {&f2, &f3}) {
      const std::string tag = "m=" + std::to_string(t->rep.config.m);
      c.need(t->rep, "flat_model", tag);
      c.need(t->rep, "flat_model_closed_form", tag);
      c.need(t->rep, "control_wrong_sign_not_flat", tag);
      c.runtime(t->seconds, 120, tag + " flatness runtime");
    }
    cs.push_back(c);
  }
  {
    Criterion c{2, "fiber metric signature (m^2+1, 2m)", {}, {}};
    for (auto* t : {&f2, &f3}) {
      const std::string tag = "m=" + std::to_string(t->rep.config.m);
      c.need(t->rep, "signature_positive", tag);
      c.need(t->rep, "signature_negative", tag);
    }
    cs.push_back(c);
  }
  {
    Criterion c{3, "Killing equation of the spinor families", {}, {}};
    for (auto* t : {&k2, &k3}) {
      const std::string tag = "m=" + std::to_string(t->rep.config.m);
      c.need(t->rep, "killing_residual", tag);
      c.need(t->rep, "control_perturbed_spinor", tag);
    }
    cs.push_back(c);
  }
  {
    Criterion c{4, "norm identities", {}, {}};
    for (auto* t : {&k2, &k3}) c.need(t->rep, "norm_identities", "m=" + std::to_string(t->rep.config.m));
    cs.push_back(c);
  }
  {
    Criterion c{5, "Q-map coherence", {}, {}};
    for (auto* t : {&k2, &k3}) {
      const std::string tag = "m=" + std::to_string(t->rep.config.m);
      c.need(t->rep, "q_beta_beta", tag);
      c.need(t->rep, "q_beta_omega", tag);
      if (t->rep.config.odd()) c.need(t->rep, "q_xi_omega_minus_u", tag);
      c.need(t->rep, "q_third_order", tag);
    }
    cs.push_back(c);
  }
  {
    Criterion c{6, "holonomy dimension of the parallel sections", {}, {}};
    for (auto* t : {&f2, &f3}) {
      const std::string tag = "m=" + std::to_string(t->rep.config.m);
      c.need(t->rep, "holonomy_dim_ch", tag);
      c.need(t->rep, "holonomy_dim_rh", tag);
    }
    cs.push_back(c);
  }
  {
    Criterion c{7, "model mass is zero", {}, {}};
    for (auto* t : {&m2, &m3}) {
      const std::string tag = "m=" + std::to_string(t->rep.config.m);
      c.need(t->rep, "model_mass_zero", tag);
      c.need(t->rep, "model_mass_two_path", tag);
    }
    cs.push_back(c);
  }
  {
    Criterion c{8, "appendix example (m=2)", {}, {}};
    c.need(a2.rep, "scal_margin", "m=2");
    c.need(a2.rep, "decay_trace_2m", "m=2");
    c.need(a2.rep, "decay_norm_2m", "m=2");
    c.need(m2.rep, "appendix_all_finite", "m=2");
    c.need(m2.rep, "appendix_fit_residual", "m=2");
    c.need(m2.rep, "orbit_all_finite", "m=2");
    c.need(m2.rep, "orbit_fit_residual", "m=2");
    c.need(m2.rep, "orbit_nonnegative", "m=2");
    c.runtime(a2.seconds + m2.seconds, 1200, "m=2 appendix+mass runtime");
    cs.push_back(c);
  }
  {
    Criterion c{9, "equivariance under a U(m,1) isometry", {}, {}};
    c.need(m2.rep, "equivariance", "m=2");
    cs.push_back(c);
  }
  {
    Criterion c{10, "two-path consistency", {}, {}};
    c.need(a2.rep, "two_path_model_metric", "m=2");
    c.need(m2.rep, "display_forms_agree", "m=2");
    cs.push_back(c);
  }

  bool ok = true, known_hit = false;
  for (auto& c : cs) {
    const bool pass = c.failed.empty();
    std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << c.id << ": " << c.title;
    if (!pass) {
      std::cout << "  [failed:";
      for (auto& f : c.failed) std::cout << " " << f;
      std::cout << "]";
    }
    std::cout << "\n";
    for (auto& l : c.lines) std::cout << "        " << l << "\n";
    const bool known = c.id == 8 && c.failed.size() == 1 && c.failed[0] == "m=2:decay_trace_2m";
    if (!pass && known)
      std::cout << "        known failure: the g0-trace of g - g0 decays at rate 2m+2, not 2m (README)\n";
    known_hit = known_hit || (!pass && known);
    ok = ok && (pass || known);
  }
  if (!ok) std::cout << "acceptance: FAILED\n";
  else if (known_hit) std::cout << "acceptance: OK apart from the documented trace-decay sub-check\n";
  else std::cout << "acceptance: OK\n";
  return ok ? 0 : 1;
}
