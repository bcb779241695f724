#include "thz/scenarios.hpp"

#include "thz/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace thz {

namespace {

constexpr Real kNaN = std::numeric_limits<Real>::quiet_NaN();

using Row = std::vector<Real>;

Table make_table(std::vector<std::string> columns, std::size_t n) {
  Table t;
  t.columns = std::move(columns);
  t.rows.assign(n, Row(t.columns.size(), kNaN));
  return t;
}

std::optional<Real> purcell_scale(const Model& m) {
  if (m.dressed.purcell > 0 && std::isfinite(m.dressed.purcell)) return 1.0 / m.dressed.purcell;
  return std::nullopt;
}

TauMaxResult optimum(const Model& m, const EmissionEngine& eng) {
  return find_tau_max([&](Real t) { return eng.p1(t); }, m.gamma_opt, m.dressed.cooperativity_eff, purcell_scale(m));
}

Real column_max(const Table& t, std::size_t col) {
  Real best = -std::numeric_limits<Real>::infinity();
  for (const Row& r : t.rows)
    if (std::isfinite(r[col])) best = std::max(best, r[col]);
  return best;
}

Real herald_or_nan(const HeraldEngine& h, Real tau, Real tp, bool tilde) {
  try {
    return tilde ? h.e_tilde(tau, tp).value : h.e(tau, tp).value;
  } catch (const DivisionByNegligible&) {
    return kNaN;
  }
}

Table fig2(const std::string& name, int points, int workers) {
  const Scenario s = preset(name);
  const int n_max = scenario_n_max(s);
  const Model m = scenario_model(s, n_max);
  const EmissionEngine eng(m.liouvillian.generator, m.liouvillian.k_thz, m.rho0);
  const HeraldEngine herald(m);
  const Real gamma = m.gamma_opt;
  const Real ct = m.dressed.cooperativity_eff;
  const Real t_end = 3.0 * tau_pmax(ct, gamma).tau_max;
  const Real tp = default_tau_prime(gamma);
  const std::vector<Real> taus = linspace(t_end / points, t_end, points);

  Table t = make_table({"tau_ns", "P1_numeric", "P1_analytic", "E_herald", "E_tilde_herald"}, taus.size());
  parallel_for(taus.size(), workers, [&](std::size_t i) {
    const Real tau = taus[i];
    t.rows[i] = {tau, eng.p1(tau), p1_adiabatic(ct, gamma, tau), herald_or_nan(herald, tau, tp, false),
                 herald_or_nan(herald, tau, tp, true)};
  });
  const TauMaxResult opt = optimum(m, eng);
  t.notes = {{"preset", name},
             {"n_max", std::to_string(n_max)},
             {"h", format_real(m.dressed.h)},
             {"C_tilde", format_real(ct)},
             {"grid_max_P1_numeric", format_real(column_max(t, 1))},
             {"tau_max_ns", format_real(opt.tau_max)},
             {"P_max", format_real(opt.p_max)}};
  return t;
}

Table fig3a(int points, int workers) {
  const Scenario base = preset("L1");
  const std::vector<Real> cs = logspace(0.0, 4.0, points);
  Table t = make_table({"C", "C_tilde", "tau_max_ns", "P_max_numeric", "P_max_analytic", "P_max_large_C", "I"},
                       cs.size());
  parallel_for(cs.size(), workers, [&](std::size_t i) {
    const Scenario s = apply_axis(base, SweepAxis::C, cs[i]);
    const Model m = scenario_model(s);
    StatsRequest req;
    req.p2 = false;
    req.herald = false;
    const EmissionStats st = compute_stats(m, req);
    const Real ct = m.dressed.cooperativity_eff;
    t.rows[i] = {cs[i], ct, st.tau_max, st.p_max, tau_pmax(ct, m.gamma_opt).p_max,
                 tau_pmax_large_c(ct, m.gamma_opt).p_max, st.indist};
  });
  t.notes = {{"base", "L1, chi = sqrt(C kappa gamma / 4)"}};
  return t;
}

Table fig3b(int points, int workers) {
  const Scenario base = preset("L3");
  const std::vector<Real> hs = logspace(-3.0, std::log10(0.5), points);
  Table t = make_table({"h", "C_tilde", "tau_max_ns", "P_max_numeric", "P_max_analytic"}, hs.size());
  parallel_for(hs.size(), workers, [&](std::size_t i) {
    const Scenario s = apply_axis(base, SweepAxis::H, hs[i]);
    const Model m = scenario_model(s);
    const EmissionEngine eng(m.liouvillian.generator, m.liouvillian.k_thz, m.rho0);
    const TauMaxResult opt = optimum(m, eng);
    const Real ct = m.dressed.cooperativity_eff;
    t.rows[i] = {hs[i], ct, opt.tau_max, opt.p_max, tau_pmax(ct, m.gamma_opt).p_max};
  });
  t.notes = {{"base", "L3, Delta moved at fixed Omega, cavity kept at Omega_R"}};
  return t;
}

Table s1(int points, int workers) {
  const std::vector<Real> taus = linspace(3.0 / points, 3.0, points);
  Table t = make_table({"tau_ns", "P1_full_ghz", "P1_analytic_ghz", "P1_full_mhz", "P1_analytic_mhz"}, taus.size());
  for (int v = 0; v < 2; ++v) {
    const Scenario s = preset(v == 0 ? "near_resonant_ghz" : "near_resonant_mhz");
    const Model m = scenario_model(s);
    const SystemParams p = s.params();
    const DressedParams& d = m.dressed;
    const EmissionEngine eng(m.liouvillian.generator, m.liouvillian.k_thz, m.rho0);
    parallel_for(taus.size(), workers, [&](std::size_t i) {
      t.rows[i][0] = taus[i];
      t.rows[i][1 + 2 * v] = eng.p1(taus[i]);
      t.rows[i][2 + 2 * v] = p1_near_resonant(d.g, p.kappa, d.gamma_plus, d.gamma_minus, taus[i]);
    });
  }
  return t;
}

void require_seed(const ReproduceOptions& o, const std::string& fig) {
  if (!o.seed) throw ConfigError(fig + " runs trajectories and needs an explicit seed");
}

Table s2(const ReproduceOptions& o, int points) {
  require_seed(o, "s2");
  const Scenario s = preset("L3");
  const SystemParams p = s.params();
  PulseShape shape;
  shape.kind = PulseKind::ExpRiseFall;
  shape.tau_p = 1.0 / (kTwoPi * 0.01);  // tau_p^-1 / 2pi = 10 MHz
  const std::vector<Real> taus = linspace(10.0 / points, 10.0, points);
  const P1Curve curve = ensemble_p1_curve(p, shape, taus, o.n_traj.value_or(10000), *o.seed, o.workers);

  const DressedParams full = derive_dressed(p);
  auto c_tilde_at = [&](Real env) {
    SystemParams q = p;
    q.omega = env * p.omega;
    return derive_dressed(q).cooperativity_eff;
  };
  Table t = make_table({"tau_ns", "envelope", "P1_traj", "ci_lo", "ci_hi", "P1_analytic_instant",
                        "P1_analytic_averaged"},
                       taus.size());
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const Real tau = taus[i];
    const int n = 400;
    Real avg = 0;
    for (int k = 0; k <= n; ++k) {
      const Real w = (k == 0 || k == n) ? 0.5 : 1.0;
      avg += w * c_tilde_at(-std::expm1(-tau * k / n / shape.tau_p));
    }
    avg /= n;
    const Real avg_p1 = avg > 0 ? p1_adiabatic(avg, p.gamma, tau) : 0.0;
    t.rows[i] = {tau, -std::expm1(-tau / shape.tau_p), curve.p1_hat[i], curve.ci95[i].lo, curve.ci95[i].hi,
                 p1_adiabatic(full.cooperativity_eff, p.gamma, tau), avg_p1};
  }
  t.notes = {{"tau_p_ns", format_real(shape.tau_p)}, {"n_traj", std::to_string(curve.n_traj)}};
  return t;
}

Table s4(const ReproduceOptions& o, int points) {
  require_seed(o, "s4");
  const SystemParams p = preset("L3").params();
  const std::vector<Real> tps = logspace(-2.0, 0.5, 6);
  const std::vector<Real> taus = linspace(4.0 / points, 4.0, points);
  Table t = make_table({"tau_p_ns", "tau_ns", "P1_traj", "ci_lo", "ci_hi"}, tps.size() * taus.size());
  for (std::size_t a = 0; a < tps.size(); ++a) {
    PulseShape shape;
    shape.kind = PulseKind::ExpRiseFall;
    shape.tau_p = tps[a];
    const P1Curve c = ensemble_p1_curve(p, shape, taus, o.n_traj.value_or(1000), *o.seed + a, o.workers);
    for (std::size_t i = 0; i < taus.size(); ++i)
      t.rows[a * taus.size() + i] = {tps[a], taus[i], c.p1_hat[i], c.ci95[i].lo, c.ci95[i].hi};
  }
  return t;
}

// Thermal photons beyond the cutoff carry less than 1e-6 of the population, plus
// room for the emitted photon. Doubling from 3 would land on 20 above ~80 K.
int thermal_cutoff(Real n_bar) {
  if (!(n_bar > 0)) return 3;
  const Real r = n_bar / (1.0 + n_bar);
  const int tail = static_cast<int>(std::ceil(std::log(1e-6) / std::log(r)));
  return std::clamp(tail + 1, 3, 20);
}

Table s_temperature(int points, int workers) {
  const Scenario base = preset("L3");
  const std::vector<Real> ts = linspace(1.0, 200.0, points);
  Table t = make_table({"T_K", "n_bar", "tau_max_ns", "P_max", "T_crit_K", "n_max"}, ts.size());
  const SystemParams p0 = base.params();
  const Real t_crit = decoherence_thresholds(p0, derive_dressed(p0)).t_crit;
  parallel_for(ts.size(), workers, [&](std::size_t i) {
    const Scenario s = apply_axis(base, SweepAxis::T, ts[i]);
    const Real n_bar = thermal_occupation(s.params().omega_c, ts[i]);
    const int n_max = thermal_cutoff(n_bar);
    const Model m = scenario_model(s, n_max);
    const EmissionEngine eng(m.liouvillian.generator, m.liouvillian.k_thz, m.rho0);
    const TauMaxResult opt = optimum(m, eng);
    t.rows[i] = {ts[i], n_bar, opt.tau_max, opt.p_max, t_crit, static_cast<Real>(n_max)};
  });
  return t;
}

Table s_dephasing(int points, int workers) {
  const Scenario base = preset("L3");
  const std::vector<Real> ls = logspace(-4.0, 1.0, points);
  Table t = make_table({"Lambda_GHz", "tau_max_ns", "P_max", "I", "Lambda_crit1_GHz", "Lambda_crit2_GHz"}, ls.size());
  const SystemParams p0 = base.params();
  const DecoherenceThresholds th = decoherence_thresholds(p0, derive_dressed(p0));
  parallel_for(ls.size(), workers, [&](std::size_t i) {
    const Scenario s = apply_axis(base, SweepAxis::Lambda, ls[i]);
    StatsRequest req = scenario_request(s);
    req.p2 = false;
    req.herald = false;
    const EmissionStats st = compute_stats(scenario_model(s), req);
    t.rows[i] = {ls[i], st.tau_max, st.p_max, st.indist, th.lambda_crit1 / kTwoPi, th.lambda_crit2 / kTwoPi};
  });
  std::vector<Real> x, pm, in;
  for (const Row& r : t.rows) {
    x.push_back(r[0]);
    pm.push_back(r[2]);
    in.push_back(r[3]);
  }
  t.notes = {{"Lambda50_P_max_GHz", format_real(half_point(x, pm))}, {"Lambda50_I_GHz", format_real(half_point(x, in))}};
  return t;
}

Table s_initialstate(int points, int workers) {
  const Scenario base = preset("L1");
  const std::vector<Real> hs = logspace(-3.0, std::log10(0.5), points);
  Table t = make_table({"h", "P_max_dressed_plus", "P_max_bare_ground", "abs_diff"}, hs.size());
  parallel_for(hs.size(), workers, [&](std::size_t i) {
    Scenario s = apply_axis(base, SweepAxis::H, hs[i]);
    Real pm[2];
    for (int k = 0; k < 2; ++k) {
      s.protocol.initial_state = k == 0 ? InitialState::DressedPlus : InitialState::BareGround;
      const Model m = scenario_model(s);
      const EmissionEngine eng(m.liouvillian.generator, m.liouvillian.k_thz, m.rho0);
      pm[k] = optimum(m, eng).p_max;
    }
    t.rows[i] = {hs[i], pm[0], pm[1], std::abs(pm[0] - pm[1])};
  });
  return t;
}

Table s_p0split(int points, int workers) {
  const Real gamma = preset("L3").params().gamma;
  const std::vector<Real> cs = logspace(-2.0, 4.0, points);
  Table t = make_table({"C_tilde", "tau_max_ns", "P0", "P1", "P_gt1", "P2", "P0_asymptotic", "Pgt1_asymptotic",
                        "purity", "purity_estimate"},
                       cs.size());
  parallel_for(cs.size(), workers, [&](std::size_t i) {
    const Model m = build_adiabatic_model(gamma, cs[i]);
    StatsRequest req;
    req.herald = false;
    req.indist = false;
    const EmissionStats st = compute_stats(m, req);
    const ImperfectionSplit split = imperfection_split(cs[i]);
    t.rows[i] = {cs[i], st.tau_max, st.p0,      st.p1,          st.p_gt1, st.p2, split.p0_max, split.pgt1_max,
                 st.purity, st.purity_estimate};
  });
  t.notes = {{"Pgt1_small_C_limit", format_real(1.0 - 2.0 / M_E)}};
  return t;
}

}  // namespace

std::vector<std::string> figure_names() {
  return {"fig2a", "fig2b", "fig3a", "fig3b", "s1", "s2", "s4", "s_temperature", "s_dephasing", "s_initialstate",
          "s_p0split"};
}

Table reproduce(const std::string& figure, const ReproduceOptions& o) {
  auto pts = [&](int def) { return o.points ? std::max(*o.points, 2) : def; };
  if (figure == "fig2a") return fig2("L1", pts(200), o.workers);
  if (figure == "fig2b") return fig2("L3", pts(200), o.workers);
  if (figure == "fig3a") return fig3a(pts(25), o.workers);
  if (figure == "fig3b") return fig3b(pts(25), o.workers);
  if (figure == "s1") return s1(pts(150), o.workers);
  if (figure == "s2") return s2(o, pts(25));
  if (figure == "s4") return s4(o, pts(40));
  if (figure == "s_temperature") return s_temperature(pts(40), o.workers);
  if (figure == "s_dephasing") return s_dephasing(pts(26), o.workers);
  if (figure == "s_initialstate") return s_initialstate(pts(20), o.workers);
  if (figure == "s_p0split") return s_p0split(pts(41), o.workers);
  throw ConfigError("unknown figure '" + figure + "'");
}

}  // namespace thz
