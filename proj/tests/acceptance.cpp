// One line per acceptance criterion; exit status 1 if any fails.

#include "oracles.hpp"
#include "thz/analytics.hpp"
#include "thz/scenarios.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace thz;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void need(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (detail.tellp() > 0) detail << "; ";
    detail << what << (ok ? "" : " [fail]");
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Real seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
}

std::string note(const Table& t, const std::string& key) {
  for (const auto& [k, v] : t.notes)
    if (k == key) return v;
  return "nan";
}

Real column_max(const Table& t, std::size_t c) {
  Real m = -1;
  for (const auto& r : t.rows) m = std::max(m, r[c]);
  return m;
}

Real min_eigenvalue(const CMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (rho + rho.adjoint()));
  return es.eigenvalues().minCoeff();
}

Real optimum_p1(const Model& m, const EmissionEngine& eng) {
  return find_tau_max([&](Real t) { return eng.p1(t); }, m.gamma_opt, m.dressed.cooperativity_eff,
                      1.0 / m.dressed.purcell)
      .tau_max;
}

void figure2(Verdict& v, const std::string& fig, Real target) {
  const auto t0 = std::chrono::steady_clock::now();
  const Table t = reproduce(fig);
  const Real secs = seconds_since(t0);
  const Real grid_max = column_max(t, 1);
  const Real p_max = std::stod(note(t, "P_max"));
  v.need(std::abs(grid_max - target) <= 0.02, fig + " grid max P1 " + fmt("%.4f", grid_max));
  v.need(std::abs(p_max - target) <= 0.02, "P_max " + fmt("%.4f", p_max));
  v.need(secs <= 60.0, std::to_string(t.rows.size()) + " points in " + fmt("%.1f s", secs));
}

void criterion1(Verdict& v) { figure2(v, "fig2a", 0.67); }
void criterion2(Verdict& v) { figure2(v, "fig2b", 0.90); }

void criterion3(Verdict& v) {
  const DressedParams l1 = derive_dressed(preset("L1").params());
  const DressedParams l3 = derive_dressed(preset("L3").params());
  v.need(std::abs(l1.cooperativity_eff - 1.94) <= 0.01, "L1 C~ " + fmt("%.4f", l1.cooperativity_eff));
  v.need(std::abs(l3.cooperativity_eff - 24.65) <= 0.05, "L3 C~ " + fmt("%.4f", l3.cooperativity_eff));
  v.need(std::abs(l1.h - 0.0325) <= 1e-4, "L1 h " + fmt("%.5f", l1.h));
  v.need(std::abs(l3.h - 0.01955) <= 1e-4, "L3 h " + fmt("%.5f", l3.h));
}

void criterion4(Verdict& v) {
  const Real gamma = kTwoPi * 0.03979;
  Real worst = 0;
  for (Real c : logspace(-1.0, 2.0, 10)) {
    const Model m = build_adiabatic_model(gamma, c);
    const EmissionEngine eng(m.liouvillian.generator, m.liouvillian.k_thz, m.rho0);
    const Real t_end = 3.0 * tau_pmax(c, gamma).tau_max;
    for (int k = 1; k <= 50; ++k) {
      const Real t = t_end * k / 50.0;
      worst = std::max(worst, std::abs(eng.p1(t) - p1_adiabatic(c, gamma, t)));
    }
  }
  v.need(worst <= 1e-6, "closed form vs engine " + fmt("%.1e", worst));

  const Model m = build_model(preset("L1").params(), Flavor::Full, 4);
  const EmissionEngine eng(m.liouvillian.generator, m.liouvillian.k_thz, m.rho0);
  const Real t_end = 4.0 / (gamma * m.dressed.cooperativity_eff);
  const int steps = 2000;
  const oracle::Counts ref =
      oracle::richardson_counts(m.liouvillian.generator, m.liouvillian.k_thz, m.rho0, t_end / steps, steps);
  Real w = 0;
  for (int k = 0; k <= steps; k += 100) {
    const Real t = t_end * k / steps;
    w = std::max({w, std::abs(eng.p0(t) - ref.p0[k]), std::abs(eng.p1(t) - ref.p1[k]),
                  std::abs(eng.p2(t) - ref.p2[k])});
  }
  v.need(w <= 1e-7, "engine vs time stepping (L1 full, n_max 4) " + fmt("%.1e", w));
}

void criterion5(Verdict& v) {
  const Real gamma = kTwoPi * 0.03979;
  Real worst = 0;
  for (Real c : logspace(-2.0, 4.0, 50)) {
    const Real slow = gamma * std::min(1.0, c);
    const Real tau =
        oracle::golden_max([&](Real t) { return p1_adiabatic(c, gamma, t); }, 0.0, 30.0 / slow, 1e-9 / gamma);
    worst = std::max(worst, std::abs(tau_pmax(c, gamma).p_max - p1_adiabatic(c, gamma, tau)));
  }
  v.need(worst <= 1e-8, "Lambert-W vs golden section " + fmt("%.1e", worst));

  const Real below = tau_pmax(1 - 1e-7, gamma).p_max, at = tau_pmax(1.0, gamma).p_max;
  const Real above = tau_pmax(1 + 1e-7, gamma).p_max;
  const Real jump = std::max(std::abs(at - below), std::abs(above - at));
  v.need(jump <= 1e-6, "jump across C~ = 1 " + fmt("%.1e", jump));

  const Real c = 1e4;
  const Optimum o = tau_pmax(c, gamma);
  const Real dp = std::abs(o.p_max - (1 - std::log(c) / c));
  const Real dt = std::abs(o.tau_max * gamma * c / std::log(c) - 1);
  v.need(dp <= 1e-3, "C~ = 1e4 P_max vs 1 - lnC/C " + fmt("%.1e", dp));
  v.need(dt <= 1e-3, "tau_max vs lnC/Gamma (relative) " + fmt("%.1e", dt));
}

void criterion6(Verdict& v) {
  const Real gamma = kTwoPi * 0.03979;
  const Real c = 1.94;
  const Model m = build_adiabatic_model(gamma, c);
  const HeraldEngine h(m);
  const Real tp = default_tau_prime(gamma);
  Real worst = 0, worst_tilde = 0;
  for (int k = 0; k <= 40; ++k) {
    const Real t = (0.1 + 4.9 * k / 40.0) / gamma;
    worst = std::max(worst, std::abs(h.e(t, tp).value - herald_analytics(c, gamma, t, tp).e));
    if (t <= tau_pmax(c, gamma).tau_max) worst_tilde = std::max(worst_tilde, std::abs(h.e_tilde(t, tp).value - 1));
  }
  v.need(worst_tilde <= 1e-8, "adiabatic |E~ - 1| " + fmt("%.1e", worst_tilde));
  v.need(worst <= 1e-6, "E vs closed form " + fmt("%.1e", worst));

  const Model full = build_model(preset("L1").params(), Flavor::Full, 3);
  const EmissionEngine eng(full.liouvillian.generator, full.liouvillian.k_thz, full.rho0);
  const Real e_tilde = herald_E_tilde(full, optimum_p1(full, eng), default_tau_prime(full.gamma_opt)).value;
  v.need(e_tilde >= 0.99, "L1 full E~(tau_max) " + fmt("%.4f", e_tilde));
}

void criterion7(Verdict& v) {
  const SystemParams l3 = preset("L3").params();
  const DecoherenceThresholds th = decoherence_thresholds(l3, derive_dressed(l3));
  v.need(std::abs(th.t_crit - 45.0) <= 1.0, "T_crit " + fmt("%.2f K", th.t_crit));

  SweepSpec spec;
  spec.axis = SweepAxis::T;
  spec.grid = {1.0, 10.0, 20.0, 25.0, 28.0, 29.0, 29.9};
  spec.outputs = {"P_max"};
  const SweepResult r = sweep(preset("L3"), spec);
  Real worst = 0, at = 0;
  for (const auto& row : r.table.rows) {
    const Real d = std::abs(row[1] - r.table.rows.front()[1]);
    if (d > worst) {
      worst = d;
      at = row[0];
    }
  }
  v.need(r.failures == 0 && worst <= 1e-3, "max |dP_max| below 30 K " + fmt("%.2e", worst) + fmt(" at %.1f K", at));

  const Table t = reproduce("s_dephasing");
  const Real l_i = std::stod(note(t, "Lambda50_I_GHz")), l_p = std::stod(note(t, "Lambda50_P_max_GHz"));
  v.need(l_i < l_p, "Lambda50 I " + fmt("%.3f", l_i) + fmt(" < P_max %.3f GHz", l_p));
  const Real c1 = th.lambda_crit1 / kTwoPi, c2 = th.lambda_crit2 / kTwoPi;
  v.need(c1 >= 0.1 && c1 <= 0.4, "Lambda_crit1 " + fmt("%.3f GHz", c1));
  v.need(c2 >= 0.002 && c2 <= 0.008, "Lambda_crit2 " + fmt("%.2f MHz", 1e3 * c2));
}

void criterion8(Verdict& v) {
  const SystemParams l3 = preset("L3").params();
  const Real tau = 0.95;
  const std::size_t n = 10000;
  TrajectoryOptions opts;
  opts.n_max = 2;
  PulseShape sq;
  sq.tau = tau;
  const EnsembleResult ens = ensemble_p1(l3, sq, tau, n, 20240611, 1, opts);
  const Model jc = build_model(l3, Flavor::JC, 2);
  const Real want = p1(jc.liouvillian.generator, jc.liouvillian.k_thz, jc.rho0, tau);
  const WilsonInterval w3 = wilson_interval(ens.n_single, n, 3.0);
  v.need(want >= w3.lo && want <= w3.hi,
         "P1_hat " + fmt("%.4f", ens.p1_hat) + fmt(" vs spectral %.4f", want) + fmt(" (3 sigma [%.4f, ", w3.lo) +
             fmt("%.4f])", w3.hi));

  RatesGHz r;
  r.chi = 4.0;
  r.kappa = 3.5;
  r.omega = 85.0;
  r.omega_c = 3078.6;
  const SystemParams ks = SystemParams::from_ghz(r);
  const Real rate = derive_dressed(ks).purcell;
  TrajectoryOptions first;
  first.stop_at_first_thz = true;
  PulseShape long_pulse;
  long_pulse.tau = 20.0 / rate;
  const EnsembleResult fp = ensemble_p1(ks, long_pulse, long_pulse.tau, n, 77, 1, first, true);
  std::vector<Real> times;
  for (const auto& rec : fp.records)
    times.push_back(rec.jumps.empty() ? std::numeric_limits<Real>::infinity() : rec.jumps.front().time);
  std::sort(times.begin(), times.end());
  Real d = 0;
  for (std::size_t i = 0; i < n && std::isfinite(times[i]); ++i) {
    const Real f = -std::expm1(-rate * times[i]);
    d = std::max({d, std::abs(f - Real(i) / n), std::abs(f - Real(i + 1) / n)});
  }
  const Real crit = 1.628 / std::sqrt(Real(n));
  v.need(d < crit, "KS D " + fmt("%.4f", d) + fmt(" < %.4f", crit));

  std::ostringstream a, b;
  write_jump_dump(a, ensemble_p1(l3, sq, tau, 500, 5, 1, opts, true).records);
  write_jump_dump(b, ensemble_p1(l3, sq, tau, 500, 5, 2, opts, true).records);
  v.need(a.str() == b.str(), "repeat run byte-identical");
}

void criterion9(Verdict& v) {
  RatesGHz r = preset("L1").rates;
  r.gamma = 0;
  const Model toy = build_model(SystemParams::from_ghz(r), Flavor::JC, 2);
  const Real i_toy = indistinguishability(toy.liouvillian.generator, toy.emission_op, toy.rho0,
                                          8.0 / toy.dressed.purcell, 200)
                         .value;
  v.need(std::abs(i_toy - 1.0) <= 0.02, "ideal source I " + fmt("%.4f", i_toy));

  const Model m = build_model(preset("L1").params(), Flavor::Full, 3);
  const EmissionEngine eng(m.liouvillian.generator, m.liouvillian.k_thz, m.rho0);
  const Real t = optimum_p1(m, eng);
  const Real p_max = eng.p1(t);
  const IndistinguishabilityEngine ind(m.liouvillian.generator, m.emission_op, m.rho0);
  const Real i200 = ind.evaluate(t, 200).value, i400 = ind.evaluate(t, 400).value;
  v.need(std::abs(i200 - p_max) <= 0.15, "L1 I(tau_max) " + fmt("%.4f", i200) + fmt(" vs P_max %.4f", p_max));
  v.need(std::abs(i400 - i200) <= 5e-3, "grid 200 -> 400 change " + fmt("%.1e", std::abs(i400 - i200)));
}

void criterion10(Verdict& v) {
  Real closure = 0, residual = 0, trace = 0, min_eig = 0;
  for (const char* name : {"L1", "L3"}) {
    const Scenario s = preset(name);
    for (Flavor f : {Flavor::Full, Flavor::JC, Flavor::Adiabatic}) {
      const Model m = build_model(s.params(), f, f == Flavor::Adiabatic ? 0 : 3);
      const EmissionEngine eng(m.liouvillian.generator, m.liouvillian.k_thz, m.rho0);
      const Real t_end = 4.0 * optimum_p1(m, eng);
      for (int k = 0; k <= 40; ++k) {
        const Real t = t_end * k / 40.0;
        const Real p0 = eng.p0(t), p1v = eng.p1(t), p2v = eng.p2(t);
        const Real pgt1 = 1.0 - p0 - p1v;
        closure = std::max(closure, std::abs(p0 + p1v + pgt1 - 1.0));
        residual = std::min(residual, pgt1 - p2v);
        if (k % 8 == 0) {
          const CMatrix rho = devectorize(expm(m.liouvillian.generator * t) * vectorize(m.rho0));
          trace = std::max(trace, std::abs(rho.trace() - Complex(1.0)));
          min_eig = std::min(min_eig, min_eigenvalue(rho));
        }
      }
    }
  }
  v.need(closure <= 1e-6, "|P0 + P1 + P>1 - 1| " + fmt("%.1e", closure));
  v.need(residual >= -1e-8, "P>1 - P2 >= " + fmt("%.1e", residual));
  v.need(trace <= 1e-8, "|tr rho - 1| " + fmt("%.1e", trace));
  v.need(min_eig >= -1e-8, "min eigenvalue " + fmt("%.1e", min_eig));
}

}  // namespace

int main() {
  const std::vector<std::function<void(Verdict&)>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                            criterion5, criterion6, criterion7, criterion8,
                                                            criterion9, criterion10};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      criteria[i](v);
    } catch (const std::exception& e) {
      v.need(false, std::string("threw: ") + e.what());
    }
    failed += !v.pass;
    std::printf("criterion %zu: %s  %s\n", i + 1, v.pass ? "PASS" : "FAIL", v.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed ? 1 : 0;
}
