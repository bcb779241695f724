// dts: command-line front end for the THz single-photon source simulator.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 sweep finished with failed points.

#include "thz/scenarios.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using thz::Real;

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitPartial = 4;

struct Common {
  std::string config;
  std::string preset;
  std::string out;
  int workers = 0;
  std::optional<std::uint64_t> seed;
  std::string flavor;
  std::string nmax;
  std::string format = "csv";
};

int resolve_workers(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("DTS_WORKERS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
    throw thz::ConfigError(std::string("DTS_WORKERS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

thz::Scenario load_scenario(const Common& c) {
  thz::Scenario s;
  if (!c.config.empty() && !c.preset.empty()) throw thz::ConfigError("--config and --preset are exclusive");
  if (!c.config.empty()) s = thz::load_config(c.config);
  else s = thz::preset(c.preset.empty() ? "L1" : c.preset);
  if (!c.flavor.empty()) {
    try {
      s.flavor = thz::flavor_from_string(c.flavor);
    } catch (const thz::Error&) {
      throw thz::ConfigError("unknown flavor '" + c.flavor + "'");
    }
  }
  if (!c.nmax.empty()) {
    if (c.nmax == "auto") {
      s.n_max.reset();
    } else {
      try {
        const int k = std::stoi(c.nmax);
        if (k < 0) throw std::invalid_argument("negative");
        s.n_max = k;
      } catch (const std::exception&) {
        throw thz::ConfigError("--nmax expects a non-negative integer or auto");
      }
    }
  }
  if (c.seed) s.seed = c.seed;
  return s;
}

thz::RunMeta meta_for(const std::string& command, const thz::Scenario& s) {
  return {command, thz::config_hash(s), s.seed};
}

// Write to --out/<stem>.<ext> or stdout.
void emit(const Common& c, const std::string& stem, const std::string& ext, const std::string& content) {
  if (c.out.empty()) {
    std::cout << content;
    return;
  }
  thz::write_file_atomic(c.out + "/" + stem + "." + ext, content);
  std::cerr << "wrote " << c.out << "/" << stem << "." << ext << "\n";
}

void emit_table(const Common& c, const std::string& stem, const thz::Table& t, const thz::RunMeta& meta) {
  if (c.format == "json") emit(c, stem, "json", thz::table_json(t, meta));
  else emit(c, stem, "csv", thz::table_csv(t));
}

std::vector<Real> parse_grid(const std::string& spec, const std::string& values) {
  if (!values.empty()) {
    std::vector<Real> out;
    std::stringstream ss(values);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw thz::ConfigError("bad grid value '" + item + "'");
      }
    }
    return out;
  }
  // start:stop:n[:log]
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() < 3 || parts.size() > 4) throw thz::ConfigError("--grid expects start:stop:n[:log]");
  try {
    const Real a = std::stod(parts[0]);
    const Real b = std::stod(parts[1]);
    const int n = std::stoi(parts[2]);
    if (n < 2) throw thz::ConfigError("grid needs at least 2 points");
    if (parts.size() == 4) {
      if (parts[3] != "log") throw thz::ConfigError("grid suffix must be 'log'");
      if (!(a > 0) || !(b > 0)) throw thz::ConfigError("log grid needs positive bounds");
      return thz::logspace(std::log10(a), std::log10(b), n);
    }
    return thz::linspace(a, b, n);
  } catch (const thz::ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw thz::ConfigError("--grid expects start:stop:n[:log]");
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic THz single-photon source simulator"};
  app.require_subcommand(1);
  app.fallthrough();  // common flags may follow the subcommand
  app.set_version_flag("--version", thz::kVersion);

  Common c;
  app.add_option("--config", c.config, "run file (key = value)")->check(CLI::ExistingFile);
  app.add_option("--preset", c.preset, "L1, L3, near_resonant_ghz, near_resonant_mhz");
  app.add_option("--out", c.out, "output directory (stdout when omitted)");
  app.add_option("--workers", c.workers, "worker threads (default: DTS_WORKERS or 1)");
  app.add_option("--seed", c.seed, "seed for randomized runs");
  app.add_option("--flavor", c.flavor, "full, adiabatic, jc");
  app.add_option("--nmax", c.nmax, "Fock cutoff K or auto");
  app.add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  auto* simulate = app.add_subcommand("simulate", "EmissionStats JSON plus the P1(tau) curve");
  std::optional<Real> sim_tau;
  int sim_points = 200;
  simulate->add_option("--tau", sim_tau, "evaluation time in ns (default tau_max)");
  simulate->add_option("--points", sim_points, "points on the P1(tau) curve")->check(CLI::Range(2, 100000));

  auto* sweep = app.add_subcommand("sweep", "parameter sweep with per-point error column");
  std::string axis = "tau", grid, values, outputs;
  bool no_cache = false;
  sweep->add_option("--axis", axis, "tau, C, h, T, Lambda, tau_p");
  sweep->add_option("--grid", grid, "start:stop:n[:log]");
  sweep->add_option("--values", values, "comma-separated grid");
  sweep->add_option("--outputs", outputs, "comma-separated outputs (P0,P1,P2,P_gt1,g2,purity,tau_max,P_max,E,E_tilde,I)");
  sweep->add_flag("--no-cache", no_cache, "disable decomposition reuse");

  auto* reproduce = app.add_subcommand("reproduce", "figure datasets");
  std::string figure;
  std::optional<int> fig_points;
  std::optional<std::size_t> fig_traj;
  reproduce->add_option("figure", figure, "figure tag")->required();
  reproduce->add_option("--points", fig_points, "grid points");
  reproduce->add_option("--n-traj", fig_traj, "trajectories per ensemble");

  auto* herald = app.add_subcommand("herald", "heralding efficiencies E and E~");
  std::optional<Real> her_tau, her_tau_prime;
  herald->add_option("--tau", her_tau, "activation length in ns (default tau_max)");
  herald->add_option("--tau-prime", her_tau_prime, "free-decay window in ns (default 30/gamma)");

  auto* indist = app.add_subcommand("indist", "HOM indistinguishability");
  std::optional<Real> ind_tau;
  int ind_grid = 200;
  indist->add_option("--tau", ind_tau, "integration window in ns (default tau_max)");
  indist->add_option("--grid-n", ind_grid, "quadrature points per axis")->check(CLI::Range(50, 20000));

  auto* traj = app.add_subcommand("traj", "quantum-trajectory estimate of P1");
  std::optional<std::size_t> n_traj;
  std::optional<Real> traj_tau, tau_p;
  std::string pulse, dump;
  traj->add_option("--n-traj", n_traj, "number of trajectories (>= 100)");
  traj->add_option("--tau", traj_tau, "pulse length in ns (default tau_max of the JC model)");
  traj->add_option("--pulse", pulse, "square or exp_rise_fall")->check(CLI::IsMember({"square", "exp_rise_fall"}));
  traj->add_option("--tau-p", tau_p, "rise/fall time in ns");
  traj->add_option("--dump", dump, "write every jump as seed,index,jump_time_ns,channel");

  auto* analytic = app.add_subcommand("analytic", "closed-form evaluator");
  std::optional<Real> an_c, an_gamma, an_tau, an_tau_prime;
  analytic->add_option("--c-tilde", an_c, "effective cooperativity (default from the scenario)");
  analytic->add_option("--gamma-ghz", an_gamma, "gamma/2pi in GHz (default from the scenario)");
  analytic->add_option("--tau", an_tau, "time in ns (default tau_max)");
  analytic->add_option("--tau-prime", an_tau_prime, "herald window in ns (default 30/gamma)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const int workers = resolve_workers(c.workers);
    thz::Scenario s = load_scenario(c);

    if (*simulate) {
      if (sim_tau) s.protocol.tau = sim_tau;
      const thz::Model m = thz::scenario_model(s);
      const thz::EmissionStats st = thz::compute_stats(m, thz::scenario_request(s));
      const thz::RunMeta meta = meta_for("simulate", s);
      emit(c, "stats", "json", thz::stats_json(st, meta));
      if (!c.out.empty()) {
        const thz::EmissionEngine eng(m.liouvillian.generator, m.liouvillian.k_thz, m.rho0);
        const Real t_end = 3.0 * (st.tau_max > 0 ? st.tau_max : st.tau);
        thz::Table t;
        t.columns = {"tau_ns", "P0", "P1"};
        for (Real tau : thz::linspace(t_end / sim_points, t_end, sim_points)) t.rows.push_back({tau, eng.p0(tau), eng.p1(tau)});
        emit_table(c, "p1", t, meta);
      }
      for (const auto& w : st.warnings) std::cerr << "warning: " << w << "\n";
      return 0;
    }

    if (*sweep) {
      thz::SweepSpec spec;
      spec.axis = thz::sweep_axis_from_string(axis);
      if (grid.empty() && values.empty()) throw thz::ConfigError("sweep needs --grid or --values");
      spec.grid = parse_grid(grid, values);
      spec.outputs = split_list(outputs);
      spec.workers = workers;
      spec.cache = !no_cache;
      const thz::SweepResult r = thz::sweep(s, spec);
      emit_table(c, "sweep_" + axis, r.table, meta_for("sweep", s));
      if (r.failures > 0) {
        std::cerr << r.failures << " of " << spec.grid.size() << " points failed\n";
        return kExitPartial;
      }
      return 0;
    }

    if (*reproduce) {
      thz::ReproduceOptions o;
      o.workers = workers;
      o.seed = c.seed;
      o.n_traj = fig_traj;
      o.points = fig_points;
      const thz::Table t = thz::reproduce(figure, o);
      thz::RunMeta meta{"reproduce " + figure, "", c.seed};
      emit_table(c, figure, t, meta);
      return 0;
    }

    if (*herald) {
      if (her_tau) s.protocol.tau = her_tau;
      if (her_tau_prime) s.protocol.tau_prime = her_tau_prime;
      const thz::Model m = thz::scenario_model(s);
      thz::StatsRequest req = thz::scenario_request(s);
      req.p2 = false;
      req.indist = false;
      const thz::EmissionStats st = thz::compute_stats(m, req);
      const Real tp = s.protocol.tau_prime ? *s.protocol.tau_prime : thz::default_tau_prime(m.gamma_opt);
      const thz::HeraldEngine h(m);
      const thz::HeraldParts e = h.e(st.tau, tp);
      const thz::HeraldParts et = h.e_tilde(st.tau, tp);
      nlohmann::ordered_json j;
      j["meta"] = {{"version", thz::kVersion}, {"command", "herald"}, {"config_hash", thz::config_hash(s)}};
      j["tau_ns"] = st.tau;
      j["tau_prime_ns"] = tp;
      j["E"] = {{"value", e.value}, {"numerator", e.numerator}, {"denominator", e.denominator}};
      j["E_tilde"] = {{"value", et.value}, {"numerator", et.numerator}, {"denominator", et.denominator}};
      emit(c, "herald", "json", j.dump(2) + "\n");
      return 0;
    }

    if (*indist) {
      if (ind_tau) s.indist_tau = ind_tau;
      s.grid_n = ind_grid;
      const thz::Model m = thz::scenario_model(s);
      thz::StatsRequest req = thz::scenario_request(s);
      req.p2 = false;
      req.herald = false;
      const thz::EmissionStats st = thz::compute_stats(m, req);
      const thz::IndistinguishabilityResult ir =
          thz::indistinguishability(m.liouvillian.generator, m.emission_op, m.rho0, ind_tau.value_or(st.tau), ind_grid);
      nlohmann::ordered_json j;
      j["meta"] = {{"version", thz::kVersion}, {"command", "indist"}, {"config_hash", thz::config_hash(s)}};
      j["tau_ns"] = ind_tau.value_or(st.tau);
      j["grid_n"] = ir.grid_n;
      j["I"] = ir.value;
      j["error_estimate"] = ir.error_estimate;
      j["numerator"] = ir.numerator;
      j["denominator"] = ir.denominator;
      j["P_max"] = st.p_max;
      emit(c, "indist", "json", j.dump(2) + "\n");
      return 0;
    }

    if (*traj) {
      if (n_traj) s.n_traj = *n_traj;
      if (traj_tau) s.protocol.tau = traj_tau;
      if (pulse == "square") s.protocol.shape.kind = thz::PulseKind::Square;
      if (pulse == "exp_rise_fall") s.protocol.shape.kind = thz::PulseKind::ExpRiseFall;
      if (tau_p) s.protocol.shape.tau_p = *tau_p;
      if (s.protocol.shape.kind == thz::PulseKind::ExpRiseFall && !(s.protocol.shape.tau_p > 0))
        throw thz::ConfigError("exp_rise_fall needs --tau-p > 0");
      const thz::EnsembleResult r = thz::simulate_trajectories(s, workers, !dump.empty());
      thz::EmissionStats st;
      st.method = thz::Method::Trajectory;
      st.p1 = r.p1_hat;
      st.ci = std::make_pair(r.ci95.lo, r.ci95.hi);
      st.p0 = st.p2 = st.p_gt1 = st.g2 = st.purity = st.purity_estimate = std::nan("");
      st.tau_max = st.p_max = st.e = st.e_tilde = st.indist = st.indist_error = std::nan("");
      emit(c, "traj", "json", thz::stats_json(st, meta_for("traj", s)));
      if (!dump.empty()) {
        std::ostringstream os;
        thz::write_jump_dump(os, r.records);
        thz::write_file_atomic(dump, os.str());
      }
      return 0;
    }

    if (*analytic) {
      const thz::SystemParams p = s.params();
      const thz::DressedParams d = thz::derive_dressed(p);
      const Real ct = an_c.value_or(d.cooperativity_eff);
      const Real gamma = an_gamma ? thz::kTwoPi * *an_gamma : p.gamma;
      const thz::Optimum opt = thz::tau_pmax(ct, gamma);
      const Real tau = an_tau.value_or(opt.tau_max);
      const Real tp = an_tau_prime.value_or(thz::default_tau_prime(gamma));
      nlohmann::ordered_json j;
      j["meta"] = {{"version", thz::kVersion}, {"command", "analytic"}, {"config_hash", thz::config_hash(s)}};
      j["C_tilde"] = ct;
      j["gamma_rad_per_ns"] = gamma;
      j["tau_ns"] = tau;
      j["P0"] = thz::p0_adiabatic(ct, gamma, tau);
      j["P1"] = thz::p1_adiabatic(ct, gamma, tau);
      j["tau_max_ns"] = opt.tau_max;
      j["P_max"] = opt.p_max;
      const thz::Optimum big = thz::tau_pmax_large_c(ct, gamma);
      j["large_C"] = {{"tau_max_ns", big.tau_max}, {"P_max", big.p_max}};
      const thz::AsymptoticValue pur = thz::purity_estimate(ct);
      j["purity_estimate"] = {{"value", pur.value}, {"asymptotic_warning", pur.asymptotic_warning}};
      if (ct != 1.0) {
        const thz::HeraldAnalytics h = thz::herald_analytics(ct, gamma, tau, tp);
        j["herald"] = {{"N", h.n}, {"D", h.d}, {"E", h.e}, {"E_tilde", h.e_tilde}};
      }
      const thz::DecoherenceThresholds th = thz::decoherence_thresholds(p, d);
      j["thresholds"] = {{"T_crit_K", th.t_crit},
                         {"Lambda_crit1_GHz", th.lambda_crit1 / thz::kTwoPi},
                         {"Lambda_crit2_GHz", std::isfinite(th.lambda_crit2) ? nlohmann::ordered_json(th.lambda_crit2 / thz::kTwoPi)
                                                                            : nlohmann::ordered_json(nullptr)}};
      emit(c, "analytic", "json", j.dump(2) + "\n");
      return 0;
    }
  } catch (const thz::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const thz::FlavorMismatch& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const thz::DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const thz::Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return 0;
}
