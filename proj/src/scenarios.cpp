#include "thz/scenarios.hpp"

#include "thz/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace thz {

namespace {

constexpr Real kNaN = std::numeric_limits<Real>::quiet_NaN();

Scenario base_preset(const std::string& name, Real chi, Real kappa, Real gamma, Real omega, Real omega_c) {
  Scenario s;
  s.name = name;
  s.rates.chi = chi;
  s.rates.kappa = kappa;
  s.rates.gamma = gamma;
  s.rates.omega = omega;
  s.rates.omega_c = omega_c;
  return s;
}

void finalize(Scenario& s) {
  if (s.protocol.initial_state == InitialState::DressedPlus) {
    const SystemParams p = SystemParams::from_ghz(s.rates, s.temperature, s.n_max);
    s.protocol.theta_init = derive_dressed(p).theta;
  } else {
    s.protocol.theta_init = 0;
  }
}

std::string trim(const std::string& v) {
  const auto b = v.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = v.find_last_not_of(" \t\r");
  return v.substr(b, e - b + 1);
}

// Strip a trailing comment that is not inside quotes.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string unquote(const std::string& v, int line) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  if (v.find('"') != std::string::npos) throw ParseError("unbalanced quotes", line);
  return v;
}

Real parse_real(const std::string& v, int line) {
  Real out = 0;
  const char* first = v.data();
  const char* last = v.data() + v.size();
  const auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(out))
    throw ParseError("expected a number, got '" + v + "'", line);
  return out;
}

std::uint64_t parse_uint(const std::string& v, int line) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ParseError("expected a non-negative integer, got '" + v + "'", line);
  return out;
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ParseError("expected true or false, got '" + v + "'", line);
}

Real non_negative(Real v, const std::string& key, int line) {
  if (v < 0) throw UnitViolation("line " + std::to_string(line) + ": " + key + " must be non-negative");
  return v;
}

// quantity -> expected unit suffix, for diagnosing a wrong suffix
const std::map<std::string, std::string>& unit_table() {
  static const std::map<std::string, std::string> t{
      {"chi", "GHz"},     {"kappa", "GHz"},      {"gamma", "GHz"}, {"omega", "GHz"},
      {"omega_c", "GHz"}, {"delta", "GHz"},      {"dephasing", "GHz"}, {"temperature", "K"},
      {"tau", "ns"},      {"tau_prime", "ns"},   {"tau_p", "ns"},      {"indist_tau", "ns"}};
  return t;
}

std::string fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string initial_state_name(InitialState s) {
  return s == InitialState::DressedPlus ? "dressed_plus" : "bare_ground";
}

}  // namespace

// ---------------------------------------------------------------------------

SystemParams Scenario::params() const { return SystemParams::from_ghz(rates, temperature, n_max); }

ModelOptions Scenario::model_options() const {
  ModelOptions o;
  o.thermal = temperature > 0;
  o.dephasing = rates.dephasing > 0;
  o.initial_state = protocol.initial_state;
  o.emission_via_a = emission_via_a;
  return o;
}

Scenario preset(const std::string& name) {
  Scenario s;
  if (name == "L1") {
    s = base_preset("L1", 4.0, 3.5, 0.03979, 200.0, 3078.6);
    s.notes = "cavity L1: chi 4 GHz, kappa 3.5 GHz, gamma 39.79 MHz, Omega 200 GHz, omega_c 3078.6 GHz";
  } else if (name == "L3") {
    s = base_preset("L3", 12.5, 0.974, 0.03979, 200.0, 5116.9);
    s.notes = "cavity L3: chi 12.5 GHz, kappa 0.974 GHz, gamma 39.79 MHz, Omega 200 GHz, omega_c 5116.9 GHz";
  } else if (name == "near_resonant_ghz" || name == "near_resonant_mhz") {
    const bool ghz = name == "near_resonant_ghz";
    s = base_preset(name, 12.5, 0.974, ghz ? 39.78 : 0.03978, 4000.0, 5116.0);
    s.rates.delta = 3190.0;
    s.flavor = Flavor::Full;
    s.notes = ghz ? "near-resonant example, gamma read as 39.78 GHz" : "near-resonant example, gamma read as 39.78 MHz";
  } else {
    throw UnknownKey("unknown preset '" + name + "'");
  }
  finalize(s);
  return s;
}

std::vector<std::string> preset_names() { return {"L1", "L3", "near_resonant_ghz", "near_resonant_mhz"}; }

Scenario parse_config(std::istream& in, const std::string& source) {
  Scenario s;
  bool overridden = false;
  std::string raw;
  int line = 0;
  auto fail_unknown = [&](const std::string& key) {
    const auto us = key.rfind('_');
    const std::string base = us == std::string::npos ? key : key.substr(0, us);
    const auto& units = unit_table();
    auto it = units.find(key);
    if (it == units.end()) it = units.find(base);
    if (it != units.end())
      throw UnitViolation(source + ":" + std::to_string(line) + ": '" + key + "' needs the _" + it->second +
                          " suffix (" + it->first + "_" + it->second + ")");
    throw UnknownKey(source + ":" + std::to_string(line) + ": unknown key '" + key + "'");
  };

  while (std::getline(in, raw)) {
    ++line;
    const std::string text = trim(strip_comment(raw));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(source + ":" + std::to_string(line) + ": expected key = value", line);
    const std::string key = trim(text.substr(0, eq));
    const std::string value = unquote(trim(text.substr(eq + 1)), line);
    if (key.empty()) throw ParseError(source + ":" + std::to_string(line) + ": empty key", line);
    if (value.empty()) throw ParseError(source + ":" + std::to_string(line) + ": empty value for " + key, line);

    if (key == "preset") {
      if (overridden) throw ParseError(source + ":" + std::to_string(line) + ": preset must precede overrides", line);
      try {
        s = preset(value);
      } catch (const UnknownKey&) {
        throw UnknownKey(source + ":" + std::to_string(line) + ": unknown preset '" + value + "'");
      }
      continue;
    }
    overridden = true;
    auto num = [&] { return non_negative(parse_real(value, line), key, line); };
    if (key == "name") s.name = value;
    else if (key == "notes") s.notes = value;
    else if (key == "chi_GHz") s.rates.chi = num();
    else if (key == "kappa_GHz") s.rates.kappa = num();
    else if (key == "gamma_GHz") s.rates.gamma = num();
    else if (key == "omega_GHz") s.rates.omega = num();
    else if (key == "omega_c_GHz") s.rates.omega_c = num();
    else if (key == "delta_GHz") s.rates.delta = value == "auto" ? std::optional<Real>() : std::optional<Real>(num());
    else if (key == "dephasing_GHz") s.rates.dephasing = num();
    else if (key == "temperature_K") s.temperature = num();
    else if (key == "n_max") {
      if (value == "auto") s.n_max.reset();
      else s.n_max = static_cast<int>(parse_uint(value, line));
    } else if (key == "flavor") {
      try {
        s.flavor = flavor_from_string(value);
      } catch (const Error&) {
        throw ParseError(source + ":" + std::to_string(line) + ": unknown flavor '" + value + "'", line);
      }
    } else if (key == "emission") {
      if (value != "x" && value != "a") throw ParseError("emission must be x or a", line);
      s.emission_via_a = value == "a";
    } else if (key == "tau_ns") {
      s.protocol.tau = value == "auto" ? std::optional<Real>() : std::optional<Real>(num());
    } else if (key == "tau_prime_ns") {
      s.protocol.tau_prime = value == "auto" ? std::optional<Real>() : std::optional<Real>(num());
    } else if (key == "tau_p_ns") {
      s.protocol.shape.tau_p = num();
    } else if (key == "pulse") {
      if (value == "square") s.protocol.shape.kind = PulseKind::Square;
      else if (value == "exp_rise_fall") s.protocol.shape.kind = PulseKind::ExpRiseFall;
      else throw ParseError("pulse must be square or exp_rise_fall", line);
    } else if (key == "initial_state") {
      if (value == "dressed_plus") s.protocol.initial_state = InitialState::DressedPlus;
      else if (value == "bare_ground") s.protocol.initial_state = InitialState::BareGround;
      else throw ParseError("initial_state must be dressed_plus or bare_ground", line);
    } else if (key == "herald_rotation") {
      s.protocol.herald_rotation = parse_bool(value, line);
    } else if (key == "seed") {
      s.seed = parse_uint(value, line);
    } else if (key == "n_traj") {
      s.n_traj = parse_uint(value, line);
    } else if (key == "grid_n") {
      s.grid_n = static_cast<int>(parse_uint(value, line));
    } else if (key == "indist_tau_ns") {
      s.indist_tau = value == "auto" ? std::optional<Real>() : std::optional<Real>(num());
    } else {
      fail_unknown(key);
    }
  }
  if (s.protocol.shape.kind == PulseKind::ExpRiseFall && !(s.protocol.shape.tau_p > 0))
    throw UnitViolation(source + ": exp_rise_fall pulse needs tau_p_ns > 0");
  if (s.rates.omega_c < s.rates.omega && !s.rates.delta)
    throw UnitViolation(source + ": omega_c_GHz below omega_GHz and no delta_GHz given");
  finalize(s);
  return s;
}

Scenario load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

std::string canonical_config(const Scenario& s) {
  std::ostringstream os;
  auto line = [&](const std::string& k, const std::string& v) { os << k << " = " << v << '\n'; };
  auto opt = [&](const std::optional<Real>& v) { return v ? format_real(*v) : std::string("auto"); };
  line("name", "\"" + s.name + "\"");
  line("flavor", to_string(s.flavor));
  line("chi_GHz", format_real(s.rates.chi));
  line("kappa_GHz", format_real(s.rates.kappa));
  line("gamma_GHz", format_real(s.rates.gamma));
  line("omega_GHz", format_real(s.rates.omega));
  line("omega_c_GHz", format_real(s.rates.omega_c));
  line("delta_GHz", opt(s.rates.delta));
  line("dephasing_GHz", format_real(s.rates.dephasing));
  line("temperature_K", format_real(s.temperature));
  line("n_max", s.n_max ? std::to_string(*s.n_max) : std::string("auto"));
  line("emission", s.emission_via_a ? "a" : "x");
  line("tau_ns", opt(s.protocol.tau));
  line("tau_prime_ns", opt(s.protocol.tau_prime));
  line("pulse", s.protocol.shape.kind == PulseKind::Square ? "square" : "exp_rise_fall");
  line("tau_p_ns", format_real(s.protocol.shape.tau_p));
  line("initial_state", initial_state_name(s.protocol.initial_state));
  line("herald_rotation", s.protocol.herald_rotation ? "true" : "false");
  if (s.seed) line("seed", std::to_string(*s.seed));
  line("n_traj", std::to_string(s.n_traj));
  line("grid_n", std::to_string(s.grid_n));
  line("indist_tau_ns", opt(s.indist_tau));
  return os.str();
}

std::string config_hash(const Scenario& s) { return fnv1a(canonical_config(s)); }

// ---------------------------------------------------------------------------

int scenario_n_max(const Scenario& s) {
  if (s.flavor == Flavor::Adiabatic) return 0;
  return resolve_n_max(s.params(), s.flavor, s.model_options());
}

Model scenario_model(const Scenario& s, std::optional<int> n_max) {
  const int n = n_max ? *n_max : scenario_n_max(s);
  Model m = build_model(s.params(), s.flavor, n, s.model_options());
  if (!s.protocol.herald_rotation) m.rotation = SuperOp::Identity(m.rotation.rows(), m.rotation.cols());
  return m;
}

StatsRequest scenario_request(const Scenario& s) {
  StatsRequest r;
  r.tau = s.protocol.tau;
  r.indist_tau = s.indist_tau;
  r.tau_prime = s.protocol.tau_prime;
  r.grid_n = s.grid_n;
  return r;
}

EmissionStats simulate(const Scenario& s, DecompositionCache* cache) {
  return compute_stats(scenario_model(s), scenario_request(s), cache);
}

EnsembleResult simulate_trajectories(const Scenario& s, int workers, bool keep_records) {
  if (!s.seed) throw ConfigError("trajectory runs need an explicit seed");
  const SystemParams p = s.params();
  TrajectoryOptions opts;
  opts.n_max = s.n_max ? std::max(*s.n_max, 1) : 2;
  PulseShape pulse = s.protocol.shape;
  if (s.protocol.tau) {
    pulse.tau = *s.protocol.tau;
  } else {
    Scenario jc = s;
    jc.flavor = Flavor::JC;
    const Model m = build_model(p, Flavor::JC, opts.n_max, jc.model_options());
    const EmissionEngine eng(m.liouvillian.generator, m.liouvillian.k_thz, m.rho0);
    std::optional<Real> scale;
    if (m.dressed.purcell > 0 && std::isfinite(m.dressed.purcell)) scale = 1.0 / m.dressed.purcell;
    pulse.tau = find_tau_max([&](Real t) { return eng.p1(t); }, p.gamma, m.dressed.cooperativity_eff, scale).tau_max;
  }
  return ensemble_p1(p, pulse, pulse.tau, s.n_traj, *s.seed, workers, opts, keep_records);
}

// ---------------------------------------------------------------------------

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "tau") return SweepAxis::Tau;
  if (s == "C") return SweepAxis::C;
  if (s == "h") return SweepAxis::H;
  if (s == "T") return SweepAxis::T;
  if (s == "Lambda") return SweepAxis::Lambda;
  if (s == "tau_p") return SweepAxis::TauP;
  throw ConfigError("unknown sweep axis '" + s + "' (tau, C, h, T, Lambda, tau_p)");
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::Tau: return "tau";
    case SweepAxis::C: return "C";
    case SweepAxis::H: return "h";
    case SweepAxis::T: return "T";
    case SweepAxis::Lambda: return "Lambda";
    case SweepAxis::TauP: return "tau_p";
  }
  return "?";
}

Scenario apply_axis(const Scenario& s, SweepAxis axis, Real x) {
  Scenario out = s;
  switch (axis) {
    case SweepAxis::Tau:
      out.protocol.tau = x;
      break;
    case SweepAxis::C:
      if (x < 0) throw DomainError("cooperativity must be non-negative");
      out.rates.chi = std::sqrt(x * s.rates.kappa * s.rates.gamma / 4.0);
      break;
    case SweepAxis::H:
      // keep Omega, move Delta, and keep the cavity resonant with Omega_R
      if (!(x > 0) || x > 1) throw DomainError("dressing ratio must lie in (0, 1]");
      out.rates.delta = 0.5 * s.rates.omega * (1.0 / x - x);
      out.rates.omega_c = 0.5 * s.rates.omega * (1.0 / x + x);
      break;
    case SweepAxis::T:
      if (x < 0) throw DomainError("temperature must be non-negative");
      out.temperature = x;
      break;
    case SweepAxis::Lambda:
      if (x < 0) throw DomainError("dephasing must be non-negative");
      out.rates.dephasing = x;
      break;
    case SweepAxis::TauP:
      if (!(x > 0)) throw DomainError("tau_p must be positive");
      out.protocol.shape.kind = PulseKind::ExpRiseFall;
      out.protocol.shape.tau_p = x;
      break;
  }
  finalize(out);
  return out;
}

namespace {

const std::vector<std::string>& stats_outputs() {
  static const std::vector<std::string> v{"P0",      "P1", "P2", "P_gt1", "g2", "purity", "purity_estimate", "tau",
                                          "tau_max", "P_max", "E", "E_tilde", "I", "I_error"};
  return v;
}

Real stats_value(const EmissionStats& st, const std::string& k) {
  if (k == "P0") return st.p0;
  if (k == "P1") return st.p1;
  if (k == "P2") return st.p2;
  if (k == "P_gt1") return st.p_gt1;
  if (k == "g2") return st.g2;
  if (k == "purity") return st.purity;
  if (k == "purity_estimate") return st.purity_estimate;
  if (k == "tau") return st.tau;
  if (k == "tau_max") return st.tau_max;
  if (k == "P_max") return st.p_max;
  if (k == "E") return st.e;
  if (k == "E_tilde") return st.e_tilde;
  if (k == "I") return st.indist;
  if (k == "I_error") return st.indist_error;
  return kNaN;
}

bool wants(const std::vector<std::string>& outs, std::initializer_list<const char*> keys) {
  for (const auto& o : outs)
    for (const char* k : keys)
      if (o == k) return true;
  return false;
}

}  // namespace

SweepResult sweep(const Scenario& s, const SweepSpec& spec) {
  if (spec.grid.size() < 2) throw ConfigError("sweep grid needs at least 2 points");
  for (std::size_t i = 1; i < spec.grid.size(); ++i)
    if (!(spec.grid[i] > spec.grid[i - 1])) throw ConfigError("sweep grid must be strictly increasing");

  const bool traj = spec.axis == SweepAxis::TauP;
  std::vector<std::string> outputs = spec.outputs;
  if (outputs.empty()) outputs = traj ? std::vector<std::string>{"P1", "P1_ci_lo", "P1_ci_hi"}
                                      : std::vector<std::string>{"P0", "P1", "P_gt1", "tau_max", "P_max"};
  for (const auto& o : outputs) {
    const bool known = traj ? (o == "P1" || o == "P1_ci_lo" || o == "P1_ci_hi")
                            : std::find(stats_outputs().begin(), stats_outputs().end(), o) != stats_outputs().end();
    if (!known) throw ConfigError("output '" + o + "' is not available on the " + to_string(spec.axis) + " axis");
  }
  if (traj && !s.seed) throw ConfigError("tau_p sweeps are randomized and need an explicit seed");

  StatsRequest base = scenario_request(s);
  base.p2 = wants(outputs, {"P2", "g2", "purity"});
  base.herald = wants(outputs, {"E", "E_tilde"});
  base.indist = wants(outputs, {"I", "I_error"});
  base.optimize = wants(outputs, {"tau_max", "P_max"}) || !s.protocol.tau;

  DecompositionCache cache;
  DecompositionCache* cache_ptr = spec.cache ? &cache : nullptr;

  SweepResult out;
  Table& t = out.table;
  t.columns.push_back(to_string(spec.axis));
  t.columns.insert(t.columns.end(), outputs.begin(), outputs.end());
  t.error_column = true;
  const std::size_t n = spec.grid.size();
  t.rows.assign(n, std::vector<Real>(outputs.size() + 1, kNaN));
  t.errors.assign(n, "");

  auto point = [&](std::size_t i) {
    const Real x = spec.grid[i];
    std::vector<Real>& row = t.rows[i];
    row[0] = x;
    try {
      const Scenario sx = apply_axis(s, spec.axis, x);
      StatsRequest req = base;
      req.tau = sx.protocol.tau;
      if (spec.axis == SweepAxis::Tau) req.optimize = wants(outputs, {"tau_max", "P_max"});
      const EmissionStats st = compute_stats(scenario_model(sx), req, cache_ptr);
      for (std::size_t k = 0; k < outputs.size(); ++k) row[k + 1] = stats_value(st, outputs[k]);
    } catch (const std::exception& ex) {
      for (std::size_t k = 1; k < row.size(); ++k) row[k] = kNaN;
      t.errors[i] = ex.what();
    }
  };
  // Trajectory points parallelize inside the ensemble instead of across points.
  if (traj) {
    for (std::size_t i = 0; i < n; ++i) {
      const Real x = spec.grid[i];
      std::vector<Real>& row = t.rows[i];
      row[0] = x;
      try {
        const EnsembleResult r = simulate_trajectories(apply_axis(s, spec.axis, x), spec.workers);
        for (std::size_t k = 0; k < outputs.size(); ++k) {
          const std::string& o = outputs[k];
          row[k + 1] = o == "P1" ? r.p1_hat : o == "P1_ci_lo" ? r.ci95.lo : r.ci95.hi;
        }
      } catch (const std::exception& ex) {
        t.errors[i] = ex.what();
      }
    }
  } else {
    parallel_for(n, spec.workers, point);
  }
  for (const auto& e : t.errors) out.failures += !e.empty();
  return out;
}

Real half_point(const std::vector<Real>& x, const std::vector<Real>& y) {
  if (x.size() != y.size() || x.empty()) return kNaN;
  const Real target = 0.5 * y.front();
  for (std::size_t i = 1; i < y.size(); ++i) {
    if (y[i] <= target && y[i - 1] > target) {
      const Real f = (y[i - 1] - target) / (y[i - 1] - y[i]);
      return x[i - 1] + f * (x[i] - x[i - 1]);
    }
  }
  return kNaN;
}

std::vector<Real> linspace(Real a, Real b, int n) {
  std::vector<Real> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

std::vector<Real> logspace(Real a, Real b, int n) {
  std::vector<Real> v = linspace(a, b, n);
  for (Real& x : v) x = std::pow(10.0, x);
  return v;
}

}  // namespace thz
