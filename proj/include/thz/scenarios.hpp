#pragma once

// Presets, run files, sweeps and figure pipelines. Everything here is a thin
// layer over model/spectral/trajectories; output tables are plain rows of
// doubles so the writers can guarantee byte-stable text.

#include "thz/analytics.hpp"
#include "thz/spectral.hpp"
#include "thz/trajectories.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace thz {

inline constexpr const char* kVersion = "0.3.1";

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, int line) : ConfigError(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class UnknownKey : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class UnitViolation : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct PulseProtocol {
  Real theta_init = 0;       // rad, set from the activation dressing angle
  std::optional<Real> tau;   // ns; tau_max when empty
  bool herald_rotation = true;
  std::optional<Real> tau_prime;  // ns; 30/gamma when empty
  PulseShape shape;
  InitialState initial_state = InitialState::DressedPlus;
};

struct Scenario {
  std::string name = "Custom";
  RatesGHz rates;
  Real temperature = 0;  // K
  std::optional<int> n_max;
  Flavor flavor = Flavor::Full;
  bool emission_via_a = false;
  PulseProtocol protocol;
  std::optional<std::uint64_t> seed;
  std::size_t n_traj = 10000;
  int grid_n = 200;
  std::optional<Real> indist_tau;  // ns
  std::string notes;

  SystemParams params() const;
  ModelOptions model_options() const;
};

/// L1, L3, near_resonant_ghz, near_resonant_mhz.
Scenario preset(const std::string& name);
std::vector<std::string> preset_names();

/// Flat key = value run file. `preset` must come before any override.
Scenario parse_config(std::istream& in, const std::string& source = "<config>");
Scenario load_config(const std::string& path);

/// Canonical run-file text; parse_config(canonical_config(s)) == s.
std::string canonical_config(const Scenario& s);
/// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string config_hash(const Scenario& s);

int scenario_n_max(const Scenario& s);
Model scenario_model(const Scenario& s, std::optional<int> n_max = std::nullopt);
StatsRequest scenario_request(const Scenario& s);
EmissionStats simulate(const Scenario& s, DecompositionCache* cache = nullptr);

/// Trajectory estimate of P1 at the scenario's tau (seed required).
EnsembleResult simulate_trajectories(const Scenario& s, int workers, bool keep_records = false);

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Real>> rows;
  bool error_column = false;
  std::vector<std::string> errors;  // one per row when error_column
  std::vector<std::pair<std::string, std::string>> notes;
};

struct RunMeta {
  std::string command;
  std::string config_hash;
  std::optional<std::uint64_t> seed;
};

std::string format_real(Real v);
void write_csv(std::ostream& os, const Table& t);
std::string table_csv(const Table& t);
std::string table_json(const Table& t, const RunMeta& meta);
std::string stats_json(const EmissionStats& st, const RunMeta& meta);

/// Write via a sibling temporary and rename, so readers never see partial files.
void write_file_atomic(const std::string& path, const std::string& content);

enum class SweepAxis { Tau, C, H, T, Lambda, TauP };
SweepAxis sweep_axis_from_string(const std::string& s);
std::string to_string(SweepAxis a);

struct SweepSpec {
  SweepAxis axis = SweepAxis::Tau;
  std::vector<Real> grid;
  std::vector<std::string> outputs;  // P0 P1 P2 P_gt1 g2 purity tau_max P_max E E_tilde I I_error
  int workers = 1;
  bool cache = true;
};

struct SweepResult {
  Table table;
  std::size_t failures = 0;
};

/// Scenario with the axis parameter set to x (tau and tau_p change the protocol).
Scenario apply_axis(const Scenario& s, SweepAxis axis, Real x);
SweepResult sweep(const Scenario& s, const SweepSpec& spec);

/// Points where the sweep fell to half its first value, by linear interpolation; NaN if never.
Real half_point(const std::vector<Real>& x, const std::vector<Real>& y);

struct ReproduceOptions {
  int workers = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_traj;
  std::optional<int> points;
};

std::vector<std::string> figure_names();
Table reproduce(const std::string& figure, const ReproduceOptions& opts = {});

std::vector<Real> linspace(Real a, Real b, int n);
std::vector<Real> logspace(Real a, Real b, int n);

}  // namespace thz
