#pragma once

// Physical model of the driven polar emitter coupled to a THz cavity mode, in
// the rotating frame and the dressed-state basis.
//
// Units: configuration is in ordinary frequency (GHz, the "/2pi" numbers);
// SystemParams stores angular frequencies in rad/ns. Time is in ns.
//
// Hilbert space ordering: index = tls * (n_max + 1) + n, with the TLS basis
// {|+>, |->} (dressed states, |+> the upper one) and n the Fock number.

#include "thz/numkit.hpp"

#include <optional>
#include <string>

namespace thz {

inline constexpr Real kTwoPi = 6.283185307179586;
/// hbar / k_B in K s.
inline constexpr Real kHbarOverKb = 7.638232577577e-12;

/// Rates as written in the configuration: ordinary frequencies in GHz.
struct RatesGHz {
  Real chi = 0;
  Real kappa = 0;
  Real gamma = 0;
  Real omega = 0;
  Real omega_c = 0;
  std::optional<Real> delta;  // derived from Omega_R = omega_c when empty
  Real dephasing = 0;
};

/// Physical parameters in rad/ns. Build with SystemParams::from_ghz.
struct SystemParams {
  Real chi = 0;
  Real kappa = 0;
  Real gamma = 0;
  Real omega = 0;
  Real omega_c = 0;
  Real delta = 0;
  Real dephasing = 0;
  Real temperature = 0;        // K
  std::optional<int> n_max;    // empty: adaptive

  static SystemParams from_ghz(const RatesGHz& rates, Real temperature_k = 0,
                               std::optional<int> n_max = std::nullopt);
  RatesGHz to_ghz() const;
};

struct DressedParams {
  Real omega_r = 0;     // generalized Rabi frequency
  Real h = 0;           // dressing ratio
  Real theta = 0;       // mixing angle, atan(h)
  Real s = 0;
  Real c = 1;
  Real g = 0;           // effective coupling -2 c s chi
  Real gamma_plus = 0;  // gamma c^4
  Real gamma_minus = 0; // gamma s^4
  Real gamma_z = 0;     // gamma c^2 s^2
  Real purcell = 0;     // 4 g^2 / kappa
  Real cooperativity = 0;
  Real cooperativity_eff = 0;
};

DressedParams derive_dressed(const SystemParams& p);

/// Detuning Delta with sqrt(Delta^2 + Omega^2) = omega_c; any consistent unit.
Real resonant_detuning(Real omega, Real omega_c);

struct OperatorSet {
  int n_max = 0;
  Real theta = 0;
  CMatrix identity;
  CMatrix a, a_dag;
  CMatrix zeta_plus, zeta_minus, zeta_z;
  CMatrix sigma_plus, sigma_minus, sigma_z, sigma_y;

  Eigen::Index dim() const { return identity.rows(); }
};

/// Operators on C^2 (x) Fock(n_max + 1). n_max = 0 gives the bare two-level space.
OperatorSet build_operators(int n_max, Real theta);

/// Bare states expressed in the dressed basis for mixing angle theta.
CVector bare_excited(Real theta);
CVector bare_ground(Real theta);

/// Full rotating-frame Hamiltonian including counter-rotating and longitudinal terms.
CMatrix build_hamiltonian(const SystemParams& p, int n_max);
CMatrix build_hamiltonian(const SystemParams& p, const DressedParams& d, const OperatorSet& ops);

/// Resonant Jaynes-Cummings Hamiltonian g (a zeta+ + a^+ zeta-) plus (Omega_R - omega_c)/2 zeta_z.
CMatrix build_jc_hamiltonian(const DressedParams& d, Real omega_c, const OperatorSet& ops);

struct CollapseOperatorX {
  CMatrix x;
  int dropped_pairs = 0;  // near-degenerate pairs omitted (warning, not error)
};

/// Generalized collapse operator built in the eigenbasis of H.
CollapseOperatorX build_x(const CMatrix& hamiltonian, const CMatrix& a, Real omega_c);

enum class Flavor { Full, Adiabatic, JC, NearResonant };

std::string to_string(Flavor f);
Flavor flavor_from_string(const std::string& s);

class FlavorMismatch : public Error {
 public:
  using Error::Error;
};

struct LiouvillianOptions {
  bool thermal = false;
  bool dephasing = false;
  int n_max = 4;  // ignored for Adiabatic unless nonzero, which is a mismatch
};

struct Liouvillian {
  SuperOp generator;  // L
  SuperOp k_thz;      // THz emission jump
  SuperOp k_opt;      // optical emission jump
  Eigen::Index hilbert_dim = 0;
};

Liouvillian build_liouvillian(const SystemParams& p, Flavor flavor, const LiouvillianOptions& opts);

/// Two-level adiabatic generator (gamma+/2) D(zeta+) + (Gamma/2) D(zeta-), from rates directly.
Liouvillian build_adiabatic_liouvillian(Real gamma_plus, Real purcell);

/// Bose-Einstein occupation for angular frequency omega (rad/ns) at temperature T (K).
Real thermal_occupation(Real omega_c, Real temperature);
/// Truncated geometric Fock mixture, renormalized to unit trace.
CMatrix thermal_state(Real n_bar, int n_max);

struct DephasingRates {
  Real plus = 0;
  Real minus = 0;
  Real z = 0;
};
DephasingRates dephasing_rates(Real lambda, Real theta);

enum class InitialState { DressedPlus, BareGround };

/// Everything the engines need for one configuration.
struct Model {
  Flavor flavor = Flavor::Full;
  int n_max = 0;
  Eigen::Index hilbert_dim = 0;
  DressedParams dressed;
  Liouvillian liouvillian;
  CMatrix emission_op;  // operator whose correlators define the emitted field
  CMatrix rho0;

  // Post-activation heralding stage.
  SuperOp free_generator;  // L0
  SuperOp free_k_opt;
  SuperOp rotation;        // U rho U^+
  Real gamma_opt = 0;      // optical rate used to pick the default herald window
  int x_dropped_pairs = 0;
};

struct ModelOptions {
  bool thermal = false;
  bool dephasing = false;
  InitialState initial_state = InitialState::DressedPlus;
  bool emission_via_a = false;  // use a instead of X in correlators (Full flavor)
};

Model build_model(const SystemParams& p, Flavor flavor, int n_max, const ModelOptions& opts = {});

/// Adiabatic model assembled from (gamma, C_tilde) directly; U = 1 and L0 = (gamma/2) D(zeta+).
Model build_adiabatic_model(Real gamma, Real cooperativity_eff);

}  // namespace thz
