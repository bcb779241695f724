#pragma once

// Closed-form results of the adiabatic model and its variants. Rates in
// rad/ns, times in ns.

#include "thz/model.hpp"

namespace thz {

enum class RegimeTag { OffResonantAdiabatic, NearResonant, ResonantLimit, GammaDominant };

struct AnalyticRegime {
  RegimeTag tag = RegimeTag::OffResonantAdiabatic;
  bool kappa_dominant = false;  // kappa >> gamma, g
  bool gamma_dominant = false;  // gamma >> kappa, g
  bool far_detuned = false;     // Delta >> Omega
};

/// Flags are advisory only; the tag picks the formula family.
AnalyticRegime classify_regime(const SystemParams& p, const DressedParams& d);

/// Single-photon probability of the adiabatic model, Gamma = gamma * C_tilde.
Real p1_adiabatic(Real c_tilde, Real gamma, Real tau);
/// exp(-gamma C_tilde tau)
Real p0_adiabatic(Real c_tilde, Real gamma, Real tau);

struct Optimum {
  Real tau_max = 0;
  Real p_max = 0;
};

/// Lambert-W optimum; W_-1 above C_tilde = 1, W_0 below.
Optimum tau_pmax(Real c_tilde, Real gamma);

/// Large-C_tilde asymptotes ln(C)/Gamma and 1 - ln(C)/C.
Optimum tau_pmax_large_c(Real c_tilde, Real gamma);

/// Adiabatic elimination keeping gamma_-.
Real p1_near_resonant(Real g, Real kappa, Real gamma_plus, Real gamma_minus, Real tau);

/// Resonant limit gamma_+ = gamma_- = gamma/4, g = chi; C is the bare cooperativity.
Real p1_resonant_limit(Real cooperativity, Real gamma, Real tau);

/// gamma >> kappa, g: kappa takes the place of gamma.
Real p1_gamma_dominant(Real c_tilde, Real kappa, Real tau);

struct HeraldAnalytics {
  Real n = 0;
  Real d = 0;
  Real n_tilde = 0;
  Real d_tilde = 0;
  Real e = 0;
  Real e_tilde = 1;
};

HeraldAnalytics herald_analytics(Real c_tilde, Real gamma, Real tau, Real tau_prime);

struct AsymptoticValue {
  Real value = 0;
  bool asymptotic_warning = false;  // C_tilde below 3
};

AsymptoticValue purity_estimate(Real c_tilde);

struct ImperfectionSplit {
  Real p0_max = 0;
  Real pgt1_max = 0;
  bool asymptotic_warning = false;
  Real pgt1_small_c = 0;  // 1 - 2/e, the C_tilde << 1 reference
};

ImperfectionSplit imperfection_split(Real c_tilde);

struct DecoherenceThresholds {
  Real t_crit = 0;         // K
  Real lambda_crit1 = 0;   // rad/ns
  Real lambda_crit2 = 0;   // rad/ns, +inf at s = c
};

DecoherenceThresholds decoherence_thresholds(const SystemParams& p, const DressedParams& d);

/// Inverse of P_max = 1 - ln(C)/C on the C > e branch.
Real cooperativity_from_pmax(Real p_max);

}  // namespace thz
