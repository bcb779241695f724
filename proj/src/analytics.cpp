#include "thz/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace thz {

namespace {

constexpr Real kInf = std::numeric_limits<Real>::infinity();

void require_positive_c(Real c_tilde) {
  if (!(c_tilde > 0) || std::isnan(c_tilde)) throw DomainError("effective cooperativity must be positive");
}

// W_-1(-exp(y)) for y < -1, solved as w + ln(-w) = y so that tiny arguments
// do not underflow.
Real wm1_of_neg_exp(Real y) {
  if (y > -1.0 - 1e-3) return lambert_wm1(-std::exp(y));
  Real w = y - std::log(-y);
  for (int it = 0; it < 60; ++it) {
    const Real f = w + std::log(-w) - y;
    const Real step = f / (1.0 + 1.0 / w);
    w -= step;
    if (std::abs(step) <= 1e-15 * std::abs(w)) break;
  }
  return std::min(w, -1.0);
}

// d - log1p(d) = q with d > 0 (upper) or -1 < d < 0. Series for small d keeps
// the left side accurate when it is O(d^2).
Real branch_offset(Real q, bool upper) {
  if (q == 0.0) return 0.0;
  auto phi = [](Real d) {
    if (std::abs(d) < 1e-3) {
      const Real d2 = d * d;
      return d2 * (0.5 - d / 3.0 + d2 / 4.0 - d2 * d / 5.0 + d2 * d2 / 6.0);
    }
    return d - std::log1p(d);
  };
  // W series around the branch point, p = sqrt(2 (1 + e Xi))
  const Real p = std::sqrt(-2.0 * std::expm1(-q));
  Real d = upper ? p + p * p / 3.0 + 11.0 / 72.0 * p * p * p : -p + p * p / 3.0 - 11.0 / 72.0 * p * p * p;
  if (!upper) d = std::max(d, -0.999);
  for (int it = 0; it < 60; ++it) {
    const Real step = (phi(d) - q) * (1.0 + d) / d;
    Real next = d - step;
    if (!upper && next <= -1.0) next = 0.5 * (d - 1.0);
    if (upper && next <= 0.0) next = 0.5 * d;
    const bool done = std::abs(next - d) <= 1e-16 * std::abs(d);
    d = next;
    if (done) break;
  }
  return d;
}

}  // namespace

AnalyticRegime classify_regime(const SystemParams& p, const DressedParams& d) {
  AnalyticRegime r;
  const Real g = std::abs(d.g);
  r.kappa_dominant = p.kappa > 10.0 * p.gamma && p.kappa > 10.0 * g;
  r.gamma_dominant = p.gamma > 10.0 * p.kappa && p.gamma > 10.0 * g;
  r.far_detuned = p.delta > 10.0 * p.omega;
  if (r.gamma_dominant) {
    r.tag = RegimeTag::GammaDominant;
  } else if (d.h > 0.99) {
    r.tag = RegimeTag::ResonantLimit;
  } else if (d.h > 0.1) {
    r.tag = RegimeTag::NearResonant;
  } else {
    r.tag = RegimeTag::OffResonantAdiabatic;
  }
  return r;
}

Real p0_adiabatic(Real c_tilde, Real gamma, Real tau) {
  require_positive_c(c_tilde);
  return std::exp(-gamma * c_tilde * tau);
}

Real p1_adiabatic(Real c_tilde, Real gamma, Real tau) {
  require_positive_c(c_tilde);
  if (tau < 0) throw DomainError("p1_adiabatic: negative time");
  const Real x = gamma * tau;
  if (std::abs(c_tilde - 1.0) < 1e-6) return x * (1.0 + 0.5 * x) * std::exp(-x);
  if (std::abs(c_tilde - 1.0) < 1e-2) {
    // b f[-a,-b] + a b f[-a,-b,-b], free of the 1/(1-1/C)^2 cancellation.
    const Complex a(-gamma, 0);
    const Complex b(-gamma * c_tilde, 0);
    const Real big_gamma = gamma * c_tilde;
    const Complex f1 = exp_divided_difference(a, b, tau);
    const Complex f2 = exp_divided_difference(a, b, b, tau);
    return (big_gamma * f1 + gamma * big_gamma * f2).real();
  }
  const Real r = 1.0 - 1.0 / c_tilde;
  return (std::exp(-x) - std::exp(-x * c_tilde) * (1.0 + x * r)) / (r * r);
}

Optimum tau_pmax(Real c_tilde, Real gamma) {
  require_positive_c(c_tilde);
  if (!(gamma > 0)) throw DomainError("tau_pmax: gamma must be positive");
  Optimum o;
  if (std::abs(c_tilde - 1.0) < 1e-6) {
    const Real s2 = std::sqrt(2.0);
    o.tau_max = s2 / gamma;
    o.p_max = (1.0 + s2) * std::exp(-s2);
    return o;
  }
  const Real y = 1.0 - c_tilde - 1.0 / c_tilde;  // Xi = -exp(y)
  const Real inv_c = 1.0 / c_tilde;
  if (std::abs(c_tilde - 1.0) < 0.5) {
    // Xi sits next to the branch point -1/e, where W is ill-conditioned in Xi.
    // With w = -1 - d the defining equation is d - log1p(d) = (C-1)^2/C.
    const Real cm1 = c_tilde - 1.0;
    const Real d = branch_offset(cm1 * cm1 / c_tilde, c_tilde > 1.0);
    o.tau_max = (cm1 * cm1 / c_tilde - d) / (-gamma * cm1);
    o.p_max = std::exp(1.0 - inv_c - d / cm1) * (1.0 + d / ((1.0 + d) * cm1));
    return o;
  }
  if (c_tilde > 1.0) {
    const Real w = wm1_of_neg_exp(y);
    o.tau_max = (w + c_tilde + inv_c - 1.0) / (gamma * (1.0 - c_tilde));
    o.p_max = std::exp((inv_c + w) / (c_tilde - 1.0)) * (c_tilde + 1.0 / w) * M_E / (c_tilde - 1.0);
    return o;
  }
  const Real xi = -std::exp(y);
  const Real w = lambert_w0(xi);
  o.tau_max = (w + c_tilde + inv_c - 1.0) / (gamma * (1.0 - c_tilde));
  // -1/W = exp(W - y); evaluate P in logs so small C_tilde does not overflow.
  const Real log_inv_w = w - y;
  const Real log_bracket = log_inv_w + std::log1p(-c_tilde * std::exp(-log_inv_w));
  const Real log_p = (inv_c + w) / (c_tilde - 1.0) + 1.0 + log_bracket - std::log(1.0 - c_tilde);
  o.p_max = std::exp(log_p);
  return o;
}

Optimum tau_pmax_large_c(Real c_tilde, Real gamma) {
  require_positive_c(c_tilde);
  const Real l = std::log(c_tilde);
  return {l / (gamma * c_tilde), 1.0 - l / c_tilde};
}

Real p1_near_resonant(Real g, Real kappa, Real gamma_plus, Real gamma_minus, Real tau) {
  if (!(kappa > 0) || gamma_plus < 0 || gamma_minus < 0) throw DomainError("p1_near_resonant: invalid rates");
  const Real g2 = g * g;
  const Real sum = gamma_minus + gamma_plus;
  Real a2 = 16.0 * g2 * g2 + 8.0 * g2 * (gamma_minus - gamma_plus) * kappa + sum * sum * kappa * kappa;
  if (!(a2 > 0)) throw DomainError("p1_near_resonant: A = 0");
  Real a = std::sqrt(a2);
  if (a < 1e-8 * (4.0 * g2 + sum * kappa)) a = 1e-8 * (4.0 * g2 + sum * kappa);

  // Combined exponent of the prefactor and f(+-A); the bare f(A) overflows.
  const Real base = -0.5 * tau * (sum + 4.0 * g2 / kappa);
  auto f = [&](Real aa) {
    const Real e = std::exp(base - 0.5 * tau * aa / kappa);
    const Real poly = kappa * sum * (gamma_plus * tau * (kappa * sum - aa) + 2.0 * gamma_minus * kappa) +
                      4.0 * g2 * (gamma_plus * tau * (aa + 2.0 * gamma_minus * kappa - 2.0 * gamma_plus * kappa) +
                                  4.0 * gamma_minus * kappa - 2.0 * gamma_plus * kappa) +
                      16.0 * g2 * g2 * (gamma_plus * tau + 2.0);
    return e * poly;
  };
  const Real denom = std::pow(4.0 * g2 + sum * kappa, 2) - 16.0 * g2 * gamma_plus * kappa;
  return -2.0 * g2 / a * (f(a) - f(-a)) / denom;
}

Real p1_resonant_limit(Real cooperativity, Real gamma, Real tau) {
  const Real c = cooperativity;
  const Real x = gamma * tau;
  const Real q = std::sqrt(1.0 + 4.0 * c * c);
  // m = prefactor exponential, mE = m * exp(x q / 2).
  const Real m = std::exp(-0.25 * x * (1.0 + 2.0 * c + q));
  const Real me = std::exp(-0.25 * x * (1.0 + 2.0 * c - q));
  const Real em1 = me - m;
  const Real ep1 = me + m;
  const Real body = c * c * c * em1 * (8.0 + x) + 0.5 * c * c * (4.0 * em1 - x * q * ep1) +
                    0.25 * c * (em1 * (4.0 + x) + ep1 * x * q);
  return body / (q * q * q);
}

Real p1_gamma_dominant(Real c_tilde, Real kappa, Real tau) { return p1_adiabatic(c_tilde, kappa, tau); }

HeraldAnalytics herald_analytics(Real c_tilde, Real gamma, Real tau, Real tau_prime) {
  require_positive_c(c_tilde);
  if (c_tilde == 1.0) throw DomainError("herald_analytics: no closed form at C_tilde = 1");
  HeraldAnalytics h;
  const Real window = -std::expm1(-gamma * tau_prime);
  h.n = window * c_tilde / (1.0 - c_tilde) * (std::exp(-gamma * c_tilde * tau) - std::exp(-gamma * tau));
  h.n_tilde = h.n;
  h.d_tilde = h.n;
  h.d = window * c_tilde / (1.0 + c_tilde) * (-std::expm1(-gamma * (1.0 + c_tilde) * tau));
  h.e = h.n / h.d;
  h.e_tilde = 1.0;
  return h;
}

AsymptoticValue purity_estimate(Real c_tilde) {
  require_positive_c(c_tilde);
  AsymptoticValue v;
  v.value = std::clamp(1.0 - 2.0 * std::log(c_tilde) / c_tilde, 0.0, 1.0);
  v.asymptotic_warning = c_tilde < 3.0;
  return v;
}

ImperfectionSplit imperfection_split(Real c_tilde) {
  require_positive_c(c_tilde);
  ImperfectionSplit s;
  s.p0_max = std::clamp(1.0 / c_tilde, 0.0, 1.0);
  s.pgt1_max = std::clamp((std::log(c_tilde) - 1.0) / c_tilde, 0.0, 1.0);
  s.asymptotic_warning = c_tilde < 3.0;
  s.pgt1_small_c = 1.0 - 2.0 / M_E;
  return s;
}

DecoherenceThresholds decoherence_thresholds(const SystemParams& p, const DressedParams& d) {
  DecoherenceThresholds t;
  const Real e_over_kb = kHbarOverKb * p.omega_c * 1e9;
  t.t_crit = p.gamma > 0 ? e_over_kb / std::log1p(10.0 * p.kappa / p.gamma) : 0.0;
  const Real c2 = d.c * d.c;
  const Real s2 = d.s * d.s;
  t.lambda_crit1 = s2 > 0 ? 0.0081 * p.gamma * c2 * c2 / (4.0 * c2 * s2) : kInf;
  const Real diff = s2 - c2;
  t.lambda_crit2 = std::abs(diff) > 1e-12 ? 0.1 * p.gamma * c2 * c2 / (diff * diff) : kInf;
  return t;
}

Real cooperativity_from_pmax(Real p_max) {
  if (!(p_max > 0.0) || !(p_max < 1.0)) throw DomainError("cooperativity_from_pmax: P_max must lie in (0, 1)");
  const Real x = p_max - 1.0;
  if (x < -1.0 / M_E) throw DomainError("cooperativity_from_pmax: P_max below 1 - 1/e has no W_-1 preimage");
  const Real w = lambert_wm1(x);
  const Real c = std::exp(-w);
  return std::isfinite(c) ? c : kInf;
}

}  // namespace thz
