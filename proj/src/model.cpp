#include "thz/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace thz {

namespace {

void require_nonnegative(Real v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v))
    throw DomainError(std::string("SystemParams: ") + name + " must be a finite non-negative rate");
}

CMatrix tls_zeta_plus() {
  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 1) = 1.0;
  return m;
}

CMatrix tls_zeta_z() {
  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = -1.0;
  return m;
}

CMatrix fock_annihilation(int n_max) {
  const int nf = n_max + 1;
  CMatrix a = CMatrix::Zero(nf, nf);
  for (int n = 1; n < nf; ++n) a(n - 1, n) = std::sqrt(static_cast<Real>(n));
  return a;
}

}  // namespace

SystemParams SystemParams::from_ghz(const RatesGHz& r, Real temperature_k, std::optional<int> n_max) {
  require_nonnegative(r.chi, "chi");
  require_nonnegative(r.kappa, "kappa");
  require_nonnegative(r.gamma, "gamma");
  require_nonnegative(r.omega, "omega");
  require_nonnegative(r.omega_c, "omega_c");
  require_nonnegative(r.dephasing, "dephasing");
  require_nonnegative(temperature_k, "temperature");
  if (n_max && *n_max < 0) throw DomainError("SystemParams: n_max must be >= 0");

  SystemParams p;
  p.chi = kTwoPi * r.chi;
  p.kappa = kTwoPi * r.kappa;
  p.gamma = kTwoPi * r.gamma;
  p.omega = kTwoPi * r.omega;
  p.omega_c = kTwoPi * r.omega_c;
  p.delta = kTwoPi * (r.delta ? *r.delta : resonant_detuning(r.omega, r.omega_c));
  p.dephasing = kTwoPi * r.dephasing;
  p.temperature = temperature_k;
  p.n_max = n_max;
  return p;
}

RatesGHz SystemParams::to_ghz() const {
  RatesGHz r;
  r.chi = chi / kTwoPi;
  r.kappa = kappa / kTwoPi;
  r.gamma = gamma / kTwoPi;
  r.omega = omega / kTwoPi;
  r.omega_c = omega_c / kTwoPi;
  r.delta = delta / kTwoPi;
  r.dephasing = dephasing / kTwoPi;
  return r;
}

Real resonant_detuning(Real omega, Real omega_c) {
  if (omega_c < omega) throw DomainError("resonant_detuning: omega_c must be >= omega");
  return std::sqrt((omega_c - omega) * (omega_c + omega));
}

DressedParams derive_dressed(const SystemParams& p) {
  DressedParams d;
  d.omega_r = std::hypot(p.delta, p.omega);
  if (p.omega == 0.0) {
    d.h = p.delta > 0 ? 0.0 : 1.0;
  } else if (p.delta >= 0) {
    // (Omega_R - Delta) / Omega without cancellation.
    d.h = p.omega / (d.omega_r + p.delta);
  } else {
    d.h = (d.omega_r - p.delta) / p.omega;
  }
  d.theta = std::atan(d.h);
  d.s = std::sin(d.theta);
  d.c = std::cos(d.theta);
  const Real c2 = d.c * d.c;
  const Real s2 = d.s * d.s;
  d.g = -2.0 * d.c * d.s * p.chi;
  d.gamma_plus = p.gamma * c2 * c2;
  d.gamma_minus = p.gamma * s2 * s2;
  d.gamma_z = p.gamma * c2 * s2;
  d.purcell = p.kappa > 0 ? 4.0 * d.g * d.g / p.kappa : INFINITY;
  d.cooperativity = (p.kappa * p.gamma) > 0 ? 4.0 * p.chi * p.chi / (p.kappa * p.gamma) : INFINITY;
  const Real hh = d.h * d.h;
  d.cooperativity_eff = d.h > 0 ? 4.0 * d.cooperativity / (hh + 1.0 / hh) : 0.0;
  return d;
}

CVector bare_excited(Real theta) {
  CVector v(2);
  v << std::sin(theta), -std::cos(theta);
  return v;
}

CVector bare_ground(Real theta) {
  CVector v(2);
  v << std::cos(theta), std::sin(theta);
  return v;
}

OperatorSet build_operators(int n_max, Real theta) {
  if (n_max < 0) throw DomainError("build_operators: n_max must be >= 0");
  OperatorSet ops;
  ops.n_max = n_max;
  ops.theta = theta;
  const int nf = n_max + 1;
  const CMatrix id_f = CMatrix::Identity(nf, nf);
  const CMatrix id_t = CMatrix::Identity(2, 2);
  const Real s = std::sin(theta);
  const Real c = std::cos(theta);

  const CMatrix zp = tls_zeta_plus();
  const CMatrix zm = zp.adjoint();
  const CMatrix zz = tls_zeta_z();
  const CMatrix sp = c * s * zz + s * s * zp - c * c * zm;
  const CMatrix sm = c * s * zz + s * s * zm - c * c * zp;
  const CMatrix sz = (s * s - c * c) * zz - 2.0 * c * s * (zp + zm);
  const CMatrix sy = Complex(0, -1) * (sp - sm);

  ops.identity = CMatrix::Identity(2 * nf, 2 * nf);
  ops.a = kron(id_t, fock_annihilation(n_max));
  ops.a_dag = ops.a.adjoint();
  ops.zeta_plus = kron(zp, id_f);
  ops.zeta_minus = kron(zm, id_f);
  ops.zeta_z = kron(zz, id_f);
  ops.sigma_plus = kron(sp, id_f);
  ops.sigma_minus = kron(sm, id_f);
  ops.sigma_z = kron(sz, id_f);
  ops.sigma_y = kron(sy, id_f);
  return ops;
}

CMatrix build_hamiltonian(const SystemParams& p, const DressedParams& d, const OperatorSet& ops) {
  const CMatrix& a = ops.a;
  const CMatrix& ad = ops.a_dag;
  const Real cs = d.c * d.s;
  const Real s2mc2 = d.s * d.s - d.c * d.c;
  CMatrix h = 0.5 * d.omega_r * ops.zeta_z + p.omega_c * ad * a;
  h -= 2.0 * cs * p.chi * (a * ops.zeta_plus + ad * ops.zeta_minus);
  h -= 2.0 * cs * p.chi * (a * ops.zeta_minus + ad * ops.zeta_plus);
  h += p.chi * (a + ad) * (ops.identity + s2mc2 * ops.zeta_z);
  // Exact Hermitian symmetrization; the terms commute across factors.
  return 0.5 * (h + h.adjoint());
}

CMatrix build_hamiltonian(const SystemParams& p, int n_max) {
  const DressedParams d = derive_dressed(p);
  return build_hamiltonian(p, d, build_operators(n_max, d.theta));
}

CMatrix build_jc_hamiltonian(const DressedParams& d, Real omega_c, const OperatorSet& ops) {
  CMatrix h = d.g * (ops.a * ops.zeta_plus + ops.a_dag * ops.zeta_minus);
  h += 0.5 * (d.omega_r - omega_c) * ops.zeta_z;
  return h;
}

CollapseOperatorX build_x(const CMatrix& hamiltonian, const CMatrix& a, Real omega_c) {
  if (omega_c <= 0) throw DomainError("build_x: omega_c must be positive");
  const HermitianEigen eig = eig_hermitian(hamiltonian);
  const CMatrix& v = eig.vectors;
  const CMatrix quad = v.adjoint() * (a + a.adjoint()) * v;
  const Eigen::Index n = hamiltonian.rows();
  CMatrix x_eig = CMatrix::Zero(n, n);
  CollapseOperatorX out;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = j + 1; k < n; ++k) {
      const Real w = eig.values(k) - eig.values(j);
      if (w < 1e-9 * omega_c) {
        ++out.dropped_pairs;
        continue;
      }
      x_eig(j, k) = std::sqrt(w / omega_c) * quad(j, k);
    }
  }
  out.x = v * x_eig * v.adjoint();
  return out;
}

std::string to_string(Flavor f) {
  switch (f) {
    case Flavor::Full: return "full";
    case Flavor::Adiabatic: return "adiabatic";
    case Flavor::JC: return "jc";
    case Flavor::NearResonant: return "near_resonant";
  }
  return "full";
}

Flavor flavor_from_string(const std::string& s) {
  if (s == "full") return Flavor::Full;
  if (s == "adiabatic") return Flavor::Adiabatic;
  if (s == "jc") return Flavor::JC;
  if (s == "near_resonant") return Flavor::NearResonant;
  throw DomainError("unknown flavor '" + s + "'");
}

Real thermal_occupation(Real omega_c, Real temperature) {
  if (temperature < 0) throw DomainError("thermal_occupation: negative temperature");
  if (temperature == 0.0 || omega_c <= 0) return 0.0;
  const Real x = kHbarOverKb * omega_c * 1e9 / temperature;
  return 1.0 / std::expm1(x);
}

CMatrix thermal_state(Real n_bar, int n_max) {
  if (n_bar < 0) throw DomainError("thermal_state: negative occupation");
  const int nf = n_max + 1;
  CMatrix rho = CMatrix::Zero(nf, nf);
  if (n_bar == 0.0) {
    rho(0, 0) = 1.0;
    return rho;
  }
  const Real q = n_bar / (n_bar + 1.0);
  Real w = 1.0;
  Real total = 0.0;
  for (int n = 0; n < nf; ++n) {
    rho(n, n) = w;
    total += w;
    w *= q;
  }
  return rho / total;
}

DephasingRates dephasing_rates(Real lambda, Real theta) {
  if (lambda < 0) throw DomainError("dephasing_rates: negative rate");
  const Real s = std::sin(theta);
  const Real c = std::cos(theta);
  const Real s2 = s * s;
  const Real c2 = c * c;
  DephasingRates r;
  r.plus = 4.0 * lambda * c2 * s2;
  r.minus = r.plus;
  r.z = lambda * (s2 - c2) * (s2 - c2);
  return r;
}

namespace {

SuperOp dephasing_dissipator(const SystemParams& p, const DressedParams& d, const OperatorSet& ops) {
  const DephasingRates r = dephasing_rates(p.dephasing, d.theta);
  const CMatrix op =
      std::sqrt(r.z) * ops.zeta_z - std::sqrt(r.minus) * ops.zeta_minus - std::sqrt(r.plus) * ops.zeta_plus;
  return 0.5 * dissipator(op);
}

CMatrix optical_collapse(const DressedParams& d, const OperatorSet& ops) {
  return -std::sqrt(d.gamma_plus) * ops.zeta_plus + std::sqrt(d.gamma_minus) * ops.zeta_minus +
         std::sqrt(d.gamma_z) * ops.zeta_z;
}

struct Assembled {
  Liouvillian liouvillian;
  CMatrix emission_op;
  OperatorSet ops;
  int dropped_pairs = 0;
};

Assembled assemble(const SystemParams& p, Flavor flavor, const LiouvillianOptions& opts, bool emission_via_a) {
  const DressedParams d = derive_dressed(p);
  Assembled out;
  if (flavor == Flavor::Adiabatic) {
    if (opts.n_max != 0) throw FlavorMismatch("adiabatic flavor lives on the two-level dressed space (n_max = 0)");
    if (opts.thermal) throw FlavorMismatch("adiabatic flavor has no cavity mode for thermal occupation");
    out.ops = build_operators(0, d.theta);
    out.liouvillian = build_adiabatic_liouvillian(d.gamma_plus, d.purcell);
    if (opts.dephasing) out.liouvillian.generator += dephasing_dissipator(p, d, out.ops);
    out.emission_op = out.ops.zeta_minus;
    return out;
  }
  if (opts.n_max < 1) throw FlavorMismatch("cavity flavors need n_max >= 1");

  out.ops = build_operators(opts.n_max, d.theta);
  const OperatorSet& ops = out.ops;
  const Real n_bar = opts.thermal ? thermal_occupation(p.omega_c, p.temperature) : 0.0;

  CMatrix h;
  CMatrix jump;
  if (flavor == Flavor::JC) {
    h = build_jc_hamiltonian(d, p.omega_c, ops);
    jump = ops.a;
    out.emission_op = ops.a;
  } else {
    h = build_hamiltonian(p, d, ops);
    CollapseOperatorX cx = build_x(h, ops.a, p.omega_c);
    jump = std::move(cx.x);
    out.dropped_pairs = cx.dropped_pairs;
    out.emission_op = emission_via_a ? ops.a : jump;
  }

  Liouvillian& l = out.liouvillian;
  l.hilbert_dim = ops.dim();
  l.generator = commutator_generator(h);
  l.generator += 0.5 * p.kappa * (n_bar + 1.0) * dissipator(jump);
  if (n_bar > 0) l.generator += 0.5 * p.kappa * n_bar * dissipator(jump.adjoint());
  l.generator += 0.5 * dissipator(optical_collapse(d, ops));
  if (opts.dephasing) l.generator += dephasing_dissipator(p, d, ops);
  l.k_thz = p.kappa * (n_bar + 1.0) * sandwich(jump, jump.adjoint());
  l.k_opt = p.gamma * sandwich(ops.sigma_minus, ops.sigma_plus);
  return out;
}

}  // namespace

Liouvillian build_adiabatic_liouvillian(Real gamma_plus, Real purcell) {
  const OperatorSet ops = build_operators(0, 0.0);
  Liouvillian l;
  l.hilbert_dim = 2;
  l.generator = 0.5 * gamma_plus * dissipator(ops.zeta_plus) + 0.5 * purcell * dissipator(ops.zeta_minus);
  l.k_thz = purcell * sandwich(ops.zeta_minus, ops.zeta_plus);
  l.k_opt = gamma_plus * sandwich(ops.zeta_plus, ops.zeta_minus);
  return l;
}

Liouvillian build_liouvillian(const SystemParams& p, Flavor flavor, const LiouvillianOptions& opts) {
  return assemble(p, flavor, opts, false).liouvillian;
}

namespace {

CMatrix tls_initial(InitialState s, Real theta) {
  CVector v(2);
  if (s == InitialState::DressedPlus) {
    v << 1.0, 0.0;
  } else {
    v = bare_ground(theta);
  }
  return v * v.adjoint();
}

}  // namespace

Model build_model(const SystemParams& p, Flavor flavor, int n_max, const ModelOptions& opts) {
  LiouvillianOptions lo;
  lo.thermal = opts.thermal;
  lo.dephasing = opts.dephasing;
  lo.n_max = flavor == Flavor::Adiabatic ? 0 : n_max;
  Assembled as = assemble(p, flavor, lo, opts.emission_via_a);

  Model m;
  m.flavor = flavor;
  m.n_max = lo.n_max;
  m.dressed = derive_dressed(p);
  m.liouvillian = std::move(as.liouvillian);
  m.hilbert_dim = as.ops.dim();
  m.emission_op = std::move(as.emission_op);
  m.gamma_opt = p.gamma;
  m.x_dropped_pairs = as.dropped_pairs;

  const OperatorSet& ops = as.ops;
  const CMatrix tls0 = tls_initial(opts.initial_state, m.dressed.theta);
  if (flavor == Flavor::Adiabatic) {
    m.rho0 = tls0;
    m.free_generator = 0.5 * p.gamma * dissipator(ops.zeta_plus);
    m.free_k_opt = p.gamma * sandwich(ops.zeta_plus, ops.zeta_minus);
    m.rotation = CMatrix::Identity(4, 4);
    return m;
  }

  const Real n_bar = opts.thermal ? thermal_occupation(p.omega_c, p.temperature) : 0.0;
  m.rho0 = kron(tls0, thermal_state(n_bar, n_max));

  m.free_generator = 0.5 * p.kappa * dissipator(ops.a) + 0.5 * p.gamma * dissipator(ops.sigma_minus);
  m.free_k_opt = p.gamma * sandwich(ops.sigma_minus, ops.sigma_plus);
  const Real th = m.dressed.theta;
  const CMatrix u = std::cos(th) * ops.identity - Complex(0, 1) * std::sin(th) * ops.sigma_y;
  m.rotation = sandwich(u, u.adjoint());
  return m;
}

Model build_adiabatic_model(Real gamma, Real cooperativity_eff) {
  if (gamma < 0 || cooperativity_eff < 0) throw DomainError("build_adiabatic_model: negative rate");
  const OperatorSet ops = build_operators(0, 0.0);
  Model m;
  m.flavor = Flavor::Adiabatic;
  m.n_max = 0;
  m.hilbert_dim = 2;
  m.dressed.gamma_plus = gamma;
  m.dressed.purcell = gamma * cooperativity_eff;
  m.dressed.cooperativity_eff = cooperativity_eff;
  m.liouvillian = build_adiabatic_liouvillian(gamma, gamma * cooperativity_eff);
  m.emission_op = ops.zeta_minus;
  m.rho0 = CMatrix::Zero(2, 2);
  m.rho0(0, 0) = 1.0;
  m.free_generator = 0.5 * gamma * dissipator(ops.zeta_plus);
  m.free_k_opt = gamma * sandwich(ops.zeta_plus, ops.zeta_minus);
  m.rotation = CMatrix::Identity(4, 4);
  m.gamma_opt = gamma;
  return m;
}

}  // namespace thz
