#include "thz/spectral.hpp"

#include "thz/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string_view>

namespace thz {

namespace {

constexpr Real kNaN = std::numeric_limits<Real>::quiet_NaN();
constexpr Real kContractTol = 1e-8;

std::size_t matrix_hash(const SuperOp& m) {
  const std::string_view bytes(reinterpret_cast<const char*>(m.data()), sizeof(Complex) * m.size());
  return std::hash<std::string_view>{}(bytes) ^ (static_cast<std::size_t>(m.rows()) * 0x9e3779b97f4a7c15ULL);
}

CVector exp_lambda(const CVector& lambda, Real t) { return (lambda * t).array().exp().matrix(); }

}  // namespace

SpectralDecomposition decompose(const SuperOp& generator) {
  SpectralDecomposition dec = eig_general(generator);
  if (dec.biorthogonality > kContractTol || dec.residual > kContractTol)
    throw DefectiveMatrix("decompose: eigensystem misses the residual/biorthonormality contract", dec.condition);
  return dec;
}

std::shared_ptr<const SpectralDecomposition> DecompositionCache::get(const SuperOp& generator) {
  const std::size_t key = matrix_hash(generator);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      for (const Entry& e : it->second) {
        if (e.key.rows() == generator.rows() && e.key.cols() == generator.cols() && e.key == generator) {
          ++hits_;
          return e.value;
        }
      }
    }
  }
  // Decompose outside the lock; a concurrent duplicate is harmless and identical.
  auto value = std::make_shared<const SpectralDecomposition>(decompose(generator));
  std::lock_guard<std::mutex> lock(mutex_);
  ++misses_;
  entries_[key].push_back({generator, value});
  return value;
}

std::size_t DecompositionCache::hits() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return hits_;
}

std::size_t DecompositionCache::misses() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return misses_;
}

std::shared_ptr<const SpectralDecomposition> decompose_shared(const SuperOp& generator,
                                                              DecompositionCache* cache) {
  if (cache) return cache->get(generator);
  return std::make_shared<const SpectralDecomposition>(decompose(generator));
}

CMatrix integral_matrix(Real tau, const CVector& lambda) {
  if (tau < 0) throw DomainError("integral_matrix: negative time");
  const Eigen::Index n = lambda.size();
  CMatrix out(n, n);
  if (n == 0) return out;
  const Real scale = 1.0 + lambda.cwiseAbs().maxCoeff();
  const Real degenerate = 1e-10 * scale;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      Complex v;
      if (std::abs(lambda(i) - lambda(j)) <= degenerate) {
        v = tau * std::exp(0.5 * (lambda(i) + lambda(j)) * tau);
      } else {
        v = exp_divided_difference(lambda(i), lambda(j), tau);
      }
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

EmissionEngine::EmissionEngine(const SuperOp& generator, const SuperOp& jump, const CMatrix& rho0,
                               DecompositionCache* cache) {
  if (generator.rows() != jump.rows() || generator.rows() != rho0.size())
    throw DomainError("EmissionEngine: dimension mismatch");
  const SuperOp s = generator - jump;
  const CVector rho = vectorize(rho0);
  const CRowVector tr = trace_row(rho0.rows());
  try {
    dec_ = decompose_shared(s, cache);
  } catch (const DefectiveMatrix&) {
    dec_.reset();
  }
  if (dec_) {
    const CMatrix rt = dec_->right.transpose();
    t_ = tr * rt;
    b_ = dec_->left * jump * rt;
    y_ = dec_->left * rho;
  } else {
    s_ = s;
    k_ = jump;
    rho_ = rho;
    trace_ = tr;
  }
}

Real EmissionEngine::p0(Real tau) const {
  if (tau < 0) throw DomainError("p0: negative time");
  if (dec_) return (t_ * exp_lambda(dec_->lambda, tau).cwiseProduct(y_))(0).real();
  return (trace_ * expm(s_ * tau) * rho_)(0).real();
}

Real EmissionEngine::p1(Real tau) const {
  if (tau < 0) throw DomainError("p1: negative time");
  if (tau == 0) return 0.0;
  if (dec_) {
    const CMatrix kernel = integral_matrix(tau, dec_->lambda);
    return (t_ * kernel.cwiseProduct(b_) * y_)(0).real();
  }
  const Eigen::Index n = s_.rows();
  CMatrix block = CMatrix::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = s_;
  block.bottomRightCorner(n, n) = s_;
  block.bottomLeftCorner(n, n) = k_;
  const CMatrix e = expm(block * tau);
  return (trace_ * e.bottomLeftCorner(n, n) * rho_)(0).real();
}

Real EmissionEngine::p2(Real tau) const {
  if (tau < 0) throw DomainError("p2: negative time");
  if (tau == 0) return 0.0;
  if (dec_) {
    const CVector& lam = dec_->lambda;
    const Eigen::Index n = lam.size();
    Complex total = 0.0;
    std::vector<Complex> u(n), v(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) u[i] = t_(i) * b_(i, j);
      for (Eigen::Index k = 0; k < n; ++k) v[k] = b_(j, k) * y_(k);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (u[i] == 0.0) continue;
        Complex row = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          if (v[k] == 0.0) continue;
          row += exp_divided_difference(lam(i), lam(j), lam(k), tau) * v[k];
        }
        total += u[i] * row;
      }
    }
    return total.real();
  }
  const Eigen::Index n = s_.rows();
  CMatrix block = CMatrix::Zero(3 * n, 3 * n);
  for (int b = 0; b < 3; ++b) block.block(b * n, b * n, n, n) = s_;
  block.block(n, 0, n, n) = k_;
  block.block(2 * n, n, n, n) = k_;
  const CMatrix e = expm(block * tau);
  return (trace_ * e.block(2 * n, 0, n, n) * rho_)(0).real();
}

Real p0(const SuperOp& generator, const SuperOp& jump, const CMatrix& rho0, Real tau) {
  return EmissionEngine(generator, jump, rho0).p0(tau);
}
Real p1(const SuperOp& generator, const SuperOp& jump, const CMatrix& rho0, Real tau) {
  return EmissionEngine(generator, jump, rho0).p1(tau);
}
Real p2(const SuperOp& generator, const SuperOp& jump, const CMatrix& rho0, Real tau) {
  return EmissionEngine(generator, jump, rho0).p2(tau);
}

// ---------------------------------------------------------------------------

Real default_tau_prime(Real gamma) {
  if (!(gamma > 0)) throw DomainError("default_tau_prime: gamma must be positive");
  return 30.0 / gamma;
}

HeraldEngine::HeraldEngine(const Liouvillian& activation, const SuperOp& free_generator,
                           const SuperOp& free_k_opt, const SuperOp& rotation, const CMatrix& rho0,
                           DecompositionCache* cache) {
  const CVector rho = vectorize(rho0);
  free_dec_ = decompose_shared(free_generator - free_k_opt, cache);
  const CMatrix rt_free = free_dec_->right.transpose();
  t_free_ = trace_row(rho0.rows()) * rt_free;
  b_free_ = free_dec_->left * free_k_opt * rt_free;
  const CMatrix lu = free_dec_->left * rotation;

  auto fill = [&](Branch& br, const SuperOp& jump_gen, const SuperOp& ref_gen) {
    br.jump_dec = decompose_shared(jump_gen, cache);
    br.ref_dec = decompose_shared(ref_gen, cache);
    const CMatrix rt = br.jump_dec->right.transpose();
    br.b = br.jump_dec->left * activation.k_thz * rt;
    br.q = lu * rt;
    br.y = br.jump_dec->left * rho;
    br.q_ref = lu * br.ref_dec->right.transpose();
    br.y_ref = br.ref_dec->left * rho;
  };
  const SuperOp& l = activation.generator;
  fill(plain_, l - activation.k_thz, l);
  fill(tilde_, l - activation.k_thz - activation.k_opt, l - activation.k_opt);
}

HeraldEngine::HeraldEngine(const Model& m, DecompositionCache* cache)
    : HeraldEngine(m.liouvillian, m.free_generator, m.free_k_opt, m.rotation, m.rho0, cache) {}

CRowVector HeraldEngine::window_row(Real tau_prime) const {
  if (tau_prime < 0) throw DomainError("herald: negative free-decay window");
  const CMatrix kernel = integral_matrix(tau_prime, free_dec_->lambda);
  return t_free_ * kernel.cwiseProduct(b_free_);
}

HeraldParts HeraldEngine::evaluate(const Branch& br, Real tau, Real tau_prime) const {
  if (tau < 0) throw DomainError("herald: negative activation time");
  const CRowVector w = window_row(tau_prime);
  HeraldParts out;
  const CMatrix kernel = integral_matrix(tau, br.jump_dec->lambda);
  out.numerator = (w * br.q * kernel.cwiseProduct(br.b) * br.y)(0).real();
  out.denominator = (w * br.q_ref * exp_lambda(br.ref_dec->lambda, tau).cwiseProduct(br.y_ref))(0).real();
  if (!(std::abs(out.denominator) >= kNegligibleDenominator))
    throw DivisionByNegligible("herald: probability of a late optical photon is negligible");
  out.value = out.numerator / out.denominator;
  return out;
}

HeraldParts HeraldEngine::e(Real tau, Real tau_prime) const { return evaluate(plain_, tau, tau_prime); }

HeraldParts HeraldEngine::e_tilde(Real tau, Real tau_prime) const { return evaluate(tilde_, tau, tau_prime); }

HeraldParts herald_E(const Model& m, Real tau, Real tau_prime) { return HeraldEngine(m).e(tau, tau_prime); }

HeraldParts herald_E_tilde(const Model& m, Real tau, Real tau_prime) {
  return HeraldEngine(m).e_tilde(tau, tau_prime);
}

// ---------------------------------------------------------------------------

IndistinguishabilityEngine::IndistinguishabilityEngine(const SuperOp& generator, const CMatrix& a_op,
                                                       const CMatrix& rho0, DecompositionCache* cache) {
  dec_ = decompose_shared(generator, cache);
  const CMatrix rt = dec_->right.transpose();
  const CRowVector tr = trace_row(rho0.rows());
  const CMatrix ad = a_op.adjoint();
  u_a_ = tr * left_mul(a_op) * rt;
  u_n_ = tr * left_mul(ad * a_op) * rt;
  m1_ = dec_->left * right_mul(ad) * rt;
  m2_ = dec_->left * sandwich(a_op, ad) * rt;
  y_ = dec_->left * vectorize(rho0);
}

namespace {

struct HomSums {
  Real numerator = 0;
  Real denominator = 0;
};

// Trapezoid sums over the grid points that are multiples of `stride`.
HomSums hom_sums(const RVector& pop, const CVector& mean_a, const CMatrix& g1, const CMatrix& g2, int n,
                 int stride, Real h) {
  HomSums s;
  const Real hs = h * stride;
  for (int i = 0; i <= n; i += stride) {
    const Real wi = (i == 0 || i == n) ? 0.5 : 1.0;
    for (int j = 0; j <= n; j += stride) {
      const Real wj = (j == 0 || j == n) ? 0.5 : 1.0;
      const Real gpop = pop(i + j) * pop(i);
      const Real num = gpop + g2(j, i).real() - std::norm(g1(j, i));
      const Real den = 2.0 * gpop - std::norm(std::conj(mean_a(i)) * mean_a(i + j));
      s.numerator += wi * wj * num;
      s.denominator += wi * wj * den;
    }
  }
  s.numerator *= hs * hs;
  s.denominator *= hs * hs;
  return s;
}

}  // namespace

IndistinguishabilityResult IndistinguishabilityEngine::evaluate(Real tau, int grid_n) const {
  if (grid_n < 50) throw DomainError("indistinguishability: grid_n must be >= 50");
  if (!(tau > 0)) throw DomainError("indistinguishability: tau must be positive");
  const int n = grid_n;
  const Real h = tau / n;
  const CVector& lam = dec_->lambda;
  const Eigen::Index dim = lam.size();

  CMatrix c_all(dim, 2 * n + 1);
  for (int k = 0; k <= 2 * n; ++k) c_all.col(k) = exp_lambda(lam, k * h).cwiseProduct(y_);
  const CMatrix c = c_all.leftCols(n + 1);
  CMatrix e(dim, n + 1);
  for (int k = 0; k <= n; ++k) e.col(k) = exp_lambda(lam, k * h);

  const RVector pop = (u_n_ * c_all).transpose().real();
  const CVector mean_a = (u_a_ * c_all).transpose();
  const CMatrix g1 = e.transpose() * (u_a_.transpose().asDiagonal() * (m1_ * c));
  const CMatrix g2 = e.transpose() * (u_n_.transpose().asDiagonal() * (m2_ * c));

  const HomSums full = hom_sums(pop, mean_a, g1, g2, n, 1, h);
  if (!(full.denominator > 0))
    throw NegativeDenominator("indistinguishability: non-positive denominator; refine the grid");

  IndistinguishabilityResult r;
  r.grid_n = n;
  r.numerator = full.numerator;
  r.denominator = full.denominator;
  r.value = 1.0 - full.numerator / full.denominator;
  if (n % 2 == 0) {
    const HomSums half = hom_sums(pop, mean_a, g1, g2, n, 2, h);
    if (half.denominator > 0) r.error_estimate = std::abs(r.value - (1.0 - half.numerator / half.denominator)) / 3.0;
  } else {
    const IndistinguishabilityResult coarse = evaluate(tau, std::max(50, n / 2 * 2));
    r.error_estimate = std::abs(r.value - coarse.value) / 3.0;
  }
  return r;
}

IndistinguishabilityResult indistinguishability(const SuperOp& generator, const CMatrix& a_op,
                                                const CMatrix& rho0, Real tau, int grid_n) {
  return IndistinguishabilityEngine(generator, a_op, rho0).evaluate(tau, grid_n);
}

// ---------------------------------------------------------------------------

TauMaxResult find_tau_max(const std::function<Real(Real)>& p1, Real gamma, Real c_tilde,
                          std::optional<Real> fallback_scale) {
  Real estimate = 0;
  if (gamma > 0 && c_tilde > 0 && std::isfinite(c_tilde)) {
    try {
      estimate = tau_pmax(c_tilde, gamma).tau_max;
    } catch (const DomainError&) {
      estimate = 0;
    }
  }
  if (!(estimate > 0) || !std::isfinite(estimate)) {
    if (fallback_scale && *fallback_scale > 0 && std::isfinite(*fallback_scale)) {
      estimate = *fallback_scale;
    } else {
      throw BracketFailure("find_tau_max: no analytic estimate and no fallback time scale");
    }
  }

  TauMaxResult r;
  const Real lo = 0.1 * estimate;
  const Real hi = 10.0 * estimate;
  auto f = [&](Real t) {
    ++r.evaluations;
    return p1(t);
  };

  // Coarse log scan guards against a secondary local maximum.
  constexpr int kScan = 41;
  std::vector<Real> ts(kScan), ps(kScan);
  int best = 0;
  for (int k = 0; k < kScan; ++k) {
    ts[k] = lo * std::pow(hi / lo, static_cast<Real>(k) / (kScan - 1));
    ps[k] = f(ts[k]);
    if (ps[k] > ps[best]) best = k;
  }
  Real a = ts[std::max(best - 1, 0)];
  Real b = ts[std::min(best + 1, kScan - 1)];

  const Real invphi = 0.5 * (std::sqrt(5.0) - 1.0);
  Real x1 = b - invphi * (b - a);
  Real x2 = a + invphi * (b - a);
  Real f1 = f(x1);
  Real f2 = f(x2);
  const Real tol = 1e-10 * estimate;
  while (b - a > tol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = f(x1);
    }
  }
  r.tau_max = 0.5 * (a + b);
  r.p_max = f(r.tau_max);
  if (ps[best] > r.p_max) {
    r.tau_max = ts[best];
    r.p_max = ps[best];
  }
  const Real edge = 1e-6 * (hi - lo);
  if (r.tau_max - lo <= edge || hi - r.tau_max <= edge * 100.0) r.monotone = true;
  return r;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Analytic: return "analytic";
    case Method::Spectral: return "spectral";
    case Method::Trajectory: return "trajectory";
  }
  return "spectral";
}

EmissionStats compute_stats(const Model& m, const StatsRequest& req, DecompositionCache* cache) {
  EmissionStats st;
  st.method = Method::Spectral;
  if (m.x_dropped_pairs > 0)
    st.warnings.push_back("DegenerateSpectrum: " + std::to_string(m.x_dropped_pairs) + " pairs dropped from X");

  const Liouvillian& l = m.liouvillian;
  const EmissionEngine engine(l.generator, l.k_thz, m.rho0, cache);
  st.fallback = engine.fallback();
  if (st.fallback) st.warnings.push_back("DefectiveMatrix: block-exponential fallback used");

  const Real gamma = m.gamma_opt;
  const Real c_tilde = m.dressed.cooperativity_eff;
  std::optional<Real> scale;
  if (m.dressed.purcell > 0 && std::isfinite(m.dressed.purcell)) scale = 1.0 / m.dressed.purcell;

  if (req.optimize) {
    const TauMaxResult opt = find_tau_max([&](Real t) { return engine.p1(t); }, gamma, c_tilde, scale);
    st.tau_max = opt.tau_max;
    st.p_max = opt.p_max;
    st.monotone = opt.monotone;
    if (opt.monotone) st.warnings.push_back("MonotoneFlag: P1 maximum on the bracket edge");
  }
  if (req.tau) {
    st.tau = *req.tau;
  } else if (req.optimize) {
    st.tau = st.tau_max;
  } else {
    throw DomainError("compute_stats: no evaluation time");
  }

  st.p0 = engine.p0(st.tau);
  st.p1 = engine.p1(st.tau);
  st.p_gt1 = 1.0 - st.p0 - st.p1;
  if (st.p_gt1 < 0 && st.p_gt1 > -1e-9) st.p_gt1 = 0;

  if (req.p2) {
    st.p2 = engine.p2(st.tau);
    const Real denom = st.p1 + 2.0 * st.p2;
    st.g2 = denom > 0 ? 2.0 * st.p2 / (denom * denom) : kNaN;
    st.purity = 1.0 - st.g2;
  } else {
    st.p2 = kNaN;
    st.g2 = kNaN;
    st.purity = kNaN;
  }
  st.purity_estimate = c_tilde > 0 ? purity_estimate(c_tilde).value : kNaN;

  st.e = kNaN;
  st.e_tilde = kNaN;
  if (req.herald) {
    const Real tp = req.tau_prime ? *req.tau_prime : default_tau_prime(gamma);
    try {
      const HeraldEngine herald(m, cache);
      st.e = herald.e(st.tau, tp).value;
      st.e_tilde = herald.e_tilde(st.tau, tp).value;
    } catch (const DivisionByNegligible& ex) {
      st.warnings.push_back(std::string("DivisionByNegligible: ") + ex.what());
    }
  }

  st.indist = kNaN;
  if (req.indist) {
    const Real ti = req.indist_tau ? *req.indist_tau : st.tau;
    try {
      const IndistinguishabilityResult ir =
          IndistinguishabilityEngine(l.generator, m.emission_op, m.rho0, cache).evaluate(ti, req.grid_n);
      st.indist = ir.value;
      st.indist_error = ir.error_estimate;
    } catch (const NegativeDenominator& ex) {
      st.warnings.push_back(std::string("NegativeDenominator: ") + ex.what());
    }
  }
  return st;
}

int resolve_n_max(const SystemParams& p, Flavor flavor, const ModelOptions& opts) {
  if (p.n_max) return *p.n_max;
  if (flavor == Flavor::Adiabatic) return 0;
  const DressedParams d = derive_dressed(p);
  Real probe = 0;
  if (d.purcell > 0 && std::isfinite(d.purcell)) {
    probe = 2.0 / d.purcell;
  } else if (p.kappa > 0) {
    probe = 2.0 / p.kappa;
  } else {
    probe = 1.0;
  }
  Real norm = 0;
  auto p1_at = [&](int n) {
    const Model m = build_model(p, flavor, n, opts);
    norm = inf_norm(m.liouvillian.generator);
    return EmissionEngine(m.liouvillian.generator, m.liouvillian.k_thz, m.rho0).p1(probe);
  };
  constexpr int kCap = 20;
  int n = 3;
  Real prev = p1_at(n);
  // Long probes on a stiff generator carry rounding of order eps |L| t; changes
  // below that are noise, not truncation.
  const Real tol = std::max(1e-8, 16.0 * std::numeric_limits<Real>::epsilon() * norm * probe);
  while (n < kCap) {
    const int next = std::min(2 * n, kCap);
    const Real cur = p1_at(next);
    if (std::abs(cur - prev) < tol) return n;
    n = next;
    prev = cur;
  }
  return kCap;
}

}  // namespace thz
