#pragma once

// Correlator engine built on the biorthonormal eigensystem of the generator.
// Everything reduces to products of the precomputed rows/matrices
//   T = <1| R^T,  B = L K R^T,  Y = L rho0
// with integral kernels of the eigenvalues.

#include "thz/model.hpp"

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace thz {

class DivisionByNegligible : public Error {
 public:
  using Error::Error;
};

class NegativeDenominator : public Error {
 public:
  using Error::Error;
};

class BracketFailure : public Error {
 public:
  using Error::Error;
};

SpectralDecomposition decompose(const SuperOp& generator);

/// Memoizes decompositions by exact matrix content. Thread-safe.
class DecompositionCache {
 public:
  std::shared_ptr<const SpectralDecomposition> get(const SuperOp& generator);
  std::size_t hits() const;
  std::size_t misses() const;

 private:
  struct Entry {
    SuperOp key;
    std::shared_ptr<const SpectralDecomposition> value;
  };
  mutable std::mutex mutex_;
  std::unordered_map<std::size_t, std::vector<Entry>> entries_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

std::shared_ptr<const SpectralDecomposition> decompose_shared(const SuperOp& generator,
                                                              DecompositionCache* cache);

/// I_ij = int_0^tau exp(lambda_i (tau - t)) exp(lambda_j t) dt.
CMatrix integral_matrix(Real tau, const CVector& lambda);

/// Photon-number-resolved probabilities for the jump superoperator K.
/// Falls back to block-matrix exponentials if the no-jump generator is defective.
class EmissionEngine {
 public:
  EmissionEngine(const SuperOp& generator, const SuperOp& jump, const CMatrix& rho0,
                 DecompositionCache* cache = nullptr);

  Real p0(Real tau) const;
  Real p1(Real tau) const;
  Real p2(Real tau) const;

  bool fallback() const { return dec_ == nullptr; }
  const SpectralDecomposition* decomposition() const { return dec_.get(); }

 private:
  std::shared_ptr<const SpectralDecomposition> dec_;
  CRowVector t_;
  CMatrix b_;
  CVector y_;
  // fallback data
  SuperOp s_;
  SuperOp k_;
  CVector rho_;
  CRowVector trace_;
};

Real p0(const SuperOp& generator, const SuperOp& jump, const CMatrix& rho0, Real tau);
Real p1(const SuperOp& generator, const SuperOp& jump, const CMatrix& rho0, Real tau);
Real p2(const SuperOp& generator, const SuperOp& jump, const CMatrix& rho0, Real tau);

struct HeraldParts {
  Real numerator = 0;
  Real denominator = 0;
  Real value = 0;
};

/// E and E~ for the activation generator followed by the rotation U and free decay.
class HeraldEngine {
 public:
  HeraldEngine(const Liouvillian& activation, const SuperOp& free_generator, const SuperOp& free_k_opt,
               const SuperOp& rotation, const CMatrix& rho0, DecompositionCache* cache = nullptr);
  explicit HeraldEngine(const Model& m, DecompositionCache* cache = nullptr);

  HeraldParts e(Real tau, Real tau_prime) const;
  HeraldParts e_tilde(Real tau, Real tau_prime) const;

 private:
  struct Branch {
    std::shared_ptr<const SpectralDecomposition> jump_dec;  // no-jump generator around K
    std::shared_ptr<const SpectralDecomposition> ref_dec;   // generator of the denominator
    CMatrix b, q, q_ref;
    CVector y, y_ref;
  };
  HeraldParts evaluate(const Branch& br, Real tau, Real tau_prime) const;
  CRowVector window_row(Real tau_prime) const;

  std::shared_ptr<const SpectralDecomposition> free_dec_;
  CRowVector t_free_;
  CMatrix b_free_;
  Branch plain_;
  Branch tilde_;
};

inline constexpr Real kNegligibleDenominator = 1e-12;

HeraldParts herald_E(const Model& m, Real tau, Real tau_prime);
HeraldParts herald_E_tilde(const Model& m, Real tau, Real tau_prime);

/// Default free-decay window 30/gamma.
Real default_tau_prime(Real gamma);

struct IndistinguishabilityResult {
  Real value = 0;
  Real error_estimate = 0;  // Richardson estimate from the half grid
  Real numerator = 0;
  Real denominator = 0;
  int grid_n = 0;
};

/// HOM visibility over [0, tau]^2 under the generator, correlators by quantum regression.
class IndistinguishabilityEngine {
 public:
  IndistinguishabilityEngine(const SuperOp& generator, const CMatrix& a_op, const CMatrix& rho0,
                             DecompositionCache* cache = nullptr);
  IndistinguishabilityResult evaluate(Real tau, int grid_n = 200) const;

 private:
  std::shared_ptr<const SpectralDecomposition> dec_;
  CRowVector u_a_;
  CRowVector u_n_;
  CMatrix m1_;
  CMatrix m2_;
  CVector y_;
};

IndistinguishabilityResult indistinguishability(const SuperOp& generator, const CMatrix& a_op,
                                                const CMatrix& rho0, Real tau, int grid_n = 200);

struct TauMaxResult {
  Real tau_max = 0;
  Real p_max = 0;
  bool monotone = false;  // maximum sits on the bracket edge
  int evaluations = 0;
};

/// Golden-section maximization on [0.1, 10] x the analytic tau_max estimate.
/// Without a usable (gamma, C_tilde) estimate, `fallback_scale` replaces it.
TauMaxResult find_tau_max(const std::function<Real(Real)>& p1, Real gamma, Real c_tilde,
                          std::optional<Real> fallback_scale = std::nullopt);

enum class Method { Analytic, Spectral, Trajectory };
std::string to_string(Method m);

struct EmissionStats {
  Real p0 = 0;
  Real p1 = 0;
  Real p2 = 0;
  Real p_gt1 = 0;
  Real g2 = 0;
  Real purity = 0;
  Real purity_estimate = 0;
  Real tau = 0;
  Real tau_max = 0;
  Real p_max = 0;
  Real e = 0;
  Real e_tilde = 0;
  Real indist = 0;
  Real indist_error = 0;
  Method method = Method::Spectral;
  std::optional<std::pair<Real, Real>> ci;
  bool fallback = false;
  bool monotone = false;
  std::vector<std::string> warnings;
};

struct StatsRequest {
  bool p2 = true;
  bool herald = true;
  bool indist = true;
  bool optimize = true;                  // locate tau_max and evaluate there when tau is empty
  std::optional<Real> tau;               // evaluation time; tau_max if empty
  std::optional<Real> indist_tau;        // separate time for I
  std::optional<Real> tau_prime;
  int grid_n = 200;
};

EmissionStats compute_stats(const Model& m, const StatsRequest& req, DecompositionCache* cache = nullptr);

/// Fock cutoff: explicit value, or start at 3 and double until P1(2/Gamma) moves by < 1e-8 (cap 20).
int resolve_n_max(const SystemParams& p, Flavor flavor, const ModelOptions& opts = {});

}  // namespace thz
