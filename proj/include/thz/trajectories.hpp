#pragma once

// Monte Carlo wavefunction unraveling of the dressed Jaynes-Cummings model
// with a time-dependent drive amplitude. Dressed quantities are recomputed
// from Omega(t) at every step; coordinates stay in the dressed basis.

#include "thz/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

namespace thz {

enum class PulseKind { Square, ExpRiseFall };

struct PulseShape {
  PulseKind kind = PulseKind::Square;
  Real tau = 0;    // ns
  Real tau_p = 0;  // ns, ExpRiseFall only

  /// Envelope in [0, 1]: 1 - exp(-t/tau_p) before tau, exp(-(t - tau)/tau_p) after.
  Real envelope(Real t) const;
};

enum class Channel { THz, Optical };

struct Jump {
  Real time = 0;
  Channel channel = Channel::THz;
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  std::vector<Jump> jumps;
  CVector final_state;
  std::vector<CVector> probe_states;  // normalized, one per probe time
};

class StepSizeUnderflow : public Error {
 public:
  using Error::Error;
};

struct TrajectoryOptions {
  int n_max = 2;
  std::vector<Real> probe_times;  // snapped to the nearest grid point
  bool stop_at_first_thz = false;  // first-passage runs: end at the first THz jump
};

/// Precomputes the time grid, the per-step RK4 propagators and the shared
/// no-jump path from |+,0>; run() is then a pure function of (seed, index).
class TrajectorySimulator {
 public:
  TrajectorySimulator(const SystemParams& p, const PulseShape& pulse, Real t_end,
                      const TrajectoryOptions& opts = {});
  ~TrajectorySimulator();
  TrajectorySimulator(TrajectorySimulator&&) noexcept;

  TrajectoryRecord run(std::uint64_t seed, std::uint64_t index = 0) const;

  Real step() const;  // largest step used
  std::size_t steps() const;
  Eigen::Index dim() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

TrajectoryRecord run_trajectory(const SystemParams& p, const PulseShape& pulse, Real t_end, std::uint64_t seed,
                                const TrajectoryOptions& opts = {});

struct WilsonInterval {
  Real lo = 0;
  Real hi = 0;
};
WilsonInterval wilson_interval(std::size_t successes, std::size_t trials, Real z = 1.959963984540054);

struct EnsembleResult {
  Real p1_hat = 0;
  WilsonInterval ci95;
  std::size_t n_traj = 0;
  std::size_t n_single = 0;
  std::vector<TrajectoryRecord> records;
};

/// Fraction of trajectories with exactly one THz jump in [0, pulse.tau].
EnsembleResult ensemble_p1(const SystemParams& p, const PulseShape& pulse, Real t_end, std::size_t n_traj,
                           std::uint64_t seed0, int workers = 1, const TrajectoryOptions& opts = {},
                           bool keep_records = false);

struct P1Curve {
  std::vector<Real> tau;
  std::vector<Real> p1_hat;
  std::vector<WilsonInterval> ci95;
  std::size_t n_traj = 0;
};

/// P1_hat over a grid of pulse lengths from one ensemble driven up to the
/// largest tau. THz jumps before tau_k only see the drive before tau_k, so
/// every grid point is an unbiased estimate for a pulse of length tau_k.
P1Curve ensemble_p1_curve(const SystemParams& p, const PulseShape& shape, const std::vector<Real>& taus,
                          std::size_t n_traj, std::uint64_t seed0, int workers = 1,
                          const TrajectoryOptions& opts = {});

/// Ensemble average of |psi><psi| at the probe times.
std::vector<CMatrix> ensemble_density(const SystemParams& p, const PulseShape& pulse, Real t_end,
                                      std::size_t n_traj, std::uint64_t seed0, const std::vector<Real>& probe_times,
                                      int workers = 1, int n_max = 2);

/// One line per jump: seed,index,jump_time_ns,channel
void write_jump_dump(std::ostream& os, const std::vector<TrajectoryRecord>& records);

}  // namespace thz
