#include "thz/trajectories.hpp"

#include "thz/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

namespace thz {

namespace {

constexpr std::size_t kCheckpointStride = 256;
// Above this many stored complex entries the per-step propagators are rebuilt on demand.
constexpr std::size_t kMaxStoredEntries = std::size_t{1} << 22;
constexpr std::size_t kMaxCachedSteps = std::size_t{1} << 25;

Real rise(const PulseShape& p, Real t) {
  if (p.kind == PulseKind::Square) return 1.0;
  return -std::expm1(-t / p.tau_p);
}

Real fall(const PulseShape& p, Real t) {
  if (p.kind == PulseKind::Square) return 0.0;
  return std::exp(-(t - p.tau) / p.tau_p);
}

struct Segment {
  Real t0 = 0;
  Real h = 0;
  std::size_t first = 0;  // global index of the first step
  std::size_t count = 0;
  bool rising = true;
  bool constant = false;
};

std::uint64_t lo32(std::uint64_t v) { return v & 0xffffffffULL; }
std::uint64_t hi32(std::uint64_t v) { return v >> 32; }

}  // namespace

Real PulseShape::envelope(Real t) const { return t <= tau ? rise(*this, t) : fall(*this, t); }

struct TrajectorySimulator::Impl {
  SystemParams params;
  PulseShape pulse;
  Real t_end = 0;
  int n_max = 0;
  bool stop_at_first = false;
  OperatorSet ops;  // theta-independent pieces (a, zeta)
  CMatrix number;   // a^+ a
  CMatrix thz_op;   // sqrt(kappa) a
  CVector psi0;

  std::vector<Segment> segments;
  std::size_t total = 0;
  Real max_step = 0;

  std::vector<CMatrix> constant_m;  // per segment, when constant
  std::vector<CMatrix> stored_m;    // per global step, when affordable
  bool stored = false;

  // no-jump path from psi0
  bool path_cached = false;
  std::vector<Real> min_norm;       // running minimum of |psi|^2 after m steps, m = 0..total
  std::vector<CVector> checkpoints; // state after k * stride steps
  CVector path_end;

  std::vector<std::size_t> probe_steps;

  DressedParams dressed_at(Real envelope) const {
    SystemParams q = params;
    q.omega = envelope * params.omega;
    return derive_dressed(q);
  }

  CMatrix sigma_minus(Real theta) const {
    const Real s = std::sin(theta), c = std::cos(theta);
    return c * s * ops.zeta_z + s * s * ops.zeta_minus - c * c * ops.zeta_plus;
  }

  Real envelope_in(const Segment& seg, Real t) const { return seg.rising ? rise(pulse, t) : fall(pulse, t); }

  // -i H_eff at the given envelope
  CMatrix generator(Real envelope) const {
    const DressedParams d = dressed_at(envelope);
    const CMatrix sm = sigma_minus(d.theta);
    CMatrix h = build_jc_hamiltonian(d, params.omega_c, ops);
    h -= Complex(0, 0.5) * (params.kappa * number + params.gamma * (sm.adjoint() * sm));
    return Complex(0, -1) * h;
  }

  CMatrix rk4_matrix(const CMatrix& a1, const CMatrix& a2, const CMatrix& a3, Real h) const {
    const CMatrix& id = ops.identity;
    const CMatrix k1 = a1;
    const CMatrix k2 = a2 * (id + 0.5 * h * k1);
    const CMatrix k3 = a2 * (id + 0.5 * h * k2);
    const CMatrix k4 = a3 * (id + h * k3);
    return id + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }

  CMatrix build_step(const Segment& seg, std::size_t local) const {
    const Real t = seg.t0 + static_cast<Real>(local) * seg.h;
    return rk4_matrix(generator(envelope_in(seg, t)), generator(envelope_in(seg, t + 0.5 * seg.h)),
                      generator(envelope_in(seg, t + seg.h)), seg.h);
  }

  std::size_t segment_of(std::size_t step) const {
    std::size_t s = 0;
    while (s + 1 < segments.size() && step >= segments[s + 1].first) ++s;
    return s;
  }

  // Propagator of global step n; `scratch` holds it when nothing is stored.
  const CMatrix& step_matrix(std::size_t n, std::size_t seg_index, CMatrix& scratch) const {
    const Segment& seg = segments[seg_index];
    if (seg.constant) return constant_m[seg_index];
    if (stored) return stored_m[n];
    scratch = build_step(seg, n - seg.first);
    return scratch;
  }

  Real time_after(std::size_t m) const {
    if (m == 0 || segments.empty()) return 0.0;
    const std::size_t s = segment_of(m - 1);
    const Segment& seg = segments[s];
    return seg.t0 + static_cast<Real>(m - seg.first) * seg.h;
  }

  Real envelope_after(std::size_t m) const {
    if (m == 0) return envelope_in(segments.front(), 0.0);
    const Segment& seg = segments[segment_of(m - 1)];
    return envelope_in(seg, seg.t0 + static_cast<Real>(m - seg.first) * seg.h);
  }

  void setup(const TrajectoryOptions& opts);
  TrajectoryRecord run(std::uint64_t seed, std::uint64_t index) const;
};

void TrajectorySimulator::Impl::setup(const TrajectoryOptions& opts) {
  n_max = opts.n_max;
  if (n_max < 1) throw DomainError("trajectories: n_max must be at least 1");
  if (!(t_end >= pulse.tau) || pulse.tau < 0) throw DomainError("trajectories: need 0 <= tau <= t_end");
  if (pulse.kind == PulseKind::ExpRiseFall && !(pulse.tau_p > 0))
    throw DomainError("trajectories: ExpRiseFall needs tau_p > 0");

  ops = build_operators(n_max, 0.0);
  number = ops.a_dag * ops.a;
  thz_op = std::sqrt(params.kappa) * ops.a;
  psi0 = CVector::Zero(ops.dim());
  psi0(0) = 1.0;  // |+, 0>

  // step cap; the ramp cap only applies while the envelope is still moving
  Real cap = std::numeric_limits<Real>::infinity();
  if (params.kappa > 0) cap = std::min(cap, 1e-3 / params.kappa);
  if (params.gamma > 0) cap = std::min(cap, 1e-3 / params.gamma);
  const DressedParams d_on = dressed_at(1.0);
  const DressedParams d_off = dressed_at(0.0);
  const Real detuning = std::max(std::abs(d_on.omega_r - params.omega_c), std::abs(d_off.omega_r - params.omega_c));
  const Real coherent = std::abs(d_on.g) * std::sqrt(static_cast<Real>(n_max)) + 0.5 * detuning;
  if (coherent > 0) cap = std::min(cap, 1e-2 / coherent);
  const bool ramped = pulse.kind == PulseKind::ExpRiseFall;
  const Real ramp_cap = ramped ? std::min(cap, pulse.tau_p / 20.0) : cap;
  if (ramp_cap < 1e-9) throw StepSizeUnderflow("trajectories: required step below 1e-9 ns");

  auto add_segment = [&](Real t0, Real t1, bool rising, bool constant) {
    const Real len = t1 - t0;
    if (!(len > 0)) return;
    const Real c = constant ? cap : ramp_cap;
    Segment seg;
    seg.t0 = t0;
    seg.rising = rising;
    seg.count = std::isfinite(c) ? static_cast<std::size_t>(std::ceil(len / c)) : 1;
    seg.count = std::max<std::size_t>(seg.count, 1);
    seg.h = len / static_cast<Real>(seg.count);
    seg.first = total;
    seg.constant = constant;
    total += seg.count;
    max_step = std::max(max_step, seg.h);
    segments.push_back(seg);
  };
  if (!ramped) {
    add_segment(0.0, pulse.tau, true, true);
    add_segment(pulse.tau, t_end, false, true);
  } else {
    // exp(-40) is below half an ulp of 1, so the rise is exactly 1 from there on;
    // the tail of the fall is frozen at its e^-40 value
    const Real settle = 40.0 * pulse.tau_p;
    const Real rise_end = std::min(pulse.tau, settle);
    const Real fall_end = std::min(t_end, pulse.tau + settle);
    add_segment(0.0, rise_end, true, false);
    add_segment(rise_end, pulse.tau, true, true);
    add_segment(pulse.tau, fall_end, false, false);
    add_segment(fall_end, t_end, false, true);
  }

  constant_m.resize(segments.size());
  std::size_t varying = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (segments[s].constant) constant_m[s] = build_step(segments[s], 0);
    else varying += segments[s].count;
  }
  const std::size_t dim2 = static_cast<std::size_t>(ops.dim() * ops.dim());
  if (varying > 0 && varying * dim2 <= kMaxStoredEntries) {
    stored = true;
    stored_m.resize(total);
    for (std::size_t s = 0; s < segments.size(); ++s) {
      if (segments[s].constant) continue;
      for (std::size_t k = 0; k < segments[s].count; ++k) stored_m[segments[s].first + k] = build_step(segments[s], k);
    }
  }

  for (Real tp : opts.probe_times) {
    if (tp < 0 || tp > t_end) throw DomainError("trajectories: probe time outside [0, t_end]");
    std::size_t best = 0;
    Real best_dist = std::abs(tp);
    for (const Segment& seg : segments) {
      const Real k = std::round((tp - seg.t0) / seg.h);
      const Real kk = std::clamp(k, 0.0, static_cast<Real>(seg.count));
      const std::size_t m = seg.first + static_cast<std::size_t>(kk);
      const Real dist = std::abs(seg.t0 + kk * seg.h - tp);
      if (dist < best_dist) {
        best_dist = dist;
        best = m;
      }
    }
    probe_steps.push_back(best);
  }

  if (total <= kMaxCachedSteps) {
    path_cached = true;
    min_norm.resize(total + 1);
    checkpoints.reserve(total / kCheckpointStride + 1);
    CVector psi = psi0;
    CMatrix scratch;
    min_norm[0] = psi.squaredNorm();
    std::size_t seg = 0;
    for (std::size_t n = 0; n < total; ++n) {
      if (n % kCheckpointStride == 0) checkpoints.push_back(psi);
      while (seg + 1 < segments.size() && n >= segments[seg + 1].first) ++seg;
      psi = step_matrix(n, seg, scratch) * psi;
      min_norm[n + 1] = std::min(min_norm[n], psi.squaredNorm());
    }
    path_end = psi;
  }
}

TrajectoryRecord TrajectorySimulator::Impl::run(std::uint64_t seed, std::uint64_t index) const {
  std::seed_seq seq{lo32(seed), hi32(seed), lo32(index), hi32(index)};
  std::mt19937_64 rng(seq);
  auto uniform = [&rng] { return static_cast<Real>(rng() >> 11) * 0x1.0p-53; };

  TrajectoryRecord rec;
  rec.seed = seed;
  rec.index = index;
  rec.probe_states.resize(probe_steps.size());

  auto record_probes = [&](std::size_t m, const CVector& psi) {
    for (std::size_t i = 0; i < probe_steps.size(); ++i)
      if (probe_steps[i] == m) rec.probe_states[i] = psi / psi.norm();
  };

  CMatrix scratch;
  Real r = uniform();
  CVector psi = psi0;
  std::size_t start = 0;  // steps already taken

  if (path_cached) {
    // first m >= 1 with |psi_m|^2 <= r on the shared no-jump path
    const auto it = std::upper_bound(min_norm.begin() + 1, min_norm.end(), r,
                                     [](Real value, Real element) { return element <= value; });
    const std::size_t crossing = static_cast<std::size_t>(it - min_norm.begin());
    // probes before the crossing come from the shared path
    for (std::size_t i = 0; i < probe_steps.size(); ++i) {
      const std::size_t m = probe_steps[i];
      if (m >= crossing) continue;
      if (m == total) {
        rec.probe_states[i] = path_end / path_end.norm();
        continue;
      }
      std::size_t n = m / kCheckpointStride * kCheckpointStride;
      CVector p = checkpoints[n / kCheckpointStride];
      std::size_t seg = segment_of(n);
      for (; n < m; ++n) {
        while (seg + 1 < segments.size() && n >= segments[seg + 1].first) ++seg;
        p = step_matrix(n, seg, scratch) * p;
      }
      rec.probe_states[i] = p / p.norm();
    }
    if (crossing > total) {
      rec.final_state = path_end / path_end.norm();
      return rec;
    }
    // state just before the crossing step
    const std::size_t before = crossing - 1;
    psi = checkpoints[before / kCheckpointStride];
    std::size_t n = before / kCheckpointStride * kCheckpointStride;
    std::size_t seg = segment_of(n);
    for (; n < before; ++n) {
      while (seg + 1 < segments.size() && n >= segments[seg + 1].first) ++seg;
      psi = step_matrix(n, seg, scratch) * psi;
    }
    start = before;
  } else {
    record_probes(0, psi);
  }

  std::size_t seg = total > 0 ? segment_of(start) : 0;
  bool check_fixed = false;
  for (std::size_t n = start; n < total; ++n) {
    while (seg + 1 < segments.size() && n >= segments[seg + 1].first) {
      ++seg;
      check_fixed = segments[seg].constant;
    }
    const CMatrix& m = step_matrix(n, seg, scratch);
    CVector next = m * psi;
    if (check_fixed) {
      check_fixed = false;
      if (next == psi) {
        // Exact fixed point of a constant propagator: the rest of the segment is a no-op.
        const std::size_t last = segments[seg].first + segments[seg].count;
        for (std::size_t k = n + 1; k <= last; ++k) record_probes(k, psi);
        n = last - 1;
        continue;
      }
    }
    psi = std::move(next);
    const std::size_t after = n + 1;
    if (psi.squaredNorm() <= r) {
      const Real env = envelope_after(after);
      const DressedParams d = dressed_at(env);
      const CMatrix opt = std::sqrt(params.gamma) * sigma_minus(d.theta);
      const CVector thz_psi = thz_op * psi;
      const CVector opt_psi = opt * psi;
      const Real w_thz = thz_psi.squaredNorm();
      const Real w_opt = opt_psi.squaredNorm();
      const Real u = uniform();
      Jump j;
      j.time = time_after(after);
      if (u * (w_thz + w_opt) < w_thz) {
        j.channel = Channel::THz;
        psi = thz_psi / std::sqrt(w_thz);
      } else {
        j.channel = Channel::Optical;
        psi = opt_psi / std::sqrt(w_opt);
      }
      rec.jumps.push_back(j);
      r = uniform();
      check_fixed = segments[seg].constant;
      if (stop_at_first && j.channel == Channel::THz) {
        record_probes(after, psi);
        rec.final_state = psi / psi.norm();
        return rec;
      }
    }
    record_probes(after, psi);
  }
  rec.final_state = psi / psi.norm();
  return rec;
}

TrajectorySimulator::TrajectorySimulator(const SystemParams& p, const PulseShape& pulse, Real t_end,
                                         const TrajectoryOptions& opts)
    : impl_(std::make_unique<Impl>()) {
  impl_->params = p;
  impl_->pulse = pulse;
  impl_->t_end = t_end;
  impl_->stop_at_first = opts.stop_at_first_thz;
  impl_->setup(opts);
}

TrajectorySimulator::~TrajectorySimulator() = default;
TrajectorySimulator::TrajectorySimulator(TrajectorySimulator&&) noexcept = default;

TrajectoryRecord TrajectorySimulator::run(std::uint64_t seed, std::uint64_t index) const {
  return impl_->run(seed, index);
}

Real TrajectorySimulator::step() const { return impl_->max_step; }
std::size_t TrajectorySimulator::steps() const { return impl_->total; }
Eigen::Index TrajectorySimulator::dim() const { return impl_->ops.dim(); }

TrajectoryRecord run_trajectory(const SystemParams& p, const PulseShape& pulse, Real t_end, std::uint64_t seed,
                                const TrajectoryOptions& opts) {
  return TrajectorySimulator(p, pulse, t_end, opts).run(seed, 0);
}

WilsonInterval wilson_interval(std::size_t successes, std::size_t trials, Real z) {
  if (trials == 0) return {0.0, 1.0};
  const Real n = static_cast<Real>(trials);
  const Real p = static_cast<Real>(successes) / n;
  const Real z2 = z * z;
  const Real denom = 1.0 + z2 / n;
  const Real center = (p + z2 / (2.0 * n)) / denom;
  const Real half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

EnsembleResult ensemble_p1(const SystemParams& p, const PulseShape& pulse, Real t_end, std::size_t n_traj,
                           std::uint64_t seed0, int workers, const TrajectoryOptions& opts, bool keep_records) {
  if (n_traj < 100) throw DomainError("ensemble_p1: need at least 100 trajectories");
  const TrajectorySimulator sim(p, pulse, t_end, opts);
  std::vector<unsigned char> single(n_traj, 0);
  std::vector<TrajectoryRecord> records(keep_records ? n_traj : 0);
  parallel_for(n_traj, workers, [&](std::size_t i) {
    TrajectoryRecord rec = sim.run(seed0, i);
    int count = 0;
    for (const Jump& j : rec.jumps)
      if (j.channel == Channel::THz && j.time <= pulse.tau) ++count;
    single[i] = count == 1;
    if (keep_records) records[i] = std::move(rec);
  });
  EnsembleResult out;
  out.n_traj = n_traj;
  for (unsigned char s : single) out.n_single += s;
  out.p1_hat = static_cast<Real>(out.n_single) / static_cast<Real>(n_traj);
  out.ci95 = wilson_interval(out.n_single, n_traj);
  out.records = std::move(records);
  return out;
}

P1Curve ensemble_p1_curve(const SystemParams& p, const PulseShape& shape, const std::vector<Real>& taus,
                          std::size_t n_traj, std::uint64_t seed0, int workers, const TrajectoryOptions& opts) {
  if (n_traj < 100) throw DomainError("ensemble_p1_curve: need at least 100 trajectories");
  if (taus.empty()) throw DomainError("ensemble_p1_curve: empty grid");
  if (!std::is_sorted(taus.begin(), taus.end()) || taus.front() <= 0)
    throw DomainError("ensemble_p1_curve: grid must be positive and increasing");
  PulseShape pulse = shape;
  pulse.tau = taus.back();
  const TrajectorySimulator sim(p, pulse, pulse.tau, opts);
  const std::size_t k = taus.size();
  std::vector<std::vector<unsigned char>> single(n_traj);
  parallel_for(n_traj, workers, [&](std::size_t i) {
    const TrajectoryRecord rec = sim.run(seed0, i);
    std::vector<unsigned char> flags(k, 0);
    std::size_t pos = 0;
    int count = 0;
    for (std::size_t g = 0; g < k; ++g) {
      while (pos < rec.jumps.size() && rec.jumps[pos].time <= taus[g]) {
        if (rec.jumps[pos].channel == Channel::THz) ++count;
        ++pos;
      }
      flags[g] = count == 1;
    }
    single[i] = std::move(flags);
  });
  P1Curve out;
  out.tau = taus;
  out.n_traj = n_traj;
  for (std::size_t g = 0; g < k; ++g) {
    std::size_t hits = 0;
    for (const auto& f : single) hits += f[g];
    out.p1_hat.push_back(static_cast<Real>(hits) / static_cast<Real>(n_traj));
    out.ci95.push_back(wilson_interval(hits, n_traj));
  }
  return out;
}

std::vector<CMatrix> ensemble_density(const SystemParams& p, const PulseShape& pulse, Real t_end,
                                      std::size_t n_traj, std::uint64_t seed0, const std::vector<Real>& probe_times,
                                      int workers, int n_max) {
  TrajectoryOptions opts;
  opts.n_max = n_max;
  opts.probe_times = probe_times;
  const TrajectorySimulator sim(p, pulse, t_end, opts);
  std::vector<std::vector<CVector>> states(n_traj);
  parallel_for(n_traj, workers, [&](std::size_t i) { states[i] = sim.run(seed0, i).probe_states; });
  const Eigen::Index dim = sim.dim();
  std::vector<CMatrix> rho(probe_times.size(), CMatrix::Zero(dim, dim));
  for (const auto& per_traj : states)
    for (std::size_t k = 0; k < per_traj.size(); ++k) rho[k] += per_traj[k] * per_traj[k].adjoint();
  for (CMatrix& r : rho) r /= static_cast<Real>(n_traj);
  return rho;
}

void write_jump_dump(std::ostream& os, const std::vector<TrajectoryRecord>& records) {
  os << "seed,index,jump_time_ns,channel\n";
  const auto old = os.precision(17);
  for (const TrajectoryRecord& rec : records)
    for (const Jump& j : rec.jumps)
      os << rec.seed << ',' << rec.index << ',' << j.time << ',' << (j.channel == Channel::THz ? "thz" : "optical")
         << '\n';
  os.precision(old);
}

}  // namespace thz
