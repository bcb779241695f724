#include "thz/numkit.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <limits>

namespace thz {

CVector vectorize(const CMatrix& rho) {
  if (rho.rows() != rho.cols()) throw DomainError("vectorize: density matrix must be square");
  const Eigen::Index h = rho.rows();
  CVector v(h * h);
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < h; ++j) v(i * h + j) = rho(i, j);
  return v;
}

CMatrix devectorize(const CVector& v) {
  const auto h = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(v.size()))));
  if (h * h != v.size()) throw DomainError("devectorize: length is not a perfect square");
  CMatrix rho(h, h);
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < h; ++j) rho(i, j) = v(i * h + j);
  return rho;
}

CRowVector trace_row(Eigen::Index h) {
  CRowVector t = CRowVector::Zero(h * h);
  for (Eigen::Index i = 0; i < h; ++i) t(i * h + i) = 1.0;
  return t;
}

SuperOp sandwich(const CMatrix& a, const CMatrix& b) { return kron(a, b.transpose()); }

SuperOp left_mul(const CMatrix& a) { return sandwich(a, CMatrix::Identity(a.cols(), a.cols())); }

SuperOp right_mul(const CMatrix& b) { return sandwich(CMatrix::Identity(b.rows(), b.rows()), b); }

SuperOp dissipator(const CMatrix& op) {
  const CMatrix od = op.adjoint();
  const CMatrix n = od * op;
  return 2.0 * sandwich(op, od) - left_mul(n) - right_mul(n);
}

SuperOp commutator_generator(const CMatrix& hamiltonian) {
  const Complex i(0, 1);
  return -i * (left_mul(hamiltonian) - right_mul(hamiltonian));
}

Real max_abs(const CMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

Real inf_norm(const CMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
}

namespace {

Real one_norm(const CMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().colwise().sum().maxCoeff(); }

}  // namespace

CMatrix SpectralDecomposition::propagator(Real t) const {
  CVector e = (lambda * t).array().exp().matrix();
  return right.transpose() * e.asDiagonal() * left;
}

CVector SpectralDecomposition::propagate(const CVector& v, Real t) const {
  CVector c = left * v;
  c.array() *= (lambda * t).array().exp();
  return right.transpose() * c;
}

SpectralDecomposition eig_general(const CMatrix& m) {
  if (m.rows() != m.cols()) throw DomainError("eig_general: matrix must be square");
  const Eigen::Index n = m.rows();
  SpectralDecomposition dec;
  dec.dim = n;
  if (n == 0) return dec;

  Eigen::ComplexEigenSolver<CMatrix> solver(m, true);
  if (solver.info() != Eigen::Success) throw DefectiveMatrix("eig_general: QR iteration did not converge", INFINITY);

  const CMatrix& vecs = solver.eigenvectors();  // columns are r_i^T
  dec.lambda = solver.eigenvalues();
  dec.right = vecs.transpose();

  Eigen::PartialPivLU<CMatrix> lu(vecs);
  dec.left = lu.inverse();
  dec.condition = one_norm(vecs) * one_norm(dec.left);
  if (!std::isfinite(dec.condition) || dec.condition > kDefectiveCondition)
    throw DefectiveMatrix("eig_general: eigenvector matrix is numerically singular", dec.condition);

  dec.biorthogonality = max_abs(dec.left * dec.right.transpose() - CMatrix::Identity(n, n));
  const CMatrix res = m * vecs - vecs * dec.lambda.asDiagonal();
  dec.residual = res.cwiseAbs().colwise().maxCoeff().maxCoeff() / (1.0 + inf_norm(m));
  return dec;
}

HermitianEigen eig_hermitian(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(m);
  return {solver.eigenvalues(), solver.eigenvectors()};
}

// Higham (2005) scaling and squaring.
CMatrix expm(const CMatrix& m) {
  if (m.rows() != m.cols()) throw DomainError("expm: matrix must be square");
  const Eigen::Index n = m.rows();
  const CMatrix id = CMatrix::Identity(n, n);
  if (n == 0) return m;

  static constexpr std::array<double, 4> kTheta{1.495585217958292e-2, 2.539398330063230e-1,
                                                9.504178996162932e-1, 2.097847961257068e0};
  static constexpr double kTheta13 = 5.371920351148152e0;

  const Real norm = one_norm(m);

  auto pade_solve = [&](const CMatrix& u, const CMatrix& v) -> CMatrix {
    return (v - u).partialPivLu().solve(v + u);
  };

  const CMatrix a2 = m * m;
  if (norm <= kTheta[0]) {
    const CMatrix u = m * (60.0 * id + a2);
    const CMatrix v = 120.0 * id + 12.0 * a2;
    return pade_solve(u, v);
  }
  const CMatrix a4 = a2 * a2;
  if (norm <= kTheta[1]) {
    const CMatrix u = m * (15120.0 * id + 420.0 * a2 + a4);
    const CMatrix v = 30240.0 * id + 3360.0 * a2 + 30.0 * a4;
    return pade_solve(u, v);
  }
  const CMatrix a6 = a4 * a2;
  if (norm <= kTheta[2]) {
    const CMatrix u = m * (8648640.0 * id + 277200.0 * a2 + 1512.0 * a4 + a6);
    const CMatrix v = 17297280.0 * id + 1995840.0 * a2 + 25200.0 * a4 + 56.0 * a6;
    return pade_solve(u, v);
  }
  if (norm <= kTheta[3]) {
    const CMatrix a8 = a6 * a2;
    const CMatrix u = m * (8821612800.0 * id + 302702400.0 * a2 + 2162160.0 * a4 + 3960.0 * a6 + a8);
    const CMatrix v =
        17643225600.0 * id + 2075673600.0 * a2 + 30270240.0 * a4 + 110880.0 * a6 + 90.0 * a8;
    return pade_solve(u, v);
  }

  static constexpr std::array<double, 14> b{64764752532480000.0,
                                            32382376266240000.0,
                                            7771770303897600.0,
                                            1187353796428800.0,
                                            129060195264000.0,
                                            10559470521600.0,
                                            670442572800.0,
                                            33522128640.0,
                                            1323241920.0,
                                            40840800.0,
                                            960960.0,
                                            16380.0,
                                            182.0,
                                            1.0};
  int squarings = 0;
  if (norm > kTheta13) squarings = static_cast<int>(std::ceil(std::log2(norm / kTheta13)));
  const Real scale = std::ldexp(1.0, -squarings);
  const CMatrix s1 = m * scale;
  const CMatrix s2 = a2 * (scale * scale);
  const CMatrix s4 = a4 * std::pow(scale, 4);
  const CMatrix s6 = a6 * std::pow(scale, 6);

  const CMatrix u = s1 * (s6 * (b[13] * s6 + b[11] * s4 + b[9] * s2) + b[7] * s6 + b[5] * s4 +
                          b[3] * s2 + b[1] * id);
  const CMatrix v =
      s6 * (b[12] * s6 + b[10] * s4 + b[8] * s2) + b[6] * s6 + b[4] * s4 + b[2] * s2 + b[0] * id;
  CMatrix r = pade_solve(u, v);
  for (int k = 0; k < squarings; ++k) r = r * r;
  return r;
}

namespace {

constexpr Real kInvE = 0.36787944117144233;

Real lambert_initial_guess(LambertBranch branch, Real x) {
  const Real p2 = 2.0 * (M_E * x + 1.0);
  const Real p = std::sqrt(std::max(p2, 0.0));
  if (branch == LambertBranch::Lower) {
    if (x < -0.25) return -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p;
    const Real l1 = std::log(-x);
    const Real l2 = std::log(-l1);
    return l1 - l2 + l2 / l1;
  }
  if (x < -0.25) return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
  if (x < 0.25) return x * (1.0 - x);
  if (x < 3.0) return std::log1p(x) * (1.0 - std::log1p(std::log1p(x)) / (2.0 + std::log1p(x)));
  const Real l1 = std::log(x);
  const Real l2 = std::log(l1);
  return l1 - l2 + l2 / l1;
}

}  // namespace

Real lambert_w(LambertBranch branch, Real x) {
  if (std::isnan(x)) throw DomainError("lambert_w: NaN argument");
  if (x < -kInvE) {
    // Tolerate rounding of -1/e itself.
    if (x > -kInvE * (1.0 + 4.0 * std::numeric_limits<Real>::epsilon())) return -1.0;
    throw DomainError("lambert_w: argument below -1/e");
  }
  if (branch == LambertBranch::Lower && x >= 0.0)
    throw DomainError("lambert_w: branch -1 requires x < 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return x;

  Real w = lambert_initial_guess(branch, x);
  for (int it = 0; it < 50; ++it) {
    const Real ew = std::exp(w);
    const Real f = w * ew - x;
    const Real wp1 = w + 1.0;
    if (wp1 == 0.0) break;
    const Real denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    const Real step = f / denom;
    w -= step;
    if (std::abs(step) <= 4.0 * std::numeric_limits<Real>::epsilon() * (1.0 + std::abs(w))) break;
  }
  if (branch == LambertBranch::Lower) return std::min(w, -1.0);
  return std::max(w, -1.0);
}

}  // namespace thz

namespace thz {

namespace {

// sinh(u)/u for |u| <= 0.25.
Complex sinhc_small(Complex u) {
  const Complex u2 = u * u;
  Complex term = 1.0;
  Complex sum = 1.0;
  for (int k = 1; k <= 10; ++k) {
    term *= u2 / static_cast<Real>((2 * k) * (2 * k + 1));
    sum += term;
  }
  return sum;
}

}  // namespace

Complex exp_divided_difference(Complex x, Complex y, Real tau) {
  const Complex d = x - y;
  if (std::abs(d) * tau > 0.5) return (std::exp(x * tau) - std::exp(y * tau)) / d;
  const Complex m = 0.5 * (x + y);
  return tau * std::exp(m * tau) * sinhc_small(0.5 * d * tau);
}

Complex exp_divided_difference(Complex x, Complex y, Complex z, Real tau) {
  // Put the most distant pair on the outside.
  const Real dxy = std::abs(x - y);
  const Real dyz = std::abs(y - z);
  const Real dxz = std::abs(x - z);
  if (dxy >= dxz && dxy >= dyz) {
    std::swap(y, z);  // outer pair x, y
  } else if (dyz >= dxz && dyz >= dxy) {
    std::swap(x, y);  // outer pair y, z
  }
  const Complex outer = x - z;
  if (std::abs(outer) * tau > 0.5)
    return (exp_divided_difference(x, y, tau) - exp_divided_difference(y, z, tau)) / outer;

  // Taylor series about the middle node: sum_n h_n(u, w) / (n + 2)!.
  const Complex u = (x - y) * tau;
  const Complex w = (z - y) * tau;
  Complex h = 1.0;
  Complex wn = 1.0;
  Real fact = 2.0;
  Complex sum = h / fact;
  for (int n = 1; n <= 24; ++n) {
    wn *= w;
    h = u * h + wn;
    fact *= static_cast<Real>(n + 2);
    sum += h / fact;
  }
  return tau * tau * std::exp(y * tau) * sum;
}

}  // namespace thz
