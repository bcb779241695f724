#pragma once

// Dense complex linear algebra used by every other module: Kronecker
// products, density-matrix vectorization, biorthonormal eigensystems of
// non-Hermitian generators, the matrix exponential and real Lambert W.

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

namespace thz {

using Real = double;
using Complex = std::complex<Real>;

using CMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;
using CVector = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;
using CRowVector = Eigen::Matrix<Complex, 1, Eigen::Dynamic>;
using RVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

/// Superoperators act on vectorized density matrices; same storage type.
using SuperOp = CMatrix;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// Raised when the right-eigenvector matrix is too ill-conditioned to invert.
class DefectiveMatrix : public Error {
 public:
  DefectiveMatrix(const std::string& what, Real condition)
      : Error(what), condition_(condition) {}
  Real condition() const { return condition_; }

 private:
  Real condition_;
};

// Equality tolerance for complex scalars in the test suites.
inline constexpr Real kScalarAbsTol = 1e-12;
inline constexpr Real kScalarRelTol = 1e-12;

inline bool approx_equal(Complex a, Complex b) {
  return std::abs(a - b) <= kScalarAbsTol + kScalarRelTol * std::max(std::abs(a), std::abs(b));
}

template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> kron(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Out = Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Out out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Vectorization convention: row-major stacking, v[i*h + j] = rho(i, j).
// With this ordering vec(A rho B) = kron(A, B^T) vec(rho), and the trace
// functional is the row vector vec(1)^T.

CVector vectorize(const CMatrix& rho);
CMatrix devectorize(const CVector& v);

/// Row vector <1| with Tr[rho] = trace_row(h) * vectorize(rho).
CRowVector trace_row(Eigen::Index h);

/// Superoperator of rho -> A rho B.
SuperOp sandwich(const CMatrix& a, const CMatrix& b);
/// Superoperator of rho -> A rho.
SuperOp left_mul(const CMatrix& a);
/// Superoperator of rho -> rho B.
SuperOp right_mul(const CMatrix& b);
/// Lindblad dissipator D(O)rho = 2 O rho O^+ - O^+O rho - rho O^+O.
SuperOp dissipator(const CMatrix& op);
/// -i[H, .]
SuperOp commutator_generator(const CMatrix& hamiltonian);

/// Right/left eigensystem of a general square matrix M.
/// Row i of `right` is r_i with M r_i^T = lambda_i r_i^T; row i of `left` is
/// l_i with l_i M = lambda_i l_i, normalized so that left * right^T = 1.
struct SpectralDecomposition {
  Eigen::Index dim = 0;
  CMatrix right;
  CMatrix left;
  CVector lambda;
  Real residual = 0;         // max_i |M r_i - lambda_i r_i|_inf / (1 + |M|_inf)
  Real biorthogonality = 0;  // max |L R^T - 1|
  Real condition = 1;        // 1-norm condition estimate of R

  /// R^T diag(exp(lambda t)) L, the propagator exp(M t).
  CMatrix propagator(Real t) const;
  /// exp(M t) v without forming the propagator.
  CVector propagate(const CVector& v, Real t) const;
};

inline constexpr Real kDefectiveCondition = 1e12;

/// Dense non-Hermitian eigensolve; throws DefectiveMatrix when cond(R) > 1e12.
SpectralDecomposition eig_general(const CMatrix& m);

/// Matrix exponential by scaling and squaring with a [13/13] Pade approximant.
CMatrix expm(const CMatrix& m);

/// Hermitian eigendecomposition, eigenvalues ascending.
struct HermitianEigen {
  RVector values;
  CMatrix vectors;  // columns
};
HermitianEigen eig_hermitian(const CMatrix& m);

enum class LambertBranch { Principal = 0, Lower = -1 };

/// Real Lambert W: w exp(w) = x on branch W0 (x >= -1/e) or W-1 (-1/e <= x < 0).
Real lambert_w(LambertBranch branch, Real x);

inline Real lambert_w0(Real x) { return lambert_w(LambertBranch::Principal, x); }
inline Real lambert_wm1(Real x) { return lambert_w(LambertBranch::Lower, x); }

// Divided differences of f(z) = exp(z tau), i.e. the simplex integrals
//   f[x, y]    = int_0^tau exp(x (tau - t) + y t) dt
//   f[x, y, z] = int_{0<t1<t2<tau} exp(x (tau - t2) + y (t2 - t1) + z t1).
// Both are stable for coincident and nearly coincident nodes.
Complex exp_divided_difference(Complex x, Complex y, Real tau);
Complex exp_divided_difference(Complex x, Complex y, Complex z, Real tau);

Real max_abs(const CMatrix& m);
Real inf_norm(const CMatrix& m);

}  // namespace thz
