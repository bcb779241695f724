#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "thz/numkit.hpp"

#include <cmath>

using namespace thz;

namespace {

Real max_diff(const CMatrix& a, const CMatrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("kron basics") {
  CHECK(max_diff(kron(CMatrix::Identity(2, 2), CMatrix::Identity(2, 2)), CMatrix::Identity(4, 4)) == 0.0);

  CMatrix a = CMatrix::Zero(2, 2), b = CMatrix::Zero(2, 2);
  a.diagonal() << 1.0, 2.0;
  b.diagonal() << 3.0, 4.0;
  CMatrix want = CMatrix::Zero(4, 4);
  want.diagonal() << 3.0, 4.0, 6.0, 8.0;
  CHECK(max_diff(kron(a, b), want) == 0.0);
}

TEST_CASE("kron matches the index formula") {
  const CMatrix a = oracle::random_matrix(3, 11);
  const CMatrix b = oracle::random_matrix(3, 12);
  const CMatrix k = kron(a, b);
  REQUIRE(k.rows() == 9);
  for (int i = 0; i < 3; ++i)
    for (int kk = 0; kk < 3; ++kk)
      for (int j = 0; j < 3; ++j)
        for (int l = 0; l < 3; ++l) CHECK(approx_equal(k(i * 3 + kk, j * 3 + l), a(i, j) * b(kk, l)));
}

TEST_CASE("kron mixed product and associativity") {
  const CMatrix a = oracle::random_matrix(2, 1), c = oracle::random_matrix(2, 2);
  const CMatrix b = oracle::random_matrix(3, 3), d = oracle::random_matrix(3, 4);
  CHECK(max_diff(kron(a, b) * kron(c, d), kron(CMatrix(a * c), CMatrix(b * d))) < 1e-12);
  CHECK(max_diff(kron(kron(a, b), c), kron(a, kron(b, c))) < 1e-12);
}

TEST_CASE("vectorize convention and round trip") {
  CMatrix id = CMatrix::Identity(2, 2);
  CHECK(approx_equal((trace_row(2) * vectorize(id))(0), 2.0));

  CMatrix e01 = CMatrix::Zero(2, 2);
  e01(0, 1) = 1.0;
  const CVector v = vectorize(e01);
  CHECK(v.size() == 4);
  CHECK(v[1] == Complex(1.0));
  CHECK(v.cwiseAbs().sum() == 1.0);

  const CMatrix r = oracle::random_matrix(5, 7);
  CHECK(max_diff(devectorize(vectorize(r)), r) == 0.0);
  CHECK((vectorize(r) - oracle::vec(r)).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(vectorize(CMatrix::Zero(2, 3)), Error);
}

TEST_CASE("superoperator helpers act like the matrix products") {
  const CMatrix a = oracle::random_matrix(3, 21), b = oracle::random_matrix(3, 22), rho = oracle::random_matrix(3, 23);
  CHECK((sandwich(a, b) * vectorize(rho) - vectorize(a * rho * b)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((left_mul(a) * vectorize(rho) - vectorize(a * rho)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((right_mul(b) * vectorize(rho) - vectorize(rho * b)).cwiseAbs().maxCoeff() < 1e-12);
  const CMatrix ad = a.adjoint();
  const CMatrix want = 2.0 * a * rho * ad - ad * a * rho - rho * ad * a;
  CHECK((dissipator(a) * vectorize(rho) - vectorize(want)).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("eig_general on a diagonal matrix") {
  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 0) = Complex(1, 2);
  m(1, 1) = -3.0;
  const auto d = eig_general(m);
  // eigenpairs may come in any order; match by value
  for (int i = 0; i < 2; ++i) {
    const Complex l = d.lambda[i];
    CHECK((approx_equal(l, Complex(1, 2)) || approx_equal(l, Complex(-3, 0))));
    const int k = approx_equal(l, Complex(1, 2)) ? 0 : 1;
    CHECK(std::abs(d.right(i, k)) * std::abs(d.left(i, k)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(d.right(i, 1 - k)) < 1e-14);
  }
}

TEST_CASE("eig_general rejects a Jordan block") {
  CMatrix j = CMatrix::Zero(2, 2);
  j(0, 1) = 1.0;
  CHECK_THROWS_AS(eig_general(j), DefectiveMatrix);
}

TEST_CASE("eig_general reconstruction and contract on a random matrix") {
  const CMatrix m = oracle::random_matrix(10, 99);
  const auto d = eig_general(m);
  const CMatrix rebuilt = d.right.transpose() * d.lambda.asDiagonal() * d.left;
  CHECK(max_diff(rebuilt, m) < 1e-8);
  CHECK(max_diff(d.left * d.right.transpose(), CMatrix::Identity(10, 10)) < 1e-8);
  CHECK(d.residual <= 1e-8);
  for (int i = 0; i < 10; ++i) {
    const CVector r = d.right.row(i).transpose();
    const Real res = (m * r - d.lambda[i] * r).cwiseAbs().maxCoeff();
    CHECK(res <= 1e-8 * (1 + inf_norm(m)));
  }
}

TEST_CASE("spectral propagator equals the Taylor exponential on stable matrices") {
  CMatrix m = oracle::random_matrix(8, 5);
  const auto shift = eig_general(m).lambda.real().maxCoeff();
  m -= (shift + 0.1) * CMatrix::Identity(8, 8);
  const auto d = eig_general(m);
  const CVector v = oracle::random_matrix(8, 6).col(0);
  for (Real t : {0.1, 1.0, 10.0}) {
    const CVector want = oracle::taylor_expm(m * t) * v;
    CHECK((d.propagate(v, t) - want).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((d.propagator(t) * v - want).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("expm") {
  CHECK(max_diff(expm(CMatrix::Zero(3, 3)), CMatrix::Identity(3, 3)) == 0.0);

  CMatrix d = CMatrix::Zero(2, 2);
  d(0, 0) = Complex(0.3, -1.2);
  d(1, 1) = -4.0;
  const CMatrix e = expm(d);
  CHECK(approx_equal(e(0, 0), std::exp(Complex(0.3, -1.2))));
  CHECK(approx_equal(e(1, 1), std::exp(-4.0)));
  CHECK(std::abs(e(0, 1)) == 0.0);

  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const CMatrix m = oracle::random_matrix(6, seed);
    const CMatrix want = oracle::taylor_expm(m);
    CHECK(max_diff(expm(m), want) / want.cwiseAbs().maxCoeff() < 1e-12);
  }
  // large norm goes through many squarings
  const CMatrix big = oracle::random_matrix(6, 4, 5.0) - 30.0 * CMatrix::Identity(6, 6);
  const CMatrix want = oracle::taylor_expm(big);
  CHECK(max_diff(expm(big), want) / want.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("lambert_w values") {
  CHECK(lambert_w0(0.0) == 0.0);
  CHECK(lambert_wm1(-1.0 / M_E) == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(lambert_w0(-1.0 / M_E) == doctest::Approx(-1.0).epsilon(1e-7));
  // the tau_max argument for C_tilde = 1.94
  const Real x = -0.23327;
  const Real ref = oracle::lambert_bisect(-1, x);
  CHECK(ref == doctest::Approx(-2.27953).epsilon(1e-5));
  CHECK(lambert_wm1(x) == doctest::Approx(ref).epsilon(1e-12));
  CHECK(lambert_w0(1.0) == doctest::Approx(oracle::lambert_bisect(0, 1.0)).epsilon(1e-13));
  CHECK(lambert_w0(1e6) == doctest::Approx(oracle::lambert_bisect(0, 1e6)).epsilon(1e-13));
}

TEST_CASE("lambert_w defining equation over both domains") {
  const Real e1 = 1.0 / M_E;
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    // branch 0: x from -1/e + 1e-12 up to 1e12
    const Real u = std::pow(10.0, -12.0 + 24.0 * i / 999.0);
    const Real x0 = u - e1;
    const Real w0 = lambert_w0(x0);
    if (!(std::abs(w0 * std::exp(w0) - x0) <= 1e-12 * (1 + std::abs(x0)) && w0 >= -1)) ++bad;
    // branch -1: x in [-1/e, 0)
    const Real xm = -e1 * std::pow(10.0, -300.0 * i / 999.0);
    const Real wm = lambert_wm1(xm);
    if (!(std::abs(wm * std::exp(wm) - xm) <= 1e-12 * (1 + std::abs(xm)) && wm <= -1)) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("lambert_w domain errors") {
  CHECK_THROWS_AS(lambert_w0(-0.5), DomainError);
  CHECK_THROWS_AS(lambert_wm1(0.0), DomainError);
  CHECK_THROWS_AS(lambert_wm1(0.1), DomainError);
  CHECK_THROWS_AS(lambert_wm1(-0.5), DomainError);
}

TEST_CASE("divided differences against direct quadrature") {
  const Complex x(-1.0, 3.0), y(-2.0, -1.0), z(-0.5, 0.0);
  const Real tau = 1.3;
  // Simpson on a fine grid
  const int n = 4000;
  const Real h = tau / n;
  Complex s2 = 0;
  for (int k = 0; k <= n; ++k) {
    const Real t = k * h;
    const Real wgt = (k == 0 || k == n) ? 1 : (k % 2 ? 4 : 2);
    s2 += wgt * std::exp(x * (tau - t) + y * t);
  }
  s2 *= h / 3;
  CHECK(std::abs(exp_divided_difference(x, y, tau) - s2) < 1e-10);
  // coincident nodes
  CHECK(std::abs(exp_divided_difference(x, x, tau) - tau * std::exp(x * tau)) < 1e-12);
  // three nodes, all equal: tau^2/2 e^{x tau}
  CHECK(std::abs(exp_divided_difference(z, z, z, tau) - 0.5 * tau * tau * std::exp(z * tau)) < 1e-12);
  // nearly coincident stays continuous
  const Complex y2 = x + Complex(1e-9, 0);
  CHECK(std::abs(exp_divided_difference(x, y2, tau) - exp_divided_difference(x, x, tau)) < 1e-8);
}
