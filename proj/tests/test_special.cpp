// Scalar special functions: reciprocal gamma, regularized incomplete beta,
// one- and two-parameter series kernels (scalar and matrix arguments).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "resolvent/special.hpp"
#include "resolvent/types.hpp"

using namespace resolvent;

namespace {
double rel(cx got, cx want) {
  return std::abs(got - want) / std::max(1e-300, std::abs(want));
}
}  // namespace

TEST_CASE("reciprocal gamma") {
  CHECK(rel(rgamma(1.0), 1.0) < 1e-14);
  CHECK(rel(rgamma(2.0), 1.0) < 1e-14);
  CHECK(rel(rgamma(5.0), 1.0 / 24.0) < 1e-14);
  CHECK(rel(rgamma(0.5), 0.564189583547756) < 1e-13);
  CHECK(rgamma(0.0) == 0.0);
  CHECK(rgamma(-1.0) == 0.0);
  CHECK(rgamma(-7.0) == 0.0);
  CHECK(rel(rgamma(-0.5), -0.282094791773878) < 1e-13);
  CHECK(rel(rgamma(-1.5), 0.423142187660817) < 1e-13);
  CHECK(rgamma(200.0) == 0.0);
}

TEST_CASE("regularized incomplete beta") {
  CHECK(rel(ibeta(0.5, 0.5, 0.3), 0.369010119565545) < 1e-12);
  CHECK(rel(ibeta(0.25, 0.25, 0.7), 0.579613732160015) < 1e-12);
  CHECK(rel(ibeta(1.5, 0.5, 0.2), 0.040519326353834) < 1e-12);
  CHECK(rel(ibeta(0.5, 1.5, 0.9), 0.986153167011141) < 1e-12);
  CHECK(rel(ibeta(2.0, 3.0, 0.4), 0.5248) < 1e-12);
  CHECK(ibeta(0.7, 1.3, 0.0) == 0.0);
  CHECK(ibeta(0.7, 1.3, 1.0) == 1.0);
  // complement symmetry
  double s = ibeta(0.8, 2.5, 0.37) + ibeta(2.5, 0.8, 0.63);
  CHECK(std::abs(s - 1.0) < 1e-13);
  CHECK_THROWS_AS(ibeta(0.0, 1.0, 0.5), DomainError);
  CHECK_THROWS_AS(ibeta(1.0, 1.0, 1.5), DomainError);
}

TEST_CASE("series kernel: power-series regime") {
  CHECK(rel(ml_value(0.5, 1.0, 1.0), 5.00898008076228) < 5e-13);
  CHECK(rel(ml_value(0.5, 1.0, -1.0), 0.427583576155807) < 5e-13);
  CHECK(rel(ml_value(0.5, 0.5, -1.0), 0.136606007391949) < 5e-12);
  CHECK(rel(ml_value(2.0, 1.0, 4.0), 3.76219569108363) < 5e-13);   // cosh 2
  CHECK(rel(ml_value(2.0, 1.0, -4.0), -0.416146836547142) < 5e-12);  // cos 2
  CHECK(rel(ml_value(1.0, 2.0, -1.0), 0.632120558828558) < 5e-13);
  CHECK(rel(ml_value(1.0, 1.5, -1.0), 0.607157705841394) < 5e-13);
  CHECK(rel(ml_value(1.5, 1.0, -1.0), 0.396629365318088) < 5e-13);
  CHECK(rel(ml_value(0.5, 1.0, -std::sqrt(2.0)), 0.336204002446341) < 5e-12);
  CHECK(rel(ml_value(0.5, 0.5, -std::sqrt(2.0)), 0.0887253235640233) < 5e-11);
  CHECK(rel(ml_value(0.75, 1.25, 2.0), 12.9122539229574) < 5e-13);
  CHECK(rel(ml_value(0.5, 1.0, 11.0), 7.09026236552233e52) < 5e-12);
  CHECK(rel(ml_value(0.5, 1.0, cx(1.0, 1.0)),
            cx(-1.1370378783512, 2.0268137918542)) < 5e-12);
  CHECK(rel(ml_value(1.0, 1.0, 0.0), 1.0) < 1e-15);
  CHECK(rel(ml_value(0.5, 0.5, 0.0), 0.564189583547756) < 1e-13);
}

TEST_CASE("series kernel: cancellation rescue") {
  MLResult r = ml(1.0, 1.0, -20.0);
  CHECK(rel(r.value, 2.06115362243856e-9) < 1e-10);
  MLResult r2 = ml(1.5, 1.0, -200.0);
  CHECK(rel(r2.value, -0.0014100242479369773) < 1e-10);
}

TEST_CASE("series kernel: large-argument regime") {
  CHECK(rel(ml_value(0.5, 1.0, -30.0), 0.0187958888614168) < 1e-11);
  CHECK(rel(ml_value(0.5, 0.5, -30.0), 0.000312917705253742) < 1e-10);
  CHECK(rel(ml_value(0.5, 1.5, -30.0), 0.0327068037046194) < 1e-11);
  cx v = ml_value(0.5, 1.0, cx(0.0, 25.0));
  CHECK(std::abs(v.real()) < 1e-15);
  CHECK(rel(v.imag(), 0.0225856809126405) < 1e-11);
  // deep-decay regime collapses to zero with a clean estimate
  MLResult z = ml(1.0, 1.0, -2000.0);
  CHECK(std::abs(z.value) < 1e-100);
  CHECK(z.err_estimate < 1e-100);
}

TEST_CASE("series kernel: domain guards") {
  CHECK_THROWS_AS(ml(0.0, 1.0, 1.0), DomainError);
  CHECK_THROWS_AS(ml(-0.5, 1.0, 1.0), DomainError);
  CHECK_THROWS_AS(
      ml(0.5, 1.0, cx(std::numeric_limits<double>::infinity(), 0.0)),
      DomainError);
}

TEST_CASE("matrix series kernel: diagonal") {
  Mat M = Mat::Zero(2, 2);
  M(0, 0) = -1.0;
  M(1, 1) = -2.0;
  MLMatrixResult r = ml_matrix(1.0, 1.0, M);
  CHECK(rel(r.value(0, 0), std::exp(-1.0)) < 1e-13);
  CHECK(rel(r.value(1, 1), std::exp(-2.0)) < 1e-13);
  CHECK(std::abs(r.value(0, 1)) == 0.0);
}

TEST_CASE("matrix series kernel: nilpotent is exact") {
  Mat N = Mat::Zero(2, 2);
  N(0, 1) = 1.0;
  MLMatrixResult r = ml_matrix(1.0, 1.0, N);
  CHECK(std::abs(r.value(0, 0) - 1.0) < 1e-15);
  CHECK(std::abs(r.value(0, 1) - 1.0) < 1e-15);
  CHECK(std::abs(r.value(1, 0)) < 1e-15);
  MLMatrixResult r2 = ml_matrix(2.0, 1.0, N);
  CHECK(std::abs(r2.value(0, 1) - 0.5) < 1e-15);  // 1/Gamma(3)
}

TEST_CASE("matrix series kernel: diagonalizable") {
  Mat A = Mat::Zero(2, 2);
  A(0, 1) = 1.0;
  A(1, 0) = -1.0;
  MLMatrixResult r = ml_matrix(1.0, 1.0, A);  // rotation generator
  CHECK(rel(r.value(0, 0), std::cos(1.0)) < 1e-10);
  CHECK(rel(r.value(0, 1), std::sin(1.0)) < 1e-10);
  CHECK(rel(r.value(1, 0), -std::sin(1.0)) < 1e-10);
}

TEST_CASE("matrix series kernel: certification guard") {
  Mat M = Mat::Zero(1, 1);
  M(0, 0) = -200.0;
  CHECK_THROWS_AS(ml_matrix(0.5, 1.0, M), UncertifiedSpectrum);
  Mat E;
  CHECK_THROWS_AS(ml_matrix(1.0, 1.0, E), DomainError);
}
