#pragma once

#include "resolvent/types.hpp"

namespace resolvent {

// 1/Gamma(x) as an entire function: vanishes at 0, -1, -2, ...; sign-correct
// for negative non-integer arguments.
double rgamma(double x);

// Regularized incomplete beta I_x(a, b), a, b > 0, 0 <= x <= 1.
double ibeta(double a, double b, double x);

struct MLResult {
  cx value{};
  double err_estimate = 0.0;  // absolute error estimate
  bool precision_loss = false;
};

// Two-parameter Mittag-Leffler function E_{alpha,beta}(z), alpha > 0.
// Evaluation strategy by region: power series inside a radius where the term
// count stays modest (with an extended-precision rescue when the alternating
// series cancels more than ~12 digits), exponential-plus-algebraic expansion
// in the sector |arg z| <= alpha*pi/2 (all contributing branches included, so
// alpha = 2 on the negative axis recovers the cosine), and the algebraic
// expansion elsewhere. precision_loss is set when no region certifies ~1e-11.
MLResult ml(double alpha, double beta, cx z);

inline cx ml_value(double alpha, double beta, cx z) {
  return ml(alpha, beta, z).value;
}

struct MLMatrixResult {
  Mat value;
  double spectral_bound = 0.0;  // Gershgorin bound used for certification
  bool precision_loss = false;
};

// E_{alpha,beta}(M) for square complex M: eigendecomposition when the
// eigenvector basis is well conditioned, otherwise a truncated matrix series
// (exact for nilpotent M). Throws UncertifiedSpectrum when the Gershgorin
// bound is too large for either route to be trusted.
MLMatrixResult ml_matrix(double alpha, double beta, const Mat& M);

}  // namespace resolvent
