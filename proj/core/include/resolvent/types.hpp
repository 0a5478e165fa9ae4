#pragma once

#include <complex>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace resolvent {

using cx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

// Uniform grid on (0, T]: nodes t_i = i*h, i = 1..n, h = T/n.
// Node 0 is excluded on purpose: kernels and families may be singular there;
// behaviour on the first cell is always handled by moment/ansatz logic, never
// by sampling at t = 0.
struct Grid {
  double T = 1.0;
  int n = 128;

  double h() const { return T / n; }
  double node(int i) const { return i * h(); }  // i in 1..n
  // Convolution only makes sense between samplings with identical spacing.
  bool spacing_matches(const Grid& o) const {
    double ha = h(), hb = o.h();
    return std::abs(ha - hb) <= 1e-12 * std::max(ha, hb);
  }
};

// Values sampled at grid nodes: v[j] is the value at t_{j+1} = (j+1)*h.
struct SampledValues {
  Grid grid;
  std::vector<cx> v;
};

class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define RESOLVENT_DEFINE_ERROR(NAME)                               \
  class NAME : public Error {                                      \
   public:                                                         \
    explicit NAME(const std::string& what) : Error(#NAME, what) {} \
  }

RESOLVENT_DEFINE_ERROR(DomainError);        // argument outside a function's domain
RESOLVENT_DEFINE_ERROR(NotIntegrable);      // non-integrable weight / divergent moment
RESOLVENT_DEFINE_ERROR(NonEvaluable);       // descriptor has no pointwise evaluation
RESOLVENT_DEFINE_ERROR(NoClosedForm);       // closed form requested but unavailable
RESOLVENT_DEFINE_ERROR(GridMismatch);       // incompatible samplings combined
RESOLVENT_DEFINE_ERROR(NonConvergent);      // iteration/series failed to converge
RESOLVENT_DEFINE_ERROR(AbscissaViolation);  // transform evaluated left of its abscissa
RESOLVENT_DEFINE_ERROR(DegenerateRequest);  // e.g. lambda == mu in a difference quotient
RESOLVENT_DEFINE_ERROR(UnknownPair);        // family pair name not recognised
RESOLVENT_DEFINE_ERROR(UncertifiedSpectrum);  // spectrum bound too large to certify
RESOLVENT_DEFINE_ERROR(HypothesisViolation);  // numeric hypothesis pre-check failed
RESOLVENT_DEFINE_ERROR(ValidityViolation);  // parameters outside an identity's validity set
RESOLVENT_DEFINE_ERROR(IntervalExceeded);   // evaluation outside the guaranteed interval
RESOLVENT_DEFINE_ERROR(ParseError);         // text grammar violation
RESOLVENT_DEFINE_ERROR(IoError);            // file reading/writing failure

#undef RESOLVENT_DEFINE_ERROR

inline constexpr unsigned long default_seed = 0x5EED;

// Outcome of one numerical identity / residual check. `residual` is already
// normalised by the check's natural scale; `passed` compares it to `tol`.
struct CheckResult {
  std::string name;
  double residual = 0.0;
  double tol = 0.0;
  bool passed = false;
  std::string note;
};

}  // namespace resolvent
