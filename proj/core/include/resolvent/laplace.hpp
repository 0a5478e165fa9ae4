#pragma once

#include <vector>

#include "resolvent/bivar.hpp"
#include "resolvent/kernels.hpp"
#include "resolvent/report.hpp"
#include "resolvent/types.hpp"

namespace resolvent {

// One-variable transform value together with the truncation estimate for
// the finite horizon the quadrature actually integrated.
struct Transform1 {
  cx value{};
  double tail_bound = 0.0;  // estimate of the discarded (horizon, inf) mass
  double horizon = 0.0;     // horizon actually used (may undercut T_max
                            // once the damped integrand reaches noise level)
};

// Default horizon for transform quadrature at s given a problem time scale
// T: max(40 / Re s, 10 T).
double transform_horizon(cx s, double T);

// int_0^{T_max} e^{-s t} f(t) dt.  Power-sum kernels fold into exact cell
// moments played against quadratic stencils of the exponential; smooth
// non-foldable kernels use composite Simpson on sampled values.  Throws
// AbscissaViolation when Re s does not clear the growth bound, and
// NotIntegrable for kernels that are singular beyond integrability.
Transform1 laplace1_detail(const Kernel& f, cx s, double T_max);
cx laplace1(const Kernel& f, cx s, double T_max);

// Sampled data (assumed regular near 0): Simpson on the sample grid,
// truncated at min(T_max, sample horizon).
cx laplace1(const SampledValues& f, cx s, double T_max);

// Iterated two-variable transform of a structured field over the quadrant,
// with the total time t + s capped at T_max:
//   plus(f):   int_0^T f(X) (e^{-mu X} - e^{-lambda X})/(lambda - mu) dX,
//              stable on the diagonal; foldable singular profiles are
//              integrated end-anchored (the bracket vanishes at X = 0), so
//              derivative descriptors such as g_{-a} are never sampled;
//   minus(f):  the square splits along the diagonal; each triangle is a
//              one-variable integral of f against smooth exactly-integrated
//              exponential data, and needs Re(lambda + mu) > 0;
//   tensor:    product of the one-variable transforms;
//   table2d:   exact bilinear-cell x exponential moments over the table.
cx laplace2(const BivarField& F, cx lambda, cx mu, double T_max);

// Identity battery tying two-variable transforms to one-variable ones at a
// transform point with lambda != mu (the difference-quotient identities
// degenerate on the diagonal -> DegenerateRequest).  `cases` supplies the
// profile kernels; empty means {1, g_{1/2}, e^{-t}}.  Checks, per case:
// the sum/difference/tensor reductions, the product rule for a separable
// two-variable convolution, the derivative-profile quotients (including
// the boundary term when the kernel value at 0+ enters), and the
// correlation products for a sampled bounded family.
ResidualReport check_transform_suite(cx lambda, cx mu,
                                     const std::vector<Kernel>& cases = {});

// Inversion identity a(t+s) = -((c')^+ *_2 (a (x) a))(t, s) for a pair
// with (a * c)(t) = 1; the derivative weight folds into anchored moments.
// The mirrored difference-profile form would need c(0+) = 0, which no
// convolution-inverse pair of genuine functions satisfies; that branch is
// reported as skipped with the blocking hypothesis named.  Throws
// HypothesisViolation when (a * c) deviates from 1 beyond 1e-6.
ResidualReport check_inversion_identity(const Kernel& a, const Kernel& c,
                                        const Grid& grid);

}  // namespace resolvent
