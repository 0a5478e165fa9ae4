#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "resolvent/types.hpp"

namespace resolvent {

enum class KernelTag {
  Power,        // g_alpha(t) = t^{alpha-1} / Gamma(alpha)
  Exponential,  // e^{-lambda t}
  LevyHalf,     // (1/(2 sqrt(pi))) t^{-3/2} e^{-1/(4t)}, transform e^{-sqrt(s)}
  Interpolant,  // (1-eps) + eps t, 0 < eps < 1 after canonicalization
  Conv,         // convolution of >= 2 atomic factors
  ConvPower,    // n-fold self-convolution of an atomic factor, n >= 2
  Scaled,       // c * k
  Sum,          // k1 + k2 + ...
  Tabulated,    // samples on a grid, linear interpolation between nodes
};

// Canonicalizing symbolic kernel descriptors, closed under convolution
// algebra where closed forms exist:
//   g_a * g_b = g_{a+b};  e_l * e_m = (e_m - e_l)/(l - m) for l != m;
//   constants fold to scaled powers; interpolants entering a convolution are
//   expanded as (1-eps) g_1 + eps g_2; sums distribute; scalars hoist.
// Canonical form: a flat Sum of Scaled terms whose bases are atoms or Convs
// of atoms; structural equality compares canonical trees with 1e-12 relative
// tolerance on parameters (function values are never compared numerically).
class Kernel {
 public:
  Kernel() : Kernel(power(1.0)) {}

  static Kernel power(double alpha);    // alpha not in {0, -1, -2, ...}
  static Kernel constant(cx c);         // canonicalizes to scaled(c, g_1)
  static Kernel exponential(cx lambda);
  static Kernel levy_half();
  static Kernel interpolant(double eps);  // eps in [0, 1]
  static Kernel conv(const Kernel& a, const Kernel& b);
  static Kernel conv_power(const Kernel& k, int n);  // n >= 1
  static Kernel scaled(cx c, const Kernel& k);
  static Kernel sum(const Kernel& a, const Kernel& b);
  static Kernel tabulated(const Grid& grid, std::vector<cx> values);

  KernelTag tag() const;
  double power_alpha() const;
  cx exp_lambda() const;
  double interp_eps() const;
  cx scale() const;
  int conv_exponent() const;
  int arity() const;                // children count (Conv/Sum: >= 2)
  const Kernel& child(int i) const;
  const Grid& tab_grid() const;
  const std::vector<cx>& tab_values() const;

  bool operator==(const Kernel& o) const;
  bool operator!=(const Kernel& o) const { return !(*this == o); }

  // Leading power behaviour ~ t^gamma at 0+ (infinity when the kernel
  // vanishes faster than every power).
  double singularity_exponent() const;
  bool integrable() const { return singularity_exponent() > -1.0; }

  // Smallest w such that the transform converges for Re s > w.
  double abscissa() const;
  // Closed-form transform at s (Re s > abscissa); nullopt for samplings.
  std::optional<cx> laplace_hat(cx s) const;

  bool evaluable() const;
  cx eval(double t) const;  // t > 0
  std::vector<cx> eval_nodes(const Grid& grid) const;

  // Limit at 0+ where finite (throws DomainError when unbounded).
  cx value_at_zero() const;

  // C^2-on-[0,inf) predicate and derivatives for the kernels that admit them.
  bool is_c2() const;
  cx deriv1(double t) const;
  cx deriv2(double t) const;

  std::string format() const;
  static Kernel parse(const std::string& text);

  struct Node;
  const Node& node() const { return *node_; }

 private:
  friend struct KernelAccess;
  explicit Kernel(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

// Canonical flat decomposition: coefficient-base term list (bases are atoms
// or Convs of atoms, never Scaled/Sum).
std::vector<std::pair<cx, Kernel>> linear_terms(const Kernel& k);

// (coef, alpha) list when the kernel is a finite sum of scaled powers.
std::optional<std::vector<std::pair<cx, double>>> as_power_sum(const Kernel& k);

// Exact power-law moments: int_{u0}^{u1} u^k g_nu(u) du, 0 <= u0 <= u1,
// requiring nu + k + 1 > 0 when u0 = 0.
double gmom(double nu, int k, double u0, double u1);

// Exact cross integral of two power kernels over part of a cell:
// int_{ua}^{ub} g_p(u) g_q(x - u) du, 0 <= ua <= ub <= x, p, q > 0.
double power_cross(double p, double q, double ua, double ub, double x);

struct Conv1Result {
  SampledValues samples;
  std::optional<Kernel> closed;  // descriptor when the algebra closed
};

// (f * g)(t_i) on the grid nodes. Product integration: the more singular
// factor is folded into exact cell moments, the other is interpolated
// piecewise-linearly; both-smooth pairs use exact linear-x-linear cells.
Conv1Result conv1(const Kernel& f, const Kernel& g, const Grid& grid);
SampledValues conv1(const Kernel& f, const SampledValues& g);
SampledValues conv1(const SampledValues& f, const SampledValues& g);

Conv1Result conv_power_samples(const Kernel& f, int n, const Grid& grid);

// M(g)(s) = s * g(s) as a descriptor (throws NoClosedForm when the result
// leaves the descriptor algebra).
Kernel multiplier_M(const Kernel& g);

// d/dt as a descriptor: g_a -> g_{a-1}, exponentials and interpolants
// differentiate in place; throws NoClosedForm outside that class.  The
// result may be non-integrable (g_a with a <= 1 maps below the integrable
// range); callers fold such descriptors into moments, never sample them.
Kernel kernel_derivative(const Kernel& k);

// Node samples for any kernel: direct evaluation when a closed evaluator
// exists, discrete convolution of the factors otherwise.
SampledValues sample_values(const Kernel& k, const Grid& grid);

enum class PairMode {
  Unit,    // (a * c)(t) = 1
  Linear,  // (a * c)(t) = t
};

struct PairSolution {
  Kernel b;  // (a * b) = k   (Unit)   or (a * b) = 1 * k   (Linear)
  Kernel c;  // (a * c) = 1   (Unit)   or (a * c) = t       (Linear)
  bool b_valid = false;
  bool c_valid = false;
  std::string note;
};

// Companion kernels for a power-law pair (a, k); validity flags report the
// parameter ranges on which the companions are genuinely locally integrable
// kernels. Throws NoClosedForm outside the power-law class.
PairSolution solve_pair(const Kernel& a, const Kernel& k, PairMode mode);

}  // namespace resolvent
