#pragma once

#include <memory>
#include <string>
#include <vector>

#include "resolvent/kernels.hpp"
#include "resolvent/prodint.hpp"
#include "resolvent/types.hpp"

namespace resolvent {

// Two-variable fields built from one-variable kernels:
//   plus(w):      F(t,s) = w(t+s)
//   minus(w):     F(t,s) = w(|t-s|)
//   tensor(f,g):  F(t,s) = f(t) g(s)
//   tabulated:    node values on (0,T]^2
enum class BivarTag { Plus, Minus, Tensor, Tabulated2D };

class BivarField {
 public:
  static BivarField plus(Kernel w);
  static BivarField minus(Kernel w);
  static BivarField tensor(Kernel f, Kernel g);
  // row-major values: v[(i-1)*grid.n + (j-1)] = F(i h, j h)
  static BivarField tabulated(Grid grid, std::vector<cx> values);

  BivarTag tag() const { return tag_; }
  const Kernel& profile() const;          // Plus / Minus
  const Kernel& left() const;             // Tensor
  const Kernel& right() const;            // Tensor
  const Grid& table_grid() const;         // Tabulated2D
  const std::vector<cx>& table() const;   // Tabulated2D

  // Pointwise value where defined; propagates kernel domain errors
  // (e.g. a singular profile on the diagonal of a Minus field).
  cx eval(double t, double s) const;

  std::string format() const;

 private:
  BivarField(BivarTag tag, std::vector<Kernel> ks, Grid grid,
             std::vector<cx> values);
  BivarTag tag_;
  std::vector<Kernel> ks_;
  Grid grid_{};
  std::vector<cx> vals_;
};

// Two-variable convolution (F *2 G)(t,s) = int_0^t int_0^s F(t-r,s-v) G(r,v).
// Values are produced at node-aligned points (it h, is h). Supported shapes:
//   Plus x Tensor   (either order)  - reduced to one diagonal-variable pass
//   Plus x Plus                     - profile times a tent overlap length
//   Minus x Tensor  (either order)  - difference-variable split; needs an
//                                     integrable profile and bounded factors
//   Tensor x Tensor                 - separable product of 1-D convolutions
// Plus profiles with g-exponent in (-1,0] run through the anchored end (the
// interior value vanishes at x = t+s); profiles at or below -1 refuse with
// NotIntegrable. Other combinations refuse with NonEvaluable.
class Conv2 {
 public:
  Conv2(BivarField F, BivarField G, Grid grid);
  cx at(int it, int is) const;        // cached cell data shared across calls
  cx at_naive(int it, int is) const;  // same rule rebuilt from scratch
  const Grid& grid() const { return grid_; }

  ~Conv2();
  Conv2(Conv2&&) noexcept;
  Conv2& operator=(Conv2&&) noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  Grid grid_;
};

cx conv2_at(const BivarField& F, const BivarField& G, const Grid& grid, int it,
            int is);

// Identity: mixing a sum-profile into a tensor pair, and mixing two
// sum-profiles, agrees with the corresponding one-variable reassemblies.
// Probes a fixed kernel family on the given grid; residuals are relative to
// each identity's natural scale.
std::vector<CheckResult> check_mixing_identities(const Grid& grid, double tol);

// Identity: a convolution of three kernels splits at any interior time into
// two truncated pieces plus one mixed two-variable term.
CheckResult check_split_convolution(const Kernel& f, const Kernel& g,
                                    const Kernel& h, const Grid& grid,
                                    double t, double tau, double tol);

// Identity: the shifted power g_a(t+s) equals the anchored mixed convolution
// of g_{-a} against g_a (x) g_a, up to sign. Exercises weights with
// g-exponent in (-1,0).
CheckResult check_shifted_power_identity(double alpha, const Grid& grid,
                                         double t, double s, double tol);

}  // namespace resolvent
