#pragma once

#include <optional>
#include <string>
#include <vector>

#include "resolvent/kernels.hpp"
#include "resolvent/report.hpp"
#include "resolvent/types.hpp"

namespace resolvent {

// Finite-dimensional generators: dense complex matrices, diagonal spectra
// (kept as entries so scalar special-function paths stay uncapped), and the
// doubled block form [[0, I], [A, 0]] used by the two-by-two construction.

enum class GeneratorForm { Dense, Diagonal, Block };

class Generator {
 public:
  Generator();  // 0-dimensional placeholder
  static Generator dense(Mat A);
  static Generator diagonal(std::vector<cx> entries);
  static Generator block_pair(const Generator& inner);

  GeneratorForm form() const { return form_; }
  int dim() const { return (int)mat_.rows(); }
  const Mat& matrix() const { return mat_; }
  const std::vector<cx>& entries() const;  // Diagonal only
  Mat apply(const Mat& S) const;           // A * S
  double spectral_bound() const;           // row-sum bound on the spectrum

  std::string name;

 private:
  GeneratorForm form_ = GeneratorForm::Dense;
  Mat mat_;                 // always materialized
  std::vector<cx> diag_;    // Diagonal form only
};

// Plain-text generator files: either the dimension followed by that many
// rows of complex entries, or the word "diag" followed by the entries.
Generator load_generator(const std::string& path);
void save_generator(const std::string& path, const Generator& gen);

// Family descriptor parsed from "name" or "name:p1,p2,...".  Shipped names:
//   semigroup              (1, 1)
//   cosine                 (g_2, 1)
//   frac:alpha,beta        (g_alpha, g_{beta+1})
//   frac_aa:alpha          (g_alpha, g_alpha)
//   seqspace:a,b,tau,M     diagonal sequence-space family, pair (g_a,g_{b+1})
//   block:alpha            two-by-two construction, pair (g_alpha, g^{*3})
//   eps_semigroup:eps      (1, (1-eps) + eps t)
//   eps_resolvent:eps      ((1-eps) + eps t, 1)
//   mult:alpha,M           diagonal multiplier surrogate, pair (g_alpha, K)
struct PairSpec {
  std::string pair_name;
  std::vector<double> params;

  static PairSpec parse(const std::string& text);
  std::string format() const;
  Kernel kernel_a() const;  // throws UnknownPair / DomainError
  Kernel kernel_k() const;
};

// Node samples of a resolvent family S(t_i) with its pair and generator.
struct SampledFamily {
  Grid grid{};
  std::vector<Mat> values;  // S(t_i), i = 1..grid.n
  Kernel a{Kernel::constant(1.0)};
  Kernel k{Kernel::constant(1.0)};
  Generator gen;
  std::string provenance = "closed-form";

  int dim() const { return values.empty() ? 0 : (int)values[0].rows(); }
  double sup_norm() const;  // max over nodes of the operator 2-norm
};

// Closed-form construction per pair.  Dense generators go through the
// certified matrix special-function path (UncertifiedSpectrum when the
// spectral bound is too large); diagonal ones use the scalar evaluator
// entrywise.  seqspace and mult build their own diagonal generator from the
// descriptor parameters and ignore `gen`; seqspace refuses with DomainError
// where its entries overflow.  Unknown names throw UnknownPair.
SampledFamily make_family(const PairSpec& pair, const Generator& gen,
                          const Grid& grid);

// Implicit product-integration march for S = k(t) I + A (a*S)(t).
// Needs a weight `a` that folds to a power sum and a kernel value k(0+);
// trapezoid-order accurate for data without a front singularity.
SampledFamily solve_family(const Kernel& a, const Kernel& k,
                           const Generator& gen, const Grid& grid);

// Residual of the defining equation, r_i = A (a*S)(t_i) x - S(t_i) x
// + k(t_i) x, per probe vector, scaled by max(1, sup-norm of the family).
// The convolution runs through the product-integration engine (trapezoid
// fallback for weights outside the power-sum class); nodes below
// i0 = max(4, 2% of n) sit in the front-cell model zone and are reported in
// a note instead of the verdict.  Also reports the generator commutation
// defect.  Empty probes mean the standard basis plus one seeded random
// vector.
ResidualReport volterra_residual(const SampledFamily& fam,
                                 const std::vector<Vec>& probes = {},
                                 double tol = 1e-3);

// CSV dump/load: '#'-prefixed header lines carry the pair kernels, the
// generator, and provenance; data rows are node index, t, then the d^2
// complex entries row-major.  Writes are atomic (temp file plus rename).
void family_to_csv(const std::string& path, const SampledFamily& fam);
SampledFamily family_from_csv(const std::string& path);

}  // namespace resolvent
