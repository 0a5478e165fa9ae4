#pragma once

#include <optional>
#include <vector>

#include "resolvent/kernels.hpp"
#include "resolvent/types.hpp"

namespace resolvent {

// Product-integration engine: exact power-law cell moments folded against
// polynomial interpolation of sampled data. Weights are finite sums of
// scaled g_mu; the data side is interpolated with kink-aware quadratic
// stencils, an optional two-exponent head model near the data origin, and an
// optional anchored end cell when the data vanishes at the evaluation point
// (which is what makes weights with mu in (-1, 0] usable at all).

struct WeightTermList {
  std::vector<std::pair<cx, double>> terms;  // (coefficient, mu): sum c g_mu
  double min_mu() const;
};

// Folds a descriptor into power terms; throws NoClosedForm outside the class.
WeightTermList fold_weight(const Kernel& k);

// Differentiates a power-sum kernel termwise: d/dt g_mu = g_{mu-1}.
WeightTermList fold_weight_derivative(const Kernel& k);

// mk[j] = int_{jh}^{(j+1)h} u^k w(u) du for the aggregated weight.
// m0[0] is set only when every term has mu > 0 (flag m0_first_finite).
struct WeightMoments {
  double h = 0.0;
  int n = 0;
  WeightTermList weight;
  std::vector<cx> m0, m1, m2;
  bool m0_first_finite = true;
};

WeightMoments weight_moments(const WeightTermList& w, double h, int n);

// Two-exponent model for data behaving like c0 g_{phi0} + c1 g_{phi1} near
// its origin; c0 may be pinned by the caller (then c1 is collocated at the
// first node, otherwise both come from the first two nodes).
struct HeadModel {
  double phi0 = 1.0;
  double phi1 = 2.0;
  bool c0_known = false;
  cx c0{};
  int zone_cells = 0;  // 0: choose automatically
};

// Sampled data on the nodes h, 2h, ..., n h (v[0] at h), with an optional
// exact value at 0 and the node indices where the derivative jumps.
template <class V>
struct NodeData {
  std::vector<V> v;
  double h = 0.0;
  std::optional<V> at_zero;
  std::vector<int> kinks;
};

// int_{u in [cell_lo h, cell_hi h]} w(u) H(X - u) du with X = x_idx * h.
// anchored: H(X) = 0 is exact and the u-cell at 0 integrates the vanishing
// quadratic (requires min mu > -1); plain mode requires min mu > 0.
// head: model for H near 0, replacing the quadratic stencils there.
template <class V>
V integrate_weighted(const WeightMoments& wm, const NodeData<V>& H, int x_idx,
                     int cell_lo, int cell_hi, bool anchored,
                     const HeadModel* head);

// (w * H)(i h) for i = 1..m via the same cells (plain end handling).
template <class V>
std::vector<V> conv_quadratic(const WeightMoments& wm, const NodeData<V>& H,
                              int m, const HeadModel* head);

// int_{u in [cell_lo h, cell_hi h]} w(u) D(base_idx h + u) du: data read in the
// forward direction. No anchored end exists here, so the weight must be
// integrable when cell_lo = 0; data samples must be finite on the range.
template <class V>
V integrate_weighted_forward(const WeightMoments& wm, const NodeData<V>& D,
                             int base_idx, int cell_lo, int cell_hi);

// Trapezoid-order lag coefficients of the weight against piecewise-linear
// data: (w * S)(t_i) = sum_{j<i} [ left[l] S_j + right[l] S_{j+1} ],
// l = i - j - 1, S_0 the value at 0. right[0] multiplies the newest sample.
struct LagWeights {
  std::vector<cx> left, right;
};

LagWeights lag_weights(const WeightMoments& wm);

}  // namespace resolvent
