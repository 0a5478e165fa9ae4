#include "resolvent/bivar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "resolvent/special.hpp"

namespace resolvent {
namespace {

cx lin_lin(double h, cx a0, cx a1, cx b0, cx b1) {
  // exact integral of two piecewise-linear factors over one cell
  return (h / 6.0) * (2.0 * a0 * b0 + a0 * b1 + a1 * b0 + 2.0 * a1 * b1);
}

int aligned_index(double t, double h, int lo, int hi, const char* what) {
  double x = t / h;
  int i = static_cast<int>(std::lround(x));
  if (std::abs(x - i) > 1e-9 * std::max(1.0, std::abs(x)))
    throw DomainError(std::string(what) + ": time is not node-aligned");
  if (i < lo || i > hi)
    throw DomainError(std::string(what) + ": node index out of range");
  return i;
}

// ---------------------------------------------------------------------------
// behaviour near zero: dominant g-exponent (and coefficient when derivable)

struct Leading {
  double p = 0.0;
  std::optional<cx> c;
};

std::optional<Leading> leading_of(const Kernel& k) {
  if (auto ps = as_power_sum(k)) {
    if (ps->empty()) return std::nullopt;
    double p = ps->front().second;
    for (const auto& term : *ps) p = std::min(p, term.second);
    cx c = 0.0;
    for (const auto& term : *ps)
      if (std::abs(term.second - p) <= 1e-9) c += term.first;
    if (c == cx(0.0)) return std::nullopt;
    return Leading{p, c};
  }
  switch (k.tag()) {
    case KernelTag::Exponential:
      return Leading{1.0, cx(1.0)};
    case KernelTag::Interpolant:
      return Leading{1.0, cx(1.0 - k.interp_eps())};
    case KernelTag::LevyHalf:   // vanishes to all orders at zero
    case KernelTag::Tabulated:  // no limit information
      return std::nullopt;
    case KernelTag::Scaled: {
      auto in = leading_of(k.child(0));
      if (!in) return std::nullopt;
      if (in->c) in->c = *in->c * k.scale();
      return in;
    }
    case KernelTag::Conv: {
      double p = 0.0;
      cx c = 1.0;
      bool known = true;
      for (int i = 0; i < k.arity(); ++i) {
        auto in = leading_of(k.child(i));
        if (!in) return std::nullopt;
        p += in->p;
        if (in->c)
          c *= *in->c;
        else
          known = false;
      }
      return Leading{p, known ? std::optional<cx>(c) : std::nullopt};
    }
    case KernelTag::ConvPower: {
      auto in = leading_of(k.child(0));
      if (!in) return std::nullopt;
      int m = k.conv_exponent();
      std::optional<cx> c;
      if (in->c) {
        cx acc = 1.0;
        for (int i = 0; i < m; ++i) acc *= *in->c;
        c = acc;
      }
      return Leading{m * in->p, c};
    }
    case KernelTag::Sum: {
      std::optional<Leading> best;
      for (int i = 0; i < k.arity(); ++i) {
        auto in = leading_of(k.child(i));
        if (!in) {
          if (k.child(i).tag() == KernelTag::LevyHalf) continue;
          return std::nullopt;
        }
        if (!best || in->p < best->p - 1e-9) {
          best = in;
        } else if (std::abs(in->p - best->p) <= 1e-9) {
          if (best->c && in->c)
            best->c = *best->c + *in->c;
          else
            best->c = std::nullopt;
        }
      }
      return best;
    }
    default:
      return std::nullopt;
  }
}

std::optional<double> second_exponent(const Kernel& k) {
  auto ps = as_power_sum(k);
  if (!ps || ps->size() < 2) return std::nullopt;
  double p = ps->front().second;
  for (const auto& term : *ps) p = std::min(p, term.second);
  double s = std::numeric_limits<double>::infinity();
  for (const auto& term : *ps)
    if (term.second > p + 1e-9) s = std::min(s, term.second);
  if (!std::isfinite(s)) return std::nullopt;
  return s;
}

bool helps_model(double p) {
  // quadratic stencils are already exact for integer exponents up to 3
  if (p >= 3.0 - 1e-9) return false;
  double d =
      std::min({std::abs(p - 1.0), std::abs(p - 2.0), std::abs(p - 3.0)});
  return d > 1e-9;
}

std::optional<HeadModel> make_head(const std::optional<Leading>& lead,
                                   std::optional<double> second) {
  if (!lead) return std::nullopt;
  double p0 = lead->p;
  if (p0 <= 1e-9) return std::nullopt;
  double p1 = p0 + 1.0;
  if (second && *second > p0 + 1e-6 && *second < p0 + 1.0 - 1e-9) p1 = *second;
  if (!helps_model(p0) && !helps_model(p1)) return std::nullopt;
  HeadModel hm;
  hm.phi0 = p0;
  hm.phi1 = p1;
  if (lead->c) {
    hm.c0_known = true;
    hm.c0 = *lead->c;
  }
  return hm;
}

// A single-term power sum makes the head model exact on the whole range, so
// the zone may swallow every cell as long as the weight side keeps exact
// cross moments (all weight exponents positive).
void widen_exact_head(std::optional<HeadModel>& head, const Kernel& data,
                      const WeightMoments& wm) {
  if (!head || !head->c0_known) return;
  auto ps = as_power_sum(data);
  if (!ps || ps->size() != 1) return;
  if (wm.weight.min_mu() > 1e-9) head->zone_cells = 1 << 28;
}

// ---------------------------------------------------------------------------
// sampling with zero padding beyond the genuinely known range

struct Sampled {
  NodeData<cx> nd;
  int avail = 0;  // genuine nodes; entries beyond are zero padding
  cx at0 = 0.0;   // best-effort value at 0+ (extrapolated when unknown)
};

std::vector<cx> values_on(const Kernel& k, const Grid& g) {
  if (k.evaluable()) return k.eval_nodes(g);
  switch (k.tag()) {
    case KernelTag::Conv:
    case KernelTag::ConvPower:
      return sample_values(k, g).v;
    case KernelTag::Scaled: {
      auto v = values_on(k.child(0), g);
      for (auto& x : v) x *= k.scale();
      return v;
    }
    case KernelTag::Sum: {
      std::vector<cx> acc(g.n, cx(0.0));
      for (int i = 0; i < k.arity(); ++i) {
        auto v = values_on(k.child(i), g);
        for (int j = 0; j < g.n; ++j) acc[j] += v[j];
      }
      return acc;
    }
    default:
      return k.eval_nodes(g);  // propagate the informative error
  }
}

Sampled sample_kernel(const Kernel& k, double h, int len) {
  Sampled s;
  s.nd.h = h;
  int avail = len;
  if (k.tag() == KernelTag::Tabulated) {
    const Grid& tg = k.tab_grid();
    Grid probe{h * len, len};
    if (!tg.spacing_matches(probe))
      throw GridMismatch(
          "sample_kernel: tabulated spacing differs from the working grid");
    avail = std::min(len, tg.n);
  }
  Grid g{h * avail, avail};
  s.nd.v = values_on(k, g);
  s.nd.v.resize(static_cast<size_t>(len), cx(0.0));
  s.avail = avail;
  if (avail < len) s.nd.kinks.push_back(avail);
  bool genuine = false;
  try {
    s.at0 = k.value_at_zero();
    genuine = true;
  } catch (const Error&) {
  }
  if (genuine)
    s.nd.at_zero = s.at0;
  else if (avail >= 2)
    s.at0 = 2.0 * s.nd.v[0] - s.nd.v[1];
  else
    s.at0 = avail >= 1 ? s.nd.v[0] : cx(0.0);
  return s;
}

cx node_value(const Sampled& s, int idx) {
  return idx == 0 ? s.at0 : s.nd.v[idx - 1];
}

cx nd_at0(const NodeData<cx>& B) {
  if (B.at_zero) return *B.at_zero;
  if (B.v.size() >= 2) return 2.0 * B.v[0] - B.v[1];
  return B.v.empty() ? cx(0.0) : B.v[0];
}

// ---------------------------------------------------------------------------
// the dispatcher state shared by at(); at_naive() rebuilds it from scratch

enum class Mode { PlusTensor, PlusPlus, MinusTensor, TensorTensor };
enum class Ori { WeightRight, WeightLeft, BothSampled };

struct Work {
  Mode mode{};
  double h = 0.0;
  int n = 0;
  // outer profile machinery
  std::optional<WeightMoments> wm_out;  // folded profile
  std::optional<Sampled> w_s;           // sampled smooth profile (fallback)
  bool anchored = false;
  std::optional<HeadModel> out_head;
  std::optional<cx> h_at0;  // diagonal profile limit at 0+, when finite
  // inner pass of the diagonal reduction
  Ori ori = Ori::BothSampled;
  std::optional<WeightMoments> wm_in;
  std::optional<Sampled> dat;
  std::optional<HeadModel> in_head;
  // raw factor samples (both-sampled inner; difference-profile rows)
  std::optional<Sampled> sL, sR;
  // two sum-profiles
  bool pp_closed = false;
  std::vector<std::pair<cx, double>> ppw, ppg;
  std::optional<Sampled> pps;
  // two tensors: separable one-variable convolutions
  std::vector<cx> ttA, ttB;
};

Work build_work(const BivarField& F, const BivarField& G, const Grid& grid) {
  if (grid.n < 4) throw DomainError("conv2: need at least 4 grid nodes");
  Work W;
  W.h = grid.h();
  W.n = grid.n;

  if (F.tag() == BivarTag::Tensor && G.tag() == BivarTag::Tensor) {
    W.mode = Mode::TensorTensor;
    W.ttA = conv1(F.left(), G.left(), grid).samples.v;
    W.ttB = conv1(F.right(), G.right(), grid).samples.v;
    return W;
  }

  if (F.tag() == BivarTag::Plus && G.tag() == BivarTag::Plus) {
    W.mode = Mode::PlusPlus;
    const Kernel& wf = F.profile();
    const Kernel& wg = G.profile();
    std::optional<WeightTermList> tf, tg;
    try {
      tf = fold_weight(wf);
    } catch (const NoClosedForm&) {
    }
    try {
      tg = fold_weight(wg);
    } catch (const NoClosedForm&) {
    }
    if (!tf && wf.singularity_exponent() < -1e-9)
      throw NonEvaluable("conv2: singular sum-profile has no power-sum form");
    if (!tg && wg.singularity_exponent() < -1e-9)
      throw NonEvaluable("conv2: singular sum-profile has no power-sum form");
    if (tf && tf->min_mu() <= -1.0 + 1e-12)
      throw NotIntegrable("conv2: sum-profile exponent at or below -1");
    if (tg && tg->min_mu() <= -1.0 + 1e-12)
      throw NotIntegrable("conv2: sum-profile exponent at or below -1");
    if (tf && tg && tf->min_mu() > 1e-9 && tg->min_mu() > 1e-9) {
      W.pp_closed = true;
      W.ppw = tf->terms;
      W.ppg = tg->terms;
      return W;
    }
    // numeric: the folded side (preferring the more singular one) drives the
    // outer pass; the other profile is sampled into the overlap-length row
    const Kernel* outer = nullptr;
    const Kernel* innerk = nullptr;
    std::optional<WeightTermList> tout;
    if (tf && tg) {
      bool f_out = tf->min_mu() <= tg->min_mu();
      outer = f_out ? &wf : &wg;
      innerk = f_out ? &wg : &wf;
      tout = f_out ? tf : tg;
    } else if (tf) {
      outer = &wf;
      innerk = &wg;
      tout = tf;
    } else if (tg) {
      outer = &wg;
      innerk = &wf;
      tout = tg;
    }
    if (tout) {
      W.wm_out = weight_moments(*tout, W.h, 2 * W.n);
      W.anchored = tout->min_mu() <= 1e-9;
      W.pps = sample_kernel(*innerk, W.h, 2 * W.n);
    } else {
      W.w_s = sample_kernel(wf, W.h, 2 * W.n);
      W.pps = sample_kernel(wg, W.h, 2 * W.n);
      innerk = &wg;
    }
    // head for the row w_inner(x) * overlap(x) ~ c p g_{p+1} near zero
    auto lead = leading_of(*innerk);
    auto sec = second_exponent(*innerk);
    if (lead) {
      if (lead->c) lead->c = *lead->c * lead->p;
      lead->p += 1.0;
    }
    if (sec) sec = *sec + 1.0;
    W.out_head = make_head(lead, sec);
    return W;
  }

  const BivarField* prof = nullptr;
  const BivarField* tens = nullptr;
  if (F.tag() == BivarTag::Plus && G.tag() == BivarTag::Tensor) {
    W.mode = Mode::PlusTensor;
    prof = &F;
    tens = &G;
  } else if (F.tag() == BivarTag::Tensor && G.tag() == BivarTag::Plus) {
    W.mode = Mode::PlusTensor;
    prof = &G;
    tens = &F;
  } else if (F.tag() == BivarTag::Minus && G.tag() == BivarTag::Tensor) {
    W.mode = Mode::MinusTensor;
    prof = &F;
    tens = &G;
  } else if (F.tag() == BivarTag::Tensor && G.tag() == BivarTag::Minus) {
    W.mode = Mode::MinusTensor;
    prof = &G;
    tens = &F;
  } else {
    throw NonEvaluable("conv2: unsupported field combination " + F.format() +
                       " with " + G.format());
  }

  const Kernel& w = prof->profile();
  const Kernel& kf = tens->left();
  const Kernel& kg = tens->right();
  if (!kf.integrable() || !kg.integrable())
    throw NotIntegrable("conv2: tensor factors must be integrable");

  if (W.mode == Mode::MinusTensor) {
    auto lf = leading_of(kf), lg = leading_of(kg);
    if (lf && lg && lf->p + lg->p <= 1.0 + 1e-9)
      throw NotIntegrable(
          "conv2: factor correlation diverges at zero lag; the difference "
          "profile needs bounded tensor factors");
    bool folded = false;
    try {
      WeightTermList terms = fold_weight(w);
      if (terms.min_mu() <= 1e-9)
        throw NotIntegrable(
            "conv2: difference profile must be integrable with positive "
            "g-exponent");
      W.wm_out = weight_moments(terms, W.h, 2 * W.n);
      folded = true;
    } catch (const NoClosedForm&) {
    }
    if (!folded) {
      if (w.singularity_exponent() < -1e-9)
        throw NonEvaluable(
            "conv2: singular difference profile has no power-sum form");
      W.w_s = sample_kernel(w, W.h, 2 * W.n);
    }
    W.sL = sample_kernel(kf, W.h, W.n);
    W.sR = sample_kernel(kg, W.h, W.n);
    return W;
  }

  // PlusTensor
  bool folded = false;
  try {
    WeightTermList terms = fold_weight(w);
    W.wm_out = weight_moments(terms, W.h, 2 * W.n);
    W.anchored = terms.min_mu() <= 1e-9;
    folded = true;
  } catch (const NoClosedForm&) {
  }
  if (!folded) {
    if (w.singularity_exponent() < -1e-9)
      throw NonEvaluable("conv2: singular sum-profile has no power-sum form");
    W.w_s = sample_kernel(w, W.h, 2 * W.n);
  }
  bool right = false, left = false;
  try {
    W.wm_in = weight_moments(fold_weight(kg), W.h, W.n);
    right = true;
  } catch (const NoClosedForm&) {
  }
  if (!right) {
    try {
      W.wm_in = weight_moments(fold_weight(kf), W.h, W.n);
      left = true;
    } catch (const NoClosedForm&) {
    }
  }
  if (right) {
    W.ori = Ori::WeightRight;
    W.dat = sample_kernel(kf, W.h, 2 * W.n);
    W.in_head = make_head(leading_of(kf), second_exponent(kf));
    widen_exact_head(W.in_head, kf, *W.wm_in);
  } else if (left) {
    W.ori = Ori::WeightLeft;
    W.dat = sample_kernel(kg, W.h, 2 * W.n);
    W.in_head = make_head(leading_of(kg), second_exponent(kg));
    widen_exact_head(W.in_head, kg, *W.wm_in);
  } else {
    W.ori = Ori::BothSampled;
    W.sL = sample_kernel(kf, W.h, 2 * W.n);
    W.sR = sample_kernel(kg, W.h, 2 * W.n);
  }
  auto lf = leading_of(kf), lg = leading_of(kg);
  if (lf && lg) {
    Leading prod{lf->p + lg->p, (lf->c && lg->c)
                                    ? std::optional<cx>(*lf->c * *lg->c)
                                    : std::nullopt};
    W.out_head = make_head(prod, std::nullopt);
    double psum = lf->p + lg->p;
    if (psum > 1.0 + 1e-9)
      W.h_at0 = cx(0.0);
    else if (psum > 1.0 - 1e-9 && lf->c && lg->c)
      W.h_at0 = *lf->c * *lg->c;
    // below an exponent sum of one the diagonal profile blows up at 0+:
    // leave the value unset so stencils stay clear of the origin
  } else {
    // an unknown leading term comes from rapidly vanishing or tabulated
    // factors, whose correlation dies out at zero lag
    W.h_at0 = cx(0.0);
  }
  return W;
}

// inner row of the diagonal reduction at x = k h
cx pt_row(const Work& W, int k, int it, int is) {
  switch (W.ori) {
    case Ori::WeightRight: {
      int lo = std::max(0, k - it), hi = std::min(is, k);
      if (lo >= hi) return cx(0.0);
      return integrate_weighted(*W.wm_in, W.dat->nd, k, lo, hi, false,
                                W.in_head ? &*W.in_head : nullptr);
    }
    case Ori::WeightLeft: {
      int lo = std::max(0, k - is), hi = std::min(it, k);
      if (lo >= hi) return cx(0.0);
      return integrate_weighted(*W.wm_in, W.dat->nd, k, lo, hi, false,
                                W.in_head ? &*W.in_head : nullptr);
    }
    case Ori::BothSampled: {
      int lo = std::max(0, k - is), hi = std::min(it, k);
      cx acc = 0.0;
      for (int j = lo; j < hi; ++j)
        acc += lin_lin(W.h, node_value(*W.sL, j), node_value(*W.sL, j + 1),
                       node_value(*W.sR, k - j), node_value(*W.sR, k - j - 1));
      return acc;
    }
  }
  return cx(0.0);
}

cx outer_pass(const Work& W, const NodeData<cx>& H, int X) {
  if (W.wm_out)
    return integrate_weighted(*W.wm_out, H, X, 0, X, W.anchored,
                              W.out_head ? &*W.out_head : nullptr);
  const Sampled& ws = *W.w_s;
  if (ws.avail < X)
    throw IntervalExceeded("conv2: profile samples do not reach t+s");
  cx acc = 0.0;
  auto hv = [&](int idx) -> cx {
    return idx == 0 ? nd_at0(H) : H.v[idx - 1];
  };
  for (int j = 0; j < X; ++j)
    acc += lin_lin(W.h, hv(j), hv(j + 1), node_value(ws, X - j),
                   node_value(ws, X - j - 1));
  return acc;
}

cx value_pt(const Work& W, int it, int is) {
  int X = it + is;
  if (W.ori == Ori::WeightRight && W.dat->avail < it)
    throw IntervalExceeded("conv2: tensor factor samples do not cover (0, t]");
  if (W.ori == Ori::WeightLeft && W.dat->avail < is)
    throw IntervalExceeded("conv2: tensor factor samples do not cover (0, s]");
  if (W.ori == Ori::BothSampled &&
      (W.sL->avail < it || W.sR->avail < is))
    throw IntervalExceeded("conv2: tensor factor samples do not cover the box");
  NodeData<cx> H;
  H.h = W.h;
  H.at_zero = W.h_at0;
  H.v.resize(static_cast<size_t>(X));
  for (int k = 1; k <= X; ++k) H.v[k - 1] = pt_row(W, k, it, is);
  int kmin = std::min(it, is), kmax = std::max(it, is);
  H.kinks.push_back(kmin);
  if (kmax != kmin) H.kinks.push_back(kmax);
  return outer_pass(W, H, X);
}

cx value_pp(const Work& W, int it, int is) {
  double h = W.h;
  double t = it * h, s = is * h, X = (it + is) * h;
  double m = std::min(t, s), M = std::max(t, s);
  if (W.pp_closed) {
    cx acc = 0.0;
    for (const auto& [cw, mw] : W.ppw)
      for (const auto& [cg, pg] : W.ppg) {
        double p1 = pg * power_cross(pg + 1.0, mw, 0.0, m, X);
        double p2 = (M > m) ? m * power_cross(pg, mw, m, M, X) : 0.0;
        double p3 = mw * power_cross(pg, mw + 1.0, M, X, X);
        acc += cw * cg * (p1 + p2 + p3);
      }
    return acc;
  }
  int Xi = it + is;
  const Sampled& gs = *W.pps;
  if (gs.avail < Xi)
    throw IntervalExceeded("conv2: sum-profile samples do not reach t+s");
  NodeData<cx> H;
  H.h = h;
  H.at_zero = cx(0.0);
  H.v.resize(static_cast<size_t>(Xi));
  int imin = std::min(it, is), imax = std::max(it, is);
  for (int k = 1; k <= Xi; ++k) {
    double tent = h * std::min({k, imin, Xi - k});  // overlap length
    H.v[k - 1] = gs.nd.v[k - 1] * tent;
  }
  H.kinks.push_back(imin);
  if (imax != imin) H.kinks.push_back(imax);
  return outer_pass(W, H, Xi);
}

cx value_mt(const Work& W, int it, int is) {
  const Sampled* f = &*W.sL;
  const Sampled* g = &*W.sR;
  if (it < is) {
    std::swap(it, is);
    std::swap(f, g);
  }
  int id = it - is;
  double h = W.h;
  if (f->avail < it || g->avail < is)
    throw IntervalExceeded("conv2: tensor factor samples do not cover the box");

  // correlation rows K(lag) of the two factors over the admissible strip
  cx K0 = 0.0;
  std::vector<cx> kp(static_cast<size_t>(it)), kn(static_cast<size_t>(is));
  for (int d = 0; d <= it; ++d) {
    int L = std::min(is, it - d);
    cx acc = 0.0;
    for (int j = 0; j < L; ++j)
      acc += lin_lin(h, node_value(*g, j), node_value(*g, j + 1),
                     node_value(*f, j + d), node_value(*f, j + d + 1));
    if (d == 0)
      K0 = acc;
    else
      kp[d - 1] = acc;
  }
  for (int d = 1; d <= is; ++d) {
    int L = std::min(it, is - d);
    cx acc = 0.0;
    for (int j = 0; j < L; ++j)
      acc += lin_lin(h, node_value(*f, j), node_value(*f, j + 1),
                     node_value(*g, j + d), node_value(*g, j + d + 1));
    kn[d - 1] = acc;
  }

  if (W.wm_out) {
    cx p2 = 0.0;
    if (id > 0) {
      NodeData<cx> K2;
      K2.h = h;
      K2.v = kp;
      K2.at_zero = K0;
      p2 = integrate_weighted(*W.wm_out, K2, id, 0, id, false, nullptr);
    }
    NodeData<cx> H1;
    H1.h = h;
    H1.v.resize(static_cast<size_t>(it));
    H1.at_zero = kn[is - 1];
    for (int j = 1; j <= it; ++j) {
      if (j < is)
        H1.v[j - 1] = kn[is - j - 1];
      else if (j == is)
        H1.v[j - 1] = K0;
      else
        H1.v[j - 1] = kp[j - is - 1];
    }
    H1.kinks.push_back(is);
    cx p1 = integrate_weighted(*W.wm_out, H1, it, id, it, false, nullptr);
    NodeData<cx> K3;
    K3.h = h;
    K3.v = kp;
    K3.at_zero = K0;
    cx p3 = integrate_weighted_forward(*W.wm_out, K3, id, 0, is);
    return p1 + p2 + p3;
  }

  // smooth profile: piecewise-linear cells over the lag variable
  const Sampled& ws = *W.w_s;
  if (ws.avail < it)
    throw IntervalExceeded("conv2: profile samples do not reach the range");
  auto kv = [&](int x) -> cx {
    if (x > 0) return kp[x - 1];
    if (x == 0) return K0;
    return kn[-x - 1];
  };
  cx acc = 0.0;
  for (int x = -is; x < it; ++x) {
    int a0 = std::abs(id - x), a1 = std::abs(id - x - 1);
    acc += lin_lin(h, kv(x), kv(x + 1), node_value(ws, a0),
                   node_value(ws, a1));
  }
  return acc;
}

cx work_value(const Work& W, int it, int is) {
  if (it < 1 || is < 1)
    throw DomainError("conv2: node indices start at 1");
  switch (W.mode) {
    case Mode::TensorTensor:
      if (it > static_cast<int>(W.ttA.size()) ||
          is > static_cast<int>(W.ttB.size()))
        throw DomainError("conv2: node index beyond the grid");
      return W.ttA[it - 1] * W.ttB[is - 1];
    case Mode::PlusTensor:
      if (it > W.n || is > W.n)
        throw DomainError("conv2: node index beyond the grid");
      return value_pt(W, it, is);
    case Mode::PlusPlus:
      if (it > W.n || is > W.n)
        throw DomainError("conv2: node index beyond the grid");
      return value_pp(W, it, is);
    case Mode::MinusTensor:
      if (it > W.n || is > W.n)
        throw DomainError("conv2: node index beyond the grid");
      return value_mt(W, it, is);
  }
  throw DomainError("conv2: unknown dispatch state");
}

// ---------------------------------------------------------------------------
// checker helpers

// int_{lo h}^{hi h} A(u) B(x - u) du at x = x_idx h, with B given on nodes.
cx pair_segment(const Kernel& A, const NodeData<cx>& B, double h, int x_idx,
                int lo, int hi, const HeadModel* bh) {
  try {
    WeightMoments wm = weight_moments(fold_weight(A), h, hi);
    return integrate_weighted(wm, B, x_idx, lo, hi, false, bh);
  } catch (const NoClosedForm&) {
  }
  Sampled sa = sample_kernel(A, h, hi);
  cx acc = 0.0;
  auto bval = [&](int idx) -> cx {
    return idx == 0 ? nd_at0(B) : B.v[idx - 1];
  };
  for (int j = lo; j < hi; ++j)
    acc += lin_lin(h, node_value(sa, j), node_value(sa, j + 1),
                   bval(x_idx - j), bval(x_idx - j - 1));
  return acc;
}

NodeData<cx> conv_nodes(const Kernel& a, const Kernel& b, double h, int m) {
  Grid g{h * m, m};
  Conv1Result r = conv1(a, b, g);
  NodeData<cx> nd;
  nd.h = h;
  nd.v = std::move(r.samples.v);
  if (r.closed) {
    try {
      nd.at_zero = r.closed->value_at_zero();
    } catch (const Error&) {
    }
  }
  return nd;
}

cx kernel_value_at(const Kernel& k, double h, int idx) {
  if (k.evaluable()) return k.eval(idx * h);
  Grid g{h * idx, idx};
  return values_on(k, g).back();
}

cx riemann2(const BivarField& F, const BivarField& G, double h, int it,
            int is) {
  double t = it * h, s = is * h;
  cx acc = 0.0;
  for (int i = 1; i <= it; ++i)
    for (int j = 1; j <= is; ++j) {
      double r = (i - 0.5) * h, v = (j - 0.5) * h;
      acc += F.eval(t - r, s - v) * G.eval(r, v);
    }
  return acc * h * h;
}

}  // namespace

// ---------------------------------------------------------------------------
// BivarField

BivarField::BivarField(BivarTag tag, std::vector<Kernel> ks, Grid grid,
                       std::vector<cx> values)
    : tag_(tag), ks_(std::move(ks)), grid_(grid), vals_(std::move(values)) {}

BivarField BivarField::plus(Kernel w) {
  std::vector<Kernel> ks;
  ks.push_back(std::move(w));
  return BivarField(BivarTag::Plus, std::move(ks), Grid{}, {});
}

BivarField BivarField::minus(Kernel w) {
  std::vector<Kernel> ks;
  ks.push_back(std::move(w));
  return BivarField(BivarTag::Minus, std::move(ks), Grid{}, {});
}

BivarField BivarField::tensor(Kernel f, Kernel g) {
  std::vector<Kernel> ks;
  ks.push_back(std::move(f));
  ks.push_back(std::move(g));
  return BivarField(BivarTag::Tensor, std::move(ks), Grid{}, {});
}

BivarField BivarField::tabulated(Grid grid, std::vector<cx> values) {
  if (grid.n < 1 ||
      values.size() != static_cast<size_t>(grid.n) * static_cast<size_t>(grid.n))
    throw DomainError("BivarField::tabulated: need n*n row-major values");
  return BivarField(BivarTag::Tabulated2D, {}, grid, std::move(values));
}

const Kernel& BivarField::profile() const {
  if (tag_ != BivarTag::Plus && tag_ != BivarTag::Minus)
    throw DomainError("BivarField: field has no one-variable profile");
  return ks_[0];
}

const Kernel& BivarField::left() const {
  if (tag_ != BivarTag::Tensor)
    throw DomainError("BivarField: field is not a tensor product");
  return ks_[0];
}

const Kernel& BivarField::right() const {
  if (tag_ != BivarTag::Tensor)
    throw DomainError("BivarField: field is not a tensor product");
  return ks_[1];
}

const Grid& BivarField::table_grid() const {
  if (tag_ != BivarTag::Tabulated2D)
    throw DomainError("BivarField: field is not tabulated");
  return grid_;
}

const std::vector<cx>& BivarField::table() const {
  if (tag_ != BivarTag::Tabulated2D)
    throw DomainError("BivarField: field is not tabulated");
  return vals_;
}

cx BivarField::eval(double t, double s) const {
  switch (tag_) {
    case BivarTag::Plus:
      return ks_[0].eval(t + s);
    case BivarTag::Minus: {
      double d = std::abs(t - s);
      if (d == 0.0) return ks_[0].value_at_zero();
      return ks_[0].eval(d);
    }
    case BivarTag::Tensor:
      return ks_[0].eval(t) * ks_[1].eval(s);
    case BivarTag::Tabulated2D: {
      double h = grid_.h();
      if (t < h * (1.0 - 1e-9) || s < h * (1.0 - 1e-9) ||
          t > grid_.T * (1.0 + 1e-9) || s > grid_.T * (1.0 + 1e-9))
        throw DomainError("BivarField: point outside the tabulated square");
      auto locate = [&](double x) {
        int i = std::min(static_cast<int>(std::floor(x / h)), grid_.n - 1);
        i = std::max(i, 1);
        double f = std::clamp(x / h - i, 0.0, 1.0);
        return std::pair<int, double>(i, f);
      };
      auto [i, ft] = locate(t);
      auto [j, fs] = locate(s);
      int n = grid_.n;
      auto at = [&](int a, int b) -> cx {
        return vals_[static_cast<size_t>(a - 1) * n + (b - 1)];
      };
      int i1 = std::min(i + 1, n), j1 = std::min(j + 1, n);
      cx v00 = at(i, j), v10 = at(i1, j), v01 = at(i, j1), v11 = at(i1, j1);
      return v00 * ((1 - ft) * (1 - fs)) + v10 * (ft * (1 - fs)) +
             v01 * ((1 - ft) * fs) + v11 * (ft * fs);
    }
  }
  throw DomainError("BivarField: unknown field tag");
}

std::string BivarField::format() const {
  switch (tag_) {
    case BivarTag::Plus:
      return "plus(" + ks_[0].format() + ")";
    case BivarTag::Minus:
      return "minus(" + ks_[0].format() + ")";
    case BivarTag::Tensor:
      return "tensor(" + ks_[0].format() + ", " + ks_[1].format() + ")";
    case BivarTag::Tabulated2D:
      return "table2d(n=" + std::to_string(grid_.n) + ")";
  }
  return "bivar(?)";
}

// ---------------------------------------------------------------------------
// Conv2

struct Conv2::Impl {
  BivarField F, G;
  Work work;
};

Conv2::Conv2(BivarField F, BivarField G, Grid grid) : grid_(grid) {
  Work w = build_work(F, G, grid);
  impl_ = std::unique_ptr<Impl>(
      new Impl{std::move(F), std::move(G), std::move(w)});
}

Conv2::~Conv2() = default;
Conv2::Conv2(Conv2&&) noexcept = default;
Conv2& Conv2::operator=(Conv2&&) noexcept = default;

cx Conv2::at(int it, int is) const { return work_value(impl_->work, it, is); }

cx Conv2::at_naive(int it, int is) const {
  if (it < 1 || is < 1 || it > grid_.n || is > grid_.n)
    throw DomainError("conv2: node index out of range");
  int m = std::max(it, is);
  Grid sub{grid_.h() * m, m};
  Work w = build_work(impl_->F, impl_->G, sub);
  return work_value(w, it, is);
}

cx conv2_at(const BivarField& F, const BivarField& G, const Grid& grid, int it,
            int is) {
  Conv2 c(F, G, grid);
  return c.at(it, is);
}

// ---------------------------------------------------------------------------
// identity checks

std::vector<CheckResult> check_mixing_identities(const Grid& grid,
                                                 double tol) {
  if (grid.n < 8)
    throw DomainError("check_mixing_identities: need at least 8 nodes");
  std::vector<CheckResult> out;
  const double h = grid.h();
  const int n = grid.n;

  {
    // tensor against tensor: separable reassembly vs direct double sum
    BivarField F = BivarField::tensor(Kernel::exponential(2.0),
                                      Kernel::exponential(1.0));
    BivarField G =
        BivarField::tensor(Kernel::interpolant(0.3), Kernel::constant(1.0));
    Conv2 c(F, G, grid);
    double worst = 0.0;
    const int pts[3][2] = {{n / 2, n / 2}, {n / 4, (3 * n) / 4}, {n, n / 2}};
    for (const auto& p : pts) {
      cx fast = c.at(p[0], p[1]);
      cx ref = riemann2(F, G, h, p[0], p[1]);
      worst = std::max(worst,
                       std::abs(fast - ref) / std::max(1.0, std::abs(fast)));
    }
    CheckResult r;
    r.name = "mixing: tensor x tensor splits into one-variable convolutions";
    r.residual = worst;
    r.tol = tol;
    r.passed = worst <= tol;
    r.note = "smooth probes against a midpoint double-integration reference";
    out.push_back(r);
  }

  {
    // sum-profile mixed into a tensor pair
    struct Probe {
      Kernel g, f, hk;
    };
    std::vector<Probe> probes;
    probes.push_back(
        {Kernel::constant(1.0), Kernel::power(0.5), Kernel::power(0.5)});
    probes.push_back(
        {Kernel::power(0.5), Kernel::exponential(1.0), Kernel::constant(1.0)});
    double worst = 0.0;
    const int pts[2][2] = {{n / 2, n / 2}, {(3 * n) / 4, n / 4}};
    for (const auto& pr : probes) {
      Conv2 c(BivarField::plus(pr.g), BivarField::tensor(pr.f, pr.hk), grid);
      NodeData<cx> fg = conv_nodes(pr.f, pr.g, h, 2 * n);
      Sampled sf = sample_kernel(pr.f, h, 2 * n);
      for (const auto& p : pts) {
        int it = p[0], is = p[1], X = it + is;
        cx lhs = c.at(it, is);
        cx term1 = pair_segment(pr.hk, fg, h, X, 0, is, nullptr);
        cx term2 =
            pair_segment(Kernel::conv(pr.hk, pr.g), sf.nd, h, X, 0, is,
                         nullptr);
        cx rhs = term1 - term2;
        worst = std::max(worst,
                         std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
      }
    }
    CheckResult r;
    r.name = "mixing: sum profile into a tensor pair";
    r.residual = worst;
    r.tol = tol;
    r.passed = worst <= tol;
    r.note = "reassembled from shifted one-variable convolutions";
    out.push_back(r);
  }

  {
    // two sum-profiles against translated one-variable pieces
    struct Probe {
      Kernel f, g;
    };
    std::vector<Probe> probes;
    probes.push_back({Kernel::power(0.5), Kernel::power(1.5)});
    probes.push_back({Kernel::exponential(1.0), Kernel::exponential(1.0)});
    double worst = 0.0;
    const int pts[2][2] = {{n / 2, n / 2}, {(3 * n) / 4, n / 4}};
    for (const auto& pr : probes) {
      Conv2 c(BivarField::plus(pr.f), BivarField::plus(pr.g), grid);
      Sampled fs = sample_kernel(pr.f, h, 2 * n);
      Sampled gs = sample_kernel(pr.g, h, 2 * n);
      Kernel Mf = multiplier_M(pr.f);
      Kernel Mg = multiplier_M(pr.g);
      for (const auto& p : pts) {
        int it = p[0], is = p[1], X = it + is;
        cx lhs = c.at(it, is);
        worst = std::max(worst, std::abs(lhs - c.at(is, it)) /
                                    std::max(1.0, std::abs(lhs)));
        cx term_a = pair_segment(Mg, fs.nd, h, X, 0, is, nullptr);
        cx term_c = pair_segment(Mf, gs.nd, h, X, 0, is, nullptr);
        cx term_b = 0.0;
        int m = it - is;
        if (m > 0) {
          cx acc = 0.0;
          for (int j = 0; j < m; ++j)
            acc += lin_lin(h, gs.nd.v[is + j - 1], gs.nd.v[is + j],
                           fs.nd.v[is + m - j - 1], fs.nd.v[is + m - j - 2]);
          term_b = (is * h) * acc;
        }
        cx rhs = term_a + term_b + term_c;
        worst = std::max(worst,
                         std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
      }
    }
    CheckResult r;
    r.name = "mixing: two sum profiles";
    r.residual = worst;
    r.tol = tol;
    r.passed = worst <= tol;
    r.note = "translated pieces use the value-weighted multiplier";
    out.push_back(r);
  }

  return out;
}

CheckResult check_split_convolution(const Kernel& f, const Kernel& g,
                                    const Kernel& h, const Grid& grid,
                                    double t, double tau, double tol) {
  const double hh = grid.h();
  int it = aligned_index(t, hh, 2, grid.n, "check_split_convolution");
  int itau = aligned_index(tau, hh, 1, it - 1, "check_split_convolution");
  NodeData<cx> Dgf = conv_nodes(g, f, hh, 2 * grid.n);
  auto headD = make_head(leading_of(Kernel::conv(g, f)), std::nullopt);
  cx piece1 =
      pair_segment(h, Dgf, hh, it, itau, it, headD ? &*headD : nullptr);
  Sampled sf = sample_kernel(f, hh, 2 * grid.n);
  cx piece2 = pair_segment(Kernel::conv(g, h), sf.nd, hh, it, 0, itau,
                           nullptr);
  cx triple = kernel_value_at(Kernel::conv(Kernel::conv(f, g), h), hh, it);
  cx mixed = conv2_at(BivarField::plus(g), BivarField::tensor(f, h), grid,
                      it - itau, itau);
  cx rhs = triple - mixed;
  cx lhs = piece1 + piece2;
  CheckResult r;
  r.name = "split: three-kernel convolution at an interior time";
  r.residual = std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs));
  r.tol = tol;
  r.passed = r.residual <= tol;
  return r;
}

CheckResult check_shifted_power_identity(double alpha, const Grid& grid,
                                         double t, double s, double tol) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError(
        "check_shifted_power_identity: exponent must lie in (0, 1)");
  const double h = grid.h();
  int it = aligned_index(t, h, 1, grid.n, "check_shifted_power_identity");
  int is = aligned_index(s, h, 1, grid.n, "check_shifted_power_identity");
  cx val = conv2_at(
      BivarField::plus(Kernel::power(-alpha)),
      BivarField::tensor(Kernel::power(alpha), Kernel::power(alpha)), grid, it,
      is);
  double ref = std::pow((it + is) * h, alpha - 1.0) * rgamma(alpha);
  CheckResult r;
  r.name = "shifted power from an anchored mixed convolution";
  r.residual = std::abs(val + ref) / std::abs(ref);
  r.tol = tol;
  r.passed = r.residual <= tol;
  r.note = "negative-exponent profile exercises the anchored end";
  return r;
}

}  // namespace resolvent
