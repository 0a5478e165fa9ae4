#include "resolvent/prodint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "resolvent/special.hpp"

namespace resolvent {

namespace {

template <class V>
struct VOps;

template <>
struct VOps<cx> {
  static cx zero(const cx&) { return cx(0.0); }
  static cx unit(const cx&) { return cx(1.0); }
};

template <>
struct VOps<Mat> {
  static Mat zero(const Mat& like) {
    return Mat::Zero(like.rows(), like.cols());
  }
  static Mat unit(const Mat& like) {
    return Mat::Identity(like.rows(), like.cols());
  }
};

double gval(double mu, double t) { return std::pow(t, mu - 1.0) * rgamma(mu); }

// Newton coefficients of the interpolant through up to three equally spaced
// values f(x0), f(x0+h), f(x0+2h): q(x) = A + B (x-x0) + C (x-x0)^2.
template <class V>
void newton_coeffs(const V& f0, const V* f1, const V* f2, double h, V& A, V& B,
                   V& C) {
  A = f0;
  if (f1 && f2) {
    V d1 = *f1 - f0;
    V d2 = *f2 - 2.0 * (*f1) + f0;
    C = d2 / (2.0 * h * h);
    B = d1 / h - d2 / (2.0 * h);
  } else if (f1) {
    B = (*f1 - f0) / h;
    C = VOps<V>::zero(f0);
  } else {
    B = VOps<V>::zero(f0);
    C = VOps<V>::zero(f0);
  }
}

}  // namespace

double WeightTermList::min_mu() const {
  double m = std::numeric_limits<double>::infinity();
  for (auto& t : terms) m = std::min(m, t.second);
  return m;
}

namespace {

void push_term(WeightTermList& w, cx c, double mu) {
  if (c == cx(0.0)) return;
  for (auto& t : w.terms) {
    if (std::abs(t.second - mu) <= 1e-12 * std::max(1.0, std::abs(mu))) {
      t.first += c;
      return;
    }
  }
  w.terms.push_back({c, mu});
}

}  // namespace

WeightTermList fold_weight(const Kernel& k) {
  WeightTermList out;
  for (auto& [c, base] : linear_terms(k)) {
    switch (base.tag()) {
      case KernelTag::Power:
        push_term(out, c, base.power_alpha());
        break;
      case KernelTag::Interpolant: {
        double e = base.interp_eps();
        push_term(out, c * (1.0 - e), 1.0);
        push_term(out, c * e, 2.0);
        break;
      }
      default:
        throw NoClosedForm(
            "fold_weight: weight must be a finite sum of scaled powers");
    }
  }
  // drop exact cancellations
  auto& ts = out.terms;
  ts.erase(std::remove_if(ts.begin(), ts.end(),
                          [](auto& t) { return t.first == cx(0.0); }),
           ts.end());
  return out;
}

WeightTermList fold_weight_derivative(const Kernel& k) {
  WeightTermList base = fold_weight(k);
  WeightTermList out;
  for (auto& [c, mu] : base.terms) {
    double dmu = mu - 1.0;
    if (std::abs(dmu) <= 1e-9) continue;  // d/dt of a constant
    push_term(out, c, dmu);
  }
  return out;
}

WeightMoments weight_moments(const WeightTermList& w, double h, int n) {
  if (!(h > 0.0) || n < 0) throw DomainError("weight_moments: bad grid");
  double mu_min = w.min_mu();
  if (!w.terms.empty() && mu_min <= -1.0 + 1e-12)
    throw NotIntegrable(
        "weight_moments: weight too singular even for an anchored end");
  WeightMoments wm;
  wm.h = h;
  wm.n = n;
  wm.weight = w;
  wm.m0.assign(n, cx(0.0));
  wm.m1.assign(n, cx(0.0));
  wm.m2.assign(n, cx(0.0));
  wm.m0_first_finite = w.terms.empty() || mu_min > 1e-12;
  for (int j = 0; j < n; ++j) {
    double u0 = j * h, u1 = (j + 1) * h;
    for (auto& [c, mu] : w.terms) {
      if (j > 0 || mu > 1e-12) wm.m0[j] += c * gmom(mu, 0, u0, u1);
      wm.m1[j] += c * gmom(mu, 1, u0, u1);
      wm.m2[j] += c * gmom(mu, 2, u0, u1);
    }
  }
  if (n > 0 && !wm.m0_first_finite) {
    double nan = std::numeric_limits<double>::quiet_NaN();
    wm.m0[0] = cx(nan, nan);
  }
  return wm;
}

namespace {

// Chooses a consecutive node stencil [p, p+deg] inside [lo, hi] for the
// x-cell [i, i+1]; prefers quadratics that contain the cell, falls back to
// linear or one-sided stencils near data boundaries and kinks.
void choose_stencil(int i, int lo, int hi, int& p, int& deg) {
  auto fits = [&](int a, int b) { return a >= lo && b <= hi; };
  if (fits(i, i + 2)) {
    p = i, deg = 2;
  } else if (fits(i - 1, i + 1)) {
    p = i - 1, deg = 2;
  } else if (fits(i, i + 1)) {
    p = i, deg = 1;
  } else if (fits(i + 1, i + 3)) {
    p = i + 1, deg = 2;
  } else if (fits(i + 1, i + 2)) {
    p = i + 1, deg = 1;
  } else if (fits(i - 2, i)) {
    p = i - 2, deg = 2;
  } else if (fits(i - 1, i)) {
    p = i - 1, deg = 1;
  } else {
    p = std::clamp(i, lo, hi), deg = 0;
  }
}

template <class V>
struct HeadFit {
  V C0, C1;
  double phi0, phi1;
};

template <class V>
HeadFit<V> fit_head(const HeadModel& head, const NodeData<V>& H, const V& like,
                    double h) {
  if (!(head.phi0 > 0.0) || !(head.phi1 > head.phi0 + 1e-6))
    throw DomainError("head model: exponents must satisfy 0 < phi0 < phi1");
  if (H.v.size() < 2)
    throw DomainError("head model: needs at least two data nodes");
  HeadFit<V> f;
  f.phi0 = head.phi0;
  f.phi1 = head.phi1;
  double a00 = gval(head.phi0, h), a01 = gval(head.phi1, h);
  double a10 = gval(head.phi0, 2.0 * h), a11 = gval(head.phi1, 2.0 * h);
  if (head.c0_known) {
    f.C0 = head.c0 * VOps<V>::unit(like);
    f.C1 = (H.v[0] - a00 * f.C0) / a01;
  } else {
    double det = a00 * a11 - a01 * a10;
    f.C0 = (a11 * H.v[0] - a01 * H.v[1]) / det;
    f.C1 = (a00 * H.v[1] - a10 * H.v[0]) / det;
  }
  return f;
}

}  // namespace

template <class V>
V integrate_weighted(const WeightMoments& wm, const NodeData<V>& H, int x_idx,
                     int cell_lo, int cell_hi, bool anchored,
                     const HeadModel* head) {
  if (H.v.empty() && !H.at_zero)
    throw DomainError("integrate_weighted: no data");
  const V like = H.v.empty() ? *H.at_zero : H.v[0];
  V acc = VOps<V>::zero(like);
  if (cell_hi <= cell_lo || x_idx <= 0) return acc;
  const double h = wm.h;
  if (std::abs(h - H.h) > 1e-12 * std::max(h, H.h))
    throw GridMismatch("integrate_weighted: weight and data spacing differ");
  if (cell_hi > wm.n)
    throw DomainError("integrate_weighted: weight moments cover too few cells");
  if (cell_hi > x_idx)
    throw DomainError("integrate_weighted: cell range reaches beyond X");
  if (!anchored && cell_lo == 0 && !wm.m0_first_finite)
    throw NotIntegrable(
        "integrate_weighted: weight singularity needs an anchored end");
  const int need_nodes = anchored ? x_idx - 1 : x_idx;
  if ((int)H.v.size() < need_nodes)
    throw DomainError("integrate_weighted: too few data nodes for X");

  const double mu_min = wm.weight.min_mu();

  // head model zone: x-cells [0, j0)
  int j0 = 0;
  if (head && H.v.size() >= 2) {
    j0 = head->zone_cells > 0 ? head->zone_cells : std::max(8, x_idx / 16);
    int cap = (anchored || mu_min <= 0.0) ? x_idx - 2 : x_idx;
    for (int kk : H.kinks)
      if (kk > 0) cap = std::min(cap, kk);
    j0 = std::clamp(j0, 0, std::max(0, cap));
  }

  const int head_u_lo = std::max(cell_lo, x_idx - j0);
  const int head_u_hi = cell_hi;  // head cells sit at the top of the u-range
  if (head_u_lo < head_u_hi) {
    HeadFit<V> f = fit_head(*head, H, like, h);
    const double X = x_idx * h;
    const double xa = (x_idx - head_u_hi) * h, xb = (x_idx - head_u_lo) * h;
    for (auto& [c, mu] : wm.weight.terms) {
      if (mu > 0.0) {
        acc += c * (power_cross(f.phi0, mu, xa, xb, X) * f.C0 +
                    power_cross(f.phi1, mu, xa, xb, X) * f.C1);
      } else {
        // weight is smooth on this x-range; fold exact model moments against
        // a quadratic interpolant of the weight values
        for (int i = x_idx - head_u_hi; i < x_idx - head_u_lo; ++i) {
          int p = std::clamp(i - 1, 0, x_idx - 3);
          double fv[3];
          for (int q = 0; q < 3; ++q)
            fv[q] = gval(mu, (x_idx - (p + q)) * h);
          double A, B, C;
          {
            double d1 = fv[1] - fv[0];
            double d2 = fv[2] - 2.0 * fv[1] + fv[0];
            C = d2 / (2.0 * h * h);
            B = d1 / h - d2 / (2.0 * h);
            A = fv[0];
          }
          double x0 = p * h, u0 = i * h, u1 = (i + 1) * h;
          for (int which = 0; which < 2; ++which) {
            double phi = which == 0 ? f.phi0 : f.phi1;
            double M0 = gmom(phi, 0, u0, u1);
            double M1 = gmom(phi, 1, u0, u1);
            double M2 = gmom(phi, 2, u0, u1);
            double I0 = M0;
            double I1 = M1 - x0 * M0;
            double I2 = M2 - 2.0 * x0 * M1 + x0 * x0 * M0;
            double w_int = A * I0 + B * I1 + C * I2;
            acc += (c * w_int) * (which == 0 ? f.C0 : f.C1);
          }
        }
      }
    }
  }

  auto hval = [&](int pnode) -> V {
    if (anchored && pnode == x_idx) return VOps<V>::zero(like);
    if (pnode == 0) return *H.at_zero;
    return H.v[pnode - 1];
  };

  // regular cells: exact weight moments times quadratic data stencils
  const int reg_hi = std::min(cell_hi, head_u_lo);
  for (int j = cell_lo; j < reg_hi; ++j) {
    if (j == 0 && anchored) {
      // end cell pinned at H(X) = 0: integrate B u + C u^2 exactly
      bool kink_inside = false;
      for (int kk : H.kinks) kink_inside |= (kk == x_idx - 1);
      V B = VOps<V>::zero(like), C = VOps<V>::zero(like);
      if (x_idx == 1) {
        if (!H.at_zero)
          throw DomainError(
              "integrate_weighted: anchored single cell needs a value at 0");
        B = *H.at_zero / h;
      } else if (kink_inside || (x_idx == 2 && !H.at_zero)) {
        B = hval(x_idx - 1) / h;
      } else {
        V v1 = hval(x_idx - 1), v2 = hval(x_idx - 2);
        C = (v2 - 2.0 * v1) / (2.0 * h * h);
        B = (4.0 * v1 - v2) / (2.0 * h);
      }
      acc += wm.m1[0] * B + wm.m2[0] * C;
      continue;
    }
    const int i = x_idx - j - 1;  // x-cell [i h, (i+1) h]
    int lo = H.at_zero ? 0 : 1;
    int hi = x_idx;
    for (int kk : H.kinks) {
      if (kk <= i) lo = std::max(lo, kk);
      if (kk >= i + 1) hi = std::min(hi, kk);
    }
    int p = 0, deg = 0;
    choose_stencil(i, lo, hi, p, deg);
    V f0 = hval(p);
    V f1v = VOps<V>::zero(like), f2v = VOps<V>::zero(like);
    if (deg >= 1) f1v = hval(p + 1);
    if (deg >= 2) f2v = hval(p + 2);
    V A = like, B = like, C = like;
    newton_coeffs(f0, deg >= 1 ? &f1v : nullptr, deg >= 2 ? &f2v : nullptr, h,
                  A, B, C);
    const double d = (x_idx - p) * h;  // x - x0 = d - u
    V val0 = A + d * B + (d * d) * C;
    V val1 = B + (2.0 * d) * C;
    acc += wm.m0[j] * val0 - wm.m1[j] * val1 + wm.m2[j] * C;
  }
  return acc;
}

template <class V>
std::vector<V> conv_quadratic(const WeightMoments& wm, const NodeData<V>& H,
                              int m, const HeadModel* head) {
  if (!wm.m0_first_finite && !wm.weight.terms.empty())
    throw NotIntegrable("conv_quadratic: weight is not integrable");
  std::vector<V> out;
  out.reserve(m);
  for (int i = 1; i <= m; ++i)
    out.push_back(integrate_weighted<V>(wm, H, i, 0, i, false, head));
  return out;
}

template <class V>
V integrate_weighted_forward(const WeightMoments& wm, const NodeData<V>& D,
                             int base_idx, int cell_lo, int cell_hi) {
  if (D.v.empty() && !D.at_zero)
    throw DomainError("integrate_weighted_forward: no data");
  const V like = D.v.empty() ? *D.at_zero : D.v[0];
  V acc = VOps<V>::zero(like);
  if (cell_hi <= cell_lo) return acc;
  if (base_idx < 0) throw DomainError("integrate_weighted_forward: base < 0");
  if (cell_hi > wm.n)
    throw DomainError(
        "integrate_weighted_forward: weight moments cover too few cells");
  if (base_idx + cell_hi > (int)D.v.size())
    throw DomainError("integrate_weighted_forward: too few data nodes");
  if (cell_lo == 0 && !wm.m0_first_finite)
    throw NotIntegrable(
        "integrate_weighted_forward: weight is not integrable at 0");
  const double h = wm.h;
  if (std::abs(h - D.h) > 1e-12 * std::max(h, D.h))
    throw GridMismatch(
        "integrate_weighted_forward: weight and data spacing differ");

  auto dval = [&](int pnode) -> V {
    if (pnode == 0) return *D.at_zero;
    return D.v[pnode - 1];
  };
  const int top = (int)D.v.size();
  for (int j = cell_lo; j < cell_hi; ++j) {
    const int i = base_idx + j;  // data cell [i h, (i+1) h]
    int lo = D.at_zero ? 0 : 1;
    int hi = top;
    for (int kk : D.kinks) {
      if (kk <= i) lo = std::max(lo, kk);
      if (kk >= i + 1) hi = std::min(hi, kk);
    }
    int p = 0, deg = 0;
    choose_stencil(i, lo, hi, p, deg);
    V f0 = dval(p);
    V f1v = VOps<V>::zero(like), f2v = VOps<V>::zero(like);
    if (deg >= 1) f1v = dval(p + 1);
    if (deg >= 2) f2v = dval(p + 2);
    V A = like, B = like, C = like;
    newton_coeffs(f0, deg >= 1 ? &f1v : nullptr, deg >= 2 ? &f2v : nullptr, h,
                  A, B, C);
    const double e = (p - base_idx) * h;  // x - x0 = u - e
    V val0 = A - e * B + (e * e) * C;
    V val1 = B - (2.0 * e) * C;
    acc += wm.m0[j] * val0 + wm.m1[j] * val1 + wm.m2[j] * C;
  }
  return acc;
}

LagWeights lag_weights(const WeightMoments& wm) {
  if (!wm.m0_first_finite)
    throw NotIntegrable("lag_weights: weight is not integrable");
  LagWeights lw;
  lw.left.resize(wm.n);
  lw.right.resize(wm.n);
  for (int l = 0; l < wm.n; ++l) {
    lw.left[l] = -double(l) * wm.m0[l] + wm.m1[l] / wm.h;
    lw.right[l] = double(l + 1) * wm.m0[l] - wm.m1[l] / wm.h;
  }
  return lw;
}

template cx integrate_weighted<cx>(const WeightMoments&, const NodeData<cx>&,
                                   int, int, int, bool, const HeadModel*);
template Mat integrate_weighted<Mat>(const WeightMoments&, const NodeData<Mat>&,
                                     int, int, int, bool, const HeadModel*);
template std::vector<cx> conv_quadratic<cx>(const WeightMoments&,
                                            const NodeData<cx>&, int,
                                            const HeadModel*);
template std::vector<Mat> conv_quadratic<Mat>(const WeightMoments&,
                                              const NodeData<Mat>&, int,
                                              const HeadModel*);
template cx integrate_weighted_forward<cx>(const WeightMoments&,
                                           const NodeData<cx>&, int, int, int);
template Mat integrate_weighted_forward<Mat>(const WeightMoments&,
                                             const NodeData<Mat>&, int, int,
                                             int);

}  // namespace resolvent
