#include "resolvent/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#if defined(RESOLVENT_HAVE_QUADMATH)
#include <quadmath.h>
#endif

namespace resolvent {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double rgamma(double x) {
  if (x > 0.0) {
    if (x > 178.0) return 0.0;  // 1/Gamma underflows in double
    return std::exp(-std::lgamma(x));
  }
  if (x == std::floor(x)) return 0.0;  // poles of Gamma
  // Reflection with Gamma(1-x) > 0: 1/Gamma(x) = Gamma(1-x) sin(pi x) / pi.
  double s = std::sin(kPi * x);
  double lg = std::lgamma(1.0 - x) + std::log(std::abs(s) / kPi);
  if (lg > 708.0) {
    double inf = std::numeric_limits<double>::infinity();
    return s >= 0.0 ? inf : -inf;
  }
  double r = std::exp(lg);
  return s >= 0.0 ? r : -r;
}

namespace {

double betacf(double a, double b, double x) {
  const int maxit = 400;
  const double eps = 3e-16, fpmin = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= maxit; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  throw NonConvergent("ibeta: continued fraction did not converge");
}

}  // namespace

double ibeta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("ibeta: requires a, b > 0");
  if (!(x >= -1e-14 && x <= 1.0 + 1e-14)) throw DomainError("ibeta: x outside [0,1]");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double lbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
               a * std::log(x) + b * std::log1p(-x);
  double bt = std::exp(lbt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// ---------------------------------------------------------------------------
// Mittag-Leffler
// ---------------------------------------------------------------------------

namespace {

struct SeriesOut {
  cx sum{};
  double max_term = 0.0;
  int terms = 0;
  bool overflow = false;
  bool truncated = false;  // ran out of terms before the tail went quiet
};

// Power recurrence; accurate for arguments whose partial powers stay in
// double range.
SeriesOut ml_series_classic(double alpha, double beta, cx z, int kmax) {
  cx sum = 0.0, zk = 1.0;
  double max_term = 0.0;
  double az = std::abs(z);
  int k = 0;
  for (; k <= kmax; ++k) {
    double rg = rgamma(alpha * k + beta);
    cx term = zk * rg;
    sum += term;
    double tm = std::abs(term);
    if (tm > max_term) max_term = tm;
    double next_bound =
        std::abs(zk) * az * std::abs(rgamma(alpha * (k + 1) + beta));
    if (k > 2 && tm + next_bound < 1e-17 * std::max(1.0, std::abs(sum))) break;
    zk *= z;
    if (std::abs(zk) > 1e280) return {sum, max_term, k, true, false};
  }
  return {sum, max_term, k, false, k > kmax};
}

// Per-term log-exponent evaluation; the power and the gamma factor are
// combined in the exponent so neither overflows alone.
SeriesOut ml_series_bigarg(double alpha, double beta, cx z, int kmax,
                           double hump) {
  bool zreal = (z.imag() == 0.0);
  bool zneg = zreal && z.real() < 0.0;
  double la = std::log(std::abs(z));
  double th = zreal ? 0.0 : std::arg(z);
  cx sum = 0.0;
  double max_term = 0.0;
  int small_run = 0;
  int k = 0;
  for (; k <= kmax; ++k) {
    double x = alpha * k + beta;
    double lmag;
    double sg = 1.0;
    if (x > 0.0) {
      lmag = k * la - std::lgamma(x);
    } else if (x == std::floor(x)) {
      continue;  // reciprocal gamma vanishes
    } else {
      double s = std::sin(kPi * x);
      lmag = k * la + std::lgamma(1.0 - x) + std::log(std::abs(s) / kPi);
      if (s < 0.0) sg = -1.0;
    }
    if (lmag > 700.0) return {sum, max_term, k, true, false};
    cx term;
    if (zreal) {
      double m = std::exp(lmag) * sg;
      term = cx((zneg && (k & 1)) ? -m : m, 0.0);
    } else {
      term = std::exp(cx(lmag, k * th)) * sg;
    }
    sum += term;
    double tm = std::abs(term);
    if (tm > max_term) max_term = tm;
    if (k > hump && tm < 1e-18 * std::max(1.0, std::abs(sum))) {
      if (++small_run >= 3) break;
    } else {
      small_run = 0;
    }
  }
  return {sum, max_term, k, false, k > kmax};
}

// Extended-precision series rescue for heavily cancelling sums.
template <class R>
struct ExtOps;

template <>
struct ExtOps<long double> {
  static long double lgamma_(long double x) { return lgammal(x); }
  static long double sin_(long double x) { return sinl(x); }
  static long double cos_(long double x) { return cosl(x); }
  static long double exp_(long double x) { return expl(x); }
  static long double log_(long double x) { return logl(x); }
  static long double abs_(long double x) { return fabsl(x); }
  static long double floor_(long double x) { return floorl(x); }
  static long double sqrt_(long double x) { return sqrtl(x); }
  static long double atan2_(long double y, long double x) { return atan2l(y, x); }
  static long double pi_() { return 3.141592653589793238462643383279502884L; }
  static double eps() { return 1.1e-19; }
};

#if defined(RESOLVENT_HAVE_QUADMATH)
template <>
struct ExtOps<__float128> {
  static __float128 lgamma_(__float128 x) { return lgammaq(x); }
  static __float128 sin_(__float128 x) { return sinq(x); }
  static __float128 cos_(__float128 x) { return cosq(x); }
  static __float128 exp_(__float128 x) { return expq(x); }
  static __float128 log_(__float128 x) { return logq(x); }
  static __float128 abs_(__float128 x) { return fabsq(x); }
  static __float128 floor_(__float128 x) { return floorq(x); }
  static __float128 sqrt_(__float128 x) { return sqrtq(x); }
  static __float128 atan2_(__float128 y, __float128 x) { return atan2q(y, x); }
  static __float128 pi_() { return M_PIq; }
  static double eps() { return 1.93e-34; }
};
using ext_real = __float128;
#else
using ext_real = long double;
#endif

template <class R>
R rgamma_ext(R x) {
  using O = ExtOps<R>;
  if (x > R(0)) {
    if (x > R(1700)) return R(0);
    return O::exp_(-O::lgamma_(x));
  }
  if (x == O::floor_(x)) return R(0);
  R s = O::sin_(O::pi_() * x);
  R lg = O::lgamma_(R(1) - x) + O::log_(O::abs_(s) / O::pi_());
  R r = O::exp_(lg);
  return s >= R(0) ? r : -r;
}

template <class R>
MLResult ml_series_ext(double alpha, double beta, cx z, int kmax) {
  using O = ExtOps<R>;
  const R huge = O::exp_(R(11000.0));
  R zr = R(z.real()), zi = R(z.imag());
  R sr = R(0), si = R(0), pr = R(1), pi2 = R(0);
  R maxt = R(0);
  R a = R(alpha), b = R(beta);
  R az = O::sqrt_(zr * zr + zi * zi);
  int k = 0;
  for (; k <= kmax; ++k) {
    R rg = rgamma_ext<R>(a * R(k) + b);
    R tr = pr * rg, ti = pi2 * rg;
    sr += tr;
    si += ti;
    R tm = O::sqrt_(tr * tr + ti * ti);
    if (tm > maxt) maxt = tm;
    R pm = O::sqrt_(pr * pr + pi2 * pi2);
    R nb = pm * az * O::abs_(rgamma_ext<R>(a * R(k + 1) + b));
    R sm = O::sqrt_(sr * sr + si * si);
    if (sm < R(1)) sm = R(1);
    if (k > 2 && tm + nb < R(O::eps()) * sm * R(0.5)) break;
    R npr = pr * zr - pi2 * zi;
    R npi = pr * zi + pi2 * zr;
    pr = npr;
    pi2 = npi;
    if (O::sqrt_(pr * pr + pi2 * pi2) > huge) {
      MLResult bad;
      bad.value = cx(static_cast<double>(sr), static_cast<double>(si));
      bad.err_estimate = std::numeric_limits<double>::infinity();
      bad.precision_loss = true;
      return bad;
    }
  }
  MLResult out;
  out.value = cx(static_cast<double>(sr), static_cast<double>(si));
  if (k > kmax) {
    // term budget exhausted before the tail went quiet: the partial sum is
    // dominated by the omitted tail, so no finite error bar is honest
    out.err_estimate = std::numeric_limits<double>::infinity();
    out.precision_loss = true;
    return out;
  }
  double err = static_cast<double>(maxt) * O::eps() * 40.0 +
               1e-16 * std::abs(out.value);
  out.err_estimate = err;
  out.precision_loss = err > 1e-11 * std::max(1.0, std::abs(out.value));
  return out;
}

// Exponential branches plus algebraic tail, valid for large |z|.
MLResult ml_asymptotic(double alpha, double beta, cx z) {
  cx zin = 1.0 / z;
  cx sum = 0.0;
  cx zk = zin;
  double prev_mag = std::numeric_limits<double>::infinity();
  double omitted = 0.0;
  for (int k = 1; k <= 120; ++k) {
    double rg = rgamma(beta - alpha * k);
    if (rg == 0.0) {  // structural zero, not a turning point
      zk *= zin;
      continue;
    }
    cx term = -zk * rg;
    double mag = std::abs(term);
    if (mag > prev_mag) {  // smallest-term truncation
      omitted = mag;
      break;
    }
    sum += term;
    prev_mag = mag;
    omitted = mag;
    zk *= zin;
  }

  // Branch roots in extended precision: Re(z^{1/alpha}) can sit many orders
  // below |z^{1/alpha}|, and a few ulps of angle error blow up as
  // exp(|w| * ulp) in the branch magnitude.
  using R = ext_real;
  using O = ExtOps<R>;
  cx expo = 0.0;
  double leak = 0.0, phase_err = 0.0;
  double th = std::arg(z);
  const R zr = R(z.real()), zi = R(z.imag());
  const R la = R(0.5) * O::log_(zr * zr + zi * zi);
  const R thq = O::atan2_(zi, zr);
  const R alq = R(alpha);
  for (int m = -2; m <= 2; ++m) {
    double phi = th + 2.0 * kPi * m;
    R lw_re = la / alq;
    R lw_im = (thq + R(2 * m) * O::pi_()) / alq;
    R wmag = O::exp_(lw_re);
    R ex_re = R(1.0 - beta) * lw_re + wmag * O::cos_(lw_im);
    R ex_im = R(1.0 - beta) * lw_im + wmag * O::sin_(lw_im);
    if (std::abs(phi) <= alpha * kPi / 2.0 + 1e-9) {
      if (static_cast<double>(ex_re) > 700.0)
        throw DomainError("ml: exponential branch overflows double range");
      R bmag = O::exp_(ex_re);
      cx b(static_cast<double>(bmag * O::cos_(ex_im)),
           static_cast<double>(bmag * O::sin_(ex_im)));
      expo += b / alpha;
      // once |Im ex_arg| outruns the working precision, the branch phase
      // (never its magnitude) degrades
      phase_err += std::abs(b) / alpha *
                   std::min(1.0, std::abs(static_cast<double>(ex_im)) * 2.0 * O::eps());
    } else if (std::abs(phi) <= alpha * kPi + 1e-9 &&
               static_cast<double>(ex_re) < 0.0) {
      // suppressed branch: exponentially small beyond all algebraic orders
      leak = std::max(leak, std::exp(static_cast<double>(ex_re)) / alpha);
    }
  }

  MLResult out;
  out.value = expo + sum;
  out.err_estimate = omitted + leak + phase_err + 3e-16 * std::abs(expo);
  out.precision_loss =
      out.err_estimate > 1e-10 * std::max(1.0, std::abs(out.value));
  return out;
}

}  // namespace

MLResult ml(double alpha, double beta, cx z) {
  if (!(alpha > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta))
    throw DomainError("ml: requires alpha > 0 and finite beta");
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
    throw DomainError("ml: z must be finite");
  if (z == cx(0.0, 0.0)) return {cx(rgamma(beta), 0.0), 1e-16, false};

  double az = std::abs(z);
  // The series hump ends near k ~ |z|^{1/alpha} / alpha.
  double hump = std::pow(az, 1.0 / alpha) / alpha;
  double need = hump + 40.0 / alpha + 40.0;

  if (need <= 1200.0) {
    bool classic = need * std::max(0.0, std::log(az)) < 600.0;
    SeriesOut s = classic ? ml_series_classic(alpha, beta, z, 1500)
                          : ml_series_bigarg(alpha, beta, z, 1500, hump);
    double err = s.max_term * (classic ? 3e-16 : 2e-13);
    if (!s.overflow && !s.truncated &&
        err <= 1e-12 * std::max(1.0, std::abs(s.sum)))
      return {s.sum, err, false};
    // the descent from the hump is about as long as the climb
    MLResult q =
        ml_series_ext<ext_real>(alpha, beta, z, 2 * static_cast<int>(need) + 200);
    if (q.err_estimate <= 1e-11 * std::max(1.0, std::abs(q.value))) return q;
    // cancellation beyond extended precision: the large-argument route may
    // still represent the limit faithfully (heavily damped values)
    try {
      MLResult r = ml_asymptotic(alpha, beta, z);
      if (r.err_estimate < q.err_estimate) return r;
    } catch (const Error&) {
    }
    return q;
  }

  MLResult r = ml_asymptotic(alpha, beta, z);
  if (r.err_estimate > 1e-11 * std::max(1.0, std::abs(r.value)) &&
      need <= 30000.0) {
    MLResult q = ml_series_ext<ext_real>(alpha, beta, z,
                                         2 * static_cast<int>(need) + 400);
    if (q.err_estimate < r.err_estimate) return q;
  }
  return r;
}

MLMatrixResult ml_matrix(double alpha, double beta, const Mat& M) {
  if (M.rows() == 0 || M.rows() != M.cols())
    throw DomainError("ml_matrix: requires a nonempty square matrix");
  const int d = static_cast<int>(M.rows());

  double gersh = 0.0;
  for (int i = 0; i < d; ++i) {
    double row = 0.0;
    for (int j = 0; j < d; ++j) row += std::abs(M(i, j));
    gersh = std::max(gersh, row);
  }
  if (gersh > 130.0)
    throw UncertifiedSpectrum(
        "ml_matrix: Gershgorin bound exceeds the certified range (130)");

  MLMatrixResult out;
  out.spectral_bound = gersh;

  bool diagonal = true;
  for (int i = 0; i < d && diagonal; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j && M(i, j) != cx(0.0, 0.0)) {
        diagonal = false;
        break;
      }
  if (diagonal) {
    out.value = Mat::Zero(d, d);
    for (int i = 0; i < d; ++i) {
      MLResult r = ml(alpha, beta, M(i, i));
      out.value(i, i) = r.value;
      out.precision_loss = out.precision_loss || r.precision_loss;
    }
    return out;
  }

  Eigen::ComplexEigenSolver<Mat> es(M);
  if (es.info() == Eigen::Success) {
    const Mat& V = es.eigenvectors();
    Eigen::JacobiSVD<Mat> svd(V);
    double smax = svd.singularValues()(0);
    double smin = svd.singularValues()(d - 1);
    double cond = (smin > 0.0) ? smax / smin
                               : std::numeric_limits<double>::infinity();
    if (std::isfinite(cond) && cond < 1e7) {
      Vec fv(d);
      bool pl = false;
      for (int i = 0; i < d; ++i) {
        MLResult r = ml(alpha, beta, es.eigenvalues()(i));
        fv(i) = r.value;
        pl = pl || r.precision_loss;
      }
      out.value = V * fv.asDiagonal() * V.inverse();
      out.precision_loss = pl || (cond > 1e5);
      return out;
    }
  }

  // Truncated matrix series; terminates exactly for nilpotent M.
  Mat mk = Mat::Identity(d, d);
  Mat sum = Mat::Zero(d, d);
  double max_term = 0.0;
  for (int k = 0; k <= 4000; ++k) {
    double rg = rgamma(alpha * k + beta);
    sum += rg * mk;
    double tn = std::abs(rg) * mk.norm();
    if (tn > max_term) max_term = tn;
    double next_bound =
        mk.norm() * gersh * std::abs(rgamma(alpha * (k + 1) + beta));
    if (k > 2 && tn + next_bound < 1e-17 * std::max(1.0, sum.norm())) break;
    if (mk.norm() > 1e250)
      throw NonConvergent("ml_matrix: series terms overflow");
    mk = mk * M;
  }
  out.value = sum;
  out.precision_loss =
      max_term * 3e-16 > 1e-10 * std::max(1.0, sum.norm());
  return out;
}

}  // namespace resolvent
