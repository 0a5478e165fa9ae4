#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "resolvent/prodint.hpp"
#include "resolvent/special.hpp"

using namespace resolvent;

namespace {

double rel(double got, double want) {
  return std::abs(got - want) / std::max(1e-300, std::abs(want));
}

// samples H on nodes h..n h
template <class F>
NodeData<cx> sample(F f, double h, int n) {
  NodeData<cx> d;
  d.h = h;
  d.v.resize(n);
  for (int i = 1; i <= n; ++i) d.v[i - 1] = f(i * h);
  return d;
}

WeightMoments moments_for(const std::string& kernel_text, double h, int n) {
  return weight_moments(fold_weight(Kernel::parse(kernel_text)), h, n);
}

}  // namespace

TEST_CASE("weight folding") {
  auto w = fold_weight(Kernel::parse("interp(0.3)"));
  REQUIRE(w.terms.size() == 2);
  CHECK(rel(w.terms[0].first.real(), 0.7) < 1e-14);
  CHECK(w.terms[0].second == doctest::Approx(1.0));
  CHECK(rel(w.terms[1].first.real(), 0.3) < 1e-14);
  CHECK(w.terms[1].second == doctest::Approx(2.0));

  auto fused = fold_weight(Kernel::parse("conv(g(0.3), g(0.7))"));
  REQUIRE(fused.terms.size() == 1);
  CHECK(fused.terms[0].second == doctest::Approx(1.0));

  CHECK_THROWS_AS(fold_weight(Kernel::parse("exp(1)")), NoClosedForm);

  auto dw = fold_weight_derivative(Kernel::parse("g(0.5)"));
  REQUIRE(dw.terms.size() == 1);
  CHECK(dw.terms[0].second == doctest::Approx(-0.5));

  CHECK(fold_weight_derivative(Kernel::parse("const(1)")).terms.empty());

  auto di = fold_weight_derivative(Kernel::parse("interp(0.25)"));
  REQUIRE(di.terms.size() == 1);
  CHECK(rel(di.terms[0].first.real(), 0.25) < 1e-14);
  CHECK(di.terms[0].second == doctest::Approx(1.0));
}

TEST_CASE("weight moments and integrability guards") {
  auto wm = moments_for("g(0.5)", 0.25, 4);
  CHECK(wm.m0_first_finite);
  // cell moments sum to the full-range moment
  cx s0 = 0.0;
  for (auto& m : wm.m0) s0 += m;
  CHECK(rel(s0.real(), gmom(0.5, 0, 0.0, 1.0)) < 1e-13);

  auto wneg = weight_moments(fold_weight(Kernel::parse("g(-0.25)")), 0.25, 4);
  CHECK(!wneg.m0_first_finite);
  CHECK(std::isnan(wneg.m0[0].real()));
  CHECK(std::isfinite(wneg.m1[0].real()));

  CHECK_THROWS_AS(weight_moments(fold_weight(Kernel::parse("g(-1.5)")), 0.25, 4),
                  NotIntegrable);
}

TEST_CASE("plain integrals are degree-2 exact against singular weights") {
  const double X = 1.0;
  const int n = 16;
  const double h = X / n;

  // constant weight, quadratic data
  {
    auto wm = moments_for("const(1)", h, n);
    auto H = sample([](double x) { return cx(x * x); }, h, n);
    H.at_zero = cx(0.0);
    cx got = integrate_weighted<cx>(wm, H, n, 0, n, false, nullptr);
    CHECK(rel(got.real(), 1.0 / 3.0) < 1e-13);
  }
  // square-root-singular weight, linear data: exact value 4/(3 sqrt(pi))
  {
    auto wm = moments_for("g(0.5)", h, n);
    auto H = sample([](double x) { return cx(x); }, h, n);
    H.at_zero = cx(0.0);
    cx got = integrate_weighted<cx>(wm, H, n, 0, n, false, nullptr);
    CHECK(rel(got.real(), 0.752252778063675) < 1e-13);
  }
  // singular weight, quadratic data: int g_{1/2}(u) (X-u)^2 du = 2 g_{3.5}(X)
  {
    auto wm = moments_for("g(0.5)", h, n);
    auto H = sample([](double x) { return cx(x * x); }, h, n);
    H.at_zero = cx(0.0);
    cx got = integrate_weighted<cx>(wm, H, n, 0, n, false, nullptr);
    CHECK(rel(got.real(), 2.0 * rgamma(3.5)) < 1e-13);
  }
}

TEST_CASE("cubic data converges at order >= 2.5 under a g(0.5) weight") {
  const double X = 1.0;
  double want = 6.0 * rgamma(4.5);  // int g_{1/2}(u) (X-u)^3 du
  auto err_at = [&](int n) {
    double h = X / n;
    auto wm = moments_for("g(0.5)", h, n);
    auto H = sample([](double x) { return cx(x * x * x); }, h, n);
    H.at_zero = cx(0.0);
    cx got = integrate_weighted<cx>(wm, H, n, 0, n, false, nullptr);
    return std::abs(got.real() - want);
  };
  double e32 = err_at(32), e64 = err_at(64);
  CHECK(e64 < 1e-6);
  CHECK(e32 / e64 > 5.0);  // >= order 2.3 observed; quadratic stencils
}

TEST_CASE("anchored end makes mu in (-1,0] weights usable") {
  const double X = 1.0;
  const int n = 16;
  const double h = X / n;
  auto wm = moments_for("g(-0.5)", h, n);

  // H(x) = x (X - x) vanishes at X; integrand is quadratic in u
  auto H = sample([&](double x) { return cx(x * (X - x)); }, h, n);
  H.at_zero = cx(0.0);
  cx got = integrate_weighted<cx>(wm, H, n, 0, n, true, nullptr);
  double want = (4.0 / 3.0) * rgamma(-0.5);  // = -0.376126389031838
  CHECK(rel(got.real(), want) < 1e-12);

  // same weight in plain mode must refuse
  CHECK_THROWS_AS(integrate_weighted<cx>(wm, H, n, 0, n, false, nullptr),
                  NotIntegrable);
}

TEST_CASE("head model recovers singular data heads exactly") {
  const double X = 1.0;
  const int n = 64;
  const double h = X / n;
  auto wm = moments_for("const(1)", h, n);

  // H = g_{1/2}: unbounded at 0; no finite value at 0 exists
  auto H = sample(
      [](double x) { return cx(std::pow(x, -0.5) * rgamma(0.5)); }, h, n);

  double want = rgamma(1.5);  // g_{1.5}(1) = int_0^1 g_{1/2}

  HeadModel head;
  head.phi0 = 0.5;
  head.phi1 = 1.5;
  head.c0_known = true;
  head.c0 = 1.0;
  cx with_model = integrate_weighted<cx>(wm, H, n, 0, n, false, &head);
  double err_model = rel(with_model.real(), want);
  CHECK(err_model < 3e-5);

  cx without = integrate_weighted<cx>(wm, H, n, 0, n, false, nullptr);
  double err_plain = rel(without.real(), want);
  CHECK(err_plain > 1e-4);  // quadratic stencils alone fail at the head
  CHECK(err_plain > 20.0 * err_model);

  // two-exponent fit without a pinned leading coefficient
  for (int i = 1; i <= n; ++i) {
    double x = i * h;
    H.v[i - 1] = cx(2.0 * std::pow(x, -0.5) * rgamma(0.5) + 1.0);
  }
  HeadModel fit;
  fit.phi0 = 0.5;
  fit.phi1 = 1.0;
  cx fitted = integrate_weighted<cx>(wm, H, n, 0, n, false, &fit);
  double want2 = 2.0 * rgamma(1.5) + 1.0;  // 2 g_{1.5}(1) + g_2(1)
  CHECK(rel(fitted.real(), want2) < 2e-5);
}

TEST_CASE("kink-aware stencils keep piecewise-linear data exact") {
  const double X = 1.0;
  const int n = 32;
  const double h = X / n;
  auto wm = moments_for("const(1)", h, n);
  auto H = sample([](double x) { return cx(std::abs(x - 0.5)); }, h, n);
  H.at_zero = cx(0.5);

  NodeData<cx> flagged = H;
  flagged.kinks = {n / 2};
  cx good = integrate_weighted<cx>(wm, flagged, n, 0, n, false, nullptr);
  CHECK(rel(good.real(), 0.25) < 1e-13);

  cx bad = integrate_weighted<cx>(wm, H, n, 0, n, false, nullptr);
  CHECK(rel(bad.real(), 0.25) > 1e-7);  // stencils across the crease bend
}

TEST_CASE("cell subranges integrate truncated convolutions") {
  const double X = 1.0;
  const int n = 32;
  const double h = X / n;
  auto wm = moments_for("g(0.5)", h, n);
  auto H = sample([](double x) { return cx(x); }, h, n);
  H.at_zero = cx(0.0);
  // int_{1/2}^{1} g_{1/2}(u) (X - u) du, exact via whole-range moments
  double want = gmom(0.5, 0, 0.5, 1.0) - gmom(0.5, 1, 0.5, 1.0);
  cx got = integrate_weighted<cx>(wm, H, n, n / 2, n, false, nullptr);
  CHECK(rel(got.real(), want) < 1e-13);

  // complementary subrange + head: pieces add up to the full integral
  cx lowpart = integrate_weighted<cx>(wm, H, n, 0, n / 2, false, nullptr);
  double full = 0.752252778063675;
  CHECK(rel(lowpart.real() + got.real(), full) < 1e-13);
}

TEST_CASE("matrix data goes through the same cells") {
  const double X = 1.0;
  const int n = 16;
  const double h = X / n;
  auto wm = moments_for("const(1)", h, n);
  NodeData<Mat> H;
  H.h = h;
  for (int i = 1; i <= n; ++i) {
    double x = i * h;
    Mat m(2, 2);
    m << cx(1.0), cx(x), cx(x * x), cx(2.0);
    H.v.push_back(m);
  }
  Mat z(2, 2);
  z << cx(1.0), cx(0.0), cx(0.0), cx(2.0);
  H.at_zero = z;
  Mat got = integrate_weighted<Mat>(wm, H, n, 0, n, false, nullptr);
  CHECK(rel(got(0, 0).real(), 1.0) < 1e-13);
  CHECK(rel(got(0, 1).real(), 0.5) < 1e-13);
  CHECK(rel(got(1, 0).real(), 1.0 / 3.0) < 1e-13);
  CHECK(rel(got(1, 1).real(), 2.0) < 1e-13);

  // anchored matrix variant
  auto wneg = moments_for("g(-0.5)", h, n);
  NodeData<Mat> HA;
  HA.h = h;
  for (int i = 1; i <= n; ++i) {
    double x = i * h;
    HA.v.push_back(cx(x * (X - x)) * Mat::Identity(2, 2));
  }
  HA.at_zero = Mat::Zero(2, 2);
  Mat a = integrate_weighted<Mat>(wneg, HA, n, 0, n, true, nullptr);
  double want = (4.0 / 3.0) * rgamma(-0.5);
  CHECK(rel(a(0, 0).real(), want) < 1e-12);
  CHECK(std::abs(a(0, 1)) < 1e-14);
}

TEST_CASE("lag weights reproduce trapezoid-exact convolutions") {
  const int n = 16;
  const double h = 1.0 / n;

  {
    auto wm = moments_for("const(1)", h, n);
    auto lw = lag_weights(wm);
    CHECK(rel(lw.left[0].real(), h / 2.0) < 1e-13);
    CHECK(rel(lw.right[0].real(), h / 2.0) < 1e-13);
    // (1 * t)(t_i) = t_i^2/2 exactly for linear data
    std::vector<cx> S(n + 1);
    for (int i = 0; i <= n; ++i) S[i] = cx(i * h);
    for (int i = 1; i <= n; ++i) {
      cx acc = 0.0;
      for (int j = 0; j < i; ++j) {
        int l = i - j - 1;
        acc += lw.left[l] * S[j] + lw.right[l] * S[j + 1];
      }
      double t = i * h;
      CHECK(rel(acc.real(), t * t / 2.0) < 1e-12);
    }
  }
  {
    auto wm = moments_for("g(0.5)", h, n);
    auto lw = lag_weights(wm);
    std::vector<cx> S(n + 1);
    for (int i = 0; i <= n; ++i) S[i] = cx(i * h);
    cx acc = 0.0;
    for (int j = 0; j < n; ++j) {
      int l = n - j - 1;
      acc += lw.left[l] * S[j] + lw.right[l] * S[j + 1];
    }
    CHECK(rel(acc.real(), 0.752252778063675) < 1e-12);
  }
  {
    auto wneg = moments_for("g(-0.25)", h, n);
    CHECK_THROWS_AS(lag_weights(wneg), NotIntegrable);
  }
}

TEST_CASE("full convolutions track a closed form") {
  // (g_{1/2} * e^{-t})(1) = 0.607157705841394
  const double want = 0.607157705841394;
  auto err_at = [&](int n) {
    double h = 1.0 / n;
    auto wm = moments_for("g(0.5)", h, n);
    auto H = sample([](double x) { return cx(std::exp(-x)); }, h, n);
    H.at_zero = cx(1.0);
    auto out = conv_quadratic<cx>(wm, H, n, nullptr);
    return std::abs(out[n - 1].real() - want);
  };
  double e32 = err_at(32), e64 = err_at(64);
  CHECK(e64 < 2e-6);
  CHECK(e32 / e64 > 4.0);

  // non-integrable weights refuse the plain path
  auto wneg = moments_for("g(-0.5)", 1.0 / 16, 16);
  auto H = sample([](double x) { return cx(x); }, 1.0 / 16, 16);
  CHECK_THROWS_AS(conv_quadratic<cx>(wneg, H, 16, nullptr), NotIntegrable);
}

TEST_CASE("forward-read data under a singular weight") {
  const int n = 32;
  const double h = 1.0 / n;
  auto wm = moments_for("g(0.5)", h, n);

  // quadratic data read forward is exact: int g_{1/2}(u) (u + b)^2 du
  {
    NodeData<cx> D;
    D.h = h;
    for (int i = 1; i <= 2 * n; ++i) D.v.push_back(cx((i * h) * (i * h)));
    D.at_zero = cx(0.0);
    int b = n / 2;
    cx got = integrate_weighted_forward<cx>(wm, D, b, 0, n);
    double bb = b * h;
    double want = bb * bb * gmom(0.5, 0, 0, 1) + 2 * bb * gmom(0.5, 1, 0, 1) +
                  gmom(0.5, 2, 0, 1);
    CHECK(rel(got.real(), want) < 1e-13);
  }
  // int_0^1 g_{1/2}(u) e^{-(u + 1/2)} du = erf(1) exp(-1/2)
  {
    auto err_at = [&](int m) {
      double hh = 1.0 / m;
      auto w = moments_for("g(0.5)", hh, m);
      NodeData<cx> D;
      D.h = hh;
      for (int i = 1; i <= 2 * m; ++i) D.v.push_back(cx(std::exp(-i * hh)));
      D.at_zero = cx(1.0);
      cx got = integrate_weighted_forward<cx>(w, D, m / 2, 0, m);
      return std::abs(got.real() - 0.511123867888150);
    };
    CHECK(err_at(32) < 1e-6);
    CHECK(err_at(32) / err_at(64) > 4.0);
  }
  // non-integrable weight refuses when the range touches 0
  {
    auto wneg = moments_for("g(-0.25)", h, n);
    NodeData<cx> D;
    D.h = h;
    for (int i = 1; i <= 2 * n; ++i) D.v.push_back(cx(1.0));
    CHECK_THROWS_AS(integrate_weighted_forward<cx>(wneg, D, 4, 0, n),
                    NotIntegrable);
    cx away = integrate_weighted_forward<cx>(wneg, D, 4, 1, n);
    double want = gmom(-0.25, 0, h, 1.0);
    CHECK(rel(away.real(), want) < 1e-12);
  }
}

TEST_CASE("argument screens") {
  auto wm = moments_for("const(1)", 0.25, 4);
  auto H = sample([](double x) { return cx(x); }, 0.25, 4);
  // spacing mismatch
  NodeData<cx> other = H;
  other.h = 0.5;
  CHECK_THROWS_AS(integrate_weighted<cx>(wm, other, 4, 0, 4, false, nullptr),
                  GridMismatch);
  // cells beyond X
  CHECK_THROWS_AS(integrate_weighted<cx>(wm, H, 2, 0, 3, false, nullptr),
                  DomainError);
  // moments cover too few cells
  auto short_w = moments_for("const(1)", 0.25, 2);
  CHECK_THROWS_AS(integrate_weighted<cx>(short_w, H, 4, 0, 4, false, nullptr),
                  DomainError);
  // empty ranges are zero
  cx z = integrate_weighted<cx>(wm, H, 4, 2, 2, false, nullptr);
  CHECK(std::abs(z) == 0.0);
}
