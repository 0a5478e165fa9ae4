#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "resolvent/bivar.hpp"
#include "resolvent/kernels.hpp"
#include "resolvent/laplace.hpp"
#include "resolvent/report.hpp"

using namespace resolvent;

namespace {

double rel(cx got, cx want) {
  return std::abs(got - want) / std::max(1e-300, std::abs(want));
}

}  // namespace

TEST_CASE("one-variable transform matches closed values") {
  CHECK(rel(laplace1(Kernel::constant(1.0), cx(2.0), 40.0), cx(0.5)) < 1e-9);
  CHECK(rel(laplace1(Kernel::power(0.5), cx(1.0), 60.0), cx(1.0)) < 1e-9);
  CHECK(rel(laplace1(Kernel::power(0.5), cx(4.0), 60.0), cx(0.5)) < 1e-9);
  // the heavy-tailed kernel transforms to e^{-sqrt(s)}
  CHECK(rel(laplace1(Kernel::levy_half(), cx(1.0), 60.0),
            cx(std::exp(-1.0))) < 1e-12);
  CHECK(rel(laplace1(Kernel::levy_half(), cx(4.0), 60.0),
            cx(std::exp(-2.0))) < 1e-12);
  CHECK(rel(laplace1(Kernel::levy_half(), cx(2.0), 60.0),
            cx(std::exp(-std::sqrt(2.0)))) < 1e-12);
  // growing kernel: the transform still converges past the growth bound
  CHECK(rel(laplace1(Kernel::exponential(cx(-2.0)), cx(3.0), 60.0),
            cx(1.0)) < 1e-12);
}

TEST_CASE("transform point must clear the growth bound") {
  CHECK_THROWS_AS(laplace1(Kernel::exponential(cx(-2.0)), cx(1.0), 60.0),
                  AbscissaViolation);
  CHECK_THROWS_AS(laplace1(Kernel::power(-0.5), cx(2.0), 40.0),
                  NotIntegrable);
}

TEST_CASE("numeric transform agrees with descriptor transforms") {
  Kernel ks[] = {Kernel::power(0.3),
                 Kernel::power(1.5),
                 Kernel::exponential(cx(1.0, 2.0)),
                 Kernel::levy_half(),
                 Kernel::interpolant(0.3),
                 Kernel::conv(Kernel::exponential(1.0),
                              Kernel::exponential(3.0)),
                 Kernel::sum(Kernel::constant(2.0), Kernel::power(0.5)),
                 Kernel::scaled(cx(0.0, 1.0), Kernel::power(0.25))};
  for (const Kernel& k : ks) {
    double om = k.abscissa();
    for (int i = 1; i <= 5; ++i) {
      cx s(om + i, 0.5 * i);
      auto closed = k.laplace_hat(s);
      REQUIRE(closed.has_value());
      CHECK(std::abs(laplace1(k, s, 80.0) - *closed) /
                std::max(1.0, std::abs(*closed)) <
            1e-7);
    }
  }
}

TEST_CASE("truncated transform reports an honest tail bound") {
  Transform1 d = laplace1_detail(Kernel::constant(1.0), cx(1.0), 5.0);
  double missing = std::exp(-5.0);  // exact mass beyond the horizon
  CHECK(d.horizon == doctest::Approx(5.0));
  CHECK(rel(d.value, cx(1.0 - missing)) < 1e-10);
  CHECK(d.tail_bound >= 0.99 * missing);
  CHECK(d.tail_bound <= 10.0 * missing);
  CHECK(transform_horizon(cx(1.0), 2.0) == doctest::Approx(40.0));
}

TEST_CASE("sampled-data transform integrates under the horizon") {
  Grid g{30.0, 3000};
  SampledValues sv{g, Kernel::exponential(1.0).eval_nodes(g)};
  CHECK(rel(laplace1(sv, cx(1.0), 30.0), cx(0.5)) < 1e-8);
  CHECK(rel(laplace1(sv, cx(2.0), 30.0), cx(1.0 / 3)) < 1e-8);
}

TEST_CASE("structured two-variable transforms hit closed values") {
  // profile in the sum variable: (f_hat(l) - f_hat(m)) / (m - l)
  CHECK(rel(laplace2(BivarField::plus(Kernel::exponential(1.0)), cx(1.0),
                     cx(2.0), 40.0),
            cx(1.0 / 6)) < 1e-12);
  // profile in the lag variable: (f_hat(l) + f_hat(m)) / (l + m)
  CHECK(rel(laplace2(BivarField::minus(Kernel::exponential(1.0)), cx(1.0),
                     cx(2.0), 40.0),
            cx(5.0 / 18)) < 1e-12);
  CHECK(rel(laplace2(BivarField::tensor(Kernel::constant(1.0),
                                        Kernel::constant(1.0)),
                     cx(1.0), cx(1.0), 60.0),
            cx(1.0)) < 1e-9);
  // the transforms themselves are fine on the diagonal
  CHECK(rel(laplace2(BivarField::plus(Kernel::constant(1.0)), cx(1.0),
                     cx(1.0), 60.0),
            cx(1.0)) < 1e-9);
  // derivative profile of g_{3/2}: quotient of s^{-1/2} at (1, 4) is -1/3
  CHECK(rel(laplace2(BivarField::plus(kernel_derivative(Kernel::power(0.5))),
                     cx(1.0), cx(4.0), 40.0),
            cx(-1.0 / 3)) < 1e-7);
}

TEST_CASE("two-variable transform of a corner table") {
  // tensor table of e^{-t} x e^{-2s} transforms to 1/((l+1)(m+2))
  const int n = 600;
  Grid g{30.0, n};
  std::vector<cx> fv = Kernel::exponential(1.0).eval_nodes(g);
  std::vector<cx> gv = Kernel::exponential(2.0).eval_nodes(g);
  std::vector<cx> tab((size_t)n * n);
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= n; ++j)
      tab[(size_t)(i - 1) * n + (j - 1)] = fv[i - 1] * gv[j - 1];
  cx got = laplace2(BivarField::tabulated(g, std::move(tab)), cx(1.0),
                    cx(1.0), 30.0);
  // exact for the interpolant; the rest is bilinear error in the data
  CHECK(rel(got, cx(1.0 / 6)) < 1e-3);
}

TEST_CASE("difference profile needs a positive combined decay") {
  CHECK_THROWS_AS(laplace2(BivarField::minus(Kernel::exponential(cx(-2.0))),
                           cx(2.5), cx(-2.4), 40.0),
                  AbscissaViolation);
}

TEST_CASE("transform identity suite passes at real and complex points") {
  ResidualReport rep = check_transform_suite(cx(1.0), cx(2.0), {});
  CHECK(rep.passed);
  CHECK(rep.max_relative <= 1.0);
  REQUIRE(rep.points.size() >= 16);
  // pinned residual classes, measured and frozen: smooth profiles reach
  // quadrature accuracy, singular ones are limited by their table cells
  for (const auto& p : rep.points) {
    if (p.label.find("sum profile") == 0 ||
        p.label.find("difference profile") == 0)
      CHECK(p.residual < 1e-6);
    if (p.label.find("derivative") == 0) CHECK(p.residual < 1e-4);
    if (p.label.find("family correlation") == 0) CHECK(p.residual < 3e-2);
  }
  ResidualReport cpx =
      check_transform_suite(cx(1.5, 1.0), cx(2.5, -0.5), {});
  CHECK(cpx.passed);
}

TEST_CASE("transform identity suite refuses a degenerate pair") {
  CHECK_THROWS_AS(check_transform_suite(cx(1.0), cx(1.0), {}),
                  DegenerateRequest);
}

TEST_CASE("inversion identity for the half-order pair") {
  ResidualReport fine =
      check_inversion_identity(Kernel::power(0.5), Kernel::power(0.5),
                               Grid{2.0, 256});
  CHECK(fine.passed);
  CHECK(fine.max_relative < 1e-3);
  ResidualReport coarse =
      check_inversion_identity(Kernel::power(0.5), Kernel::power(0.5),
                               Grid{2.0, 128});
  // refinement must not lose accuracy
  CHECK(fine.max_relative <= coarse.max_relative * 1.2);
  // the skipped mirrored branch is declared, not silently dropped
  bool declared = false;
  for (const auto& n : coarse.notes)
    declared |= n.find("skipped") != std::string::npos;
  CHECK(declared);
}

TEST_CASE("inversion identity rejects a non-inverse pair") {
  CHECK_THROWS_AS(check_inversion_identity(Kernel::power(0.5),
                                           Kernel::power(0.7), Grid{2.0, 64}),
                  HypothesisViolation);
}

TEST_CASE("residual reports serialize and write atomically") {
  ResidualReport rep;
  rep.name = "demo";
  rep.add("p1", 2e-5);
  rep.add("p2", 3e-7);
  rep.note("context");
  rep.finalize(1e-4);
  CHECK(rep.passed);
  CHECK(rep.max_residual == doctest::Approx(2e-5));
  std::string js = report_to_json(rep);
  CHECK(js.find("\"schema\": 1") != std::string::npos);
  CHECK(js.find("\"demo\"") != std::string::npos);
  CHECK(js.find("\"passed\": true") != std::string::npos);
  auto path = std::filesystem::temp_directory_path() / "resolvent_report.json";
  write_report_json(path.string(), rep);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == js);
  std::filesystem::remove(path);
  rep.finalize(1e-6);  // tighter tolerance flips the verdict
  CHECK(!rep.passed);
}
