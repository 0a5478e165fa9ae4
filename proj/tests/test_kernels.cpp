// Symbolic kernel descriptors: canonical convolution algebra, transforms,
// evaluation, moments, discrete convolution, companion-kernel solving.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "resolvent/kernels.hpp"
#include "resolvent/special.hpp"

using namespace resolvent;

namespace {
double rel(cx got, cx want) {
  return std::abs(got - want) / std::max(1e-300, std::abs(want));
}
Kernel tab_of(const Kernel& k, const Grid& g) {
  return Kernel::tabulated(g, k.eval_nodes(g));
}
}  // namespace

TEST_CASE("canonicalization: powers fuse") {
  Kernel k = Kernel::conv(Kernel::power(0.5), Kernel::power(0.5));
  CHECK(k.tag() == KernelTag::Power);
  CHECK(k == Kernel::power(1.0));
  CHECK(Kernel::conv_power(Kernel::power(0.5), 4) == Kernel::power(2.0));
  CHECK(Kernel::power(0.5) == Kernel::power(0.5 + 1e-14));
  CHECK(Kernel::power(0.5) != Kernel::power(0.6));
}

TEST_CASE("canonicalization: exponential pairs expand") {
  Kernel k = Kernel::conv(Kernel::exponential(1.0), Kernel::exponential(2.0));
  // e_1 * e_2 = e_1 - e_2
  CHECK(k.tag() == KernelTag::Sum);
  CHECK(rel(k.eval(1.0), 0.232544157934830) < 1e-13);
  Kernel same = Kernel::conv(Kernel::exponential(1.0), Kernel::exponential(1.0));
  CHECK(same.tag() == KernelTag::ConvPower);
  CHECK(rel(same.eval(1.0), std::exp(-1.0)) < 1e-13);  // t e^{-t} at t = 1
  CHECK(same == Kernel::conv_power(Kernel::exponential(1.0), 2));
}

TEST_CASE("canonicalization: interpolants and constants") {
  CHECK(Kernel::interpolant(0.0) == Kernel::power(1.0));
  CHECK(Kernel::interpolant(1.0) == Kernel::power(2.0));
  Kernel k = Kernel::conv(Kernel::interpolant(0.3), Kernel::constant(1.0));
  // ((1-eps) + eps s) * 1 -> 0.7 g_2 + 0.3 g_3
  CHECK(rel(k.eval(2.0), 2.0) < 1e-13);
  CHECK(k == Kernel::sum(Kernel::scaled(0.7, Kernel::power(2.0)),
                         Kernel::scaled(0.3, Kernel::power(3.0))));
}

TEST_CASE("canonicalization: sums flatten and cancel") {
  Kernel g1 = Kernel::power(1.0);
  CHECK(Kernel::sum(g1, Kernel::scaled(2.0, g1)) == Kernel::scaled(3.0, g1));
  Kernel z = Kernel::sum(g1, Kernel::scaled(-1.0, g1));
  CHECK(std::abs(z.eval(1.0)) == 0.0);
  CHECK(std::isinf(z.singularity_exponent()));
  // distribution through convolution
  Kernel lhs = Kernel::conv(Kernel::sum(g1, Kernel::power(0.5)),
                            Kernel::power(0.5));
  Kernel rhs = Kernel::sum(Kernel::power(1.5), Kernel::power(1.0));
  CHECK(lhs == rhs);
}

TEST_CASE("closed evaluations") {
  // (g_a * e_lam)(t) = t^a E_{1,a+1}(-lam t)
  Kernel k = Kernel::conv(Kernel::power(0.3),
                          Kernel::conv(Kernel::power(0.7), Kernel::exponential(1.0)));
  CHECK(k.evaluable());
  CHECK(rel(k.eval(1.0), 1.0 - std::exp(-1.0)) < 1e-12);
  Kernel e3 = Kernel::conv_power(Kernel::exponential(1.0), 3);
  CHECK(rel(e3.eval(2.0), 2.0 * std::exp(-2.0)) < 1e-13);  // g_3(2) e^{-2}
  Kernel l2 = Kernel::conv_power(Kernel::levy_half(), 2);
  CHECK(rel(l2.eval(1.0), std::exp(-1.0) / std::sqrt(M_PI)) < 1e-13);
  Kernel halfexp = Kernel::conv(Kernel::power(0.5), Kernel::exponential(1.0));
  CHECK(rel(halfexp.eval(1.0), 0.607157705841394) < 1e-12);
  // no closed evaluation: half-power against the heavy-tail kernel
  Kernel hl = Kernel::conv(Kernel::power(0.5), Kernel::levy_half());
  CHECK(!hl.evaluable());
  CHECK_THROWS_AS(hl.eval(1.0), NonEvaluable);
}

TEST_CASE("pointwise values") {
  CHECK(rel(Kernel::power(0.5).eval(2.0), 0.398942280401433) < 1e-13);
  CHECK(rel(Kernel::levy_half().eval(0.25), 0.830214994841189) < 1e-13);
  CHECK(rel(Kernel::interpolant(0.3).eval(2.0), 1.3) < 1e-14);
  CHECK(rel(Kernel::exponential(cx(1.0, 2.0)).eval(1.0),
            std::exp(-cx(1.0, 2.0))) < 1e-13);
  CHECK_THROWS_AS(Kernel::power(0.5).eval(0.0), DomainError);
  CHECK_THROWS_AS(Kernel::power(0.5).eval(-1.0), DomainError);
}

TEST_CASE("singularity exponent and integrability") {
  CHECK(Kernel::power(0.5).singularity_exponent() == doctest::Approx(-0.5));
  CHECK(std::isinf(Kernel::levy_half().singularity_exponent()));
  Kernel k = Kernel::conv(Kernel::power(0.5), Kernel::exponential(1.0));
  CHECK(k.singularity_exponent() == doctest::Approx(0.5));
  Kernel p2 = Kernel::conv_power(Kernel::exponential(1.0), 2);
  CHECK(p2.singularity_exponent() == doctest::Approx(1.0));
  CHECK(Kernel::power(-0.5).singularity_exponent() == doctest::Approx(-1.5));
  CHECK(!Kernel::power(-0.5).integrable());
  CHECK_THROWS_AS(Kernel::conv(Kernel::power(-0.5), Kernel::power(0.5)),
                  NotIntegrable);
}

TEST_CASE("transforms") {
  CHECK(rel(*Kernel::power(0.5).laplace_hat(2.0), 0.707106781186548) < 1e-13);
  CHECK(rel(*Kernel::power(0.5).laplace_hat(cx(2.0, 1.0)),
            cx(0.650850826034644, -0.153645038156066)) < 1e-13);
  CHECK(rel(*Kernel::levy_half().laplace_hat(2.0), 0.243116734434214) < 1e-13);
  CHECK(rel(*Kernel::levy_half().laplace_hat(cx(1.0, 1.0)),
            cx(0.299385673985454, -0.146503820438691)) < 1e-13);
  CHECK(rel(*Kernel::interpolant(0.3).laplace_hat(1.0), 1.0) < 1e-14);
  Kernel k = Kernel::conv(Kernel::power(1.0), Kernel::exponential(1.0));
  CHECK(rel(*k.laplace_hat(1.0), 0.5) < 1e-14);
  // abscissa bookkeeping for growing kernels
  Kernel grow = Kernel::exponential(-2.0);  // e^{2t}
  CHECK(grow.abscissa() == doctest::Approx(2.0));
  CHECK_THROWS_AS(grow.laplace_hat(1.0), AbscissaViolation);
  CHECK(rel(*grow.laplace_hat(3.0), 1.0) < 1e-14);
  Grid g{1.0, 8};
  CHECK(!tab_of(Kernel::power(1.0), g).laplace_hat(1.0).has_value());
}

TEST_CASE("limits at zero, smoothness, derivatives") {
  CHECK(rel(Kernel::power(1.0).value_at_zero(), 1.0) < 1e-14);
  CHECK(std::abs(Kernel::power(2.0).value_at_zero()) == 0.0);
  CHECK(rel(Kernel::exponential(2.0).value_at_zero(), 1.0) < 1e-14);
  CHECK(rel(Kernel::interpolant(0.3).value_at_zero(), 0.7) < 1e-14);
  CHECK(std::abs(Kernel::levy_half().value_at_zero()) == 0.0);
  CHECK_THROWS_AS(Kernel::power(0.5).value_at_zero(), DomainError);

  CHECK(Kernel::power(1.0).is_c2());
  CHECK(Kernel::power(2.0).is_c2());
  CHECK(!Kernel::power(0.5).is_c2());
  CHECK(!Kernel::power(2.5).is_c2());
  CHECK(Kernel::levy_half().is_c2());
  CHECK(Kernel::exponential(1.0).is_c2());

  CHECK(rel(Kernel::power(3.0).deriv1(0.5), 0.5) < 1e-14);  // d/dt t^2/2 = t
  CHECK(rel(Kernel::interpolant(0.3).deriv1(0.7), 0.3) < 1e-14);
  CHECK(std::abs(Kernel::interpolant(0.3).deriv2(0.7)) == 0.0);
  CHECK(rel(Kernel::exponential(2.0).deriv2(1.0), 4.0 * std::exp(-2.0)) < 1e-13);
  // heavy-tail kernel derivatives against central differences
  Kernel L = Kernel::levy_half();
  double t = 0.3, dh = 1e-5;
  double d1 = ((L.eval(t + dh) - L.eval(t - dh)) / (2 * dh)).real();
  double d2 =
      ((L.eval(t + dh) - 2.0 * L.eval(t) + L.eval(t - dh)) / (dh * dh)).real();
  CHECK(rel(L.deriv1(t), d1) < 1e-7);
  CHECK(rel(L.deriv2(t), d2) < 1e-5);
  CHECK(std::abs(L.deriv1(0.0)) == 0.0);
}

TEST_CASE("grammar round trips") {
  std::vector<std::string> texts = {
      "g(0.5)",
      "exp(1+2i)",
      "exp(2i)",
      "levy12",
      "interp(0.3)",
      "conv(g(0.5), exp(1))",
      "pow(exp(1), 3)",
      "pow(levy12, 2)",
      "scaled(2, g(1.5))",
      "sum(g(1), scaled(-1.5, levy12))",
      "conv(interp(0.25), levy12)",
  };
  for (const auto& s : texts) {
    Kernel k = Kernel::parse(s);
    CHECK(Kernel::parse(k.format()) == k);
  }
  CHECK(Kernel::parse("const(2)") == Kernel::scaled(2.0, Kernel::power(1.0)));
  CHECK(Kernel::parse(" sum( g(1) , g(2) ) ") ==
        Kernel::sum(Kernel::power(1.0), Kernel::power(2.0)));
  CHECK_THROWS_AS(Kernel::parse("waffle(1)"), ParseError);
  CHECK_THROWS_AS(Kernel::parse("g("), ParseError);
  CHECK_THROWS_AS(Kernel::parse("g(1) x"), ParseError);
  CHECK_THROWS_AS(Kernel::parse("tab[T=1,n=8]"), ParseError);
}

TEST_CASE("construction guards") {
  CHECK_THROWS_AS(Kernel::power(0.0), DomainError);
  CHECK_THROWS_AS(Kernel::power(-1.0), DomainError);
  CHECK_THROWS_AS(Kernel::interpolant(1.5), DomainError);
  CHECK_THROWS_AS(Kernel::interpolant(-0.2), DomainError);
  CHECK_THROWS_AS(Kernel::conv_power(Kernel::power(1.0), 0), DomainError);
  Grid g{1.0, 8};
  CHECK_THROWS_AS(Kernel::tabulated(g, std::vector<cx>(5)), DomainError);
}

TEST_CASE("power moments") {
  // int_0^1 g_{1/2}(u) du = g_{3/2}(1)
  CHECK(rel(gmom(0.5, 0, 0.0, 1.0), 1.12837916709551) < 1e-13);
  // int_0^1 u g_{1/2}(u) du = (2/3)/Gamma(1/2)
  CHECK(rel(gmom(0.5, 1, 0.0, 1.0), 0.376126389031837) < 1e-13);
  // first moment of a non-integrable power is finite
  CHECK(rel(gmom(-0.5, 1, 0.0, 1.0), -0.564189583547756) < 1e-13);
  CHECK_THROWS_AS(gmom(-0.5, 0, 0.0, 1.0), NotIntegrable);
  CHECK_THROWS_AS(gmom(0.5, 0, 1.0, 0.5), DomainError);
  // additivity over subranges
  double whole = gmom(0.7, 2, 0.0, 2.0);
  double split = gmom(0.7, 2, 0.0, 0.8) + gmom(0.7, 2, 0.8, 2.0);
  CHECK(rel(whole, split) < 1e-13);
}

TEST_CASE("power cross integrals") {
  CHECK(rel(power_cross(0.5, 0.5, 0.5, 1.0, 1.5), 0.216346895938785) < 1e-12);
  // full range reproduces the fused power
  double x = 1.3;
  CHECK(rel(power_cross(0.5, 0.5, 0.0, x, x), 1.0) < 1e-13);  // g_1(x) = 1
  CHECK(rel(power_cross(2.0, 3.0, 0.0, x, x),
            std::pow(x, 4.0) * rgamma(5.0)) < 1e-13);
  CHECK_THROWS_AS(power_cross(-0.5, 1.0, 0.0, 1.0, 1.0), DomainError);
}

TEST_CASE("discrete convolution: closed paths") {
  Grid g{1.0, 16};
  auto r = conv1(Kernel::power(0.5), Kernel::power(0.5), g);
  REQUIRE(r.closed.has_value());
  CHECK(*r.closed == Kernel::power(1.0));
  CHECK(rel(r.samples.v[15], 1.0) < 1e-14);
  auto re = conv1(Kernel::power(0.5), Kernel::exponential(1.0), g);
  REQUIRE(re.closed.has_value());
  CHECK(rel(re.samples.v[15], 0.607157705841394) < 1e-12);
}

TEST_CASE("discrete convolution: singular weight against samples is exact "
          "for piecewise-linear data") {
  Grid g{1.0, 16};
  Kernel ones = tab_of(Kernel::power(1.0), g);
  Kernel ramp = tab_of(Kernel::power(2.0), g);
  auto r1 = conv1(Kernel::power(0.5), ones, g);
  CHECK(!r1.closed.has_value());
  for (int i = 0; i < g.n; ++i) {
    double t = g.node(i + 1);
    CHECK(rel(r1.samples.v[i], Kernel::power(1.5).eval(t)) < 1e-13);
  }
  auto r2 = conv1(Kernel::power(0.5), ramp, g);
  for (int i = 0; i < g.n; ++i) {
    double t = g.node(i + 1);
    CHECK(rel(r2.samples.v[i], Kernel::power(2.5).eval(t)) < 1e-13);
  }
}

TEST_CASE("discrete convolution: smooth-smooth paths") {
  Grid g{1.0, 128};
  Kernel ones = tab_of(Kernel::power(1.0), g);
  Kernel ramp = tab_of(Kernel::power(2.0), g);
  // linear x linear cells are exact for polynomial data
  auto rr = conv1(ones, ramp, g);
  CHECK(rel(rr.samples.v[127], 0.5) < 1e-13);  // g_3(1)
  // exponential sampled against ones: O(h^2) quadrature
  auto re = conv1(Kernel::exponential(1.0), ones, g);
  CHECK(rel(re.samples.v[127], 1.0 - std::exp(-1.0)) < 2e-5);
  // heavy-tail kernel integrated: erfc(1/(2 sqrt t))
  Grid g256{1.0, 256};
  Kernel ones256 = tab_of(Kernel::power(1.0), g256);
  auto rl = conv1(Kernel::levy_half(), ones256, g256);
  CHECK(rel(rl.samples.v[255], 0.479500122186953) < 1e-4);
}

TEST_CASE("discrete convolution: sampled-sampled and grid guards") {
  Grid g{1.0, 32};
  SampledValues a{g, Kernel::power(1.0).eval_nodes(g)};
  SampledValues b{g, Kernel::power(2.0).eval_nodes(g)};
  auto r = conv1(a, b);
  CHECK(rel(r.v[31], 0.5) < 1e-13);
  Grid g2{2.0, 32};
  SampledValues c{g2, Kernel::power(1.0).eval_nodes(g2)};
  CHECK_THROWS_AS(conv1(a, c), GridMismatch);
}

TEST_CASE("convolution powers of samplings") {
  Grid g{1.0, 64};
  auto closed = conv_power_samples(Kernel::power(0.5), 3, g);
  REQUIRE(closed.closed.has_value());
  CHECK(*closed.closed == Kernel::power(1.5));
  auto tabs = conv_power_samples(tab_of(Kernel::power(1.0), g), 2, g);
  CHECK(!tabs.closed.has_value());
  CHECK(rel(tabs.samples.v[63], 1.0) < 1e-13);  // g_2(1)
  auto levy = conv_power_samples(Kernel::levy_half(), 2, g);
  REQUIRE(levy.closed.has_value());
  CHECK(rel(levy.samples.v[63], std::exp(-1.0) / std::sqrt(M_PI)) < 1e-13);
}

TEST_CASE("pointwise multiplier") {
  CHECK(multiplier_M(Kernel::power(0.5)) ==
        Kernel::scaled(0.5, Kernel::power(1.5)));
  CHECK(multiplier_M(Kernel::exponential(1.0)) ==
        Kernel::conv_power(Kernel::exponential(1.0), 2));
  Kernel mi = multiplier_M(Kernel::interpolant(0.3));
  CHECK(rel(mi.eval(2.0), 2.0 * 1.3) < 1e-13);
  Grid g{1.0, 8};
  Kernel mt = multiplier_M(tab_of(Kernel::power(1.0), g));
  CHECK(rel(mt.eval(0.5), 0.5) < 1e-13);
  CHECK_THROWS_AS(multiplier_M(Kernel::levy_half()), NoClosedForm);
}

TEST_CASE("companion kernels for power pairs") {
  // flat pair: c = g_{1/2} works, b would be a unit pulse (flagged invalid)
  auto flat = solve_pair(Kernel::power(0.5), Kernel::power(0.5), PairMode::Unit);
  CHECK(flat.c_valid);
  CHECK(!flat.b_valid);
  CHECK(flat.c == Kernel::power(0.5));
  // fractional pair (g_{1/2}, g_{3/2})
  auto p = solve_pair(Kernel::power(0.5), Kernel::power(1.5), PairMode::Unit);
  CHECK(p.b_valid);
  CHECK(p.c_valid);
  CHECK(p.b == Kernel::power(1.0));
  CHECK(p.c == Kernel::power(0.5));
  // linear mode shifts the targets
  auto lin = solve_pair(Kernel::power(0.5), Kernel::power(1.0), PairMode::Linear);
  CHECK(lin.b_valid);
  CHECK(lin.c_valid);
  CHECK(lin.b == Kernel::power(1.5));
  CHECK(lin.c == Kernel::power(1.5));
  // coefficients propagate
  auto sc = solve_pair(Kernel::scaled(2.0, Kernel::power(0.5)),
                       Kernel::power(1.5), PairMode::Unit);
  CHECK(sc.b_valid);
  CHECK(rel(sc.b.eval(1.0), 0.5) < 1e-13);
  // outside the closed class
  CHECK_THROWS_AS(
      solve_pair(Kernel::exponential(1.0), Kernel::power(1.0), PairMode::Unit),
      NoClosedForm);
  // c leaves the integrable range for steep pairs
  auto steep = solve_pair(Kernel::power(1.5), Kernel::power(1.0), PairMode::Unit);
  CHECK(!steep.c_valid);
}

TEST_CASE("term decompositions") {
  Kernel k = Kernel::sum(Kernel::scaled(2.0, Kernel::power(0.5)),
                         Kernel::power(2.0));
  auto ps = as_power_sum(k);
  REQUIRE(ps.has_value());
  CHECK(ps->size() == 2);
  auto terms = linear_terms(k);
  CHECK(terms.size() == 2);
  CHECK(!as_power_sum(Kernel::exponential(1.0)).has_value());
  CHECK(!as_power_sum(Kernel::conv(Kernel::power(0.5), Kernel::levy_half()))
             .has_value());
}
