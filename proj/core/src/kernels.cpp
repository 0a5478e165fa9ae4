#include "resolvent/kernels.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <utility>

#include "resolvent/special.hpp"

namespace resolvent {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTol = 1e-12;

bool near(double a, double b) {
  return std::abs(a - b) <= kTol * std::max({1.0, std::abs(a), std::abs(b)});
}
bool near(cx a, cx b) {
  return std::abs(a - b) <= kTol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

std::string fmt_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.14g", x);
  return buf;
}

std::string fmt_cx(cx z) {
  if (z.imag() == 0.0) return fmt_real(z.real());
  if (z.real() == 0.0) return fmt_real(z.imag()) + "i";
  std::string s = fmt_real(z.real());
  if (z.imag() >= 0.0) s += "+";
  s += fmt_real(z.imag()) + "i";
  return s;
}

}  // namespace

struct Kernel::Node {
  KernelTag tag{};
  double alpha = 0.0;  // Power
  cx lambda{};         // Exponential
  double eps = 0.0;    // Interpolant
  cx c{};              // Scaled
  int n = 0;           // ConvPower
  std::vector<Kernel> kids;
  Grid tgrid{};
  std::vector<cx> tvals;
};

namespace {

Kernel make_node(Kernel::Node n);

using Term = std::pair<cx, Kernel>;  // coefficient * base

std::vector<Term> as_terms(const Kernel& k);
Kernel rebuild(std::vector<Term> terms);
std::vector<Term> conv_bases(const Kernel& a, const Kernel& b);

}  // namespace

// Access to private constructor for the helpers below.
struct KernelAccess {
  static Kernel wrap(std::shared_ptr<const Kernel::Node> n) {
    return Kernel(std::move(n));
  }
};

namespace {

Kernel make_node(Kernel::Node n) {
  return KernelAccess::wrap(std::make_shared<const Kernel::Node>(std::move(n)));
}

// --- canonical term algebra ------------------------------------------------

std::vector<Term> as_terms(const Kernel& k) {
  switch (k.tag()) {
    case KernelTag::Sum: {
      std::vector<Term> out;
      for (int i = 0; i < k.arity(); ++i) {
        auto sub = as_terms(k.child(i));
        out.insert(out.end(), sub.begin(), sub.end());
      }
      return out;
    }
    case KernelTag::Scaled: {
      auto sub = as_terms(k.child(0));
      for (auto& t : sub) t.first *= k.scale();
      return sub;
    }
    default:
      return {{cx(1.0, 0.0), k}};
  }
}

std::string sort_key(const Kernel& k) { return k.format(); }

Kernel rebuild(std::vector<Term> terms) {
  // merge equal bases, drop zero terms, sort deterministically
  std::vector<Term> merged;
  for (auto& t : terms) {
    bool hit = false;
    for (auto& m : merged)
      if (m.second == t.second) {
        m.first += t.first;
        hit = true;
        break;
      }
    if (!hit) merged.push_back(t);
  }
  std::erase_if(merged, [](const Term& t) {
    return std::abs(t.first) == 0.0;
  });
  std::sort(merged.begin(), merged.end(), [](const Term& a, const Term& b) {
    return sort_key(a.second) < sort_key(b.second);
  });

  if (merged.empty()) {
    Kernel::Node z;
    z.tag = KernelTag::Scaled;
    z.c = cx(0.0, 0.0);
    z.kids = {Kernel::power(1.0)};
    return make_node(std::move(z));
  }
  auto wrap_term = [](const Term& t) {
    if (t.first == cx(1.0, 0.0)) return t.second;
    Kernel::Node s;
    s.tag = KernelTag::Scaled;
    s.c = t.first;
    s.kids = {t.second};
    return make_node(std::move(s));
  };
  if (merged.size() == 1) return wrap_term(merged[0]);
  Kernel::Node s;
  s.tag = KernelTag::Sum;
  for (auto& t : merged) s.kids.push_back(wrap_term(t));
  return make_node(std::move(s));
}

// Atom multiset of a base (atom or Conv of atoms): (atom, multiplicity).
struct Leaf {
  Kernel atom;
  int count;
};

std::vector<Leaf> base_leaves(const Kernel& b) {
  std::vector<Leaf> out;
  auto push = [&out](const Kernel& atom, int count) {
    for (auto& l : out)
      if (l.atom == atom) {
        l.count += count;
        return;
      }
    out.push_back({atom, count});
  };
  if (b.tag() == KernelTag::Conv) {
    for (int i = 0; i < b.arity(); ++i) {
      const Kernel& kid = b.child(i);
      if (kid.tag() == KernelTag::ConvPower)
        push(kid.child(0), kid.conv_exponent());
      else
        push(kid, 1);
    }
  } else if (b.tag() == KernelTag::ConvPower) {
    push(b.child(0), b.conv_exponent());
  } else {
    push(b, 1);
  }
  return out;
}

Kernel leaf_kernel(const Leaf& l) {
  if (l.count == 1) return l.atom;
  Kernel::Node n;
  n.tag = KernelTag::ConvPower;
  n.n = l.count;
  n.kids = {l.atom};
  return make_node(std::move(n));
}

// Convolve two bases; exp pairs with distinct rates and interpolants expand,
// so the result is a term list.
std::vector<Term> conv_leaf_list(std::vector<Leaf> leaves) {
  // expand interpolants: (1-eps) g_1 + eps g_2
  for (size_t i = 0; i < leaves.size(); ++i) {
    if (leaves[i].atom.tag() == KernelTag::Interpolant) {
      double e = leaves[i].atom.interp_eps();
      auto rest = leaves;
      if (rest[i].count > 1)
        rest[i].count -= 1;
      else
        rest.erase(rest.begin() + i);
      auto with = [&rest](const Kernel& atom) {
        auto l2 = rest;
        for (auto& l : l2)
          if (l.atom == atom) {
            l.count += 1;
            return l2;
          }
        l2.push_back({atom, 1});
        return l2;
      };
      auto t1 = conv_leaf_list(with(Kernel::power(1.0)));
      auto t2 = conv_leaf_list(with(Kernel::power(2.0)));
      std::vector<Term> out;
      for (auto& t : t1) out.push_back({t.first * (1.0 - e), t.second});
      for (auto& t : t2) out.push_back({t.first * e, t.second});
      return out;
    }
  }
  // expand one pair of exponentials with distinct rates:
  // e_l * e_m = (e_m - e_l) / (l - m)
  for (size_t i = 0; i < leaves.size(); ++i) {
    if (leaves[i].atom.tag() != KernelTag::Exponential) continue;
    for (size_t j = i + 1; j < leaves.size(); ++j) {
      if (leaves[j].atom.tag() != KernelTag::Exponential) continue;
      cx l = leaves[i].atom.exp_lambda();
      cx m = leaves[j].atom.exp_lambda();
      if (near(l, m)) continue;
      auto drop_one = [&leaves](size_t a, size_t b) {
        // remove one factor at index a, keep multiset otherwise
        auto l2 = leaves;
        (void)b;
        if (l2[a].count > 1)
          l2[a].count -= 1;
        else
          l2.erase(l2.begin() + a);
        return l2;
      };
      cx inv = 1.0 / (l - m);
      auto tm = conv_leaf_list(drop_one(i, j));  // e_l removed -> e_m side
      auto tl = conv_leaf_list(drop_one(j, i));  // e_m removed -> e_l side
      std::vector<Term> out;
      for (auto& t : tm) out.push_back({t.first * inv, t.second});
      for (auto& t : tl) out.push_back({t.first * (-inv), t.second});
      return out;
    }
  }
  // terminal: merge powers, keep the rest as counted atoms
  double alpha_total = 0.0;
  bool has_power = false;
  std::vector<Leaf> rest;
  for (auto& l : leaves) {
    if (l.atom.tag() == KernelTag::Power) {
      alpha_total += l.atom.power_alpha() * l.count;
      has_power = true;
    } else {
      rest.push_back(l);
    }
  }
  std::vector<Kernel> kids;
  if (has_power) kids.push_back(Kernel::power(alpha_total));
  std::sort(rest.begin(), rest.end(), [](const Leaf& a, const Leaf& b) {
    return sort_key(a.atom) < sort_key(b.atom);
  });
  for (auto& l : rest) kids.push_back(leaf_kernel(l));
  if (kids.empty()) throw DomainError("conv: empty factor list");
  if (kids.size() == 1) return {{cx(1.0, 0.0), kids[0]}};
  Kernel::Node n;
  n.tag = KernelTag::Conv;
  n.kids = std::move(kids);
  return {{cx(1.0, 0.0), make_node(std::move(n))}};
}

std::vector<Term> conv_bases(const Kernel& a, const Kernel& b) {
  auto leaves = base_leaves(a);
  for (auto& l : base_leaves(b)) {
    bool hit = false;
    for (auto& e : leaves)
      if (e.atom == l.atom) {
        e.count += l.count;
        hit = true;
        break;
      }
    if (!hit) leaves.push_back(l);
  }
  return conv_leaf_list(std::move(leaves));
}

}  // namespace

// --- factories --------------------------------------------------------------

Kernel Kernel::power(double alpha) {
  if (!std::isfinite(alpha))
    throw DomainError("power: alpha must be finite");
  if (alpha < 0.75 && near(alpha, std::round(alpha)) && std::round(alpha) <= 0.0)
    throw DomainError("power: alpha must avoid {0, -1, -2, ...}");
  Node n;
  n.tag = KernelTag::Power;
  n.alpha = alpha;
  return make_node(std::move(n));
}

Kernel Kernel::constant(cx c) { return scaled(c, power(1.0)); }

Kernel Kernel::exponential(cx lambda) {
  Node n;
  n.tag = KernelTag::Exponential;
  n.lambda = lambda;
  return make_node(std::move(n));
}

Kernel Kernel::levy_half() {
  Node n;
  n.tag = KernelTag::LevyHalf;
  return make_node(std::move(n));
}

Kernel Kernel::interpolant(double eps) {
  if (!(eps >= -kTol && eps <= 1.0 + kTol))
    throw DomainError("interpolant: eps must lie in [0, 1]");
  if (eps <= kTol) return power(1.0);
  if (eps >= 1.0 - kTol) return power(2.0);
  Node n;
  n.tag = KernelTag::Interpolant;
  n.eps = eps;
  return make_node(std::move(n));
}

Kernel Kernel::tabulated(const Grid& grid, std::vector<cx> values) {
  if (grid.n < 2 || static_cast<int>(values.size()) != grid.n)
    throw DomainError("tabulated: needs one value per grid node (n >= 2)");
  Node n;
  n.tag = KernelTag::Tabulated;
  n.tgrid = grid;
  n.tvals = std::move(values);
  return make_node(std::move(n));
}

Kernel Kernel::conv(const Kernel& a, const Kernel& b) {
  if (!a.integrable() || !b.integrable())
    throw NotIntegrable("conv: both factors must be integrable near 0");
  std::vector<Term> out;
  for (auto& ta : as_terms(a))
    for (auto& tb : as_terms(b)) {
      auto prods = conv_bases(ta.second, tb.second);
      for (auto& p : prods)
        out.push_back({ta.first * tb.first * p.first, p.second});
    }
  return rebuild(std::move(out));
}

Kernel Kernel::conv_power(const Kernel& k, int n) {
  if (n < 1) throw DomainError("conv_power: exponent must be >= 1");
  if (n > 256) throw DomainError("conv_power: exponent too large");
  if (n == 1) return k;
  if (k.tag() == KernelTag::Power) return power(n * k.power_alpha());
  Kernel out = k;
  for (int i = 1; i < n; ++i) out = conv(out, k);
  return out;
}

Kernel Kernel::scaled(cx c, const Kernel& k) {
  auto terms = as_terms(k);
  for (auto& t : terms) t.first *= c;
  return rebuild(std::move(terms));
}

Kernel Kernel::sum(const Kernel& a, const Kernel& b) {
  auto terms = as_terms(a);
  for (auto& t : as_terms(b)) terms.push_back(t);
  return rebuild(std::move(terms));
}

// --- accessors ---------------------------------------------------------------

KernelTag Kernel::tag() const { return node_->tag; }

double Kernel::power_alpha() const {
  if (tag() != KernelTag::Power) throw DomainError("not a power kernel");
  return node_->alpha;
}
cx Kernel::exp_lambda() const {
  if (tag() != KernelTag::Exponential) throw DomainError("not an exponential kernel");
  return node_->lambda;
}
double Kernel::interp_eps() const {
  if (tag() != KernelTag::Interpolant) throw DomainError("not an interpolant kernel");
  return node_->eps;
}
cx Kernel::scale() const {
  if (tag() != KernelTag::Scaled) throw DomainError("not a scaled kernel");
  return node_->c;
}
int Kernel::conv_exponent() const {
  if (tag() != KernelTag::ConvPower) throw DomainError("not a convolution power");
  return node_->n;
}
int Kernel::arity() const { return static_cast<int>(node_->kids.size()); }
const Kernel& Kernel::child(int i) const { return node_->kids.at(i); }
const Grid& Kernel::tab_grid() const {
  if (tag() != KernelTag::Tabulated) throw DomainError("not a tabulated kernel");
  return node_->tgrid;
}
const std::vector<cx>& Kernel::tab_values() const {
  if (tag() != KernelTag::Tabulated) throw DomainError("not a tabulated kernel");
  return node_->tvals;
}

bool Kernel::operator==(const Kernel& o) const {
  if (node_ == o.node_) return true;
  if (tag() != o.tag()) return false;
  switch (tag()) {
    case KernelTag::Power:
      return near(node_->alpha, o.node_->alpha);
    case KernelTag::Exponential:
      return near(node_->lambda, o.node_->lambda);
    case KernelTag::LevyHalf:
      return true;
    case KernelTag::Interpolant:
      return near(node_->eps, o.node_->eps);
    case KernelTag::Scaled:
      return near(node_->c, o.node_->c) && child(0) == o.child(0);
    case KernelTag::ConvPower:
      return node_->n == o.node_->n && child(0) == o.child(0);
    case KernelTag::Conv:
    case KernelTag::Sum: {
      if (arity() != o.arity()) return false;
      for (int i = 0; i < arity(); ++i)
        if (!(child(i) == o.child(i))) return false;
      return true;
    }
    case KernelTag::Tabulated: {
      if (node_->tgrid.n != o.node_->tgrid.n ||
          !near(node_->tgrid.T, o.node_->tgrid.T))
        return false;
      for (size_t i = 0; i < node_->tvals.size(); ++i)
        if (!near(node_->tvals[i], o.node_->tvals[i])) return false;
      return true;
    }
  }
  return false;
}

double Kernel::singularity_exponent() const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (tag()) {
    case KernelTag::Power:
      return node_->alpha - 1.0;
    case KernelTag::Exponential:
    case KernelTag::Interpolant:
    case KernelTag::Tabulated:
      return 0.0;
    case KernelTag::LevyHalf:
      return inf;
    case KernelTag::Scaled:
      return std::abs(node_->c) == 0.0 ? inf : child(0).singularity_exponent();
    case KernelTag::ConvPower: {
      double g = child(0).singularity_exponent();
      return std::isinf(g) ? g : node_->n * g + (node_->n - 1);
    }
    case KernelTag::Conv: {
      double s = static_cast<double>(arity() - 1);
      for (int i = 0; i < arity(); ++i) {
        double g = child(i).singularity_exponent();
        if (std::isinf(g)) return inf;
        s += g;
      }
      return s;
    }
    case KernelTag::Sum: {
      double m = inf;
      for (int i = 0; i < arity(); ++i)
        m = std::min(m, child(i).singularity_exponent());
      return m;
    }
  }
  return 0.0;
}

double Kernel::abscissa() const {
  switch (tag()) {
    case KernelTag::Exponential:
      return -node_->lambda.real();
    case KernelTag::Tabulated:
      return -std::numeric_limits<double>::infinity();
    case KernelTag::Scaled:
    case KernelTag::ConvPower:
      return child(0).abscissa();
    case KernelTag::Conv:
    case KernelTag::Sum: {
      double m = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < arity(); ++i) m = std::max(m, child(i).abscissa());
      return m;
    }
    default:
      return 0.0;
  }
}

std::optional<cx> Kernel::laplace_hat(cx s) const {
  if (!(s.real() > abscissa()))
    throw AbscissaViolation("laplace_hat: Re(s) must exceed the abscissa " +
                            fmt_real(abscissa()));
  switch (tag()) {
    case KernelTag::Power:
      return std::exp(-node_->alpha * std::log(s));
    case KernelTag::Exponential:
      return cx(1.0, 0.0) / (s + node_->lambda);
    case KernelTag::LevyHalf:
      return std::exp(-std::sqrt(s));
    case KernelTag::Interpolant:
      return (1.0 - node_->eps) / s + node_->eps / (s * s);
    case KernelTag::Scaled: {
      auto h = child(0).laplace_hat(s);
      if (!h) return std::nullopt;
      return node_->c * *h;
    }
    case KernelTag::ConvPower: {
      auto h = child(0).laplace_hat(s);
      if (!h) return std::nullopt;
      cx p = 1.0;
      for (int i = 0; i < node_->n; ++i) p *= *h;
      return p;
    }
    case KernelTag::Conv: {
      cx p = 1.0;
      for (int i = 0; i < arity(); ++i) {
        auto h = child(i).laplace_hat(s);
        if (!h) return std::nullopt;
        p *= *h;
      }
      return p;
    }
    case KernelTag::Sum: {
      cx acc = 0.0;
      for (int i = 0; i < arity(); ++i) {
        auto h = child(i).laplace_hat(s);
        if (!h) return std::nullopt;
        acc += *h;
      }
      return acc;
    }
    case KernelTag::Tabulated:
      return std::nullopt;
  }
  return std::nullopt;
}

namespace {

// Conv bases with a closed evaluation: power * exponential.
bool conv_closed_match(const Kernel& k, double* alpha, cx* lambda) {
  auto leaves = base_leaves(k);
  if (leaves.size() != 2) return false;
  const Kernel *pw = nullptr, *ex = nullptr;
  int ex_count = 0;
  for (auto& l : leaves) {
    if (l.atom.tag() == KernelTag::Power && l.count == 1) pw = &l.atom;
    if (l.atom.tag() == KernelTag::Exponential) {
      ex = &l.atom;
      ex_count = l.count;
    }
  }
  if (!pw || !ex || ex_count != 1) return false;
  if (pw->power_alpha() <= 0.0) return false;
  *alpha = pw->power_alpha();
  *lambda = ex->exp_lambda();
  return true;
}

}  // namespace

bool Kernel::evaluable() const {
  switch (tag()) {
    case KernelTag::Power:
    case KernelTag::Exponential:
    case KernelTag::LevyHalf:
    case KernelTag::Interpolant:
    case KernelTag::Tabulated:
      return true;
    case KernelTag::Scaled:
      return child(0).evaluable();
    case KernelTag::Sum: {
      for (int i = 0; i < arity(); ++i)
        if (!child(i).evaluable()) return false;
      return true;
    }
    case KernelTag::ConvPower: {
      KernelTag ct = child(0).tag();
      return ct == KernelTag::Exponential || ct == KernelTag::LevyHalf;
    }
    case KernelTag::Conv: {
      double a;
      cx lam;
      return conv_closed_match(*this, &a, &lam);
    }
  }
  return false;
}

cx Kernel::eval(double t) const {
  if (!(t > 0.0)) throw DomainError("eval: t must be positive");
  switch (tag()) {
    case KernelTag::Power:
      return std::pow(t, node_->alpha - 1.0) * rgamma(node_->alpha);
    case KernelTag::Exponential:
      return std::exp(-node_->lambda * t);
    case KernelTag::LevyHalf:
      return (0.5 / std::sqrt(kPi)) * std::pow(t, -1.5) * std::exp(-0.25 / t);
    case KernelTag::Interpolant:
      return (1.0 - node_->eps) + node_->eps * t;
    case KernelTag::Scaled:
      return node_->c * child(0).eval(t);
    case KernelTag::Sum: {
      cx acc = 0.0;
      for (int i = 0; i < arity(); ++i) acc += child(i).eval(t);
      return acc;
    }
    case KernelTag::ConvPower: {
      const Kernel& a = child(0);
      int m = node_->n;
      if (a.tag() == KernelTag::Exponential) {
        // e_l^{*m}(t) = g_m(t) e^{-l t}
        return std::pow(t, m - 1.0) * rgamma(static_cast<double>(m)) *
               std::exp(-a.exp_lambda() * t);
      }
      if (a.tag() == KernelTag::LevyHalf) {
        // m-fold: (m/(2 sqrt(pi))) t^{-3/2} e^{-m^2/(4t)}
        return (0.5 * m / std::sqrt(kPi)) * std::pow(t, -1.5) *
               std::exp(-0.25 * m * m / t);
      }
      throw NonEvaluable("eval: convolution power has no closed evaluation");
    }
    case KernelTag::Conv: {
      double a;
      cx lam;
      if (conv_closed_match(*this, &a, &lam)) {
        // (g_a * e_lam)(t) = t^a E_{1, a+1}(-lam t)
        return std::pow(t, a) * ml_value(1.0, a + 1.0, -lam * t);
      }
      throw NonEvaluable("eval: convolution has no closed evaluation");
    }
    case KernelTag::Tabulated: {
      const Grid& g = node_->tgrid;
      const auto& v = node_->tvals;
      double h = g.h();
      if (t > g.T + 1e-9 * g.T)
        throw DomainError("eval: t beyond the tabulated range");
      // linear between nodes; the first cell extrapolates the first segment
      double x = t / h;  // node index space (1-based nodes)
      if (x <= 1.0) {
        cx slope = (v.size() > 1) ? (v[1] - v[0]) / h : cx(0.0, 0.0);
        return v[0] + slope * (t - h);
      }
      int j = static_cast<int>(std::floor(x));
      if (j >= g.n) return v[g.n - 1];
      double w = x - j;
      return v[j - 1] * (1.0 - w) + v[j] * w;
    }
  }
  throw NonEvaluable("eval: unsupported kernel");
}

std::vector<cx> Kernel::eval_nodes(const Grid& grid) const {
  std::vector<cx> out(grid.n);
  for (int i = 1; i <= grid.n; ++i) out[i - 1] = eval(grid.node(i));
  return out;
}

cx Kernel::value_at_zero() const {
  switch (tag()) {
    case KernelTag::Power: {
      double a = node_->alpha;
      if (a > 1.0 + kTol) return 0.0;
      if (near(a, 1.0)) return 1.0;
      throw DomainError("value_at_zero: kernel unbounded at 0");
    }
    case KernelTag::Exponential:
      return 1.0;
    case KernelTag::LevyHalf:
      return 0.0;
    case KernelTag::Interpolant:
      return 1.0 - node_->eps;
    case KernelTag::Scaled:
      return node_->c * child(0).value_at_zero();
    case KernelTag::Sum: {
      cx acc = 0.0;
      for (int i = 0; i < arity(); ++i) acc += child(i).value_at_zero();
      return acc;
    }
    case KernelTag::ConvPower:
    case KernelTag::Conv: {
      if (singularity_exponent() > kTol) return 0.0;
      throw DomainError("value_at_zero: limit not determined");
    }
    case KernelTag::Tabulated:
      throw DomainError("value_at_zero: tabulated data has no limit info");
  }
  throw DomainError("value_at_zero: unsupported kernel");
}

bool Kernel::is_c2() const {
  switch (tag()) {
    case KernelTag::Power: {
      double a = node_->alpha;
      return near(a, 1.0) || near(a, 2.0) || a >= 3.0 - kTol;
    }
    case KernelTag::Exponential:
    case KernelTag::LevyHalf:
    case KernelTag::Interpolant:
      return true;
    case KernelTag::Scaled:
      return child(0).is_c2();
    case KernelTag::Sum: {
      for (int i = 0; i < arity(); ++i)
        if (!child(i).is_c2()) return false;
      return true;
    }
    default:
      return false;
  }
}

cx Kernel::deriv1(double t) const {
  switch (tag()) {
    case KernelTag::Power: {
      double a = node_->alpha;
      if (near(a, 1.0)) return 0.0;
      return (a - 1.0) * std::pow(t, a - 2.0) * rgamma(a);
    }
    case KernelTag::Exponential:
      return -node_->lambda * std::exp(-node_->lambda * t);
    case KernelTag::Interpolant:
      return node_->eps;
    case KernelTag::LevyHalf: {
      if (t <= 0.0) return 0.0;
      cx k = eval(t);
      return k * (-1.5 / t + 0.25 / (t * t));
    }
    case KernelTag::Scaled:
      return node_->c * child(0).deriv1(t);
    case KernelTag::Sum: {
      cx acc = 0.0;
      for (int i = 0; i < arity(); ++i) acc += child(i).deriv1(t);
      return acc;
    }
    default:
      throw NonEvaluable("deriv1: kernel is not C^1 with a closed derivative");
  }
}

cx Kernel::deriv2(double t) const {
  switch (tag()) {
    case KernelTag::Power: {
      double a = node_->alpha;
      if (near(a, 1.0) || near(a, 2.0)) return 0.0;
      return (a - 1.0) * (a - 2.0) * std::pow(t, a - 3.0) * rgamma(a);
    }
    case KernelTag::Exponential:
      return node_->lambda * node_->lambda * std::exp(-node_->lambda * t);
    case KernelTag::Interpolant:
      return 0.0;
    case KernelTag::LevyHalf: {
      if (t <= 0.0) return 0.0;
      cx k = eval(t);
      double u = -1.5 / t + 0.25 / (t * t);
      double du = 1.5 / (t * t) - 0.5 / (t * t * t);
      return k * (u * u + du);
    }
    case KernelTag::Scaled:
      return node_->c * child(0).deriv2(t);
    case KernelTag::Sum: {
      cx acc = 0.0;
      for (int i = 0; i < arity(); ++i) acc += child(i).deriv2(t);
      return acc;
    }
    default:
      throw NonEvaluable("deriv2: kernel is not C^2 with a closed derivative");
  }
}

std::string Kernel::format() const {
  switch (tag()) {
    case KernelTag::Power:
      return "g(" + fmt_real(node_->alpha) + ")";
    case KernelTag::Exponential:
      return "exp(" + fmt_cx(node_->lambda) + ")";
    case KernelTag::LevyHalf:
      return "levy12";
    case KernelTag::Interpolant:
      return "interp(" + fmt_real(node_->eps) + ")";
    case KernelTag::Scaled:
      return "scaled(" + fmt_cx(node_->c) + ", " + child(0).format() + ")";
    case KernelTag::ConvPower:
      return "pow(" + child(0).format() + ", " + std::to_string(node_->n) + ")";
    case KernelTag::Conv: {
      std::string s = child(arity() - 1).format();
      for (int i = arity() - 2; i >= 0; --i)
        s = "conv(" + child(i).format() + ", " + s + ")";
      return s;
    }
    case KernelTag::Sum: {
      std::string s = child(arity() - 1).format();
      for (int i = arity() - 2; i >= 0; --i)
        s = "sum(" + child(i).format() + ", " + s + ")";
      return s;
    }
    case KernelTag::Tabulated: {
      return "tab[T=" + fmt_real(node_->tgrid.T) +
             ",n=" + std::to_string(node_->tgrid.n) + "]";
    }
  }
  return "?";
}

// --- grammar -----------------------------------------------------------------

namespace {

struct Parser {
  const char* p;
  const char* end;

  void skip() {
    while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
  }
  bool consume(char c) {
    skip();
    if (p < end && *p == c) {
      ++p;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!consume(c))
      throw ParseError(std::string("kernel grammar: expected '") + c + "'");
  }
  std::string ident() {
    skip();
    const char* s = p;
    while (p < end && (std::isalnum(static_cast<unsigned char>(*p)) || *p == '_'))
      ++p;
    if (s == p) throw ParseError("kernel grammar: expected a name");
    return std::string(s, p);
  }
  double real() {
    skip();
    char* q = nullptr;
    double v = std::strtod(p, &q);
    if (q == p) throw ParseError("kernel grammar: expected a number");
    p = q;
    return v;
  }
  cx complex() {
    double a = real();
    skip();
    if (p < end && (*p == 'i' || *p == 'I')) {
      ++p;
      return cx(0.0, a);
    }
    const char* save = p;
    if (p < end && (*p == '+' || *p == '-')) {
      double b = real();
      skip();
      if (p < end && (*p == 'i' || *p == 'I')) {
        ++p;
        return cx(a, b);
      }
      p = save;  // was not an imaginary tail
    }
    return cx(a, 0.0);
  }
  int integer() {
    skip();
    char* q = nullptr;
    long v = std::strtol(p, &q, 10);
    if (q == p) throw ParseError("kernel grammar: expected an integer");
    p = q;
    return static_cast<int>(v);
  }

  Kernel expr() {
    std::string name = ident();
    if (name == "levy12") return Kernel::levy_half();
    expect('(');
    Kernel out = Kernel::power(1.0);
    if (name == "g") {
      out = Kernel::power(real());
    } else if (name == "const") {
      out = Kernel::constant(complex());
    } else if (name == "exp") {
      out = Kernel::exponential(complex());
    } else if (name == "interp") {
      out = Kernel::interpolant(real());
    } else if (name == "conv") {
      Kernel a = expr();
      expect(',');
      Kernel b = expr();
      out = Kernel::conv(a, b);
    } else if (name == "pow") {
      Kernel a = expr();
      expect(',');
      out = Kernel::conv_power(a, integer());
    } else if (name == "scaled") {
      cx c = complex();
      expect(',');
      out = Kernel::scaled(c, expr());
    } else if (name == "sum") {
      Kernel a = expr();
      expect(',');
      out = Kernel::sum(a, expr());
    } else {
      throw ParseError("kernel grammar: unknown form '" + name + "'");
    }
    expect(')');
    return out;
  }
};

}  // namespace

Kernel Kernel::parse(const std::string& text) {
  Parser ps{text.c_str(), text.c_str() + text.size()};
  Kernel k = ps.expr();
  ps.skip();
  if (ps.p != ps.end)
    throw ParseError("kernel grammar: trailing input after kernel");
  return k;
}

// --- moments -----------------------------------------------------------------

double gmom(double nu, int k, double u0, double u1) {
  if (k < 0 || u0 < 0.0 || u1 < u0) throw DomainError("gmom: bad range");
  if (u0 == 0.0 && nu + k <= 0.0)
    throw NotIntegrable("gmom: moment diverges at 0");
  double rising = 1.0;
  for (int j = 0; j < k; ++j) rising *= (nu + j);
  double p = nu + k + 1.0;
  double rg = rgamma(p);
  auto anti = [&](double u) {
    if (u == 0.0) return 0.0;
    return std::pow(u, p - 1.0) * rg;
  };
  return rising * (anti(u1) - anti(u0));
}

double power_cross(double p, double q, double ua, double ub, double x) {
  if (!(p > 0.0) || !(q > 0.0)) throw DomainError("power_cross: p, q > 0");
  if (ua < -1e-15 * x || ub > x * (1.0 + 1e-12) || ub < ua)
    throw DomainError("power_cross: bad subrange");
  if (x <= 0.0) return 0.0;
  double lo = std::clamp(ua / x, 0.0, 1.0);
  double hi = std::clamp(ub / x, 0.0, 1.0);
  double gx = std::pow(x, p + q - 1.0) * rgamma(p + q);
  return gx * (ibeta(p, q, hi) - ibeta(p, q, lo));
}

// --- conv1 -------------------------------------------------------------------

namespace {

// Exact integral over one cell of w(t - s) * phi(s), phi linear on the cell,
// where w is g_nu scaled. Cell s in [s0, s1] within [0, t].
cx power_weight_cell(double nu, double t, double s0, double s1, cx phi0, cx phi1) {
  // substitute u = t - s, phi(s) = a + b*(s - s0) -> linear in u
  double u1 = t - s0, u0 = t - s1;  // u0 <= u1
  double hs = s1 - s0;
  cx b = (phi1 - phi0) / hs;
  // phi = phi0 + b (s - s0) = phi0 + b (t - s0 - u) = (phi0 + b (t - s0)) - b u
  cx p = phi0 + b * (t - s0);
  double m0 = gmom(nu, 0, u0, u1);
  double m1 = gmom(nu, 1, u0, u1);
  return p * m0 - b * m1;
}

// Exact integral over a cell of two linear interpolants.
cx lin_lin_cell(double h, cx a0, cx a1, cx b0, cx b1) {
  return (h / 6.0) * (2.0 * a0 * b0 + a0 * b1 + a1 * b0 + 2.0 * a1 * b1);
}

struct WeightTerm {
  cx coef;
  double nu;
};

// A kernel expressible as a finite sum of scaled powers, if possible.
std::optional<std::vector<WeightTerm>> power_term_list(const Kernel& k) {
  std::vector<WeightTerm> out;
  for (auto& t : as_terms(k)) {
    const Kernel& b = t.second;
    if (b.tag() == KernelTag::Power)
      out.push_back({t.first, b.power_alpha()});
    else
      return std::nullopt;
  }
  return out;
}

// Sampled values of phi with a value at 0 (possibly extrapolated).
struct PhiTable {
  std::vector<cx> v;  // node values, v[j] at (j+1) h
  cx at0{};
  double h = 0.0;
  int n = 0;
};

PhiTable phi_from_kernel(const Kernel& k, const Grid& g) {
  PhiTable t;
  t.h = g.h();
  t.n = g.n;
  t.v = k.eval_nodes(g);
  try {
    t.at0 = k.value_at_zero();
  } catch (const DomainError&) {
    t.at0 = 2.0 * t.v[0] - t.v[1];
  }
  return t;
}

PhiTable phi_from_samples(const SampledValues& s) {
  PhiTable t;
  t.h = s.grid.h();
  t.n = s.grid.n;
  t.v = s.v;
  t.at0 = (s.v.size() > 1) ? 2.0 * s.v[0] - s.v[1] : s.v[0];
  return t;
}

cx phi_node(const PhiTable& t, int j) {  // j = 0 -> value at 0
  return j == 0 ? t.at0 : t.v[j - 1];
}

// (w * phi)(t_i) for all nodes, w a sum of scaled powers.
std::vector<cx> conv_power_weight(const std::vector<WeightTerm>& w,
                                  const PhiTable& phi) {
  std::vector<cx> out(phi.n, cx(0.0, 0.0));
  double h = phi.h;
  for (int i = 1; i <= phi.n; ++i) {
    double t = i * h;
    cx acc = 0.0;
    for (int j = 0; j < i; ++j) {
      double s0 = j * h, s1 = (j + 1) * h;
      cx p0 = phi_node(phi, j), p1 = phi_node(phi, j + 1);
      for (auto& wt : w)
        acc += wt.coef * power_weight_cell(wt.nu, t, s0, s1, p0, p1);
    }
    out[i - 1] = acc;
  }
  return out;
}

// (f * g) with both factors bounded: exact linear-x-linear cells.
std::vector<cx> conv_lin_lin(const PhiTable& f, const PhiTable& g) {
  if (f.n != g.n || !near(f.h, g.h))
    throw GridMismatch("conv1: samplings have different spacing");
  int n = f.n;
  double h = f.h;
  std::vector<cx> out(n, cx(0.0, 0.0));
  for (int i = 1; i <= n; ++i) {
    cx acc = 0.0;
    for (int j = 0; j < i; ++j) {
      // s in [j h, (j+1) h]; f evaluated at t - s spans cell i-j-1..i-j
      cx g0 = phi_node(g, j), g1 = phi_node(g, j + 1);
      cx f1 = phi_node(f, i - j), f0 = phi_node(f, i - j - 1);
      // f(t - s): at s = j h it is f((i-j) h), at s = (j+1) h it is f((i-j-1) h)
      acc += lin_lin_cell(h, g0, g1, f1, f0);
    }
    out[i - 1] = acc;
  }
  return out;
}

std::vector<cx> conv_numeric(const Kernel& f, const PhiTable& phi,
                             const Grid& grid) {
  // split f into momentable power terms and bounded remainder terms
  std::vector<WeightTerm> powers;
  std::vector<Term> smooth;
  for (auto& t : as_terms(f)) {
    if (t.second.tag() == KernelTag::Power)
      powers.push_back({t.first, t.second.power_alpha()});
    else
      smooth.push_back(t);
  }
  std::vector<cx> out(grid.n, cx(0.0, 0.0));
  if (!powers.empty()) {
    auto part = conv_power_weight(powers, phi);
    for (int i = 0; i < grid.n; ++i) out[i] += part[i];
  }
  for (auto& t : smooth) {
    if (t.second.singularity_exponent() < -1e-12)
      throw NotIntegrable(
          "conv1: singular factor outside the power class cannot be folded");
    PhiTable ft = phi_from_kernel(t.second, grid);
    auto part = conv_lin_lin(ft, phi);
    for (int i = 0; i < grid.n; ++i) out[i] += t.first * part[i];
  }
  return out;
}

}  // namespace

Conv1Result conv1(const Kernel& f, const Kernel& g, const Grid& grid) {
  Kernel canonical = Kernel::conv(f, g);
  if (canonical.evaluable())
    return {{grid, canonical.eval_nodes(grid)}, canonical};

  // numeric: fold the more singular factor into exact moments
  double gf = f.singularity_exponent();
  double gg = g.singularity_exponent();
  const Kernel& w = (gf <= gg) ? f : g;
  const Kernel& phi_k = (gf <= gg) ? g : f;
  if (!w.integrable() || !phi_k.integrable())
    throw NotIntegrable("conv1: factors must be integrable");
  if (!phi_k.evaluable() || !w.evaluable())
    throw NonEvaluable("conv1: factor has no pointwise evaluation");
  PhiTable phi = phi_from_kernel(phi_k, grid);
  return {{grid, conv_numeric(w, phi, grid)}, std::nullopt};
}

SampledValues conv1(const Kernel& f, const SampledValues& g) {
  if (!f.integrable()) throw NotIntegrable("conv1: kernel factor not integrable");
  PhiTable phi = phi_from_samples(g);
  return {g.grid, conv_numeric(f, phi, g.grid)};
}

SampledValues conv1(const SampledValues& f, const SampledValues& g) {
  if (f.grid.n != g.grid.n || !f.grid.spacing_matches(g.grid))
    throw GridMismatch("conv1: samplings have different spacing");
  return {f.grid, conv_lin_lin(phi_from_samples(f), phi_from_samples(g))};
}

Conv1Result conv_power_samples(const Kernel& f, int n, const Grid& grid) {
  Kernel canonical = Kernel::conv_power(f, n);
  if (canonical.evaluable())
    return {{grid, canonical.eval_nodes(grid)}, canonical};
  if (n == 1) {
    if (!f.evaluable()) throw NonEvaluable("conv_power: factor not evaluable");
    return {{grid, f.eval_nodes(grid)}, f};
  }
  Conv1Result acc = conv1(f, f, grid);
  for (int i = 2; i < n; ++i) acc.samples = conv1(f, acc.samples);
  return {acc.samples, std::nullopt};
}

Kernel multiplier_M(const Kernel& g) {
  switch (g.tag()) {
    case KernelTag::Power: {
      double a = g.power_alpha();
      // t g_a(t) = a g_{a+1}(t)
      return Kernel::scaled(a, Kernel::power(a + 1.0));
    }
    case KernelTag::Exponential:
      // t e^{-l t} = (e_l * e_l)(t)
      return Kernel::conv_power(g, 2);
    case KernelTag::Interpolant: {
      double e = g.interp_eps();
      return Kernel::sum(Kernel::scaled(1.0 - e, Kernel::power(2.0)),
                         Kernel::scaled(2.0 * e, Kernel::power(3.0)));
    }
    case KernelTag::Scaled:
      return Kernel::scaled(g.scale(), multiplier_M(g.child(0)));
    case KernelTag::Sum: {
      Kernel acc = multiplier_M(g.child(0));
      for (int i = 1; i < g.arity(); ++i)
        acc = Kernel::sum(acc, multiplier_M(g.child(i)));
      return acc;
    }
    case KernelTag::Tabulated: {
      std::vector<cx> v = g.tab_values();
      const Grid& gr = g.tab_grid();
      for (int i = 1; i <= gr.n; ++i) v[i - 1] *= gr.node(i);
      return Kernel::tabulated(gr, std::move(v));
    }
    default:
      throw NoClosedForm("multiplier_M: result leaves the descriptor algebra");
  }
}

Kernel kernel_derivative(const Kernel& k) {
  switch (k.tag()) {
    case KernelTag::Power: {
      double a = k.power_alpha();
      // d/dt g_a = g_{a-1}; g_1 is constant
      if (std::abs(a - 1.0) <= 1e-12) return Kernel::constant(0.0);
      return Kernel::power(a - 1.0);
    }
    case KernelTag::Exponential:
      return Kernel::scaled(-k.exp_lambda(), k);
    case KernelTag::Interpolant:
      return Kernel::constant(k.interp_eps());
    case KernelTag::Scaled:
      return Kernel::scaled(k.scale(), kernel_derivative(k.child(0)));
    case KernelTag::Sum: {
      Kernel acc = kernel_derivative(k.child(0));
      for (int i = 1; i < k.arity(); ++i)
        acc = Kernel::sum(acc, kernel_derivative(k.child(i)));
      return acc;
    }
    default:
      throw NoClosedForm(
          "kernel_derivative: no descriptor-level derivative for " +
          k.format());
  }
}

SampledValues sample_values(const Kernel& k, const Grid& grid) {
  SampledValues out;
  out.grid = grid;
  if (k.evaluable()) {
    out.v = k.eval_nodes(grid);
    return out;
  }
  switch (k.tag()) {
    case KernelTag::Conv: {
      SampledValues acc = conv1(k.child(0), k.child(1), grid).samples;
      for (int i = 2; i < k.arity(); ++i) acc = conv1(k.child(i), acc);
      return acc;
    }
    case KernelTag::ConvPower:
      return conv_power_samples(k.child(0), k.conv_exponent(), grid).samples;
    case KernelTag::Scaled: {
      out = sample_values(k.child(0), grid);
      for (auto& x : out.v) x *= k.scale();
      return out;
    }
    case KernelTag::Sum: {
      out = sample_values(k.child(0), grid);
      for (int i = 1; i < k.arity(); ++i) {
        SampledValues part = sample_values(k.child(i), grid);
        for (int j = 0; j < grid.n; ++j) out.v[j] += part.v[j];
      }
      return out;
    }
    default:
      out.v = k.eval_nodes(grid);  // surfaces the evaluation error
      return out;
  }
}

std::vector<std::pair<cx, Kernel>> linear_terms(const Kernel& k) {
  return as_terms(k);
}

std::optional<std::vector<std::pair<cx, double>>> as_power_sum(const Kernel& k) {
  auto lst = power_term_list(k);
  if (!lst) return std::nullopt;
  std::vector<std::pair<cx, double>> out;
  for (auto& w : *lst) out.push_back({w.coef, w.nu});
  return out;
}

PairSolution solve_pair(const Kernel& a, const Kernel& k, PairMode mode) {
  auto pa = power_term_list(a);
  auto pk = power_term_list(k);
  if (!pa || pa->size() != 1 || !pk || pk->size() != 1)
    throw NoClosedForm("solve_pair: companion kernels exist in closed form "
                       "only for power-law pairs");
  cx ca = (*pa)[0].coef;
  double alpha = (*pa)[0].nu;
  cx ck = (*pk)[0].coef;
  double kappa = (*pk)[0].nu;
  if (!(alpha > 0.0) || !(kappa > 0.0))
    throw DomainError("solve_pair: pair kernels must be integrable powers");

  PairSolution out;
  double target = (mode == PairMode::Unit) ? 1.0 : 2.0;  // exponent of g
  double ce = target - alpha;
  double be = (mode == PairMode::Unit) ? kappa - alpha : kappa + 1.0 - alpha;

  out.c_valid = ce > 1e-12;
  out.b_valid = be > 1e-12;
  // placeholders keep the struct total; flags say whether they are kernels
  out.c = Kernel::scaled(1.0 / ca, Kernel::power(out.c_valid ? ce : 1.0));
  out.b = Kernel::scaled(ck / ca, Kernel::power(out.b_valid ? be : 1.0));
  if (!out.c_valid)
    out.note += "companion c = g_{" + fmt_real(ce) +
                "} is not integrable (requires alpha < " + fmt_real(target) +
                "); ";
  if (!out.b_valid)
    out.note += "companion b = g_{" + fmt_real(be) + "} is not integrable; ";
  return out;
}

}  // namespace resolvent
