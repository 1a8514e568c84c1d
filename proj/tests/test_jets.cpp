#include <doctest.h>

#include <numbers>

#include "support.hpp"
#include "tma/jets.hpp"

using namespace tma;
using tma::testing::random_expression;
using tma::testing::random_point;

namespace {

ExpressionSpec one_dim_quad() {
  return quadratic_spec(1, 0, Flavor::Real, {{1.0}});
}

ExpressionSpec sin_sin() {
  ExpressionSpec s{1, 1, Flavor::Real, nullptr};
  s.root = make_node(Product{{make_node(Atom{AtomFn::Sin, {1.0, 0.0}, 0.0, 1.0}),
                              make_node(Atom{AtomFn::Sin, {0.0, 1.0}, 0.0, 1.0})}});
  return s;
}

}  // namespace

TEST_CASE("jet layout enumerates graded monomials") {
  const auto& lo = JetLayout::get(3, 4);
  CHECK(lo.size() == 35);
  CHECK(lo.degree(0) == 0);
  for (std::size_t i = 1; i < lo.size(); ++i) CHECK(lo.degree(i - 1) <= lo.degree(i));
  CHECK(&JetLayout::get(3, 4) == &lo);
  CHECK_THROWS_AS(JetLayout::get(kMaxJetVars + 1, 2), InvalidArgument);
}

TEST_CASE("constant function has only a value entry") {
  ExpressionSpec s{1, 1, Flavor::Real, make_node(Quad{{{0, 0}, {0, 0}}, {}, 7.0})};
  auto j = evaluate_jet(s, {0.3, -0.2});
  CHECK(j.value() == 7.0);
  for (std::size_t i = 1; i < j.jet.size(); ++i) CHECK(j.jet[i] == 0.0);
}

TEST_CASE("x^2/2 at 1") {
  auto j = evaluate_jet(one_dim_quad(), {1.0}, 0.0, {4, false});
  CHECK(j.value() == doctest::Approx(0.5));
  CHECK(j.d({0}) == doctest::Approx(1.0));
  CHECK(j.d({0, 0}) == doctest::Approx(1.0));
  CHECK(j.d({0, 0, 0}) == 0.0);
  CHECK(j.d({0, 0, 0, 0}) == 0.0);
}

TEST_CASE("sin(x)sin(y) at (pi/2, pi/2) against a finite-difference oracle") {
  const double h = std::numbers::pi / 2;
  auto s = sin_sin();
  auto j = evaluate_jet(s, {h, h}, 0.0, {4, false});
  // oracle: second differences in y of the scalar u_xx, itself from second differences in x
  auto uxx = [&](const std::vector<double>& p) {
    return tma::testing::richardson_second([&](const std::vector<double>& q) { return evaluate(s, q); }, p, 0);
  };
  const double oracle_x2y2 = tma::testing::richardson_second(uxx, {h, h}, 1, 1e-2);
  const double oracle_xy = tma::testing::richardson_diff(
      [&](const std::vector<double>& p) {
        return tma::testing::richardson_diff([&](const std::vector<double>& q) { return evaluate(s, q); }, p, 0);
      },
      {h, h}, 1);
  CHECK(oracle_x2y2 == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(std::abs(oracle_xy) < 1e-7);

  CHECK(j.value() == doctest::Approx(1.0));
  CHECK(std::abs(j.d({0, 1})) < 1e-15);
  CHECK(j.d({0, 0, 1, 1}) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("domain violations") {
  ExpressionSpec s{1, 0, Flavor::Real, make_node(Atom{AtomFn::Log, {1.0}, 0.0, 1.0})};
  CHECK_THROWS_AS(evaluate_jet(s, {-1.0}), DomainViolation);
  CHECK_THROWS_AS(evaluate(s, {0.0}), DomainViolation);
  ExpressionSpec p{1, 0, Flavor::Real, make_node(Atom{AtomFn::Pow, {1.0}, 0.0, 0.5})};
  CHECK_THROWS_AS(evaluate_jet(p, {-1.0}), DomainViolation);
  ExpressionSpec q{1, 0, Flavor::Real, make_node(Atom{AtomFn::Pow, {1.0}, 0.0, -2.0})};
  CHECK_THROWS_AS(evaluate_jet(q, {0.0}), DomainViolation);
  CHECK(evaluate_jet(q, {-2.0}).value() == doctest::Approx(0.25));
}

TEST_CASE("jet entries match finite differences of lower entries") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const bool cplx = trial % 2;
    auto s = random_expression(rng, 1 + trial % 2, 1, cplx ? Flavor::Complex : Flavor::Real, true);
    auto p = random_point(rng, s.dim());
    const double t = 0.1 * (trial % 3);
    auto base = evaluate_jet(s, p, t);
    const int nv = base.jet.nvars();
    const auto& lo = base.jet.layout();
    for (std::size_t idx = 0; idx < lo.size(); ++idx) {
      if (lo.degree(idx) > 3) continue;
      const Exponents alpha = lo.exponents(idx);
      for (int v = 0; v < nv; ++v) {
        Exponents beta = alpha;
        ++beta[static_cast<std::size_t>(v)];
        auto entry = [&](const std::vector<double>& q) {
          std::vector<double> pt(q.begin(), q.begin() + s.dim());
          const double tt = q.size() > pt.size() ? q.back() : t;
          return evaluate_jet(s, pt, tt).jet.derivative(alpha);
        };
        auto ext = p;
        ext.push_back(t);
        const double fd = tma::testing::richardson_diff(entry, ext, static_cast<std::size_t>(v));
        const double exact = base.jet.derivative(beta);
        CHECK(std::abs(fd - exact) <= 1e-6 * std::max(1.0, std::abs(exact)));
      }
    }
  }
}

TEST_CASE("spatial partials are symmetric and value matches scalar evaluation") {
  std::mt19937_64 rng(11);
  auto s = random_expression(rng, 2, 1, Flavor::Real);
  auto p = random_point(rng, 3);
  auto j = evaluate_jet(s, p, 0.0);
  CHECK(j.value() == doctest::Approx(evaluate(s, p)).epsilon(1e-14));
  CHECK(j.d({0, 1, 2}) == j.d({2, 0, 1}));
  CHECK(j.d({1, 1, 0, 2}) == j.d({2, 1, 0, 1}));
}

TEST_CASE("Wirtinger examples") {
  // |z|^2 = x^2 + y^2
  ExpressionSpec s = quadratic_spec(1, 0, Flavor::Complex, {{2, 0}, {0, 2}});
  auto t = wirtinger_from_real(evaluate_jet(s, {0.3, 0.4}));
  CHECK(std::abs(t.d({t.z(0), t.zb(0)}) - cdouble(1.0)) < 1e-15);
  CHECK(std::abs(t.d({t.z(0), t.z(0)})) < 1e-15);

  // Re(z^2) = x^2 - y^2
  ExpressionSpec r = quadratic_spec(1, 0, Flavor::Complex, {{2, 0}, {0, -2}});
  auto tr = wirtinger_from_real(evaluate_jet(r, {0.3, 0.4}));
  CHECK(std::abs(tr.d({0, 0}) - cdouble(1.0)) < 1e-15);
  CHECK(std::abs(tr.d({0, 1})) < 1e-15);

  // |z|^4 = (x^2+y^2)^2 at z = 1
  ExpressionSpec q{1, 0, Flavor::Complex, nullptr};
  auto modsq = make_node(Quad{{{2, 0}, {0, 2}}, {}, 0.0});
  q.root = make_node(Product{{modsq, modsq}});
  auto tq = wirtinger_from_real(evaluate_jet(q, {1.0, 0.0}));
  CHECK(std::abs(tq.d({0, 1}) - cdouble(4.0)) < 1e-14);
}

TEST_CASE("odd real dimension is rejected") {
  auto s = diagonal_quadratic(2, 1, Flavor::Real, 1, 1);
  CHECK_THROWS_AS(wirtinger_from_real(evaluate_jet(s, {0, 0, 0})), DimensionMismatch);
}

TEST_CASE("Wirtinger round trip and conjugation symmetry") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto s = random_expression(rng, 1 + trial % 2, 1, Flavor::Complex, true);
    auto j = evaluate_jet(s, random_point(rng, s.dim()), 0.2);
    auto t = wirtinger_from_real(j);
    auto back = real_from_wirtinger(t);
    for (std::size_t i = 0; i < j.jet.size(); ++i)
      CHECK(std::abs(back.jet[i] - j.jet[i]) <= 1e-12 * std::max(1.0, std::abs(j.jet[i])));
    // swapping every holomorphic slot with its conjugate conjugates the entry
    const auto& lo = t.jet.layout();
    for (std::size_t i = 0; i < lo.size(); ++i) {
      Exponents e = lo.exponents(i);
      for (int c = 0; c < t.complex_dim(); ++c) std::swap(e[2 * c], e[2 * c + 1]);
      const cdouble a = t.jet[i], b = t.jet[lo.index(e)];
      CHECK(std::abs(a - std::conj(b)) <= 1e-13 * std::max(1.0, std::abs(a)));
    }
    for (int c = 0; c < t.complex_dim(); ++c)
      CHECK(std::abs(t.d({2 * c, 2 * c + 1}).imag()) < 1e-14);
  }
}

TEST_CASE("JSON round trip is byte-exact") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto s = random_expression(rng, 1, 2, trial % 2 ? Flavor::Complex : Flavor::Real, trial % 3 == 0);
    const auto text = serialize(s);
    const auto again = serialize(parse_spec(text));
    CHECK(text == again);
    auto p = random_point(rng, s.dim());
    CHECK(evaluate(parse_spec(text), p) == evaluate(s, p));
  }
}

TEST_CASE("JSON errors") {
  CHECK_THROWS_AS(parse_spec(R"({"kind":"atom","fn":"tan","affine":[1,0],"const":0,"k":1,"l":1,"flavor":"real"})"),
                  UnknownAtom);
  CHECK_THROWS_AS(parse_spec(R"({"kind":"atom","fn":"sin","affine":[1],"k":1,"l":1})"), ParseError);
  CHECK_THROWS_AS(parse_spec(R"({"kind":"blob","k":1,"l":1})"), ParseError);
  CHECK_THROWS_AS(parse_spec("{not json"), ParseError);
  auto s = parse_spec(R"({"kind":"quad","matrix":[[1,0],[0,-1]],"linear":[0,0],"const":0,"k":1,"l":1,"flavor":"real"})");
  auto j = evaluate_jet(s, {0, 0});
  CHECK(j.d({0, 0}) == 1.0);
  CHECK(j.d({1, 1}) == -1.0);
  CHECK(j.d({0, 1}) == 0.0);
}

TEST_CASE("linear substitution agrees with direct evaluation") {
  std::mt19937_64 rng(9);
  auto s = random_expression(rng, 1, 1, Flavor::Real, true);
  // x_old = 2 x_new, y_old = x_new - y_new, t_old = 4 t_new, plus offset
  std::vector<std::vector<double>> S = {{2, 0, 0}, {1, -1, 0}, {0, 0, 4}};
  std::vector<double> off = {0.1, -0.2, 0.05};
  auto r = linear_substitution(s, S, off, 1, 1, Flavor::Real);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = random_point(rng, 2, 0.3);
    const double t = 0.01 * trial;
    const double direct = evaluate(s, {2 * p[0] + 0.1, p[0] - p[1] - 0.2}, 4 * t + 0.05);
    CHECK(evaluate(r, p, t) == doctest::Approx(direct).epsilon(1e-13));
  }
}
