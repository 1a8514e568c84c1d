#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tma/funclass.hpp"
#include "tma/legendre.hpp"

using namespace tma;

namespace {

ExpressionSpec cosh_concave() {
  ExpressionSpec s{1, 1, Flavor::Real, nullptr};
  s.root = make_node(Sum{{make_node(Quad{{{1, 0}, {0, 0}}, {}, 0.0}),
                          make_node(Scale{-1.0, make_node(Atom{AtomFn::Cosh, {0.0, 1.0}, 0.0, 1.0})})}});
  return s;
}

ExpressionSpec cross_term(double c) { return quadratic_spec(1, 1, Flavor::Real, {{1.0, c}, {c, -1.0}}); }

/// Root of g on [lo, hi] by bisection.
double bisect(const std::function<double(double)>& g, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if ((g(lo) < 0) == (g(mid) < 0))
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

MatR mat2(double a, double b, double c, double d) {
  MatR m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST_CASE("partial gradient inversion") {
  auto lin = diagonal_quadratic(1, 1, Flavor::Real, 1.0, 2.0);
  CHECK(std::abs(invert_partial_gradient(lin, {0.3}, {1.0}, {0.0})[0] + 0.5) <= 1e-14);
  auto ch = cosh_concave();
  CHECK(std::abs(invert_partial_gradient(ch, {0.3}, {0.0}, {0.4})[0]) <= 1e-14);
  // oracle: bisection on u_y(y) = -sinh(y) = 1
  auto uy = [&](double y) { return evaluate_jet(ch, {0.3, y}).d({1}) - 1.0; };
  const double oracle = bisect(uy, -3.0, 3.0);
  CHECK(std::abs(oracle + 0.881373587019543) <= 1e-12);
  const double y = invert_partial_gradient(ch, {0.3}, {1.0}, {0.0})[0];
  CHECK(std::abs(y - oracle) <= 1e-12);
}

TEST_CASE("inversion errors") {
  auto ch = cosh_concave();
  NewtonOptions tight;
  tight.domain_radius = 0.5;
  CHECK_THROWS_AS(invert_partial_gradient(ch, {0.0}, {10.0}, {0.0}, tight), DomainExceeded);
  NewtonOptions few;
  few.max_iterations = 1;
  CHECK_THROWS_AS(invert_partial_gradient(ch, {0.0}, {5.0}, {0.0}, few), NoConvergence);
}

TEST_CASE("partial Legendre transform examples") {
  SUBCASE("unit quadratic") {
    auto r = partial_legendre(diagonal_quadratic(1, 1, Flavor::Real, 1, 1), {0.4}, {0.7});
    CHECK(std::abs(r.y[0] + 0.7) <= 1e-14);
    CHECK(std::abs(r.w - (0.4 * 0.4 / 2 + 0.7 * 0.7 / 2)) <= 1e-14);
    CHECK((r.W - MatR::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("cross term c = 0.5") {
    const double c = 0.5, x = 0.4, z = -0.3;
    auto r = partial_legendre(cross_term(c), {x}, {z});
    CHECK(std::abs(r.y[0] - (c * x - z)) <= 1e-14);
    CHECK((r.W - mat2(1.25, -0.5, -0.5, 1.0)).cwiseAbs().maxCoeff() <= 1e-14);
    const double w_oracle = (1 + c * c) * x * x / 2 - c * x * z + z * z / 2;
    CHECK(std::abs(r.w - w_oracle) <= 1e-14);
  }
  SUBCASE("cosh at the origin") {
    auto r = partial_legendre(cosh_concave(), {0.0}, {0.0});
    CHECK((r.W - MatR::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("Jacobian shape") {
    auto r = partial_legendre(cross_term(0.5), {0.2}, {0.1});
    CHECK(r.T(0, 0) == 1.0);
    CHECK(r.T(0, 1) == 0.0);
  }
}

TEST_CASE("gradient of w is (u_x, -y)") {
  auto u = cosh_concave();
  const double x = 0.3, z = 0.6, h = 1e-4;
  auto w = [&](double xx, double zz) { return partial_legendre(u, {xx}, {zz}).w; };
  auto r = partial_legendre(u, {x}, {z});
  const double wx = (w(x + h, z) - w(x - h, z)) / (2 * h);
  const double wz = (w(x, z + h) - w(x, z - h)) / (2 * h);
  CHECK(std::abs(wx - evaluate_jet(u, {x, r.y[0]}).d({0})) <= 1e-7);
  CHECK(std::abs(wz + r.y[0]) <= 1e-7);
  // and the second derivatives of w match W
  const double wzz = (w(x, z + h) - 2 * w(x, z) + w(x, z - h)) / (h * h);
  CHECK(std::abs(wzz - r.W(1, 1)) <= 1e-5);
}

TEST_CASE("determinant transformation law") {
  CHECK(det_transform_residual(diagonal_quadratic(2, 1, Flavor::Real, 2, 3), {0.1, 0.2, 0.3}) <= 1e-14);
  CHECK(det_transform_residual(cross_term(0.5), {0.1, 0.2}) <= 1e-13);
  std::mt19937_64 rng(21);
  for (auto [k, l] : {std::pair{1, 1}, {2, 1}, {1, 2}, {2, 2}}) {
    EnsembleSpec es;
    es.k = k;
    es.l = l;
    for (std::uint64_t d = 0; d < 25; ++d)
      CHECK(det_transform_residual(sample_draw(es, d), tma::testing::random_point(rng, k + l, 0.8)) <= 1e-10);
  }
}

TEST_CASE("transformed linearized operator") {
  auto unit = transformed_operator_L(diagonal_quadratic(1, 1, Flavor::Real, 1, 1), {0, 0});
  CHECK((unit.short_form.matrix() - MatR::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-15);
  auto d = transformed_operator_L(diagonal_quadratic(1, 1, Flavor::Real, 2, 3), {0, 0});
  CHECK((d.short_form.matrix() - mat2(0.5, 0, 0, 1.0 / 3)).cwiseAbs().maxCoeff() <= 1e-15);
  auto c = transformed_operator_L(cross_term(0.5), {0.2, 0.1});
  CHECK((c.short_form.matrix() - MatR::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((c.long_form - MatR::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(c.discrepancy <= 1e-12);
}

TEST_CASE("ensemble properties of the transform") {
  std::mt19937_64 rng(23);
  for (auto [k, l] : {std::pair{1, 1}, {2, 1}, {1, 2}, {2, 2}}) {
    EnsembleSpec es;
    es.k = k;
    es.l = l;
    for (std::uint64_t d = 0; d < 25; ++d) {
      auto u = sample_draw(es, d);
      auto p = tma::testing::random_point(rng, k + l, 0.5);
      std::vector<double> x(p.begin(), p.begin() + k);
      auto zj = evaluate_jet(u, p);
      std::vector<double> z(static_cast<std::size_t>(l));
      for (int j = 0; j < l; ++j) z[j] = zj.d({k + j});
      auto r = partial_legendre(u, x, z);
      // W positive semidefinite
      CHECK(min_max_eigenvalues(SymmetricMatrix(r.W)).first >= -1e-10);
      // inverse recovery
      std::vector<double> src(x);
      src.insert(src.end(), r.y.begin(), r.y.end());
      auto sj = evaluate_jet(u, src);
      for (int j = 0; j < l; ++j) CHECK(std::abs(sj.d({k + j}) - z[j]) <= 1e-12 * (1 + std::abs(z[j])));
      // off-diagonal blocks are transposes
      CHECK((r.W.topRightCorner(k, l) - r.W.bottomLeftCorner(l, k).transpose()).cwiseAbs().maxCoeff() <= 1e-14);
      // long and short forms of L agree
      CHECK(transformed_operator_L(u, src).discrepancy <= 1e-12);
    }
  }
}
