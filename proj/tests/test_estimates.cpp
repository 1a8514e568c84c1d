#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "support.hpp"
#include "tma/estimates.hpp"

using namespace tma;

namespace {

FieldSamples synthetic(int nodes, int slices, double t_end, const std::function<double(const std::vector<double>&, double)>& fn) {
  FieldSamples q;
  q.grid = make_grid(2, nodes, -2.0, 2.0, false, 1);
  q.names = {"f"};
  q.values.assign(1, {});
  for (int s = 0; s < slices; ++s) {
    const double t = t_end * s / (slices - 1);
    q.times.push_back(t);
    std::vector<double> v(q.grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(q.grid.coords(i), t);
    q.values[0].push_back(std::move(v));
  }
  return q;
}

ExpressionSpec cubic_perturbed(Flavor flavor) {
  ExpressionSpec q = diagonal_quadratic(1, 1, flavor, 1.0, 1.0);
  const int n = q.dim();
  std::vector<double> w(static_cast<std::size_t>(n + 1), 0.0);
  w[0] = 1.0;
  w[1] = 0.5;
  w[static_cast<std::size_t>(n)] = 0.3;  // time enters the argument
  ExpressionSpec s = q;
  s.root = make_node(Sum{{q.root, make_node(Scale{0.01, make_node(Atom{AtomFn::Pow, w, 3.0, 3.0})})}});
  return s;
}

FlowField solved_flow(int nodes, double t_end, int record_every) {
  const Grid g = make_grid(2, nodes, 0.0, 2.0 * std::numbers::pi, true);
  const ExpressionSpec base = diagonal_quadratic(1, 1, Flavor::Real, 1.0, 1.0);
  ExpressionSpec p{1, 1, Flavor::Real, nullptr};
  p.root = make_node(Sum{{make_node(Scale{0.08, make_node(Atom{AtomFn::Sin, {1.0, 0.0}, 0.3, 1.0})}),
                          make_node(Scale{-0.06, make_node(Atom{AtomFn::Cos, {1.0, 1.0}, 0.1, 1.0})}),
                          make_node(Scale{0.04, make_node(Atom{AtomFn::Sin, {2.0, -1.0}, 1.1, 1.0})})}});
  FlowField f = make_field(g, Flavor::Real, 1, 1, periodic_boundary(base), p, 0.0, 1.0, 0.5, 2.0);
  f.dt = f.max_explicit_dt();
  integrate(f, t_end, Scheme::RK4, record_every);
  return f;
}

}  // namespace

TEST_CASE("cylinder membership is half-open in time and strict in space") {
  const Cylinder c{{0.0, 0.0}, 1.0, 0.5};
  CHECK(c.contains({0.49, -0.49}, 1.0));
  CHECK_FALSE(c.contains({0.5, 0.0}, 1.0));
  CHECK_FALSE(c.contains({0.0, 0.0}, 1.0001));
  CHECK(c.contains({0.0, 0.0}, 0.76));
  CHECK_FALSE(c.contains({0.0, 0.0}, 0.75));
  const Cylinder th = c.theta();
  CHECK(th.s == doctest::Approx(0.0));
  CHECK(th.s < c.s - c.R * c.R);
  const auto ladder = dyadic_ladder(c, 4).ladder;
  REQUIRE(ladder.size() == 4);
  for (std::size_t i = 1; i < ladder.size(); ++i) CHECK(ladder[i] < ladder[i - 1]);
  CHECK(ladder.front() == c.R);
}

TEST_CASE("oscillation of simple fields") {
  const auto constant = synthetic(41, 11, 1.0, [](const std::vector<double>&, double) { return 3.0; });
  CHECK(cylinder_oscillation(constant, {{0.0, 0.0}, 1.0, 1.0}).at("f") == 0.0);

  const int nodes = 401;
  const double h = 4.0 / (nodes - 1);
  const auto linear = synthetic(nodes, 3, 1.0, [](const std::vector<double>& x, double) { return x[0]; });
  for (double R : {0.5, 1.0, 1.5}) CHECK(std::abs(cylinder_oscillation(linear, {{0.0, 0.0}, 1.0, R}).at("f") - 2 * R) <= 2 * h);

  const int slices = 1001;
  const auto time = synthetic(9, slices, 1.0, [](const std::vector<double>&, double t) { return t; });
  CHECK(std::abs(cylinder_oscillation(time, {{0.0, 0.0}, 1.0, 1.0}).at("f") - 1.0) <= 1.0 / (slices - 1) + 1e-12);

  CHECK_THROWS_AS(cylinder_oscillation(constant, {{0.05, 0.05}, 1.0, 1e-3}), EmptyCylinder);
  CHECK_THROWS_AS(cylinder_oscillation(constant, {{0.0, 0.0}, -5.0, 1.0}), EmptyCylinder);
}

TEST_CASE("oscillation is monotone under cylinder inclusion") {
  std::mt19937_64 rng(3);
  const auto spec = testing::random_expression(rng, 1, 1, Flavor::Real, true);
  const auto q = synthetic(61, 21, 1.0, [&](const std::vector<double>& x, double t) { return evaluate(spec, x, t); });
  double prev = std::numeric_limits<double>::infinity();
  for (double R = 1.0; R > 0.1; R *= 0.8) {
    const double o = cylinder_oscillation(q, {{0.1, -0.2}, 1.0, R}).at("f");
    CHECK(o <= prev);
    prev = o;
  }
}

TEST_CASE("Hoelder fits") {
  const std::vector<double> rho{1.0, 0.5, 0.25, 0.125};
  std::vector<double> P;
  for (double r : rho) P.push_back(std::sqrt(r));
  auto fit = holder_exponent_fit(rho, P);
  CHECK(fit.alpha == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(fit.residual <= 1e-13);
  fit = holder_exponent_fit(rho, {2.0, 2.0, 2.0, 2.0});
  CHECK(std::abs(fit.alpha) <= 1e-14);
  fit = holder_exponent_fit(rho, {1.0, 0.5, 0.0, 0.0});
  CHECK(fit.degenerate);
  CHECK(std::isinf(fit.alpha));
  CHECK_THROWS_AS(holder_exponent_fit({1.0, 0.5}, {1.0, 0.5}), DegenerateLadder);
  CHECK_THROWS_AS(holder_exponent_fit(rho, {1.0, -0.5, 0.2, 0.1}), DegenerateLadder);
  CHECK_THROWS_AS(holder_exponent_fit({1.0, 1.0, 0.5}, {1.0, 1.0, 0.5}), DegenerateLadder);
}

TEST_CASE("parabolic rescaling of expressions") {
  std::mt19937_64 rng(9);
  SUBCASE("mu = 1 is the identity") {
    const auto u = cubic_perturbed(Flavor::Real);
    const auto v = parabolic_rescale(u, 1.0);
    for (int i = 0; i < 5; ++i) {
      const auto x = testing::random_point(rng, 2);
      CHECK(evaluate(v, x, 0.3) == doctest::Approx(evaluate(u, x, 0.3)).epsilon(1e-14));
    }
  }
  SUBCASE("quadratics are scale invariant") {
    const auto u = diagonal_quadratic(2, 1, Flavor::Real, 1.0, 1.0);
    for (double mu : {0.3, 2.0, 7.0}) {
      const auto v = parabolic_rescale(u, mu);
      const auto x = testing::random_point(rng, 3);
      CHECK(evaluate(v, x) == doctest::Approx(evaluate(u, x)).epsilon(1e-13));
    }
  }
  for (auto flavor : {Flavor::Real, Flavor::Complex}) {
    CAPTURE(to_string(flavor));
    const auto u = cubic_perturbed(flavor);
    std::vector<std::vector<double>> probes;
    for (int i = 0; i < 6; ++i) probes.push_back(testing::random_point(rng, u.dim(), 0.2));
    for (double mu : {0.5, 2.0, 3.0}) {
      const auto rep = rescale_report(u, mu, probes, 0.1);
      CHECK(rep.third_u > 0.0);
      CHECK(std::abs(rep.ratio - mu) <= 1e-12 * mu);
      CHECK(rep.H_discrepancy <= 1e-12);
    }
  }
  CHECK_THROWS_AS(parabolic_rescale(cubic_perturbed(Flavor::Real), 0.0), InvalidArgument);
}

TEST_CASE("parabolic rescaling of fields preserves Hessians") {
  FlowField f = solved_flow(33, 0.05, 1 << 20);
  const std::vector<double> w{std::numbers::pi, std::numbers::pi};
  const double s = f.current().t;
  const FlowField v = parabolic_rescale(f, 2.0, w, s, 0.5);
  CHECK(v.current().t == doctest::Approx(0.0));
  CHECK(v.grid.h[0] == doctest::Approx(f.grid.h[0] / 2));
  // interior Hessians agree at corresponding nodes (discrete Hessians are invariant)
  const auto active = active_nodes(v.grid);
  double diff = 0.0;
  for (auto i : active) {
    const auto x = v.grid.coords(i);
    std::vector<int> mi(2);
    for (int a = 0; a < 2; ++a) mi[a] = static_cast<int>(std::lround((w[a] + 2.0 * x[a] - f.grid.lo[a]) / f.grid.h[a]));
    std::vector<double> uv(v.grid.size());
    const MatR Hv = discrete_hessian(v.grid, v.current().values, i);
    const MatR Hu = field_hessian(f, f.current().values, f.grid.linear_index(mi));
    diff = std::max(diff, (Hv - Hu).cwiseAbs().maxCoeff());
  }
  CHECK(diff <= 1e-10);
  CHECK_THROWS_AS(parabolic_rescale(f, 10.0, w, s, 0.5), DomainExceeded);
}

TEST_CASE("rigidity probe") {
  const Grid g = make_grid(2, 33, -1.0, 1.0, false, 2);
  SUBCASE("exact quadratic") {
    const auto q = quadratic_spec(1, 1, Flavor::Real, {{1.0, 0.5}, {0.5, -1.0}});
    std::vector<double> u(g.size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = evaluate(q, g.coords(i));
    // log det u_xx - log det(-u_yy) = 0 here, so det W = 1
    const auto rep = rigidity_probe(g, Flavor::Real, 1, 1, u);
    CHECK(rep.det_deviation <= 1e-11);
    CHECK(rep.W_variation <= 1e-11);
  }
  SUBCASE("solved elliptic problem") {
    const auto q = diagonal_quadratic(1, 1, Flavor::Real, 1.4, 1.4);
    ExpressionSpec guess = q;
    guess.root = make_node(Sum{{q.root, make_node(Scale{0.02, make_node(Product{{
                                             make_node(Atom{AtomFn::Cos, {0.5 * std::numbers::pi, 0.0}, 0.0, 1.0}),
                                             make_node(Atom{AtomFn::Cos, {0.0, 0.5 * std::numbers::pi}, 0.0, 1.0})}})})}});
    const auto sol = solve_elliptic(g, Flavor::Real, 1, 1, q, guess);
    const auto rep = rigidity_probe(g, Flavor::Real, 1, 1, sol.values);
    CHECK(rep.det_deviation <= 1e-9);
    CHECK(rep.W_variation <= 1e-8);
    CHECK(std::abs(rep.det_deviation - std::expm1(rep.F_residual)) <= 1e-12);
  }
  SUBCASE("non-solution is reported") {
    const auto q = diagonal_quadratic(1, 1, Flavor::Real, 1.0, 1.0);
    ExpressionSpec bad = q;
    bad.root = make_node(Sum{{q.root, make_node(Scale{0.05, make_node(Atom{AtomFn::Sin, {1.0, 2.0}, 0.0, 1.0})})}});
    std::vector<double> u(g.size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = evaluate(bad, g.coords(i));
    const auto rep = rigidity_probe(g, Flavor::Real, 1, 1, u);
    CHECK(rep.det_deviation > 1e-3);
    CHECK(rep.W_variation > 1e-3);
  }
  SUBCASE("complex flavor") {
    const Grid g4 = make_grid(4, 7, -1.0, 1.0, false, 2);
    const auto q = diagonal_quadratic(1, 1, Flavor::Complex, 1.0, 1.0);
    std::vector<double> u(g4.size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = evaluate(q, g4.coords(i));
    const auto rep = rigidity_probe(g4, Flavor::Complex, 1, 1, u);
    CHECK(rep.det_deviation <= 1e-11);
  }
  SUBCASE("singular concave block") {
    std::vector<double> u(g.size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = 0.5 * g.coords(i)[0] * g.coords(i)[0];
    CHECK_THROWS_AS(rigidity_probe(g, Flavor::Real, 1, 1, u), IllConditioned);
  }
}

TEST_CASE("oscillation decays on a solved flow") {
  const FlowField f = solved_flow(129, 0.3, 5);
  // the smallest rung keeps a 3-node stencil per axis
  const double R = 8.2 * f.grid.h[0];
  const FieldSamples q = flow_quantities(f, 0.3 - 1.1 * R * R);
  CHECK(q.names.size() == 4);
  const Cylinder base{{std::numbers::pi, std::numbers::pi}, f.current().t, R};
  const auto spec = dyadic_ladder(base, 4);
  std::vector<double> P, Pv;
  const FieldSamples fam = flow_vector_family(f, 0.3 - 1.1 * R * R);
  CHECK(fam.names.size() == 5);
  for (double rho : spec.ladder) {
    P.push_back(oscillation_sum(q, base.shrink(rho)));
    Pv.push_back(oscillation_sum(fam, base.shrink(rho)));
  }
  for (std::size_t i = 1; i < P.size(); ++i) {
    CHECK(P[i] <= P[i - 1] * (1 + 1e-12));
    CHECK(Pv[i] <= Pv[i - 1] * (1 + 1e-12));
  }
  const auto fit = holder_exponent_fit(spec.ladder, P);
  MESSAGE("alpha " << fit.alpha << " residual " << fit.residual);
  CHECK(fit.alpha > 0.0);
  CHECK(fit.residual < 0.1);
  for (std::size_t i = 2; i < P.size(); ++i) CHECK(P[i] / P[i - 2] <= 1.0 + 1e-12);
}

TEST_CASE("weak Harnack diagnostic on a constant field") {
  const auto one = synthetic(201, 401, 2.0, [](const std::vector<double>&, double) { return 1.0; });
  const double ratio = weak_harnack_ratio(one, 0, {{0.0, 0.0}, 2.0, 0.5}, 2.0);
  // (R^-(n+2) (2R)^n R^2)^(1/2) = 2 for n = 2
  CHECK(ratio == doctest::Approx(2.0).epsilon(0.05));
  CHECK_THROWS_AS(weak_harnack_ratio(one, 0, {{0.0, 0.0}, 0.5, 0.5}, 2.0), EmptyCylinder);
}
