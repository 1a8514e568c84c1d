#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tma/evolution.hpp"
#include "tma/funclass.hpp"
#include "tma/twistedops.hpp"

using namespace tma;
using cdouble = std::complex<double>;

namespace {

/// |z|^2 + eps Re(z^2 zbar) - |w|^2; Re(z^2 zbar) = x |z|^2.
ExpressionSpec z_cubic(double eps) {
  ExpressionSpec s{1, 1, Flavor::Complex, nullptr};
  auto base = make_node(Quad{{{2, 0, 0, 0}, {0, 2, 0, 0}, {0, 0, -2, 0}, {0, 0, 0, -2}}, {}, 0.0});
  auto zz = make_node(Quad{{{2, 0, 0, 0}, {0, 2, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}}, {}, 0.0});
  auto x = make_node(Quad{{}, {1, 0, 0, 0}, 0.0});
  s.root = make_node(Sum{{base, make_node(Scale{eps, make_node(Product{{zz, x}})})}});
  return s;
}

WirtingerTable table_at(const ExpressionSpec& s, const std::vector<double>& p) {
  return wirtinger_from_real(evaluate_jet(s, p, 0.0, {4, false}));
}

EnsembleSpec ensemble(int k, int l, Flavor fl) {
  EnsembleSpec es;
  es.k = k;
  es.l = l;
  es.flavor = fl;
  es.epsilon = 0.3;
  return es;
}

}  // namespace

TEST_CASE("cubic example has the intended Levi form") {
  const double eps = 0.2, x = 0.1;
  auto t = table_at(z_cubic(eps), {x, 0.05, 0.1, -0.2});
  CHECK(std::abs(t.d({t.z(0), t.zb(0)}) - cdouble(1 + 2 * eps * x)) <= 1e-14);
  CHECK(std::abs(t.d({t.z(0), t.zb(0), t.z(0)}) - cdouble(eps)) <= 1e-14);
}

TEST_CASE("Q on quadratics vanishes") {
  for (auto fl : {Flavor::Complex}) {
    auto t = table_at(diagonal_quadratic(2, 1, fl, 1.5, 0.7), {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    auto q = assemble_Q(t);
    CHECK(q.Q.matrix().cwiseAbs().maxCoeff() == 0.0);
    CHECK(subsolution_spectrum(t) == 0.0);
    CHECK(evolution_residual(t) <= 1e-15);
    CHECK(heat_residual(t) <= 1e-15);
  }
  auto cross = quadratic_spec(1, 1, Flavor::Complex, {{2, 0, 0.3, 0.1}, {0, 2, -0.1, 0.3}, {0.3, -0.1, -2, 0}, {0.1, 0.3, 0, -2}});
  auto t = table_at(cross, {0.1, 0.2, 0.3, 0.4});
  CHECK(assemble_Q(t).Q.matrix().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Q of the z-only cubic") {
  const double eps = 0.2;
  for (double x : {0.0, 0.1, -0.3}) {
    auto t = table_at(z_cubic(eps), {x, 0.0, 0.0, 0.0});
    auto q = assemble_Q(t).Q.matrix();
    const double expect = -eps * eps / ((1 + 2 * eps * x) * (1 + 2 * eps * x));
    CHECK(std::abs(q(0, 0) - cdouble(expect)) <= 1e-14);
    CHECK(std::abs(q(0, 1)) <= 1e-14);
    CHECK(std::abs(q(1, 1)) <= 1e-14);
    auto [lo, hi] = min_max_eigenvalues(HermitianMatrix(q));
    CHECK(std::abs(lo - expect) <= 1e-14);
    CHECK(std::abs(hi) <= 1e-14);
    CHECK(evolution_residual(t) <= 1e-9);
    CHECK(heat_residual(t) <= 1e-10);
  }
}

TEST_CASE("oracle and transcription agree across the ensemble") {
  std::mt19937_64 rng(31);
  for (auto [k, l] : {std::pair{1, 1}, {2, 1}, {1, 2}}) {
    auto es = ensemble(k, l, Flavor::Complex);
    for (std::uint64_t d = 0; d < 40; ++d) {
      auto u = sample_draw(es, d);
      auto p = tma::testing::random_point(rng, es.dim(), 0.8);
      auto t = table_at(u, p);
      auto q = assemble_Q(t);
      CHECK(q.hermitian_defect <= 1e-10);
      CHECK(evolution_residual(t) <= 1e-8);
      CHECK(min_max_eigenvalues(q.Q).second <= 1e-8);
      CHECK(heat_residual(t) <= 1e-10);
    }
  }
}

TEST_CASE("Cauchy-Schwarz groupings are individually non-positive") {
  std::mt19937_64 rng(37);
  for (auto [k, l] : {std::pair{1, 1}, {2, 1}, {1, 2}}) {
    auto es = ensemble(k, l, Flavor::Complex);
    for (std::uint64_t d = 0; d < 20; ++d) {
      auto t = table_at(sample_draw(es, d), tma::testing::random_point(rng, es.dim(), 0.8));
      auto q = assemble_Q(t);
      for (double s : group_spectra(q)) CHECK(s <= 1e-8);
      // the groups partition the terms
      MatC sum = MatC::Zero(k + l, k + l);
      for (const auto& g : q_groups())
        for (int id : g) sum += q.terms[static_cast<std::size_t>(id)];
      CHECK((sum - raw_Q(t)).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  std::vector<int> seen;
  for (const auto& g : q_groups()) seen.insert(seen.end(), g.begin(), g.end());
  std::sort(seen.begin(), seen.end());
  CHECK(seen.size() == static_cast<std::size_t>(kQTerms));
  for (int i = 0; i < kQTerms; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i + 1);
}

TEST_CASE("provenance lists every term") {
  auto t = table_at(z_cubic(0.2), {0.1, 0.0, 0.0, 0.0});
  auto q = assemble_Q(t);
  CHECK(q.provenance.size() == static_cast<std::size_t>(kQTerms));
  int contributing = 0;
  for (const auto& r : q.provenance) {
    CHECK_FALSE(r.formula.empty());
    if (r.magnitude > 0) ++contributing;
  }
  CHECK(contributing >= 1);
}

TEST_CASE("complexification of real functions") {
  auto u = diagonal_quadratic(1, 1, Flavor::Real, 1, 1);
  auto v = complexify_real(u);
  auto t = table_at(v, {0.3, 0.7, -0.2, 0.5});
  CHECK(std::abs(t.d({t.z(0), t.zb(0)}) - cdouble(0.25)) <= 1e-15);
  CHECK(std::abs(t.d({t.w(0), t.wb(0)}) - cdouble(-0.25)) <= 1e-15);
  CHECK(assemble_Q(t).Q.matrix().cwiseAbs().maxCoeff() == 0.0);
  // v depends only on the real parts
  CHECK(evaluate(v, {0.3, 0.7, -0.2, 0.5}) == doctest::Approx(evaluate(u, {0.3, -0.2})));
}

TEST_CASE("real reduction through complexification") {
  std::mt19937_64 rng(41);
  for (auto [k, l] : {std::pair{1, 1}, {2, 1}, {1, 2}}) {
    auto es = ensemble(k, l, Flavor::Real);
    for (std::uint64_t d = 0; d < 25; ++d) {
      auto u = sample_draw(es, d);
      auto p = tma::testing::random_point(rng, k + l, 0.8);
      auto r = real_reduction(u, p);
      CHECK(r.W_residual <= 1e-12);
      CHECK(r.Q_residual <= 1e-8);
      CHECK(r.F_residual <= 1e-12);
      CHECK(r.real_lambda_max <= 1e-8);
      CHECK(heat_residual(u, p) <= 1e-10);
    }
  }
}

TEST_CASE("real oracle agrees with the heat identity") {
  std::mt19937_64 rng(43);
  auto es = ensemble(2, 1, Flavor::Real);
  for (std::uint64_t d = 0; d < 10; ++d) {
    auto jet = evaluate_jet(sample_draw(es, d), tma::testing::random_point(rng, 3, 0.8), 0.0, {4, false});
    CHECK(std::abs(real_evolution_oracle(jet).heat) <= 1e-10);
  }
}
