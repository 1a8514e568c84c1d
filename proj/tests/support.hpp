#pragma once

// Shared helpers for the unit tests: random expressions and
// finite-difference oracles that use only scalar evaluation.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tma/expression.hpp"
#include "tma/jets.hpp"

namespace tma::testing {

inline std::vector<double> random_point(std::mt19937_64& rng, int n, double r = 0.5) {
  std::uniform_real_distribution<double> u(-r, r);
  std::vector<double> p(static_cast<std::size_t>(n));
  for (auto& x : p) x = u(rng);
  return p;
}

/// Random analytic expression on a box |x| <= 1, domain-safe everywhere there.
inline ExpressionSpec random_expression(std::mt19937_64& rng, int k, int l, Flavor flavor,
                                        bool with_time = false) {
  ExpressionSpec s{k, l, flavor, nullptr};
  const int n = s.dim();
  const int ext = n + (with_time ? 1 : 0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto affine = [&] {
    std::vector<double> a(static_cast<std::size_t>(ext));
    for (auto& x : a) x = 0.6 * u(rng);
    return a;
  };
  std::vector<std::vector<double>> M(static_cast<std::size_t>(ext), std::vector<double>(static_cast<std::size_t>(ext)));
  for (int i = 0; i < ext; ++i)
    for (int j = 0; j <= i; ++j) M[i][j] = M[j][i] = u(rng);
  std::vector<double> lin(static_cast<std::size_t>(ext));
  for (auto& x : lin) x = u(rng);
  Sum sum;
  sum.terms.push_back(make_node(Quad{M, lin, u(rng)}));
  const AtomFn fns[] = {AtomFn::Sin, AtomFn::Cos, AtomFn::Exp, AtomFn::Cosh, AtomFn::Sinh, AtomFn::Log, AtomFn::Pow};
  for (AtomFn f : fns) {
    Atom a{f, affine(), u(rng), 1.0};
    if (f == AtomFn::Log) a.constant = 3.0;
    if (f == AtomFn::Pow) {
      a.constant = 3.0;
      a.exponent = (rng() % 2) ? 2.5 : -2.0;
    }
    sum.terms.push_back(make_node(Scale{0.5 * u(rng), make_node(std::move(a))}));
  }
  Product prod;
  prod.factors.push_back(make_node(Atom{AtomFn::Sin, affine(), u(rng), 1.0}));
  prod.factors.push_back(make_node(Atom{AtomFn::Exp, affine(), u(rng), 1.0}));
  sum.terms.push_back(make_node(std::move(prod)));
  s.root = make_node(std::move(sum));
  return s;
}

/// Central difference of g along coordinate i with one Richardson level.
inline double richardson_diff(const std::function<double(const std::vector<double>&)>& g,
                              std::vector<double> p, std::size_t i, double h = 1e-3) {
  auto central = [&](double step) {
    auto q = p;
    q[i] = p[i] + step;
    const double fp = g(q);
    q[i] = p[i] - step;
    const double fm = g(q);
    return (fp - fm) / (2 * step);
  };
  return (4 * central(h / 2) - central(h)) / 3;
}

inline double richardson_second(const std::function<double(const std::vector<double>&)>& g,
                                std::vector<double> p, std::size_t i, double h = 1e-3) {
  auto central = [&](double step) {
    auto q = p;
    const double f0 = g(q);
    q[i] = p[i] + step;
    const double fp = g(q);
    q[i] = p[i] - step;
    const double fm = g(q);
    return (fp - 2 * f0 + fm) / (step * step);
  };
  return (4 * central(h / 2) - central(h)) / 3;
}

}  // namespace tma::testing
