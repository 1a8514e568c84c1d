#include "tma/jets.hpp"

namespace tma {

double SpaceTimeJet::dt(int m, std::initializer_list<int> vars) const {
  if (!has_time) return 0.0;
  Exponents e{};
  for (int v : vars) ++e[static_cast<std::size_t>(v)];
  e[static_cast<std::size_t>(dim())] = static_cast<std::uint8_t>(m);
  return jet.derivative(e);
}

cdouble WirtingerTable::dt(int m, std::initializer_list<int> slots) const {
  if (!has_time) return 0.0;
  Exponents e{};
  for (int v : slots) ++e[static_cast<std::size_t>(v)];
  e[static_cast<std::size_t>(time_var())] = static_cast<std::uint8_t>(m);
  return jet.derivative(e);
}

SpaceTimeJet evaluate_jet(const ExpressionSpec& spec, const std::vector<double>& point, double time,
                          JetOptions opts) {
  SpaceTimeJet out;
  out.k = spec.k;
  out.l = spec.l;
  out.flavor = spec.flavor;
  out.point = point;
  out.time = time;
  out.has_time = opts.with_time;
  const int nvars = spec.dim() + (opts.with_time ? 1 : 0);
  const JetLayout& layout = JetLayout::get(nvars, opts.order);
  out.jet = evaluate_taylor(spec, point, time, layout, opts.with_time ? spec.dim() : -1);
  return out;
}

ComplexJet pair_substitution(const ComplexJet& jet, int npairs, const cdouble M[2][2]) {
  const JetLayout& lo = jet.layout();
  const int order = lo.order();
  // (a u + b v)^p (c u + d v)^q expanded: coef[p][q][r] multiplies u^r v^(p+q-r)
  std::vector<std::vector<std::vector<cdouble>>> coef(
      static_cast<std::size_t>(order + 1),
      std::vector<std::vector<cdouble>>(static_cast<std::size_t>(order + 1)));
  auto poly_mul = [](const std::vector<cdouble>& a, const std::vector<cdouble>& b) {
    std::vector<cdouble> c(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
    return c;
  };
  // polynomials in u indexed by power of u; degree fixed so v power is implied
  const std::vector<cdouble> first = {M[0][1], M[0][0]};   // old_0 = M00 u + M01 v
  const std::vector<cdouble> second = {M[1][1], M[1][0]};  // old_1 = M10 u + M11 v
  for (int p = 0; p <= order; ++p)
    for (int q = 0; p + q <= order; ++q) {
      std::vector<cdouble> acc = {1.0};
      for (int i = 0; i < p; ++i) acc = poly_mul(acc, first);
      for (int i = 0; i < q; ++i) acc = poly_mul(acc, second);
      coef[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)] = acc;
    }

  ComplexJet cur = jet;
  for (int j = 0; j < npairs; ++j) {
    ComplexJet next(lo);
    const auto a = static_cast<std::size_t>(2 * j), b = a + 1;
    for (std::size_t i = 0; i < lo.size(); ++i) {
      const cdouble c = cur[i];
      if (c == 0.0) continue;
      const Exponents& e = lo.exponents(i);
      const int p = e[a], q = e[b];
      const auto& poly = coef[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)];
      Exponents f = e;
      for (int r = 0; r <= p + q; ++r) {
        const cdouble m = poly[static_cast<std::size_t>(r)];
        if (m == 0.0) continue;
        f[a] = static_cast<std::uint8_t>(r);
        f[b] = static_cast<std::uint8_t>(p + q - r);
        next[lo.index(f)] += c * m;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

WirtingerTable wirtinger_from_real(const SpaceTimeJet& jet) {
  const int n = jet.dim();
  if (n % 2 != 0) throw DimensionMismatch("Wirtinger conversion needs an even real dimension");
  WirtingerTable t;
  if (jet.flavor == Flavor::Complex) {
    t.k = jet.k;
    t.l = jet.l;
  } else {
    t.k = n / 2;
    t.l = 0;
  }
  t.time = jet.time;
  t.has_time = jet.has_time;
  for (int j = 0; j < n / 2; ++j) t.base.emplace_back(jet.point[2 * j], jet.point[2 * j + 1]);
  // x = (zeta + conj zeta)/2, y = (zeta - conj zeta)/(2i)
  const cdouble I(0.0, 1.0);
  const cdouble M[2][2] = {{0.5, 0.5}, {-0.5 * I, 0.5 * I}};
  t.jet = pair_substitution(to_complex(jet.jet), n / 2, M);
  return t;
}

SpaceTimeJet real_from_wirtinger(const WirtingerTable& table, Flavor flavor) {
  const int m = table.complex_dim();
  const cdouble I(0.0, 1.0);
  const cdouble M[2][2] = {{1.0, I}, {1.0, -I}};
  ComplexJet c = pair_substitution(table.jet, m, M);
  SpaceTimeJet out;
  out.flavor = flavor;
  if (flavor == Flavor::Complex) {
    out.k = table.k;
    out.l = table.l;
  } else {
    out.k = 2 * table.k;
    out.l = 2 * table.l;
  }
  for (const auto& b : table.base) {
    out.point.push_back(b.real());
    out.point.push_back(b.imag());
  }
  out.time = table.time;
  out.has_time = table.has_time;
  out.jet = RealJet(c.layout());
  for (std::size_t i = 0; i < c.size(); ++i) out.jet[i] = c[i].real();
  return out;
}

}  // namespace tma
