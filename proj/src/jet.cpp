#include "tma/jet.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace tma {

namespace {

void enumerate(int nvars, int remaining, int var, Exponents& cur, std::vector<Exponents>& out) {
  if (var == nvars - 1) {
    cur[static_cast<std::size_t>(var)] = static_cast<std::uint8_t>(remaining);
    out.push_back(cur);
    cur[static_cast<std::size_t>(var)] = 0;
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    cur[static_cast<std::size_t>(var)] = static_cast<std::uint8_t>(e);
    enumerate(nvars, remaining - e, var + 1, cur, out);
  }
  cur[static_cast<std::size_t>(var)] = 0;
}

int total_degree(const Exponents& e) {
  int d = 0;
  for (auto v : e) d += v;
  return d;
}

}  // namespace

std::uint64_t JetLayout::key(const Exponents& e) {
  std::uint64_t k = 0;
  for (auto v : e) k = k * 8u + v;
  return k;
}

JetLayout::JetLayout(int nvars, int order) : nvars_(nvars), order_(order) {
  for (int d = 0; d <= order; ++d) {
    if (nvars == 0) {
      if (d == 0) exps_.push_back(Exponents{});
      continue;
    }
    Exponents cur{};
    enumerate(nvars, d, 0, cur, exps_);
  }
  for (std::size_t i = 0; i < exps_.size(); ++i) lookup_.emplace(key(exps_[i]), static_cast<std::uint32_t>(i));

  degree_.resize(exps_.size());
  factorial_.resize(exps_.size());
  for (std::size_t i = 0; i < exps_.size(); ++i) {
    degree_[i] = total_degree(exps_[i]);
    double f = 1.0;
    for (auto v : exps_[i])
      for (int m = 2; m <= v; ++m) f *= m;
    factorial_[i] = f;
  }

  for (std::size_t a = 0; a < exps_.size(); ++a)
    for (std::size_t b = 0; b < exps_.size(); ++b) {
      if (degree_[a] + degree_[b] > order) continue;
      Exponents s{};
      for (std::size_t v = 0; v < s.size(); ++v)
        s[v] = static_cast<std::uint8_t>(exps_[a][v] + exps_[b][v]);
      products_.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                           lookup_.at(key(s))});
    }

  deriv_.resize(static_cast<std::size_t>(nvars));
  if (order >= 1) {
    std::unordered_map<std::uint64_t, std::uint32_t> low_lookup;
    std::uint32_t count = 0;
    for (const auto& e : exps_)
      if (total_degree(e) <= order - 1) low_lookup.emplace(key(e), count++);
    for (int v = 0; v < nvars; ++v)
      for (std::size_t i = 0; i < exps_.size(); ++i) {
        const auto ev = exps_[i][static_cast<std::size_t>(v)];
        if (ev == 0) continue;
        Exponents e = exps_[i];
        --e[static_cast<std::size_t>(v)];
        deriv_[static_cast<std::size_t>(v)].push_back(
            {static_cast<std::uint32_t>(i), low_lookup.at(key(e)), static_cast<double>(ev)});
      }
  }
}

const JetLayout& JetLayout::get(int nvars, int order) {
  if (nvars < 0 || nvars > kMaxJetVars || order < 0 || order > kMaxJetOrder)
    throw InvalidArgument("jet layout out of range: nvars=" + std::to_string(nvars) +
                          " order=" + std::to_string(order));
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::unique_ptr<JetLayout>> registry;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = registry[{nvars, order}];
  if (!slot) slot.reset(new JetLayout(nvars, order));
  return *slot;
}

bool JetLayout::contains(const Exponents& e) const { return lookup_.count(key(e)) != 0; }

std::size_t JetLayout::index(const Exponents& e) const {
  auto it = lookup_.find(key(e));
  if (it == lookup_.end()) throw InvalidArgument("monomial outside jet layout");
  return it->second;
}

std::size_t JetLayout::index_of_vars(std::span<const int> vars) const {
  Exponents e{};
  for (int v : vars) {
    if (v < 0 || v >= nvars_) throw InvalidArgument("jet variable index out of range");
    ++e[static_cast<std::size_t>(v)];
  }
  return index(e);
}

namespace {

template <class T>
std::array<T, kMaxJetOrder + 1> make_series() {
  return {};
}

template <class T>
Jet<T> apply_series(const Jet<T>& a, const std::array<T, kMaxJetOrder + 1>& s) {
  return a.compose(std::span<const T>(s.data(), static_cast<std::size_t>(a.order()) + 1));
}

double inv_factorial(int m) {
  double f = 1.0;
  for (int i = 2; i <= m; ++i) f *= i;
  return 1.0 / f;
}

}  // namespace

template <class T>
Jet<T> exp(const Jet<T>& a) {
  auto s = make_series<T>();
  const T e = std::exp(a.value());
  for (int m = 0; m <= a.order(); ++m) s[static_cast<std::size_t>(m)] = e * inv_factorial(m);
  return apply_series(a, s);
}

template <class T>
Jet<T> log(const Jet<T>& a) {
  auto s = make_series<T>();
  const T x = a.value();
  s[0] = std::log(x);
  T p = T{1} / x;
  for (int m = 1; m <= a.order(); ++m) {
    s[static_cast<std::size_t>(m)] = p * ((m % 2 == 1 ? 1.0 : -1.0) / m);
    p /= x;
  }
  return apply_series(a, s);
}

template <class T>
Jet<T> sin(const Jet<T>& a) {
  auto s = make_series<T>();
  const T sv = std::sin(a.value()), cv = std::cos(a.value());
  const T cyc[4] = {sv, cv, -sv, -cv};
  for (int m = 0; m <= a.order(); ++m) s[static_cast<std::size_t>(m)] = cyc[m % 4] * inv_factorial(m);
  return apply_series(a, s);
}

template <class T>
Jet<T> cos(const Jet<T>& a) {
  auto s = make_series<T>();
  const T sv = std::sin(a.value()), cv = std::cos(a.value());
  const T cyc[4] = {cv, -sv, -cv, sv};
  for (int m = 0; m <= a.order(); ++m) s[static_cast<std::size_t>(m)] = cyc[m % 4] * inv_factorial(m);
  return apply_series(a, s);
}

template <class T>
Jet<T> sinh(const Jet<T>& a) {
  auto s = make_series<T>();
  const T sv = std::sinh(a.value()), cv = std::cosh(a.value());
  for (int m = 0; m <= a.order(); ++m) s[static_cast<std::size_t>(m)] = (m % 2 ? cv : sv) * inv_factorial(m);
  return apply_series(a, s);
}

template <class T>
Jet<T> cosh(const Jet<T>& a) {
  auto s = make_series<T>();
  const T sv = std::sinh(a.value()), cv = std::cosh(a.value());
  for (int m = 0; m <= a.order(); ++m) s[static_cast<std::size_t>(m)] = (m % 2 ? sv : cv) * inv_factorial(m);
  return apply_series(a, s);
}

template <class T>
Jet<T> pow(const Jet<T>& a, double p) {
  auto s = make_series<T>();
  const T x = a.value();
  const bool integral = std::floor(p) == p;
  // binomial series: x^(p-m) * C(p, m)
  double coeff = 1.0;
  for (int m = 0; m <= a.order(); ++m) {
    if (m > 0) coeff *= (p - (m - 1)) / m;
    if (integral && p >= 0 && m > p) {
      s[static_cast<std::size_t>(m)] = T{};
      continue;
    }
    T xp;
    if (integral) {
      const int e = static_cast<int>(p) - m;
      xp = T{1};
      const T base = e >= 0 ? x : T{1} / x;
      for (int i = 0; i < std::abs(e); ++i) xp *= base;
    } else {
      xp = std::pow(x, p - m);
    }
    s[static_cast<std::size_t>(m)] = xp * coeff;
  }
  return apply_series(a, s);
}

#define TMA_INSTANTIATE(T)                          \
  template Jet<T> exp(const Jet<T>&);               \
  template Jet<T> log(const Jet<T>&);               \
  template Jet<T> sin(const Jet<T>&);               \
  template Jet<T> cos(const Jet<T>&);               \
  template Jet<T> sinh(const Jet<T>&);              \
  template Jet<T> cosh(const Jet<T>&);              \
  template Jet<T> pow(const Jet<T>&, double);

TMA_INSTANTIATE(double)
TMA_INSTANTIATE(std::complex<double>)
#undef TMA_INSTANTIATE

ComplexJet to_complex(const RealJet& a) {
  ComplexJet out(a.layout());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i];
  return out;
}

}  // namespace tma
