#pragma once

// Truncated multivariate Taylor polynomials ("jets").
//
// A Jet<T> over n variables at order d stores the Taylor coefficients
// c_alpha, |alpha| <= d, of a function about a base point, so that the
// partial derivative D^alpha f equals alpha! * c_alpha.  Arithmetic is exact
// truncated polynomial arithmetic; elementary functions are applied by
// composing their closed-form derivative series with the nilpotent part.

#include <algorithm>
#include <array>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

#include "tma/errors.hpp"

namespace tma {

inline constexpr int kMaxJetVars = 10;
inline constexpr int kMaxJetOrder = 6;

using Exponents = std::array<std::uint8_t, kMaxJetVars>;

/// Monomial enumeration and multiplication tables for one (nvars, order)
/// pair.  Layouts are interned; references stay valid for the program
/// lifetime and may be shared across threads.
class JetLayout {
 public:
  struct Product {
    std::uint32_t lhs, rhs, out;
  };
  struct DerivEntry {
    std::uint32_t src, dst;
    double factor;
  };

  static const JetLayout& get(int nvars, int order);

  int nvars() const { return nvars_; }
  int order() const { return order_; }
  std::size_t size() const { return exps_.size(); }

  const Exponents& exponents(std::size_t i) const { return exps_[i]; }
  int degree(std::size_t i) const { return degree_[i]; }
  /// alpha! for monomial i.
  double factorial(std::size_t i) const { return factorial_[i]; }

  /// Index of a monomial; throws InvalidArgument when out of range.
  std::size_t index(const Exponents& e) const;
  /// Index of the monomial d/dx_{v1} ... d/dx_{vm} given as a variable list.
  std::size_t index_of_vars(std::span<const int> vars) const;
  bool contains(const Exponents& e) const;

  const std::vector<Product>& products() const { return products_; }
  /// Coefficient map for d/dx_var into the layout (nvars, order - 1).
  const std::vector<DerivEntry>& derivative_table(int var) const {
    return deriv_[static_cast<std::size_t>(var)];
  }

 private:
  JetLayout(int nvars, int order);
  static std::uint64_t key(const Exponents& e);

  int nvars_;
  int order_;
  std::vector<Exponents> exps_;
  std::vector<int> degree_;
  std::vector<double> factorial_;
  std::unordered_map<std::uint64_t, std::uint32_t> lookup_;
  std::vector<Product> products_;
  std::vector<std::vector<DerivEntry>> deriv_;
};

template <class T>
class Jet {
 public:
  using value_type = T;

  Jet() = default;
  explicit Jet(const JetLayout& layout) : layout_(&layout), c_(layout.size(), T{}) {}

  static Jet constant(const JetLayout& layout, T value) {
    Jet j(layout);
    j.c_[0] = value;
    return j;
  }
  /// The coordinate function x_var about base value `value`.
  static Jet variable(const JetLayout& layout, int var, T value) {
    Jet j = constant(layout, value);
    if (layout.order() >= 1) {
      Exponents e{};
      e[static_cast<std::size_t>(var)] = 1;
      j.c_[layout.index(e)] = T{1};
    }
    return j;
  }

  const JetLayout& layout() const { return *layout_; }
  int nvars() const { return layout_->nvars(); }
  int order() const { return layout_->order(); }
  std::size_t size() const { return c_.size(); }

  T value() const { return c_[0]; }
  T& operator[](std::size_t i) { return c_[i]; }
  const T& operator[](std::size_t i) const { return c_[i]; }
  std::span<const T> coefficients() const { return c_; }

  T coefficient(const Exponents& e) const {
    return layout_->contains(e) ? c_[layout_->index(e)] : T{};
  }
  /// D^alpha f at the base point.
  T derivative(const Exponents& e) const {
    if (!layout_->contains(e)) return T{};
    const auto i = layout_->index(e);
    return c_[i] * layout_->factorial(i);
  }
  /// Partial derivative with respect to the listed variables (repeats allowed).
  T partial(std::initializer_list<int> vars) const {
    return partial(std::span<const int>(vars.begin(), vars.size()));
  }
  T partial(std::span<const int> vars) const {
    Exponents e{};
    for (int v : vars) ++e[static_cast<std::size_t>(v)];
    return derivative(e);
  }

  /// d/dx_var as a jet of one order lower.
  Jet differentiate(int var) const {
    Jet out(JetLayout::get(nvars(), order() - 1));
    for (const auto& d : layout_->derivative_table(var)) out.c_[d.dst] += c_[d.src] * d.factor;
    return out;
  }

  /// Drop all terms above `new_order`.
  Jet truncate(int new_order) const {
    const JetLayout& lo = JetLayout::get(nvars(), new_order);
    Jet out(lo);
    for (std::size_t i = 0; i < lo.size(); ++i) out.c_[i] = c_[layout_->index(lo.exponents(i))];
    return out;
  }

  /// f(value + h) = sum_m series[m] h^m where h is the non-constant part.
  Jet compose(std::span<const T> series) const {
    Jet h = *this;
    h.c_[0] = T{};
    const int top = std::min<int>(order(), static_cast<int>(series.size()) - 1);
    Jet acc = constant(layout(), series[static_cast<std::size_t>(top)]);
    for (int m = top - 1; m >= 0; --m) {
      acc = acc * h;
      acc.c_[0] += series[static_cast<std::size_t>(m)];
    }
    return acc;
  }

  Jet& operator+=(const Jet& o) {
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Jet& operator*=(T s) {
    for (auto& x : c_) x *= s;
    return *this;
  }
  Jet& operator+=(T s) {
    c_[0] += s;
    return *this;
  }
  Jet& operator-=(T s) {
    c_[0] -= s;
    return *this;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator-(Jet a) {
    for (auto& x : a.c_) x = -x;
    return a;
  }
  friend Jet operator*(Jet a, T s) { return a *= s; }
  friend Jet operator*(T s, Jet a) { return a *= s; }
  friend Jet operator+(Jet a, T s) { return a += s; }
  friend Jet operator+(T s, Jet a) { return a += s; }
  friend Jet operator-(Jet a, T s) { return a -= s; }
  friend Jet operator-(T s, const Jet& a) { return (-a) += s; }

  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet out(*a.layout_);
    const T* x = a.c_.data();
    const T* y = b.c_.data();
    T* z = out.c_.data();
    for (const auto& p : a.layout_->products()) z[p.out] += x[p.lhs] * y[p.rhs];
    return out;
  }
  friend Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }
  friend Jet operator/(const Jet& a, T s) { return a * (T{1} / s); }
  friend Jet operator/(T s, const Jet& b) { return reciprocal(b) * s; }

  friend Jet reciprocal(const Jet& a) {
    const T x = a.value();
    std::array<T, kMaxJetOrder + 1> s{};
    T p = T{1} / x;
    for (int m = 0; m <= a.order(); ++m) {
      s[static_cast<std::size_t>(m)] = p;
      p *= -T{1} / x;
    }
    return a.compose(std::span<const T>(s.data(), static_cast<std::size_t>(a.order()) + 1));
  }

 private:
  const JetLayout* layout_ = nullptr;
  std::vector<T> c_;
};

using RealJet = Jet<double>;
using ComplexJet = Jet<std::complex<double>>;

// Elementary functions.  Each builds the Taylor series of f about the base
// value from closed-form derivatives.  Domain checks are the caller's job.
template <class T>
Jet<T> exp(const Jet<T>& a);
template <class T>
Jet<T> log(const Jet<T>& a);
template <class T>
Jet<T> sin(const Jet<T>& a);
template <class T>
Jet<T> cos(const Jet<T>& a);
template <class T>
Jet<T> sinh(const Jet<T>& a);
template <class T>
Jet<T> cosh(const Jet<T>& a);
/// x^p for real exponent p (integer p uses exact falling factorials).
template <class T>
Jet<T> pow(const Jet<T>& a, double p);

extern template Jet<double> exp(const Jet<double>&);
extern template Jet<double> log(const Jet<double>&);
extern template Jet<double> sin(const Jet<double>&);
extern template Jet<double> cos(const Jet<double>&);
extern template Jet<double> sinh(const Jet<double>&);
extern template Jet<double> cosh(const Jet<double>&);
extern template Jet<double> pow(const Jet<double>&, double);
extern template Jet<std::complex<double>> exp(const Jet<std::complex<double>>&);
extern template Jet<std::complex<double>> log(const Jet<std::complex<double>>&);
extern template Jet<std::complex<double>> sin(const Jet<std::complex<double>>&);
extern template Jet<std::complex<double>> cos(const Jet<std::complex<double>>&);
extern template Jet<std::complex<double>> sinh(const Jet<std::complex<double>>&);
extern template Jet<std::complex<double>> cosh(const Jet<std::complex<double>>&);
extern template Jet<std::complex<double>> pow(const Jet<std::complex<double>>&, double);

/// Promote a real jet to complex coefficients.
ComplexJet to_complex(const RealJet& a);

}  // namespace tma
