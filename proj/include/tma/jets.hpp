#pragma once

// Derivative tables at a point: real SpaceTimeJet and its Wirtinger form.

#include <complex>
#include <initializer_list>
#include <vector>

#include "tma/expression.hpp"
#include "tma/jet.hpp"

namespace tma {

using cdouble = std::complex<double>;

struct JetOptions {
  int order = 4;
  bool with_time = true;
};

/// Taylor table of u about (point, time).  Layout variables are the spatial
/// coordinates followed, if present, by time.
struct SpaceTimeJet {
  int k = 1;
  int l = 1;
  Flavor flavor = Flavor::Real;
  std::vector<double> point;
  double time = 0.0;
  bool has_time = false;
  RealJet jet;

  int dim() const { return flavor == Flavor::Real ? k + l : 2 * (k + l); }
  int time_var() const { return has_time ? dim() : -1; }
  double value() const { return jet.value(); }
  /// Spatial partial derivative over the listed coordinates.
  double d(std::initializer_list<int> vars) const { return jet.partial(vars); }
  /// d^m/dt^m of a spatial partial; 0 when time is not tracked.
  double dt(int m, std::initializer_list<int> vars = {}) const;
};

SpaceTimeJet evaluate_jet(const ExpressionSpec& spec, const std::vector<double>& point, double time = 0.0,
                          JetOptions opts = {});

/// Wirtinger derivatives.  Layout variables come in pairs (zeta_j, conj zeta_j)
/// at (2j, 2j+1) with complex coordinates ordered z_1..z_k, w_1..w_l; time,
/// if present, is last.  Entries are Wirtinger derivative / multi-index
/// factorial, so `d` returns the derivative itself.
struct WirtingerTable {
  int k = 1;
  int l = 0;
  std::vector<cdouble> base;
  double time = 0.0;
  bool has_time = false;
  ComplexJet jet;

  int complex_dim() const { return k + l; }
  int time_var() const { return has_time ? 2 * (k + l) : -1; }

  // slot helpers
  int z(int a) const { return 2 * a; }
  int zb(int a) const { return 2 * a + 1; }
  int w(int c) const { return 2 * (k + c); }
  int wb(int c) const { return 2 * (k + c) + 1; }

  cdouble d(std::initializer_list<int> slots) const { return jet.partial(slots); }
  cdouble d(std::span<const int> slots) const { return jet.partial(slots); }
  cdouble dt(int m, std::initializer_list<int> slots = {}) const;
};

/// Real jet over R^{2m} (+ time) to Wirtinger form.  Complex flavor uses its
/// own (k, l); an even-dimensional real jet is read as k = m, l = 0.
WirtingerTable wirtinger_from_real(const SpaceTimeJet& jet);
/// Inverse change of basis.
SpaceTimeJet real_from_wirtinger(const WirtingerTable& table, Flavor flavor = Flavor::Complex);

/// Polynomial substitution acting on one coordinate pair at a time:
/// (old_{2j}, old_{2j+1}) = M (new_{2j}, new_{2j+1}) for j < npairs.
ComplexJet pair_substitution(const ComplexJet& jet, int npairs, const cdouble M[2][2]);

}  // namespace tma
