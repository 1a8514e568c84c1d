#pragma once

// Interior-regularity measurements on solver output: oscillation over
// parabolic cylinders, Hoelder-exponent fits, parabolic rescaling and
// rigidity probes.

#include <map>
#include <string>
#include <vector>

#include "tma/expression.hpp"
#include "tma/solver.hpp"

namespace tma {

/// Q((w, s), R) = {max(|x - w|_inf, |t - s|^(1/2)) < R, t <= s}.
struct Cylinder {
  std::vector<double> center;
  double s = 0.0;
  double R = 1.0;

  bool contains(const std::vector<double>& x, double t) const;
  /// Q((w, s - 4R^2), R)
  Cylinder theta() const;
  Cylinder shrink(double rho) const;
};

struct CylinderSpec {
  Cylinder base;
  /// strictly decreasing, all <= base.R
  std::vector<double> ladder;
};

/// R, R/2, ..., R/2^(levels-1).
CylinderSpec dyadic_ladder(const Cylinder& base, int levels);

/// Named scalar quantities sampled at every slice and grid node; NaN marks
/// nodes where a quantity is undefined (frame nodes).
struct FieldSamples {
  Grid grid;
  std::vector<double> times;
  std::vector<std::string> names;
  /// values[q][slice][node]
  std::vector<std::vector<std::vector<double>>> values;
};

/// u_t = F(u) and the entries of W (real and imaginary parts for the complex
/// flavor) on slices with t >= t_min.
FieldSamples flow_quantities(const FlowField& f, double t_min = -1e300);
/// Quadratic forms <W v, v> over the polarization family
/// {e_j, (e_j +- e_k)/sqrt2, (e_j +- i e_k)/sqrt2}, plus u_t.
FieldSamples flow_vector_family(const FlowField& f, double t_min = -1e300);

/// sup - inf per quantity over nodes in the cylinder.  EmptyCylinder when none.
std::map<std::string, double> cylinder_oscillation(const FieldSamples& q, const Cylinder& c);

/// Sum of oscillations over all quantities.
double oscillation_sum(const FieldSamples& q, const Cylinder& c);

struct HolderFit {
  double alpha = 0.0;
  double intercept = 0.0;
  /// root-mean-square residual of log P against the fitted line
  double residual = 0.0;
  /// some P vanished; alpha is reported as +infinity
  bool degenerate = false;
};

/// Least-squares slope of log P against log rho.  DegenerateLadder for fewer
/// than three points, repeated radii or negative P.
HolderFit holder_exponent_fit(const std::vector<double>& rho, const std::vector<double>& P);

/// v(x, t) = mu^-2 u(w + mu x, s + mu^2 t).
ExpressionSpec parabolic_rescale(const ExpressionSpec& u, double mu, const std::vector<double>& center = {},
                                 double s = 0.0);

/// Frobenius norm of the third spatial derivatives of the Hessian at (x, t):
/// all third partials for the real flavor, d_a u_{b cbar} and its conjugates for the complex flavor.
double third_derivative_norm(const ExpressionSpec& u, const std::vector<double>& x, double t = 0.0);

struct RescaleReport {
  ExpressionSpec v;
  double third_u = 0.0;
  double third_v = 0.0;
  /// third_v / third_u
  double ratio = 0.0;
  /// max over probe points of |H(v)(x, t) - H(u)(w + mu x, s + mu^2 t)|
  double H_discrepancy = 0.0;
};

RescaleReport rescale_report(const ExpressionSpec& u, double mu, const std::vector<std::vector<double>>& probes,
                             double probe_time = 0.0);

/// Rescaled snapshot on the window |x|_inf <= half_width:
/// grid spacing h / mu, values mu^-2 u, times (t - s) / mu^2.  DomainExceeded
/// when w + mu * window leaves the grid.
FlowField parabolic_rescale(const FlowField& f, double mu, const std::vector<double>& center, double s,
                            double half_width);

struct RigidityReport {
  /// sup |det W - 1|
  double det_deviation = 0.0;
  /// largest oscillation of a W entry across the active nodes
  double W_variation = 0.0;
  /// sup |F(u)|
  double F_residual = 0.0;
};

/// W from the discrete Hessian at each active node.  IllConditioned when the
/// concave block is near-singular.
RigidityReport rigidity_probe(const Grid& g, Flavor flavor, int k, int l, const std::vector<double>& values);

/// (R^-(n+2) sum_{Theta(R)} q^p dV)^(1/p) / inf_{Q(R)} q for a non-negative
/// quantity; recorded only.
double weak_harnack_ratio(const FieldSamples& q, std::size_t quantity, const Cylinder& c, double p = 2.0);

}  // namespace tma
