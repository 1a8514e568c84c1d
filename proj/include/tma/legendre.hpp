#pragma once

// Partial Legendre transform in the concave variables:
//   w(x, z) = u(x, y) - <y, z>,  where u_y(x, y) = z.
// Then grad w = (u_x, -y) and D^2 w = W from the u-jet at (x, y).

#include <optional>
#include <vector>

#include "tma/expression.hpp"
#include "tma/linalg.hpp"

namespace tma {

struct NewtonOptions {
  int max_iterations = 100;
  /// |y|_inf bound; iterates beyond it raise DomainExceeded.
  double domain_radius = 1e3;
};

struct PartialLegendreResult {
  double w = 0.0;
  std::vector<double> y;
  /// Jacobian of (x, z) -> (x, y): [[I, 0], [-C^-1 B^T, C^-1]].
  MatR T;
  MatR W;
  int iterations = 0;
};

/// Solve u_y(x, y) = z by damped Newton.  Real flavor only.
std::vector<double> invert_partial_gradient(const ExpressionSpec& spec, const std::vector<double>& x,
                                            const std::vector<double>& z, std::vector<double> y0,
                                            NewtonOptions opts = {}, int* iterations = nullptr);

PartialLegendreResult partial_legendre(const ExpressionSpec& spec, const std::vector<double>& x,
                                       const std::vector<double>& z,
                                       std::optional<std::vector<double>> y0 = std::nullopt,
                                       NewtonOptions opts = {});

/// |det W - det u_xx / det(-u_yy)| at a source point (x, y).
double det_transform_residual(const ExpressionSpec& spec, const std::vector<double>& point);

struct TransformedOperator {
  /// blockdiag(u_xx^-1, -u_yy^-1)
  SymmetricMatrix short_form;
  /// T W^-1 T^T assembled from the transform
  MatR long_form;
  /// max entry-wise difference of the two
  double discrepancy = 0.0;
};

TransformedOperator transformed_operator_L(const ExpressionSpec& spec, const std::vector<double>& point);

}  // namespace tma
