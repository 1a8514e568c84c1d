#pragma once

// Class membership for convex-concave functions and seeded ensembles of members.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <json.hpp>

#include "tma/expression.hpp"

namespace tma {

/// Extremal eigenvalues of the convex block and of the negated concave block.
struct BlockBounds {
  double x_min = 0.0, x_max = 0.0;
  double y_min = 0.0, y_max = 0.0;
};

struct ClassReport {
  bool member = true;
  double lambda = 0.0, Lambda = 0.0;
  std::vector<BlockBounds> bounds;
  std::optional<std::size_t> first_violation;
};

/// Block bounds at one point (Wirtinger blocks for the complex flavor).
BlockBounds block_bounds(const ExpressionSpec& spec, const std::vector<double>& point);

bool within(const BlockBounds& b, double lambda, double Lambda, double tol);

ClassReport class_membership(const ExpressionSpec& spec, const std::vector<std::vector<double>>& cloud,
                             double lambda, double Lambda, double tol = 1e-12);

struct CloudSpec {
  int per_axis = 11;
  int halton = 500;
  double half_width = 1.0;
  /// Tensor grids are thinned so the node count stays at or below this.
  int max_grid = 14641;
};

/// Tensor grid on [-h, h]^dim plus Halton points.
std::vector<std::vector<double>> make_cloud(int dim, const CloudSpec& c);

struct EnsembleSpec {
  int k = 1, l = 1;
  Flavor flavor = Flavor::Real;
  double a = 1.0, b = 1.0;
  double epsilon = 0.1;
  int atoms = 3;
  std::uint64_t seed = 42;
  int draws = 100;
  double freq_scale = 1.0;
  CloudSpec cloud;

  int dim() const { return flavor == Flavor::Real ? k + l : 2 * (k + l); }
  double lambda() const { return 0.5 * std::min(a, b); }
  double Lambda() const { return 2.0 * std::max(a, b); }
};

nlohmann::json to_json(const EnsembleSpec& e);
/// ConfigInvalid naming the offending field.
EnsembleSpec ensemble_from_json(const nlohmann::json& j);

/// Splittable draw stream: a generator depending only on (seed, index).
std::mt19937_64 draw_rng(std::uint64_t seed, std::uint64_t index);
/// Uniform [0, 1) with 53 bits, platform-independent.
double uniform01(std::mt19937_64& rng);

/// Draw `index`.  AmplitudeTooLarge when epsilon exceeds min(a, b) / 2.
ExpressionSpec sample_draw(const EnsembleSpec& es, std::uint64_t index);
std::vector<ExpressionSpec> sample_ensemble(const EnsembleSpec& es);

/// Sample points for draw `index`, uniform in [-r, r]^dim.
std::vector<std::vector<double>> sample_points(const EnsembleSpec& es, std::uint64_t index, int count, double r);

}  // namespace tma
