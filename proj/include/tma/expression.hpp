#pragma once

// Analytic test functions as small expression trees.
//
// Variables are real coordinates.  For the complex flavor the coordinates are
// interleaved (Re z_1, Im z_1, ..., Re w_1, Im w_1, ...).  An optional extra
// coordinate at index dim() is time; affine forms and quadratic tables may
// carry a time entry.

#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tma/jet.hpp"

namespace tma {

enum class Flavor { Real, Complex };

std::string to_string(Flavor f);
Flavor flavor_from_string(const std::string& s);

enum class AtomFn { Sin, Cos, Exp, Log, Cosh, Sinh, Pow };

std::string to_string(AtomFn f);
/// Throws UnknownAtom for names outside the supported set.
AtomFn atom_fn_from_string(const std::string& s);

struct Node;
using NodePtr = std::shared_ptr<const Node>;

/// fn(affine . x + constant), optionally raised to `exponent` for pow.
struct Atom {
  AtomFn fn = AtomFn::Sin;
  std::vector<double> affine;
  double constant = 0.0;
  double exponent = 1.0;
};

/// 1/2 x^T M x + b . x + c.  M is row-major, square.
struct Quad {
  std::vector<std::vector<double>> matrix;
  std::vector<double> linear;
  double constant = 0.0;
};

struct Sum {
  std::vector<NodePtr> terms;
};
struct Product {
  std::vector<NodePtr> factors;
};
struct Scale {
  double factor = 1.0;
  NodePtr arg;
};

struct Node {
  std::variant<Atom, Quad, Sum, Product, Scale> v;
};

NodePtr make_node(Atom a);
NodePtr make_node(Quad q);
NodePtr make_node(Sum s);
NodePtr make_node(Product p);
NodePtr make_node(Scale s);

struct ExpressionSpec {
  int k = 1;
  int l = 1;
  Flavor flavor = Flavor::Real;
  NodePtr root;

  /// Number of real spatial coordinates.
  int dim() const { return flavor == Flavor::Real ? k + l : 2 * (k + l); }
};

/// Scalar value at (point, time).  DomainViolation outside an atom's domain.
double evaluate(const ExpressionSpec& spec, const std::vector<double>& point, double time = 0.0);

/// Taylor jet about (point, time).  With time_var >= 0 the layout variable
/// time_var is time; otherwise time enters only as a constant.
RealJet evaluate_taylor(const ExpressionSpec& spec, const std::vector<double>& point, double time,
                        const JetLayout& layout, int time_var);

/// Substitute x_old = S x_new + offset, where both sides include time as the
/// last coordinate (so S is (dim_old+1) x (dim_new+1)).
ExpressionSpec linear_substitution(const ExpressionSpec& spec,
                                   const std::vector<std::vector<double>>& S,
                                   const std::vector<double>& offset, int new_k, int new_l,
                                   Flavor new_flavor);

nlohmann::json to_json(const ExpressionSpec& spec);
/// ParseError naming the offending field; UnknownAtom for unsupported "fn".
ExpressionSpec spec_from_json(const nlohmann::json& j);
/// Canonical serialization: sorted keys, shortest round-trip doubles.
std::string serialize(const ExpressionSpec& spec);
ExpressionSpec parse_spec(const std::string& text);
ExpressionSpec load_spec(const std::string& path);

/// Convenience builders.
ExpressionSpec quadratic_spec(int k, int l, Flavor flavor, const std::vector<std::vector<double>>& M,
                              std::vector<double> linear = {}, double c = 0.0);
ExpressionSpec diagonal_quadratic(int k, int l, Flavor flavor, double a, double b);

}  // namespace tma
