#pragma once

// Finite-difference solvers for the twisted flows and the elliptic equation.
//
// Nodes live on a box in the real coordinates of the function (complex
// flavor: interleaved real/imaginary parts).  Hessians use second-order
// centered differences.  Two boundary policies:
//   frozen:   a frame of `frame` nodes on every face carries exact data u(x, t);
//   periodic: u = q(x) + p(x, t) with q a fixed quadratic and p periodic; the
//             stored values are p.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "tma/expression.hpp"
#include "tma/funclass.hpp"
#include "tma/linalg.hpp"

namespace tma {

enum class Execution { Serial, Parallel };
enum class Scheme { RK4, SemiImplicit };

struct Grid {
  int dim = 2;
  /// distinct nodes per axis (periodic axes do not repeat the closing node)
  std::vector<int> n;
  std::vector<double> lo;
  std::vector<double> h;
  bool periodic = false;
  int frame = 2;

  std::size_t size() const;
  std::size_t stride(int axis) const;
  std::vector<int> multi_index(std::size_t idx) const;
  std::size_t linear_index(const std::vector<int>& mi) const;
  std::vector<double> coords(std::size_t idx) const;
  /// frozen grids: node lies in the frame
  bool in_frame(std::size_t idx) const;
  double min_spacing() const;
};

/// `nodes` per axis counting both endpoints; for periodic grids the last
/// node coincides with the first and is not stored.
Grid make_grid(int dim, int nodes, double lo, double hi, bool periodic, int frame = 2);

struct Boundary {
  bool periodic = false;
  /// frozen: exact data u(x, t); periodic: the quadratic base q
  ExpressionSpec data;
  /// periodic: Hessian of q
  MatR base_hessian;
};

Boundary frozen_boundary(const ExpressionSpec& exact);
/// The base must be a single quadratic node.
Boundary periodic_boundary(const ExpressionSpec& quadratic_base);

struct Slice {
  double t = 0.0;
  std::vector<double> values;
};

struct FlowField {
  Grid grid;
  Flavor flavor = Flavor::Real;
  int k = 1, l = 1;
  Boundary bc;
  std::vector<Slice> slices;
  double dt = 0.0;
  double lambda = 0.5, Lambda = 2.0;
  double cfl = 0.2;

  const Slice& current() const { return slices.back(); }
  /// u at a node of a slice (adds the base for periodic grids)
  double u(std::size_t slice, std::size_t node) const;
  /// max stable explicit step c h^2 lambda / Lambda
  double max_explicit_dt() const;
};

/// Initial slice from an expression: full u for frozen grids, p for periodic.
FlowField make_field(const Grid& grid, Flavor flavor, int k, int l, const Boundary& bc, const ExpressionSpec& initial,
                     double t0, double dt, double lambda, double Lambda);

/// F and its linearization coefficients at a real Hessian.
struct NodeValue {
  double F = 0.0;
  /// dF = sum_pq coef(p,q) d u_pq, symmetric
  MatR coef;
};

/// ClassExit when a block is not definite.
NodeValue node_operator(const MatR& H, Flavor flavor, int k, int l, bool want_coef = true);
/// Wirtinger Hessian u_{zeta_i zetabar_j} of interleaved real coordinates.
MatC wirtinger_hessian(const MatR& H);
/// Block eigen-bounds from a real Hessian (Wirtinger blocks for the complex flavor).
BlockBounds node_bounds(const MatR& H, Flavor flavor, int k, int l);

/// Nodes the scheme updates (interior for frozen, all for periodic).
std::vector<std::size_t> active_nodes(const Grid& g);

/// Precomputed centered-difference neighbours of the active nodes.
struct StencilTable {
  const Grid& g;
  std::vector<std::size_t> active;
  std::size_t width = 0;
  std::vector<std::size_t> nb;

  explicit StencilTable(const Grid& grid);
  /// Discrete Hessian at active node number r (without any periodic base).
  MatR hessian(std::size_t r, const std::vector<double>& u) const;
};

MatR discrete_hessian(const Grid& g, const std::vector<double>& u, std::size_t node);
/// Hessian of u including the periodic base.
MatR field_hessian(const FlowField& f, const std::vector<double>& values, std::size_t node);


/// F at active nodes, zero elsewhere.  Serial and parallel agree bitwise.
void flow_rhs(const FlowField& f, const std::vector<double>& values, std::vector<double>& out, Execution ex);

/// Append one step.  CFLViolation for explicit steps above the bound; ClassExit.
void step_parabolic(FlowField& f, Scheme scheme, Execution ex = Execution::Parallel);

/// Step until t_end, keeping every `record_every`-th slice and the last one.
void integrate(FlowField& f, double t_end, Scheme scheme, int record_every = 1, Execution ex = Execution::Parallel);

struct EllipticOptions {
  int max_iterations = 50;
  double tolerance = 1e-10;
};

struct EllipticResult {
  std::vector<double> values;
  int iterations = 0;
  double residual = 0.0;
};

/// Newton for F(u) = 0 on a frozen grid; frame from `boundary`, interior from `guess`.
EllipticResult solve_elliptic(const Grid& g, Flavor flavor, int k, int l, const ExpressionSpec& boundary,
                              const ExpressionSpec& guess, EllipticOptions opts = {});

/// sup over active nodes of |F(u)|.
double elliptic_residual(const Grid& g, Flavor flavor, int k, int l, const std::vector<double>& values);

struct MonitorReport {
  std::vector<BlockBounds> series;
  std::optional<std::size_t> first_violation;
};

MonitorReport monitor_class(const FlowField& f, double lambda, double Lambda, double tol = 1e-9);

void write_field_csv(const FlowField& f, std::size_t slice, const std::string& path);
/// JSON metadata at `path`, values as little-endian float64 at path + ".bin".
void write_field_binary(const FlowField& f, std::size_t slice, const std::string& path);
/// Returns (grid, slice) from a binary snapshot.
std::pair<Grid, Slice> read_field_binary(const std::string& path);

}  // namespace tma
