#include "tma/solver.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <json.hpp>

#include "tma/jets.hpp"
#include "tma/twistedops.hpp"

namespace tma {

// ---------------------------------------------------------------------------
// Grid

std::size_t Grid::size() const {
  std::size_t s = 1;
  for (int a = 0; a < dim; ++a) s *= static_cast<std::size_t>(n[static_cast<std::size_t>(a)]);
  return s;
}

std::size_t Grid::stride(int axis) const {
  std::size_t s = 1;
  for (int a = 0; a < axis; ++a) s *= static_cast<std::size_t>(n[static_cast<std::size_t>(a)]);
  return s;
}

std::vector<int> Grid::multi_index(std::size_t idx) const {
  std::vector<int> mi(static_cast<std::size_t>(dim));
  for (int a = 0; a < dim; ++a) {
    const auto na = static_cast<std::size_t>(n[static_cast<std::size_t>(a)]);
    mi[static_cast<std::size_t>(a)] = static_cast<int>(idx % na);
    idx /= na;
  }
  return mi;
}

std::size_t Grid::linear_index(const std::vector<int>& mi) const {
  std::size_t idx = 0;
  for (int a = dim - 1; a >= 0; --a)
    idx = idx * static_cast<std::size_t>(n[static_cast<std::size_t>(a)]) + static_cast<std::size_t>(mi[static_cast<std::size_t>(a)]);
  return idx;
}

std::vector<double> Grid::coords(std::size_t idx) const {
  std::vector<double> x(static_cast<std::size_t>(dim));
  for (int a = 0; a < dim; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    const auto na = static_cast<std::size_t>(n[ua]);
    x[ua] = lo[ua] + h[ua] * static_cast<double>(idx % na);
    idx /= na;
  }
  return x;
}

bool Grid::in_frame(std::size_t idx) const {
  if (periodic) return false;
  for (int a = 0; a < dim; ++a) {
    const auto na = static_cast<std::size_t>(n[static_cast<std::size_t>(a)]);
    const auto i = static_cast<int>(idx % na);
    idx /= na;
    if (i < frame || i >= static_cast<int>(na) - frame) return true;
  }
  return false;
}

double Grid::min_spacing() const { return *std::min_element(h.begin(), h.end()); }

Grid make_grid(int dim, int nodes, double lo, double hi, bool periodic, int frame) {
  if (dim < 1 || dim > 4) throw InvalidArgument("grid dimension must be 1..4");
  if (!(hi > lo)) throw InvalidArgument("grid box must have hi > lo");
  if (frame < 1 && !periodic) throw InvalidArgument("frozen grids need a frame of at least one node");
  if (nodes < (periodic ? 4 : 2 * frame + 1)) throw InvalidArgument("too few grid nodes");
  Grid g;
  g.dim = dim;
  g.periodic = periodic;
  g.frame = periodic ? 0 : frame;
  const double h = (hi - lo) / (nodes - 1);
  g.n.assign(static_cast<std::size_t>(dim), periodic ? nodes - 1 : nodes);
  g.lo.assign(static_cast<std::size_t>(dim), lo);
  g.h.assign(static_cast<std::size_t>(dim), h);
  return g;
}

std::vector<std::size_t> active_nodes(const Grid& g) {
  std::vector<std::size_t> out;
  const auto N = g.size();
  out.reserve(N);
  for (std::size_t i = 0; i < N; ++i)
    if (!g.in_frame(i)) out.push_back(i);
  return out;
}

namespace {

std::vector<std::size_t> frame_nodes(const Grid& g) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.in_frame(i)) out.push_back(i);
  return out;
}

/// Neighbour lookup; periodic axes wrap.
struct Stencil {
  const Grid& g;
  std::vector<std::size_t> strides;

  explicit Stencil(const Grid& grid) : g(grid) {
    for (int a = 0; a < g.dim; ++a) strides.push_back(g.stride(a));
  }

  std::size_t shift(std::size_t idx, int axis, int s) const {
    const auto ua = static_cast<std::size_t>(axis);
    const int na = g.n[ua];
    const int i = static_cast<int>((idx / strides[ua]) % static_cast<std::size_t>(na));
    int j = i + s;
    if (g.periodic) j = ((j % na) + na) % na;
    return idx + strides[ua] * static_cast<std::size_t>(j) - strides[ua] * static_cast<std::size_t>(i);
  }
};

MatR hessian_at(const Stencil& st, const std::vector<double>& u, std::size_t idx) {
  const Grid& g = st.g;
  const int d = g.dim;
  MatR H(d, d);
  const double u0 = u[idx];
  for (int a = 0; a < d; ++a) {
    const double ha = g.h[static_cast<std::size_t>(a)];
    const std::size_t p = st.shift(idx, a, 1), m = st.shift(idx, a, -1);
    H(a, a) = (u[p] - 2.0 * u0 + u[m]) / (ha * ha);
    for (int b = a + 1; b < d; ++b) {
      const double hb = g.h[static_cast<std::size_t>(b)];
      const double v = (u[st.shift(p, b, 1)] - u[st.shift(p, b, -1)] - u[st.shift(m, b, 1)] + u[st.shift(m, b, -1)]) /
                       (4.0 * ha * hb);
      H(a, b) = v;
      H(b, a) = v;
    }
  }
  return H;
}

MatC wirtinger_of(const MatR& H, int n) {
  MatC Hc(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      Hc(i, j) = std::complex<double>(0.25 * (H(2 * i, 2 * j) + H(2 * i + 1, 2 * j + 1)),
                                      0.25 * (H(2 * i, 2 * j + 1) - H(2 * i + 1, 2 * j)));
  return Hc;
}

template <class M>
bool chol_logdet_inverse(const M& a, double& logdet, M* inverse) {
  Eigen::LLT<M> llt(a);
  if (llt.info() != Eigen::Success) return false;
  double s = 0.0;
  const M& Lm = llt.matrixLLT();
  for (int i = 0; i < a.rows(); ++i) {
    const double di = std::real(Lm(i, i));
    if (!(di > 0.0)) return false;
    s += 2.0 * std::log(di);
  }
  logdet = s;
  if (inverse) *inverse = llt.solve(M::Identity(a.rows(), a.cols()));
  return true;
}

[[noreturn]] void class_exit(const char* block) {
  throw ClassExit(std::string("Hessian block ") + block + " lost definiteness");
}

}  // namespace

namespace {

NodeValue scalar_blocks(double a, double mc, int dim, bool complex, bool want_coef) {
  if (!(a > 0.0)) class_exit(complex ? "u_zzbar" : "u_xx");
  if (!(mc > 0.0)) class_exit(complex ? "-u_wwbar" : "-u_yy");
  NodeValue nv;
  nv.F = std::log(a / mc);
  if (want_coef) {
    nv.coef = MatR::Zero(dim, dim);
    const double s = complex ? 0.25 : 1.0;
    const int half = dim / 2;
    for (int i = 0; i < dim; ++i) nv.coef(i, i) = s / (i < half ? a : mc);
  }
  return nv;
}

}  // namespace

StencilTable::StencilTable(const Grid& grid) : g(grid), active(active_nodes(grid)) {
  const int d = g.dim;
  width = static_cast<std::size_t>(2 * d + 2 * d * (d - 1));
  const Stencil st(g);
  nb.resize(active.size() * width);
  for (std::size_t r = 0; r < active.size(); ++r) {
    std::size_t* row = &nb[r * width];
    std::size_t c = 0;
    for (int a = 0; a < d; ++a) {
      row[c++] = st.shift(active[r], a, 1);
      row[c++] = st.shift(active[r], a, -1);
    }
    for (int a = 0; a < d; ++a) {
      const std::size_t p = st.shift(active[r], a, 1), m = st.shift(active[r], a, -1);
      for (int b = a + 1; b < d; ++b) {
        row[c++] = st.shift(p, b, 1);
        row[c++] = st.shift(p, b, -1);
        row[c++] = st.shift(m, b, 1);
        row[c++] = st.shift(m, b, -1);
      }
    }
  }
}

MatR StencilTable::hessian(std::size_t r, const std::vector<double>& u) const {
  const int d = g.dim;
  const std::size_t* row = &nb[r * width];
  MatR H(d, d);
  const double u0 = u[active[r]];
  for (int a = 0; a < d; ++a) {
    const double ha = g.h[static_cast<std::size_t>(a)];
    H(a, a) = (u[row[2 * a]] - 2.0 * u0 + u[row[2 * a + 1]]) / (ha * ha);
  }
  std::size_t c = static_cast<std::size_t>(2 * d);
  for (int a = 0; a < d; ++a)
    for (int b = a + 1; b < d; ++b) {
      const double v = (u[row[c]] - u[row[c + 1]] - u[row[c + 2]] + u[row[c + 3]]) /
                       (4.0 * g.h[static_cast<std::size_t>(a)] * g.h[static_cast<std::size_t>(b)]);
      c += 4;
      H(a, b) = v;
      H(b, a) = v;
    }
  return H;
}

MatC wirtinger_hessian(const MatR& H) {
  if (H.rows() % 2 != 0) throw DimensionMismatch("odd number of real coordinates");
  return wirtinger_of(H, static_cast<int>(H.rows()) / 2);
}

NodeValue node_operator(const MatR& H, Flavor flavor, int k, int l, bool want_coef) {
  if (k == 1 && l == 1) {
    if (flavor == Flavor::Real && H.rows() == 2) return scalar_blocks(H(0, 0), -H(1, 1), 2, false, want_coef);
    if (flavor == Flavor::Complex && H.rows() == 4)
      return scalar_blocks(0.25 * (H(0, 0) + H(1, 1)), -0.25 * (H(2, 2) + H(3, 3)), 4, true, want_coef);
  }
  NodeValue nv;
  if (flavor == Flavor::Real) {
    if (H.rows() != k + l) throw DimensionMismatch("Hessian size does not match k + l");
    const MatR A = H.topLeftCorner(k, k);
    const MatR C = H.bottomRightCorner(l, l);
    MatR Ai, Ci;
    double la = 0.0, lc = 0.0;
    if (!chol_logdet_inverse<MatR>(A, la, want_coef ? &Ai : nullptr)) class_exit("u_xx");
    if (!chol_logdet_inverse<MatR>(MatR(-C), lc, want_coef ? &Ci : nullptr)) class_exit("-u_yy");
    nv.F = la - lc;
    if (want_coef) {
      nv.coef = MatR::Zero(k + l, k + l);
      nv.coef.topLeftCorner(k, k) = Ai;
      nv.coef.bottomRightCorner(l, l) = Ci;
    }
    return nv;
  }
  const int n = k + l;
  if (H.rows() != 2 * n) throw DimensionMismatch("Hessian size does not match 2(k + l)");
  const MatC Hc = wirtinger_of(H, n);
  const MatC A = Hc.topLeftCorner(k, k);
  const MatC C = Hc.bottomRightCorner(l, l);
  MatC Ai, Ci;
  double la = 0.0, lc = 0.0;
  if (!chol_logdet_inverse<MatC>(A, la, want_coef ? &Ai : nullptr)) class_exit("u_zzbar");
  if (!chol_logdet_inverse<MatC>(MatC(-C), lc, want_coef ? &Ci : nullptr)) class_exit("-u_wwbar");
  nv.F = la - lc;
  if (want_coef) {
    MatC G = MatC::Zero(n, n);
    G.topLeftCorner(k, k) = Ai;
    G.bottomRightCorner(l, l) = Ci;
    MatR c = MatR::Zero(2 * n, 2 * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const auto g = G(j, i);
        c(2 * i, 2 * j) += 0.25 * g.real();
        c(2 * i + 1, 2 * j + 1) += 0.25 * g.real();
        c(2 * i, 2 * j + 1) -= 0.25 * g.imag();
        c(2 * i + 1, 2 * j) += 0.25 * g.imag();
      }
    nv.coef = 0.5 * (c + c.transpose());
  }
  return nv;
}

BlockBounds node_bounds(const MatR& H, Flavor flavor, int k, int l) {
  BlockBounds b;
  if (flavor == Flavor::Real) {
    std::tie(b.x_min, b.x_max) = min_max_eigenvalues(SymmetricMatrix(MatR(H.topLeftCorner(k, k))));
    std::tie(b.y_min, b.y_max) = min_max_eigenvalues(SymmetricMatrix(MatR(-H.bottomRightCorner(l, l))));
  } else {
    const MatC Hc = wirtinger_of(H, k + l);
    std::tie(b.x_min, b.x_max) = min_max_eigenvalues(HermitianMatrix(MatC(Hc.topLeftCorner(k, k))));
    std::tie(b.y_min, b.y_max) = min_max_eigenvalues(HermitianMatrix(MatC(-Hc.bottomRightCorner(l, l))));
  }
  return b;
}

MatR discrete_hessian(const Grid& g, const std::vector<double>& u, std::size_t node) {
  if (u.size() != g.size()) throw DimensionMismatch("field size does not match grid");
  if (g.in_frame(node)) throw InvalidArgument("discrete Hessian requested on a frame node");
  return hessian_at(Stencil(g), u, node);
}

MatR field_hessian(const FlowField& f, const std::vector<double>& values, std::size_t node) {
  MatR H = discrete_hessian(f.grid, values, node);
  if (f.bc.periodic) H += f.bc.base_hessian;
  return H;
}

// ---------------------------------------------------------------------------
// Boundaries and fields

Boundary frozen_boundary(const ExpressionSpec& exact) {
  Boundary b;
  b.periodic = false;
  b.data = exact;
  return b;
}

Boundary periodic_boundary(const ExpressionSpec& base) {
  Boundary b;
  b.periodic = true;
  b.data = base;
  if (!base.root || !std::holds_alternative<Quad>(base.root->v))
    throw InvalidArgument("periodic base must be a quadratic expression");
  const std::vector<double> zero(static_cast<std::size_t>(base.dim()), 0.0);
  b.base_hessian = real_hessian(evaluate_jet(base, zero, 0.0, {2, false}));
  return b;
}

double FlowField::u(std::size_t slice, std::size_t node) const {
  const double v = slices.at(slice).values.at(node);
  if (!bc.periodic) return v;
  return v + evaluate(bc.data, grid.coords(node), slices[slice].t);
}

double FlowField::max_explicit_dt() const {
  const double h = grid.min_spacing();
  return cfl * h * h * lambda / Lambda;
}

FlowField make_field(const Grid& grid, Flavor flavor, int k, int l, const Boundary& bc, const ExpressionSpec& initial,
                     double t0, double dt, double lambda, double Lambda) {
  const int dim = flavor == Flavor::Real ? k + l : 2 * (k + l);
  if (k < 1 || l < 1) throw InvalidArgument("k and l must be >= 1");
  if (dim != grid.dim) throw DimensionMismatch("grid dimension does not match the function's coordinates");
  if (initial.dim() != dim || bc.data.dim() != dim) throw DimensionMismatch("expression dimension does not match grid");
  if (bc.periodic != grid.periodic) throw InvalidArgument("boundary policy does not match grid");
  if (!(dt > 0.0)) throw InvalidArgument("timestep must be positive");
  if (!(lambda > 0.0) || !(Lambda >= lambda)) throw InvalidArgument("class bounds need 0 < lambda <= Lambda");
  FlowField f;
  f.grid = grid;
  f.flavor = flavor;
  f.k = k;
  f.l = l;
  f.bc = bc;
  f.dt = dt;
  f.lambda = lambda;
  f.Lambda = Lambda;
  Slice s;
  s.t = t0;
  s.values.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto x = grid.coords(i);
    s.values[i] = (grid.in_frame(i) ? evaluate(bc.data, x, t0) : evaluate(initial, x, t0));
  }
  f.slices.push_back(std::move(s));
  return f;
}

// ---------------------------------------------------------------------------
// Right-hand side

namespace {

struct NodeFailure {
  std::size_t node = std::numeric_limits<std::size_t>::max();
  std::string what;
};

void record_failure(NodeFailure& nf, std::size_t node, const char* what) {
#pragma omp critical(tma_node_failure)
  {
    if (node < nf.node) {
      nf.node = node;
      nf.what = what;
    }
  }
}

void rhs_impl(const FlowField& f, const StencilTable& nt, const std::vector<double>& values, std::vector<double>& out,
              bool parallel) {
  out.assign(values.size(), 0.0);
  const long n = static_cast<long>(nt.active.size());
  NodeFailure nf;
  const bool periodic = f.bc.periodic;
#pragma omp parallel for schedule(static) if (parallel)
  for (long i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    const std::size_t node = nt.active[r];
    MatR H = nt.hessian(r, values);
    if (periodic) H += f.bc.base_hessian;
    try {
      out[node] = node_operator(H, f.flavor, f.k, f.l, false).F;
    } catch (const ClassExit& e) {
      record_failure(nf, node, e.what());
    }
  }
  if (!nf.what.empty())
    throw ClassExit(nf.what + " at node " + std::to_string(nf.node));
}

void set_frame(const FlowField& f, const std::vector<std::size_t>& frame, const std::vector<std::vector<double>>& coords,
               double t, std::vector<double>& values) {
  for (std::size_t i = 0; i < frame.size(); ++i) values[frame[i]] = evaluate(f.bc.data, coords[i], t);
}

struct Workspace {
  explicit Workspace(const FlowField& f) : st(f.grid), nt(f.grid), active(nt.active), frame(frame_nodes(f.grid)) {
    for (auto i : frame) frame_coords.push_back(f.grid.coords(i));
  }
  Stencil st;
  StencilTable nt;
  const std::vector<std::size_t>& active;
  std::vector<std::size_t> frame;
  std::vector<std::vector<double>> frame_coords;
};

using SpMat = Eigen::SparseMatrix<double>;

/// Rows over active nodes of  diag_shift * I - scale * J,  J the linearized
/// discrete operator.  Frame contributions of a known frame increment go to rhs_frame.
SpMat linearized_system(const FlowField& f, const Workspace& ws, const std::vector<double>& values, double diag_shift,
                        double scale, const std::vector<double>* frame_delta, std::vector<double>* rhs_frame) {
  const Grid& g = f.grid;
  const int d = g.dim;
  const std::size_t N = g.size();
  std::vector<long> unknown(N, -1);
  for (std::size_t r = 0; r < ws.active.size(); ++r) unknown[ws.active[r]] = static_cast<long>(r);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(ws.active.size() * static_cast<std::size_t>(1 + 2 * d + 2 * d * (d - 1)));
  if (rhs_frame) rhs_frame->assign(ws.active.size(), 0.0);
  for (std::size_t r = 0; r < ws.active.size(); ++r) {
    const std::size_t node = ws.active[r];
    MatR H = ws.nt.hessian(r, values);
    if (f.bc.periodic) H += f.bc.base_hessian;
    const NodeValue nv = node_operator(H, f.flavor, f.k, f.l, true);
    auto add = [&](std::size_t col_node, double w) {
      const long c = unknown[col_node];
      if (c >= 0) {
        trips.emplace_back(static_cast<int>(r), static_cast<int>(c), -scale * w);
      } else if (rhs_frame && frame_delta) {
        (*rhs_frame)[r] += scale * w * (*frame_delta)[col_node];
      }
    };
    trips.emplace_back(static_cast<int>(r), static_cast<int>(r), diag_shift);
    for (int a = 0; a < d; ++a) {
      const double ha = g.h[static_cast<std::size_t>(a)];
      const double wa = nv.coef(a, a) / (ha * ha);
      const std::size_t p = ws.st.shift(node, a, 1), m = ws.st.shift(node, a, -1);
      add(p, wa);
      add(m, wa);
      add(node, -2.0 * wa);
      for (int b = a + 1; b < d; ++b) {
        const double hb = g.h[static_cast<std::size_t>(b)];
        const double wab = 2.0 * nv.coef(a, b) / (4.0 * ha * hb);
        add(ws.st.shift(p, b, 1), wab);
        add(ws.st.shift(p, b, -1), -wab);
        add(ws.st.shift(m, b, 1), -wab);
        add(ws.st.shift(m, b, -1), wab);
      }
    }
  }
  SpMat A(static_cast<long>(ws.active.size()), static_cast<long>(ws.active.size()));
  A.setFromTriplets(trips.begin(), trips.end());
  A.makeCompressed();
  return A;
}

Eigen::VectorXd sparse_solve(const SpMat& A, const Eigen::VectorXd& b) {
  Eigen::SparseLU<SpMat> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success) throw NoConvergence("sparse factorization failed");
  Eigen::VectorXd x = lu.solve(b);
  if (lu.info() != Eigen::Success) throw NoConvergence("sparse solve failed");
  return x;
}

std::vector<double> advance_rk4(const FlowField& f, const Workspace& ws, const std::vector<double>& u, double t,
                                double dt, bool parallel) {
  const std::size_t N = u.size();
  std::vector<double> k1, k2, k3, k4, y(N);
  auto stage = [&](const std::vector<double>& kin, double c, std::vector<double>& kout) {
    for (std::size_t i = 0; i < N; ++i) y[i] = u[i] + c * dt * kin[i];
    if (!f.bc.periodic) set_frame(f, ws.frame, ws.frame_coords, t + c * dt, y);
    rhs_impl(f, ws.nt, y, kout, parallel);
  };
  rhs_impl(f, ws.nt, u, k1, parallel);
  stage(k1, 0.5, k2);
  stage(k2, 0.5, k3);
  stage(k3, 1.0, k4);
  std::vector<double> out(N);
  for (std::size_t i = 0; i < N; ++i) out[i] = u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  if (!f.bc.periodic) set_frame(f, ws.frame, ws.frame_coords, t + dt, out);
  return out;
}

std::vector<double> advance_semi_implicit(const FlowField& f, const Workspace& ws, const std::vector<double>& u,
                                          double t, double dt, bool parallel) {
  std::vector<double> F;
  rhs_impl(f, ws.nt, u, F, parallel);
  std::vector<double> next = u;
  std::vector<double> frame_delta(u.size(), 0.0);
  if (!f.bc.periodic) {
    set_frame(f, ws.frame, ws.frame_coords, t + dt, next);
    for (auto i : ws.frame) frame_delta[i] = next[i] - u[i];
  }
  std::vector<double> rhs_frame;
  const SpMat A = linearized_system(f, ws, u, 1.0, dt, &frame_delta, &rhs_frame);
  Eigen::VectorXd b(static_cast<long>(ws.active.size()));
  for (std::size_t r = 0; r < ws.active.size(); ++r) b[static_cast<long>(r)] = dt * F[ws.active[r]] + rhs_frame[r];
  const Eigen::VectorXd delta = sparse_solve(A, b);
  for (std::size_t r = 0; r < ws.active.size(); ++r) next[ws.active[r]] = u[ws.active[r]] + delta[static_cast<long>(r)];
  return next;
}

std::vector<double> advance(const FlowField& f, const Workspace& ws, const std::vector<double>& u, double t, double dt,
                            Scheme scheme, bool parallel) {
  if (scheme == Scheme::RK4) {
    const double limit = f.max_explicit_dt();
    if (dt > limit * (1.0 + 1e-12))
      throw CFLViolation("dt = " + std::to_string(dt) + " exceeds the explicit bound " + std::to_string(limit));
    return advance_rk4(f, ws, u, t, dt, parallel);
  }
  return advance_semi_implicit(f, ws, u, t, dt, parallel);
}

}  // namespace

void flow_rhs(const FlowField& f, const std::vector<double>& values, std::vector<double>& out, Execution ex) {
  if (values.size() != f.grid.size()) throw DimensionMismatch("field size does not match grid");
  rhs_impl(f, StencilTable(f.grid), values, out, ex == Execution::Parallel);
}

void step_parabolic(FlowField& f, Scheme scheme, Execution ex) {
  if (f.slices.empty()) throw InvalidArgument("field has no slices");
  const Workspace ws(f);
  const Slice& cur = f.slices.back();
  Slice next;
  next.values = advance(f, ws, cur.values, cur.t, f.dt, scheme, ex == Execution::Parallel);
  next.t = cur.t + f.dt;
  f.slices.push_back(std::move(next));
}

void integrate(FlowField& f, double t_end, Scheme scheme, int record_every, Execution ex) {
  if (f.slices.empty()) throw InvalidArgument("field has no slices");
  if (record_every < 1) throw InvalidArgument("record_every must be >= 1");
  const double t0 = f.slices.back().t;
  if (!(t_end > t0)) return;
  const auto steps = static_cast<long>(std::ceil((t_end - t0) / f.dt - 1e-9));
  const double dt = (t_end - t0) / static_cast<double>(steps);
  const Workspace ws(f);
  std::vector<double> u = f.slices.back().values;
  for (long s = 1; s <= steps; ++s) {
    const double t = t0 + static_cast<double>(s - 1) * dt;
    u = advance(f, ws, u, t, dt, scheme, ex == Execution::Parallel);
    if (s % record_every == 0 || s == steps) f.slices.push_back(Slice{s == steps ? t_end : t + dt, u});
  }
}

// ---------------------------------------------------------------------------
// Elliptic

double elliptic_residual(const Grid& g, Flavor flavor, int k, int l, const std::vector<double>& values) {
  const StencilTable nt(g);
  double r = 0.0;
  for (std::size_t i = 0; i < nt.active.size(); ++i)
    r = std::max(r, std::abs(node_operator(nt.hessian(i, values), flavor, k, l, false).F));
  return r;
}

EllipticResult solve_elliptic(const Grid& g, Flavor flavor, int k, int l, const ExpressionSpec& boundary,
                              const ExpressionSpec& guess, EllipticOptions opts) {
  if (g.periodic) throw InvalidArgument("elliptic solves need a frozen frame");
  FlowField f = make_field(g, flavor, k, l, frozen_boundary(boundary), guess, 0.0, 1.0, 1.0, 1.0);
  const Workspace ws(f);
  std::vector<double> u = f.slices.back().values;
  std::vector<double> F;
  rhs_impl(f, ws.nt, u, F, true);  // ClassExit if the guess is outside the class
  auto sup = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };
  EllipticResult res;
  double r = sup(F);
  for (int it = 0; it < opts.max_iterations && r > opts.tolerance; ++it) {
    const SpMat J = linearized_system(f, ws, u, 0.0, -1.0, nullptr, nullptr);
    Eigen::VectorXd b(static_cast<long>(ws.active.size()));
    for (std::size_t q = 0; q < ws.active.size(); ++q) b[static_cast<long>(q)] = -F[ws.active[q]];
    const Eigen::VectorXd delta = sparse_solve(J, b);
    bool accepted = false;
    bool left_class = false;
    for (double s = 1.0; s > 1e-6; s *= 0.5) {
      std::vector<double> trial = u;
      for (std::size_t q = 0; q < ws.active.size(); ++q) trial[ws.active[q]] += s * delta[static_cast<long>(q)];
      std::vector<double> Ft;
      try {
        rhs_impl(f, ws.nt, trial, Ft, true);
      } catch (const ClassExit&) {
        left_class = true;
        continue;
      }
      const double rt = sup(Ft);
      if (rt < r || rt <= opts.tolerance) {
        u = std::move(trial);
        F = std::move(Ft);
        r = rt;
        accepted = true;
        break;
      }
    }
    res.iterations = it + 1;
    if (!accepted) {
      if (left_class) throw ClassExit("every damped Newton step left the class");
      throw NoConvergence("Newton line search stalled at residual " + std::to_string(r));
    }
  }
  if (r > opts.tolerance)
    throw NoConvergence("Newton cap of " + std::to_string(opts.max_iterations) + " reached at residual " +
                        std::to_string(r));
  res.values = std::move(u);
  res.residual = r;
  return res;
}

// ---------------------------------------------------------------------------
// Monitoring

MonitorReport monitor_class(const FlowField& f, double lambda, double Lambda, double tol) {
  MonitorReport rep;
  const StencilTable nt(f.grid);
  const long n = static_cast<long>(nt.active.size());
  for (std::size_t s = 0; s < f.slices.size(); ++s) {
    const auto& v = f.slices[s].values;
    double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
    double xmax = -xmin, ymax = -xmin;
#pragma omp parallel for schedule(static) reduction(min : xmin, ymin) reduction(max : xmax, ymax)
    for (long i = 0; i < n; ++i) {
      MatR H = nt.hessian(static_cast<std::size_t>(i), v);
      if (f.bc.periodic) H += f.bc.base_hessian;
      const BlockBounds b = node_bounds(H, f.flavor, f.k, f.l);
      xmin = std::min(xmin, b.x_min);
      xmax = std::max(xmax, b.x_max);
      ymin = std::min(ymin, b.y_min);
      ymax = std::max(ymax, b.y_max);
    }
    BlockBounds agg{xmin, xmax, ymin, ymax};
    if (!rep.first_violation && !within(agg, lambda, Lambda, tol)) rep.first_violation = s;
    rep.series.push_back(agg);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Snapshots

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void write_field_csv(const FlowField& f, std::size_t slice, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path);
  os << "t";
  for (int a = 0; a < f.grid.dim; ++a) os << ",x" << a;
  os << ",u\n";
  const auto& s = f.slices.at(slice);
  for (std::size_t i = 0; i < f.grid.size(); ++i) {
    os << fmt17(s.t);
    for (double x : f.grid.coords(i)) os << ',' << fmt17(x);
    os << ',' << fmt17(f.u(slice, i)) << '\n';
  }
}

void write_field_binary(const FlowField& f, std::size_t slice, const std::string& path) {
  const auto& s = f.slices.at(slice);
  nlohmann::json meta{{"dim", f.grid.dim},
                      {"n", f.grid.n},
                      {"lo", f.grid.lo},
                      {"h", f.grid.h},
                      {"periodic", f.grid.periodic},
                      {"frame", f.grid.frame},
                      {"t", s.t},
                      {"flavor", to_string(f.flavor)},
                      {"k", f.k},
                      {"l", f.l},
                      {"values", "u"},
                      {"format", "float64-le"},
                      {"count", s.values.size()},
                      {"data", path + ".bin"}};
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidArgument("cannot open " + path);
    os << meta.dump(2) << '\n';
  }
  std::ofstream bin(path + ".bin", std::ios::binary);
  if (!bin) throw InvalidArgument("cannot open " + path + ".bin");
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(f.u(slice, i));
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    bin.write(bytes, 8);
  }
}

std::pair<Grid, Slice> read_field_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open " + path);
  nlohmann::json meta;
  try {
    is >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  Grid g;
  Slice s;
  try {
    g.dim = meta.at("dim").get<int>();
    g.n = meta.at("n").get<std::vector<int>>();
    g.lo = meta.at("lo").get<std::vector<double>>();
    g.h = meta.at("h").get<std::vector<double>>();
    g.periodic = meta.at("periodic").get<bool>();
    g.frame = meta.at("frame").get<int>();
    s.t = meta.at("t").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  std::ifstream bin(path + ".bin", std::ios::binary);
  if (!bin) throw InvalidArgument("cannot open " + path + ".bin");
  s.values.resize(g.size());
  for (auto& v : s.values) {
    char bytes[8];
    if (!bin.read(bytes, 8)) throw ParseError(path + ".bin: truncated");
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    v = std::bit_cast<double>(bits);
  }
  return {g, s};
}

}  // namespace tma
