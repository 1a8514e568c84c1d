#include "tma/estimates.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "tma/jets.hpp"
#include "tma/twistedops.hpp"

namespace tma {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sup_dist(const std::vector<double>& x, const std::vector<double>& w) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - w[i]));
  return m;
}

}  // namespace

bool Cylinder::contains(const std::vector<double>& x, double t) const {
  if (t > s) return false;
  if (!(s - t < R * R)) return false;
  return sup_dist(x, center) < R;
}

Cylinder Cylinder::theta() const { return Cylinder{center, s - 4.0 * R * R, R}; }

Cylinder Cylinder::shrink(double rho) const { return Cylinder{center, s, rho}; }

CylinderSpec dyadic_ladder(const Cylinder& base, int levels) {
  if (levels < 1) throw InvalidArgument("ladder needs at least one level");
  if (!(base.R > 0.0)) throw InvalidArgument("cylinder radius must be positive");
  CylinderSpec cs{base, {}};
  for (int i = 0; i < levels; ++i) cs.ladder.push_back(base.R / std::ldexp(1.0, i));
  return cs;
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

constexpr std::size_t kMaxQuantities = 2 * kMaxMatrixDim * kMaxMatrixDim + 1;

struct WPoint {
  double ut = 0.0;
  MatR Wr;
  MatC Wc;
};

WPoint w_at(const FlowField& f, const MatR& H) {
  WPoint p;
  p.ut = node_operator(H, f.flavor, f.k, f.l, false).F;
  if (f.flavor == Flavor::Real && f.k == 1 && f.l == 1) {
    const double a = H(0, 0), b = H(0, 1), c = H(1, 1);
    p.Wr.resize(2, 2);
    p.Wr << a - b * b / c, b / c, b / c, -1.0 / c;
  } else if (f.flavor == Flavor::Real)
    p.Wr = twisted_W(split_blocks(H, f.k));
  else
    p.Wc = twisted_W(split_blocks(wirtinger_hessian(H), f.k));
  return p;
}

template <class Fill>
FieldSamples sample(const FlowField& f, double t_min, std::vector<std::string> names, Fill fill) {
  FieldSamples out;
  out.grid = f.grid;
  out.names = std::move(names);
  const std::size_t nq = out.names.size();
  if (nq > kMaxQuantities) throw InvalidArgument("too many sampled quantities");
  const std::size_t N = f.grid.size();
  const StencilTable st(f.grid);
  const auto& active = st.active;
  const long na = static_cast<long>(active.size());
  out.values.assign(nq, {});
  for (const auto& slice : f.slices) {
    if (slice.t < t_min) continue;
    out.times.push_back(slice.t);
    for (auto& v : out.values) v.emplace_back(N, kNaN);
    const std::size_t s = out.times.size() - 1;
#pragma omp parallel for schedule(static)
    for (long i = 0; i < na; ++i) {
      const std::size_t node = active[static_cast<std::size_t>(i)];
      std::array<double, kMaxQuantities> q;
      MatR H = st.hessian(static_cast<std::size_t>(i), slice.values);
      if (f.bc.periodic) H += f.bc.base_hessian;
      fill(w_at(f, H), q);
      for (std::size_t j = 0; j < nq; ++j) out.values[j][s][node] = q[j];
    }
  }
  return out;
}

}  // namespace

FieldSamples flow_quantities(const FlowField& f, double t_min) {
  const int n = f.k + f.l;
  std::vector<std::string> names{"u_t"};
  const bool cx = f.flavor == Flavor::Complex;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const std::string idx = "[" + std::to_string(i) + "][" + std::to_string(j) + "]";
      names.push_back(cx ? "ReW" + idx : "W" + idx);
      if (cx && i != j) names.push_back("ImW" + idx);
    }
  return sample(f, t_min, names, [n, cx](const WPoint& p, std::array<double, kMaxQuantities>& q) {
    std::size_t c = 0;
    q[c++] = p.ut;
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        if (!cx) {
          q[c++] = p.Wr(i, j);
        } else {
          q[c++] = p.Wc(i, j).real();
          if (i != j) q[c++] = p.Wc(i, j).imag();
        }
      }
  });
}

FieldSamples flow_vector_family(const FlowField& f, double t_min) {
  const int n = f.k + f.l;
  const bool cx = f.flavor == Flavor::Complex;
  std::vector<std::string> names{"u_t"};
  std::vector<VecC> family;
  const double r = 1.0 / std::numbers::sqrt2;
  for (int j = 0; j < n; ++j) {
    VecC e = VecC::Zero(n);
    e(j) = 1.0;
    family.push_back(e);
    names.push_back("e" + std::to_string(j));
  }
  for (int j = 0; j < n; ++j)
    for (int k = j + 1; k < n; ++k)
      for (int sign : {1, -1}) {
        VecC v = VecC::Zero(n);
        v(j) = r;
        v(k) = sign * r;
        family.push_back(v);
        names.push_back("(e" + std::to_string(j) + (sign > 0 ? "+" : "-") + "e" + std::to_string(k) + ")/sqrt2");
        if (cx) {
          v(k) = cdouble(0.0, sign * r);
          family.push_back(v);
          names.push_back("(e" + std::to_string(j) + (sign > 0 ? "+" : "-") + "ie" + std::to_string(k) + ")/sqrt2");
        }
      }
  return sample(f, t_min, names, [family, cx](const WPoint& p, std::array<double, kMaxQuantities>& q) {
    q[0] = p.ut;
    for (std::size_t i = 0; i < family.size(); ++i) {
      const VecC& v = family[i];
      if (cx)
        q[i + 1] = (v.adjoint() * p.Wc * v)(0, 0).real();
      else
        q[i + 1] = (v.real().transpose() * p.Wr * v.real())(0, 0);
    }
  });
}

// ---------------------------------------------------------------------------
// Oscillation

namespace {

struct Members {
  std::vector<std::size_t> slices;
  std::vector<std::size_t> nodes;
};

Members members(const FieldSamples& q, const Cylinder& c) {
  if (static_cast<int>(c.center.size()) != q.grid.dim) throw DimensionMismatch("cylinder center dimension");
  Members m;
  for (std::size_t s = 0; s < q.times.size(); ++s) {
    const double t = q.times[s];
    if (t <= c.s && c.s - t < c.R * c.R) m.slices.push_back(s);
  }
  for (std::size_t i = 0; i < q.grid.size(); ++i)
    if (!q.grid.in_frame(i) && sup_dist(q.grid.coords(i), c.center) < c.R) m.nodes.push_back(i);
  if (m.slices.empty() || m.nodes.empty()) throw EmptyCylinder("no grid nodes inside the cylinder");
  return m;
}

double osc_of(const std::vector<std::vector<double>>& v, const Members& m) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (auto s : m.slices)
    for (auto i : m.nodes) {
      const double x = v[s][i];
      if (std::isnan(x)) continue;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  if (lo > hi) throw EmptyCylinder("quantity undefined throughout the cylinder");
  return hi - lo;
}

}  // namespace

std::map<std::string, double> cylinder_oscillation(const FieldSamples& q, const Cylinder& c) {
  const Members m = members(q, c);
  std::map<std::string, double> out;
  for (std::size_t j = 0; j < q.names.size(); ++j) out[q.names[j]] = osc_of(q.values[j], m);
  return out;
}

double oscillation_sum(const FieldSamples& q, const Cylinder& c) {
  const Members m = members(q, c);
  double s = 0.0;
  for (const auto& v : q.values) s += osc_of(v, m);
  return s;
}

HolderFit holder_exponent_fit(const std::vector<double>& rho, const std::vector<double>& P) {
  if (rho.size() != P.size()) throw DimensionMismatch("ladder radii and oscillations differ in length");
  if (rho.size() < 3) throw DegenerateLadder("a fit needs at least three ladder points");
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (!(rho[i] > 0.0)) throw DegenerateLadder("ladder radii must be positive");
    if (P[i] < 0.0 || std::isnan(P[i])) throw DegenerateLadder("negative oscillation in ladder");
    for (std::size_t j = 0; j < i; ++j)
      if (rho[j] == rho[i]) throw DegenerateLadder("repeated ladder radius");
  }
  HolderFit fit;
  if (std::any_of(P.begin(), P.end(), [](double p) { return p == 0.0; })) {
    fit.alpha = std::numeric_limits<double>::infinity();
    fit.degenerate = true;
    return fit;
  }
  const double n = static_cast<double>(rho.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double x = std::log(rho[i]), y = std::log(P[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  fit.alpha = (n * sxy - sx * sy) / den;
  fit.intercept = (sy - fit.alpha * sx) / n;
  double ss = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double r = std::log(P[i]) - (fit.intercept + fit.alpha * std::log(rho[i]));
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

// ---------------------------------------------------------------------------
// Rescaling

ExpressionSpec parabolic_rescale(const ExpressionSpec& u, double mu, const std::vector<double>& center, double s) {
  if (!(mu > 0.0)) throw InvalidArgument("rescaling factor must be positive");
  const int n = u.dim();
  if (!center.empty() && static_cast<int>(center.size()) != n) throw DimensionMismatch("rescaling center dimension");
  std::vector<std::vector<double>> S(static_cast<std::size_t>(n + 1), std::vector<double>(static_cast<std::size_t>(n + 1), 0.0));
  for (int i = 0; i < n; ++i) S[i][i] = mu;
  S[n][n] = mu * mu;
  std::vector<double> offset(static_cast<std::size_t>(n + 1), 0.0);
  for (int i = 0; i < static_cast<int>(center.size()); ++i) offset[i] = center[i];
  offset[n] = s;
  ExpressionSpec v = linear_substitution(u, S, offset, u.k, u.l, u.flavor);
  v.root = make_node(Scale{1.0 / (mu * mu), v.root});
  return v;
}

double third_derivative_norm(const ExpressionSpec& u, const std::vector<double>& x, double t) {
  const SpaceTimeJet jet = evaluate_jet(u, x, t, {3, false});
  const int d = u.dim();
  double s = 0.0;
  if (u.flavor == Flavor::Real) {
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        for (int c = 0; c < d; ++c) {
          const double v = jet.d({a, b, c});
          s += v * v;
        }
    return std::sqrt(s);
  }
  const WirtingerTable w = wirtinger_from_real(jet);
  const int n = u.k + u.l;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        s += std::norm(w.d({2 * a, 2 * b, 2 * c + 1}));
        s += std::norm(w.d({2 * a + 1, 2 * b, 2 * c + 1}));
      }
  return std::sqrt(s);
}

namespace {

double H_at(const ExpressionSpec& u, const std::vector<double>& x, double t) {
  const SpaceTimeJet jet = evaluate_jet(u, x, t, {2, true});
  return u.flavor == Flavor::Real ? eval_H_real(jet) : eval_H_complex(wirtinger_from_real(jet));
}

}  // namespace

RescaleReport rescale_report(const ExpressionSpec& u, double mu, const std::vector<std::vector<double>>& probes,
                             double probe_time) {
  RescaleReport r;
  const std::vector<double> origin(static_cast<std::size_t>(u.dim()), 0.0);
  r.v = parabolic_rescale(u, mu);
  r.third_u = third_derivative_norm(u, origin);
  r.third_v = third_derivative_norm(r.v, origin);
  r.ratio = r.third_u == 0.0 ? std::numeric_limits<double>::quiet_NaN() : r.third_v / r.third_u;
  for (const auto& x : probes) {
    std::vector<double> y(x);
    for (auto& c : y) c *= mu;
    r.H_discrepancy = std::max(r.H_discrepancy, std::abs(H_at(r.v, x, probe_time) - H_at(u, y, mu * mu * probe_time)));
  }
  return r;
}

FlowField parabolic_rescale(const FlowField& f, double mu, const std::vector<double>& center, double s,
                            double half_width) {
  if (!(mu > 0.0) || !(half_width > 0.0)) throw InvalidArgument("rescaling factor and window must be positive");
  const Grid& g = f.grid;
  if (static_cast<int>(center.size()) != g.dim) throw DimensionMismatch("rescaling center dimension");
  Grid out;
  out.dim = g.dim;
  out.periodic = false;
  out.frame = 1;
  std::vector<int> first(static_cast<std::size_t>(g.dim));
  for (int a = 0; a < g.dim; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    const double lo = center[ua] - mu * half_width, hi = center[ua] + mu * half_width;
    const double tol = 1e-9 * g.h[ua];
    const double top = g.lo[ua] + g.h[ua] * (g.n[ua] - 1);
    if (lo < g.lo[ua] - tol || hi > top + tol) throw DomainExceeded("rescaling window leaves the grid");
    const int i0 = static_cast<int>(std::ceil((lo - g.lo[ua]) / g.h[ua] - 1e-9));
    const int i1 = static_cast<int>(std::floor((hi - g.lo[ua]) / g.h[ua] + 1e-9));
    if (i1 - i0 < 2) throw DomainExceeded("rescaling window holds fewer than three nodes per axis");
    first[ua] = i0;
    out.n.push_back(i1 - i0 + 1);
    out.lo.push_back((g.lo[ua] + g.h[ua] * i0 - center[ua]) / mu);
    out.h.push_back(g.h[ua] / mu);
  }
  FlowField v;
  v.grid = out;
  v.flavor = f.flavor;
  v.k = f.k;
  v.l = f.l;
  v.bc = frozen_boundary(parabolic_rescale(f.bc.data, mu, center, s));
  v.dt = f.dt / (mu * mu);
  v.lambda = f.lambda;
  v.Lambda = f.Lambda;
  v.cfl = f.cfl;
  const double scale = 1.0 / (mu * mu);
  for (std::size_t sl = 0; sl < f.slices.size(); ++sl) {
    Slice out_slice;
    out_slice.t = (f.slices[sl].t - s) / (mu * mu);
    out_slice.values.resize(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      auto mi = out.multi_index(i);
      for (int a = 0; a < g.dim; ++a) mi[static_cast<std::size_t>(a)] += first[static_cast<std::size_t>(a)];
      out_slice.values[i] = scale * f.u(sl, g.linear_index(mi));
    }
    v.slices.push_back(std::move(out_slice));
  }
  return v;
}

// ---------------------------------------------------------------------------
// Rigidity

RigidityReport rigidity_probe(const Grid& g, Flavor flavor, int k, int l, const std::vector<double>& values) {
  if (values.size() != g.size()) throw DimensionMismatch("field size does not match grid");
  const auto active = active_nodes(g);
  if (active.empty()) throw InvalidArgument("grid has no interior nodes");
  RigidityReport rep;
  const int n = k + l;
  std::vector<double> lo(static_cast<std::size_t>(2 * n * n), std::numeric_limits<double>::infinity());
  std::vector<double> hi(lo.size(), -std::numeric_limits<double>::infinity());
  auto track = [&](std::size_t slot, double x) {
    lo[slot] = std::min(lo[slot], x);
    hi[slot] = std::max(hi[slot], x);
  };
  auto check_conditioning = [](double mn, double mx) {
    if (!(mn > 0.0) || mn / mx < 1e-10) throw IllConditioned("concave block is singular or ill-conditioned");
  };
  for (auto node : active) {
    const MatR H = discrete_hessian(g, values, node);
    if (flavor == Flavor::Real) {
      const RealBlocks b = split_blocks(H, k);
      const auto [mn, mx] = min_max_eigenvalues(SymmetricMatrix(MatR(-b.C)));
      check_conditioning(mn, mx);
      rep.F_residual = std::max(rep.F_residual, std::abs(node_operator(H, flavor, k, l, false).F));
      const MatR W = twisted_W(b);
      rep.det_deviation = std::max(rep.det_deviation, std::abs(W.determinant() - 1.0));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) track(static_cast<std::size_t>(i * n + j), W(i, j));
    } else {
      const ComplexBlocks b = split_blocks(wirtinger_hessian(H), k);
      const auto [mn, mx] = min_max_eigenvalues(HermitianMatrix(MatC(-b.C)));
      check_conditioning(mn, mx);
      rep.F_residual = std::max(rep.F_residual, std::abs(node_operator(H, flavor, k, l, false).F));
      const MatC W = twisted_W(b);
      rep.det_deviation = std::max(rep.det_deviation, std::abs(W.determinant() - 1.0));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          track(static_cast<std::size_t>(i * n + j), W(i, j).real());
          track(static_cast<std::size_t>(n * n + i * n + j), W(i, j).imag());
        }
    }
  }
  for (std::size_t s = 0; s < lo.size(); ++s)
    if (hi[s] >= lo[s]) rep.W_variation = std::max(rep.W_variation, hi[s] - lo[s]);
  return rep;
}

double weak_harnack_ratio(const FieldSamples& q, std::size_t quantity, const Cylinder& c, double p) {
  if (quantity >= q.values.size()) throw InvalidArgument("quantity index out of range");
  if (!(p > 0.0)) throw InvalidArgument("exponent must be positive");
  const Members early = members(q, c.theta());
  const Members late = members(q, c);
  const auto& v = q.values[quantity];
  double cell = 1.0;
  for (double h : q.grid.h) cell *= h;
  double integral = 0.0;
  for (auto s : early.slices) {
    double dt = 0.0;
    if (s + 1 < q.times.size())
      dt = q.times[s + 1] - q.times[s];
    else if (s > 0)
      dt = q.times[s] - q.times[s - 1];
    for (auto i : early.nodes) {
      const double x = v[s][i];
      if (std::isnan(x)) continue;
      if (x < 0.0) throw InvalidArgument("weak Harnack diagnostic needs a non-negative quantity");
      integral += std::pow(x, p) * cell * dt;
    }
  }
  double inf = std::numeric_limits<double>::infinity();
  for (auto s : late.slices)
    for (auto i : late.nodes)
      if (!std::isnan(v[s][i])) inf = std::min(inf, v[s][i]);
  const double avg = std::pow(std::pow(c.R, -(q.grid.dim + 2)) * integral, 1.0 / p);
  return avg / inf;
}

}  // namespace tma
