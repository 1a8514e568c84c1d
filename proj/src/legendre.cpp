#include "tma/legendre.hpp"

#include <cmath>

#include "tma/jets.hpp"
#include "tma/twistedops.hpp"

namespace tma {

namespace {

std::vector<double> concat(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> p = x;
  p.insert(p.end(), y.begin(), y.end());
  return p;
}

double inf_norm(const VecR& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

struct GradientState {
  VecR g;   // u_y - z
  MatR C;   // u_yy
};

GradientState gradient_state(const ExpressionSpec& spec, const std::vector<double>& x, const std::vector<double>& y,
                             const std::vector<double>& z) {
  const auto jet = evaluate_jet(spec, concat(x, y), 0.0, {2, false});
  const int k = spec.k, l = spec.l;
  GradientState s{VecR(l), MatR(l, l)};
  for (int a = 0; a < l; ++a) {
    s.g(a) = jet.d({k + a}) - z[static_cast<std::size_t>(a)];
    for (int b = 0; b < l; ++b) s.C(a, b) = jet.d({k + a, k + b});
  }
  return s;
}

void require_real(const ExpressionSpec& spec) {
  if (spec.flavor != Flavor::Real) throw InvalidArgument("partial Legendre transform is defined for the real flavor");
}

}  // namespace

std::vector<double> invert_partial_gradient(const ExpressionSpec& spec, const std::vector<double>& x,
                                            const std::vector<double>& z, std::vector<double> y,
                                            NewtonOptions opts, int* iterations) {
  require_real(spec);
  if (static_cast<int>(x.size()) != spec.k || static_cast<int>(z.size()) != spec.l ||
      static_cast<int>(y.size()) != spec.l)
    throw DimensionMismatch("partial gradient inversion: wrong coordinate counts");
  double znorm = 0.0;
  for (double v : z) znorm = std::max(znorm, std::abs(v));
  const double tol = 1e-12 * (1.0 + znorm);

  auto state = gradient_state(spec, x, y, z);
  double res = inf_norm(state.g);
  for (int it = 0; it <= opts.max_iterations; ++it) {
    if (res <= tol) {
      if (iterations) *iterations = it;
      return y;
    }
    if (it == opts.max_iterations) break;
    const VecR step = -state.C.ldlt().solve(state.g);
    double lambda = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, lambda *= 0.5) {
      std::vector<double> trial = y;
      for (int a = 0; a < spec.l; ++a) trial[static_cast<std::size_t>(a)] += lambda * step(a);
      for (double v : trial)
        if (!(std::abs(v) <= opts.domain_radius))
          throw DomainExceeded("Newton iterate left the search region; z may lie outside the gradient image");
      GradientState next;
      try {
        next = gradient_state(spec, x, trial, z);
      } catch (const DomainViolation&) {
        continue;
      }
      const double r = inf_norm(next.g);
      if (r < res) {
        y = std::move(trial);
        state = std::move(next);
        res = r;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // no decrease possible: accept if already at rounding level
      if (res <= 1e3 * tol) {
        if (iterations) *iterations = it;
        return y;
      }
      throw NoConvergence("damped Newton stalled at residual " + std::to_string(res));
    }
  }
  throw NoConvergence("partial gradient inversion hit the iteration cap");
}

PartialLegendreResult partial_legendre(const ExpressionSpec& spec, const std::vector<double>& x,
                                       const std::vector<double>& z, std::optional<std::vector<double>> y0,
                                       NewtonOptions opts) {
  require_real(spec);
  PartialLegendreResult r;
  std::vector<double> start = y0 ? *y0 : std::vector<double>(static_cast<std::size_t>(spec.l), 0.0);
  r.y = invert_partial_gradient(spec, x, z, start, opts, &r.iterations);
  const auto jet = evaluate_jet(spec, concat(x, r.y), 0.0, {2, false});
  r.w = jet.value();
  for (int a = 0; a < spec.l; ++a) r.w -= r.y[static_cast<std::size_t>(a)] * z[static_cast<std::size_t>(a)];
  const auto b = real_blocks(jet);
  r.W = real_W(jet).matrix();
  const int k = spec.k, l = spec.l;
  const MatR Cinv = b.C.inverse();
  r.T = MatR::Zero(k + l, k + l);
  r.T.topLeftCorner(k, k) = MatR::Identity(k, k);
  r.T.bottomLeftCorner(l, k) = -Cinv * b.B.transpose();
  r.T.bottomRightCorner(l, l) = Cinv;
  return r;
}

double det_transform_residual(const ExpressionSpec& spec, const std::vector<double>& point) {
  require_real(spec);
  const auto jet = evaluate_jet(spec, point, 0.0, {2, false});
  const auto b = real_blocks(jet);
  // guards: both blocks must be invertible with the class signs
  const auto ov = operator_value(b);
  const double detW = twisted_W(b).determinant();
  return std::abs(detW - std::exp(ov.logdet_x - ov.logdet_y));
}

TransformedOperator transformed_operator_L(const ExpressionSpec& spec, const std::vector<double>& point) {
  require_real(spec);
  const auto jet = evaluate_jet(spec, point, 0.0, {2, false});
  const auto b = real_blocks(jet);
  TransformedOperator out{real_L_coefficients(b), MatR(), 0.0};
  const int k = b.k(), l = b.l();
  const MatR Cinv = b.C.inverse();
  MatR T = MatR::Zero(k + l, k + l);
  T.topLeftCorner(k, k) = MatR::Identity(k, k);
  T.bottomLeftCorner(l, k) = -Cinv * b.B.transpose();
  T.bottomRightCorner(l, l) = Cinv;
  const MatR W = twisted_W(b);
  const MatR Winv = W.inverse();
  out.long_form = T * Winv * T.transpose();
  out.discrepancy = (out.long_form - out.short_form.matrix()).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace tma
