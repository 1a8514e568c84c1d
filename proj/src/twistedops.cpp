#include "tma/twistedops.hpp"

#include <cmath>

namespace tma {

MatR real_hessian(const SpaceTimeJet& jet) {
  const int n = jet.dim();
  if (jet.jet.order() < 2) throw InvalidArgument("Hessian needs a jet of order >= 2");
  MatR H(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) H(i, j) = H(j, i) = jet.d({i, j});
  return H;
}

MatC complex_hessian(const WirtingerTable& t) {
  const int n = t.complex_dim();
  if (t.jet.order() < 2) throw InvalidArgument("Hessian needs a table of order >= 2");
  MatC H(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) H(i, j) = t.d({2 * i, 2 * j + 1});
  return H;
}

template <class M>
static Blocks<M> split(const M& H, int k) {
  const int n = static_cast<int>(H.rows());
  const int l = n - k;
  return {H.topLeftCorner(k, k), H.topRightCorner(k, l), H.bottomRightCorner(l, l)};
}

RealBlocks split_blocks(const MatR& H, int k) { return split(H, k); }
ComplexBlocks split_blocks(const MatC& H, int k) { return split(H, k); }

RealBlocks real_blocks(const SpaceTimeJet& jet) {
  const int k = jet.flavor == Flavor::Real ? jet.k : 2 * jet.k;
  return split_blocks(real_hessian(jet), k);
}

ComplexBlocks complex_blocks(const WirtingerTable& t) { return split_blocks(complex_hessian(t), t.k); }

template <class M>
static OperatorValue opval(const Blocks<M>& b, double guard) {
  OperatorValue v;
  if (b.k() > 0) v.logdet_x = inverse_and_logdet(SelfAdjoint<M>(b.A), guard).logdet;
  if (b.l() > 0) v.logdet_y = inverse_and_logdet(SelfAdjoint<M>(M(-b.C)), guard).logdet;
  v.F = v.logdet_x - v.logdet_y;
  return v;
}

OperatorValue operator_value(const RealBlocks& b, double g) { return opval(b, g); }
OperatorValue operator_value(const ComplexBlocks& b, double g) { return opval(b, g); }

double eval_F_real(const SpaceTimeJet& jet) { return operator_value(real_blocks(jet)).F; }
double eval_F_complex(const WirtingerTable& t) { return operator_value(complex_blocks(t)).F; }

double eval_H_real(const SpaceTimeJet& jet, double ut) { return ut - eval_F_real(jet); }
double eval_H_complex(const WirtingerTable& t, double ut) { return ut - eval_F_complex(t); }

double eval_H_real(const SpaceTimeJet& jet) {
  if (!jet.has_time) throw InvalidArgument("H needs a jet carrying time derivatives");
  return eval_H_real(jet, jet.dt(1));
}

double eval_H_complex(const WirtingerTable& t) {
  if (!t.has_time) throw InvalidArgument("H needs a table carrying time derivatives");
  return eval_H_complex(t, t.dt(1).real());
}

template <class M>
static M twisted(const Blocks<M>& b) {
  const int k = b.k(), l = b.l();
  M Cinv = b.C.inverse();
  M D = b.B.adjoint();
  M W(k + l, k + l);
  W.topLeftCorner(k, k) = b.A - b.B * Cinv * D;
  W.topRightCorner(k, l) = b.B * Cinv;
  W.bottomLeftCorner(l, k) = Cinv * D;
  W.bottomRightCorner(l, l) = -Cinv;
  return W;
}

MatR twisted_W(const RealBlocks& b) { return twisted(b); }
MatC twisted_W(const ComplexBlocks& b) { return twisted(b); }

namespace {

template <class M>
void check_concave_block(const Blocks<M>& b) {
  if (b.l() == 0) return;
  // throws IllConditioned / NotPositiveDefinite
  inverse_and_logdet(SelfAdjoint<M>(M(-b.C)));
}

}  // namespace

SymmetricMatrix real_W(const SpaceTimeJet& jet) {
  const auto b = real_blocks(jet);
  check_concave_block(b);
  return SymmetricMatrix(twisted_W(b));
}

HermitianMatrix complex_W(const WirtingerTable& t) {
  const auto b = complex_blocks(t);
  check_concave_block(b);
  return HermitianMatrix(twisted_W(b));
}

template <class M>
static M lcoef(const Blocks<M>& b) {
  const int k = b.k(), l = b.l();
  M L = M::Zero(k + l, k + l);
  if (k > 0) L.topLeftCorner(k, k) = inverse_and_logdet(SelfAdjoint<M>(b.A)).inverse;
  if (l > 0) L.bottomRightCorner(l, l) = inverse_and_logdet(SelfAdjoint<M>(M(-b.C))).inverse;
  return L;
}

SymmetricMatrix real_L_coefficients(const RealBlocks& b) { return SymmetricMatrix(lcoef(b)); }
HermitianMatrix complex_L_coefficients(const ComplexBlocks& b) { return HermitianMatrix(lcoef(b)); }

double real_L_apply(const SpaceTimeJet& u, const SpaceTimeJet& phi) {
  if (u.dim() != phi.dim()) throw DimensionMismatch("u and phi live on different spaces");
  const MatR L = real_L_coefficients(real_blocks(u)).matrix();
  return (L.cwiseProduct(real_hessian(phi))).sum();
}

double complex_L_apply(const WirtingerTable& u, const WirtingerTable& phi) {
  if (u.k != phi.k || u.l != phi.l) throw DimensionMismatch("u and phi live on different spaces");
  const MatC L = complex_L_coefficients(complex_blocks(u)).matrix();
  const MatC P = complex_hessian(phi);
  // sum_{a,b} L(b,a) P(a,b)
  return (L.transpose().cwiseProduct(P)).sum().real();
}

double logdetW_equivalence_residual(const WirtingerTable& t) {
  if (!t.has_time) throw InvalidArgument("equivalence residual needs u_t");
  const double ut = t.dt(1).real();
  const auto W = complex_W(t);
  const double logdetW = std::log(W.matrix().determinant().real());
  return std::abs((ut - logdetW) - eval_H_complex(t, ut));
}

}  // namespace tma
