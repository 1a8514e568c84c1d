#pragma once

// Twisted Monge-Ampere operators on derivative tables.
//
// Block conventions.  Real: A = u_xx (k x k), B = u_xy (k x l), C = u_yy.
// Complex: A(i,j) = u_{z_i zbar_j}, B(i,j) = u_{z_i wbar_j}, C(i,j) = u_{w_i wbar_j}.
// Class members have A > 0 and C < 0.

#include "tma/jets.hpp"
#include "tma/linalg.hpp"

namespace tma {

template <class M>
struct Blocks {
  M A, B, C;
  int k() const { return static_cast<int>(A.rows()); }
  int l() const { return static_cast<int>(C.rows()); }
};
using RealBlocks = Blocks<MatR>;
using ComplexBlocks = Blocks<MatC>;

/// Full spatial Hessian in the real coordinates of the jet.
MatR real_hessian(const SpaceTimeJet& jet);
/// Complex Hessian H(i,j) = u_{zeta_i zetabar_j} over all k + l coordinates.
MatC complex_hessian(const WirtingerTable& table);

RealBlocks split_blocks(const MatR& H, int k);
ComplexBlocks split_blocks(const MatC& H, int k);
RealBlocks real_blocks(const SpaceTimeJet& jet);
ComplexBlocks complex_blocks(const WirtingerTable& table);

struct OperatorValue {
  double F = 0.0;
  double H = 0.0;
  double logdet_x = 0.0;
  double logdet_y = 0.0;
};

/// F = log det A - log det(-C).  NotPositiveDefinite when a block has the wrong sign.
OperatorValue operator_value(const RealBlocks& b, double cond_guard = 1e-10);
OperatorValue operator_value(const ComplexBlocks& b, double cond_guard = 1e-10);

double eval_F_real(const SpaceTimeJet& jet);
double eval_F_complex(const WirtingerTable& table);
/// H = u_t - F(u); u_t read from the jet's time derivative.
double eval_H_real(const SpaceTimeJet& jet);
double eval_H_complex(const WirtingerTable& table);
/// H with an explicitly supplied u_t.
double eval_H_real(const SpaceTimeJet& jet, double ut);
double eval_H_complex(const WirtingerTable& table, double ut);

/// W from blocks: [[A - B C^-1 B*, B C^-1], [C^-1 B*, -C^-1]].
MatR twisted_W(const RealBlocks& b);
MatC twisted_W(const ComplexBlocks& b);

SymmetricMatrix real_W(const SpaceTimeJet& jet);
HermitianMatrix complex_W(const WirtingerTable& table);

/// blockdiag(A^-1, -C^-1).
SymmetricMatrix real_L_coefficients(const RealBlocks& b);
HermitianMatrix complex_L_coefficients(const ComplexBlocks& b);

/// L phi = tr(A^-1 phi_xx) - tr(C^-1 phi_yy).
double real_L_apply(const SpaceTimeJet& u, const SpaceTimeJet& phi);
/// L phi = u^{zbar_b z_a} phi_{z_a zbar_b} - u^{wbar_b w_a} phi_{w_a wbar_b}.
double complex_L_apply(const WirtingerTable& u, const WirtingerTable& phi);

/// |(u_t - log det W) - H(u)|.
double logdetW_equivalence_residual(const WirtingerTable& table);

}  // namespace tma
