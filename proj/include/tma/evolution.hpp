#pragma once

// Evolution of W along the flow u_t = F(u):
//   oracle:   (d/dt - L) W by chain rule through log det W, jets of order 4;
//   formula:  the 36-term tensor Q assembled term by term;
//   checks:   (d/dt - L) W = Q,  Q <= 0,  (d/dt - L) u_t = 0.

#include <array>
#include <string>
#include <vector>

#include "tma/expression.hpp"
#include "tma/jets.hpp"
#include "tma/linalg.hpp"

namespace tma {

inline constexpr int kQTerms = 36;

enum class QBlock { ZZ, WW, ZW, WZ };

struct QTermRecord {
  int id = 0;
  QBlock block = QBlock::ZZ;
  std::string formula;
  /// largest |entry| this term contributed at the point
  double magnitude = 0.0;
};

struct QTensor {
  HermitianMatrix Q;
  /// term n (1-based) placed in its block of a (k+l)x(k+l) matrix; index 0 unused
  std::array<MatC, kQTerms + 1> terms;
  std::vector<QTermRecord> provenance;
  /// |Q_wz - Q_zw^*| before symmetrization
  double hermitian_defect = 0.0;
};

/// Cauchy-Schwarz groupings of the terms.
const std::array<std::vector<int>, 4>& q_groups();

/// Raw (unsymmetrized) sum of terms placed in blocks.
MatC raw_Q(const WirtingerTable& table);
/// Q; NotHermitian if the transcription's defect exceeds 1e-10.
QTensor assemble_Q(const WirtingerTable& table);
/// lambda_max of the Hermitian part of each group's sum.
std::array<double, 4> group_spectra(const QTensor& q);
double subsolution_spectrum(const WirtingerTable& table);

/// Table restricted to spatial variables (time dropped).
WirtingerTable spatial_table(const WirtingerTable& table);

struct EvolutionOracle {
  MatC dtW;
  MatC LW;
  /// dtW - LW
  MatC lhs;
  /// d/dt u_t - L u_t
  double heat = 0.0;
};

/// Independent computation from a table of order >= 4.
EvolutionOracle evolution_oracle(const WirtingerTable& table);

struct RealEvolutionOracle {
  MatR dtW;
  MatR LW;
  MatR lhs;
  double heat = 0.0;
};
RealEvolutionOracle real_evolution_oracle(const SpaceTimeJet& jet);

/// |(dt - L)W - Q|_inf.
double evolution_residual(const WirtingerTable& table);
double evolution_residual(const ExpressionSpec& spec, const std::vector<double>& point);

double heat_residual(const WirtingerTable& table);
/// Complex specs directly; real specs through complexify_real.
double heat_residual(const ExpressionSpec& spec, const std::vector<double>& point);

/// v(z, w) = u(Re z, Re w).
ExpressionSpec complexify_real(const ExpressionSpec& spec);
/// Embedding of a real point: imaginary parts zero.
std::vector<double> complexify_point(const std::vector<double>& point);

struct RealReduction {
  /// |W_v - D W_u D|_inf,  D = diag(1/2 I_k, 2 I_l)
  double W_residual = 0.0;
  /// |Q_v - D (dt - L) W_u D|_inf
  double Q_residual = 0.0;
  /// |F_v - F_u - (l - k) log 4|
  double F_residual = 0.0;
  /// lambda_max of the real-path (dt - L) W_u
  double real_lambda_max = 0.0;
};

RealReduction real_reduction(const ExpressionSpec& real_spec, const std::vector<double>& point);

}  // namespace tma
