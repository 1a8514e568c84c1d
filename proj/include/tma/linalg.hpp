#pragma once

// Small dense self-adjoint matrices (n <= 8) backed by Eigen.

#include <complex>
#include <utility>

#include <Eigen/Dense>

#include "tma/errors.hpp"

namespace tma {

inline constexpr int kMaxMatrixDim = 8;

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxMatrixDim, kMaxMatrixDim>;
using MatC = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxMatrixDim,
                           kMaxMatrixDim>;
using VecR = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxMatrixDim, 1>;
using VecC = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxMatrixDim, 1>;

/// Self-adjoint matrix.  Construction checks |A - A*| against `tol` times the
/// entry scale, throws NotHermitian on failure, then symmetrizes exactly.
template <class M>
class SelfAdjoint {
 public:
  using Matrix = M;
  using Scalar = typename M::Scalar;

  SelfAdjoint() = default;
  explicit SelfAdjoint(const M& a, double tol = 1e-12);

  int dim() const { return static_cast<int>(m_.rows()); }
  const M& matrix() const { return m_; }
  Scalar operator()(int i, int j) const { return m_(i, j); }

 private:
  M m_;
};

using HermitianMatrix = SelfAdjoint<MatC>;
using SymmetricMatrix = SelfAdjoint<MatR>;

extern template class SelfAdjoint<MatC>;
extern template class SelfAdjoint<MatR>;

/// Largest |A_ij - conj(A_ji)|.
double hermitian_defect(const MatC& a);
double hermitian_defect(const MatR& a);

std::pair<double, double> min_max_eigenvalues(const HermitianMatrix& a);
std::pair<double, double> min_max_eigenvalues(const SymmetricMatrix& a);

template <class M>
struct InverseLogdet {
  M inverse;
  double logdet = 0.0;
};

/// Cholesky inverse and log-determinant of a positive definite matrix.
InverseLogdet<MatC> inverse_and_logdet(const HermitianMatrix& a, double cond_guard = 1e-10);
InverseLogdet<MatR> inverse_and_logdet(const SymmetricMatrix& a, double cond_guard = 1e-10);

/// Scale-relative PSD tolerance 1e-8 * max(1, |A|_inf).
double psd_tolerance(const MatC& a);
double psd_tolerance(const MatR& a);

/// lambda_min(A) >= -tol.
bool is_psd(const HermitianMatrix& a, double tol);
bool is_psd(const SymmetricMatrix& a, double tol);

/// det of [[A, B], [C, D]] via det(D) det(A - B D^-1 C).
double block_determinant(const MatR& A, const MatR& B, const MatR& C, const MatR& D);

}  // namespace tma
