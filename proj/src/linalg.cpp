#include "tma/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tma {

namespace {

template <class M>
double max_abs(const M& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

template <class M>
double defect(const M& a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("matrix not square");
  return max_abs(M(a - a.adjoint()));
}

template <class M>
std::pair<double, double> extremes(const M& a) {
  if (a.rows() == 0) throw DimensionMismatch("empty matrix");
  Eigen::SelfAdjointEigenSolver<M> es(a, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

template <class M>
InverseLogdet<M> inv_logdet(const M& a, double guard) {
  const auto [lo, hi] = extremes(a);
  if (!(lo > 0.0)) throw NotPositiveDefinite("matrix not positive definite (lambda_min = " + std::to_string(lo) + ")");
  if (lo / hi < guard)
    throw IllConditioned("condition ratio " + std::to_string(lo / hi) + " below guard " + std::to_string(guard));
  Eigen::LLT<M> llt(a);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("Cholesky factorization failed");
  InverseLogdet<M> out;
  const M I = M::Identity(a.rows(), a.cols());
  out.inverse = llt.solve(I);
  out.inverse = (0.5 * (out.inverse + out.inverse.adjoint())).eval();
  double ld = 0.0;
  const auto& L = llt.matrixLLT();
  for (Eigen::Index i = 0; i < a.rows(); ++i) ld += 2.0 * std::log(std::real(L(i, i)));
  out.logdet = ld;
  return out;
}

template <class M>
double psd_tol(const M& a) {
  double norm = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) norm = std::max(norm, a.row(i).cwiseAbs().sum());
  return 1e-8 * std::max(1.0, norm);
}

}  // namespace

template <class M>
SelfAdjoint<M>::SelfAdjoint(const M& a, double tol) {
  const double d = defect(a);
  if (d > tol * std::max(1.0, max_abs(a)))
    throw NotHermitian("matrix not self-adjoint (defect " + std::to_string(d) + ")");
  m_ = 0.5 * (a + a.adjoint());
  for (Eigen::Index i = 0; i < m_.rows(); ++i) m_(i, i) = std::real(m_(i, i));
}

template class SelfAdjoint<MatC>;
template class SelfAdjoint<MatR>;

double hermitian_defect(const MatC& a) { return defect(a); }
double hermitian_defect(const MatR& a) { return defect(a); }

std::pair<double, double> min_max_eigenvalues(const HermitianMatrix& a) { return extremes(a.matrix()); }
std::pair<double, double> min_max_eigenvalues(const SymmetricMatrix& a) { return extremes(a.matrix()); }

InverseLogdet<MatC> inverse_and_logdet(const HermitianMatrix& a, double g) { return inv_logdet(a.matrix(), g); }
InverseLogdet<MatR> inverse_and_logdet(const SymmetricMatrix& a, double g) { return inv_logdet(a.matrix(), g); }

double psd_tolerance(const MatC& a) { return psd_tol(a); }
double psd_tolerance(const MatR& a) { return psd_tol(a); }

bool is_psd(const HermitianMatrix& a, double tol) { return min_max_eigenvalues(a).first >= -tol; }
bool is_psd(const SymmetricMatrix& a, double tol) { return min_max_eigenvalues(a).first >= -tol; }

double block_determinant(const MatR& A, const MatR& B, const MatR& C, const MatR& D) {
  Eigen::PartialPivLU<MatR> lu(D);
  const MatR schur = A - B * lu.solve(C);
  return lu.determinant() * schur.determinant();
}

}  // namespace tma
