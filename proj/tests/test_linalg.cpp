#include <doctest.h>

#include <cmath>
#include <random>

#include "tma/linalg.hpp"

using namespace tma;
using cdouble = std::complex<double>;

namespace {

MatR mat2(double a, double b, double c, double d) {
  MatR m(2, 2);
  m << a, b, c, d;
  return m;
}

MatR random_matrix(std::mt19937_64& rng, int r, int c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatR m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

MatC random_hermitian(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatC m(n, n);
  for (int i = 0; i < n; ++i) {
    m(i, i) = u(rng);
    for (int j = 0; j < i; ++j) {
      m(i, j) = {u(rng), u(rng)};
      m(j, i) = std::conj(m(i, j));
    }
  }
  return m;
}

}  // namespace

TEST_CASE("extremal eigenvalues") {
  SUBCASE("identity") {
    auto [lo, hi] = min_max_eigenvalues(SymmetricMatrix(MatR::Identity(2, 2)));
    CHECK(lo == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hi == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("[[1,2],[2,1]]") {
    auto [lo, hi] = min_max_eigenvalues(SymmetricMatrix(mat2(1, 2, 2, 1)));
    CHECK(std::abs(lo + 1.0) <= 1e-12 * 3);
    CHECK(std::abs(hi - 3.0) <= 1e-12 * 3);
  }
  SUBCASE("zero") {
    auto [lo, hi] = min_max_eigenvalues(SymmetricMatrix(MatR::Zero(3, 3)));
    CHECK(lo == 0.0);
    CHECK(hi == 0.0);
  }
  SUBCASE("complex Hermitian [[2, i], [-i, 2]]") {
    MatC m(2, 2);
    m << 2.0, cdouble(0, 1), cdouble(0, -1), 2.0;
    auto [lo, hi] = min_max_eigenvalues(HermitianMatrix(m));
    CHECK(std::abs(lo - 1.0) <= 1e-12);
    CHECK(std::abs(hi - 3.0) <= 1e-12);
  }
}

TEST_CASE("self-adjoint construction rejects asymmetric input") {
  CHECK_THROWS_AS(SymmetricMatrix(mat2(1, 2, 3, 1)), NotHermitian);
  MatC m(2, 2);
  m << 1.0, cdouble(0, 1), cdouble(0, 1), 1.0;
  CHECK_THROWS_AS((HermitianMatrix(m)), NotHermitian);
  CHECK(hermitian_defect(m) == doctest::Approx(2.0));
}

TEST_CASE("inverse and log-determinant") {
  SUBCASE("diag(2,3)") {
    auto r = inverse_and_logdet(SymmetricMatrix(mat2(2, 0, 0, 3)));
    CHECK(std::abs(r.inverse(0, 0) - 0.5) <= 1e-15);
    CHECK(std::abs(r.inverse(1, 1) - 1.0 / 3) <= 1e-15);
    CHECK(r.inverse(0, 1) == 0.0);
    CHECK(std::abs(r.logdet - std::log(6.0)) <= 1e-14);
  }
  SUBCASE("diag(1, 1e-13) is ill-conditioned") {
    CHECK_THROWS_AS(inverse_and_logdet(SymmetricMatrix(mat2(1, 0, 0, 1e-13))), IllConditioned);
  }
  SUBCASE("[[2,1],[1,2]]") {
    auto r = inverse_and_logdet(SymmetricMatrix(mat2(2, 1, 1, 2)));
    CHECK(std::abs(r.logdet - std::log(3.0)) <= 1e-14);
    MatR expect = mat2(2, -1, -1, 2) / 3.0;
    CHECK((r.inverse - expect).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SUBCASE("not positive definite") {
    CHECK_THROWS_AS(inverse_and_logdet(SymmetricMatrix(mat2(1, 2, 2, 1))), NotPositiveDefinite);
    CHECK_THROWS_AS(inverse_and_logdet(SymmetricMatrix(mat2(-1, 0, 0, -2))), NotPositiveDefinite);
  }
  SUBCASE("random Hermitian positive definite, n up to 8") {
    std::mt19937_64 rng(7);
    for (int n = 1; n <= kMaxMatrixDim; ++n) {
      for (int rep = 0; rep < 20; ++rep) {
        MatC h = random_hermitian(rng, n);
        MatC a = h * h.adjoint() + 0.5 * MatC::Identity(n, n);
        auto r = inverse_and_logdet(HermitianMatrix(a));
        const double defect = (a * r.inverse - MatC::Identity(n, n)).cwiseAbs().maxCoeff();
        CHECK(defect <= 1e-12 * n * std::max(1.0, a.cwiseAbs().maxCoeff()));
        const double oracle = std::log(std::abs(a.determinant()));
        CHECK(std::abs(r.logdet - oracle) <= 1e-11 * std::max(1.0, std::abs(oracle)));
      }
    }
  }
}

TEST_CASE("block determinant formula on random block matrices") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const int k = 1 + static_cast<int>(rng() % 3);
    const int l = 1 + static_cast<int>(rng() % 3);
    MatR A = random_matrix(rng, k, k), B = random_matrix(rng, k, l), C = random_matrix(rng, l, k);
    MatR D = random_matrix(rng, l, l) + 3.0 * MatR::Identity(l, l);
    MatR full(k + l, k + l);
    full.topLeftCorner(k, k) = A;
    full.topRightCorner(k, l) = B;
    full.bottomLeftCorner(l, k) = C;
    full.bottomRightCorner(l, l) = D;
    const double direct = full.determinant();
    const double formula = block_determinant(A, B, C, D);
    CHECK(std::abs(formula - direct) <= 1e-10 * std::max(1.0, std::abs(direct)));
  }
}

TEST_CASE("PSD certificates hold on random unit vectors") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  int certified = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 1 + static_cast<int>(rng() % 6);
    MatC h = random_hermitian(rng, n);
    // shift so that roughly half the draws are PSD
    auto [lo, hi] = min_max_eigenvalues(HermitianMatrix(h));
    const double shift = (rep % 2 == 0) ? -lo : -lo - 1e-3;
    MatC a = h + shift * MatC::Identity(n, n);
    HermitianMatrix H(a);
    const double tol = psd_tolerance(a);
    if (!is_psd(H, tol)) continue;
    ++certified;
    for (int v = 0; v < 100; ++v) {
      VecC x(n);
      for (int i = 0; i < n; ++i) x(i) = {g(rng), g(rng)};
      x.normalize();
      const double form = (x.adjoint() * a * x)(0, 0).real();
      CHECK(form >= -2 * tol);
    }
  }
  CHECK(certified >= 50);
}

TEST_CASE("PSD tolerance is scale-relative") {
  CHECK(psd_tolerance(MatR(MatR::Identity(2, 2))) == doctest::Approx(1e-8));
  CHECK(psd_tolerance(MatR(100.0 * MatR::Identity(2, 2))) == doctest::Approx(1e-6));
}
