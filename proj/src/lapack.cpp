#include "hsb/lapack.hpp"
#include "hsb/errors.hpp"

#include <cstdlib>
#include <string>

using dcomplex = std::complex<double>;

extern "C" {
void dgeev_(const char *jobvl, const char *jobvr, const int *n, double *a, const int *lda,
            double *wr, double *wi, double *vl, const int *ldvl, double *vr, const int *ldvr,
            double *work, const int *lwork, int *info);
void zgeev_(const char *jobvl, const char *jobvr, const int *n, dcomplex *a, const int *lda,
            dcomplex *w, dcomplex *vl, const int *ldvl, dcomplex *vr, const int *ldvr,
            dcomplex *work, const int *lwork, double *rwork, int *info);
void dgetrf_(const int *m, const int *n, double *a, const int *lda, int *ipiv, int *info);
void dgetrs_(const char *trans, const int *n, const int *nrhs, const double *a, const int *lda,
             const int *ipiv, double *b, const int *ldb, int *info);
void zgetrf_(const int *m, const int *n, dcomplex *a, const int *lda, int *ipiv, int *info);
void zgetrs_(const char *trans, const int *n, const int *nrhs, const dcomplex *a, const int *lda,
             const int *ipiv, dcomplex *b, const int *ldb, int *info);
}

namespace {

// The AVX-512 level-1/2 kernels of the OpenBLAS build shipped with the target
// distribution corrupt Householder reflectors on matrices with entries spanning
// many decades, which stalls the QR iteration. Selecting the AVX2 kernel family
// before the statically linked library initializes avoids them; an explicit
// OPENBLAS_CORETYPE in the environment is respected.
__attribute__((constructor(101))) void select_blas_kernels() {
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2")) setenv("OPENBLAS_CORETYPE", "Haswell", 0);
}

} // namespace

namespace hsb::lapack {

Eigen::VectorXcd eigenvalues(Eigen::MatrixXd A) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n) throw ValidationError("eigenvalues: matrix is not square");
  if (n == 0) return {};
  std::vector<double> wr(n), wi(n);
  int one = 1, info = 0, lwork = -1;
  double query = 0.0;
  dgeev_("N", "N", &n, A.data(), &n, wr.data(), wi.data(), nullptr, &one, nullptr, &one, &query,
         &lwork, &info);
  lwork = static_cast<int>(query);
  std::vector<double> work(lwork);
  dgeev_("N", "N", &n, A.data(), &n, wr.data(), wi.data(), nullptr, &one, nullptr, &one,
         work.data(), &lwork, &info);
  if (info != 0) throw NumericalError("dgeev failed to converge, info = " + std::to_string(info));
  Eigen::VectorXcd ev(n);
  for (int i = 0; i < n; ++i) ev[i] = {wr[i], wi[i]};
  return ev;
}

Eigen::VectorXcd eigenvalues(Eigen::MatrixXcd A) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n) throw ValidationError("eigenvalues: matrix is not square");
  if (n == 0) return {};
  Eigen::VectorXcd w(n);
  std::vector<double> rwork(2 * n);
  int one = 1, info = 0, lwork = -1;
  dcomplex query;
  zgeev_("N", "N", &n, A.data(), &n, w.data(), nullptr, &one, nullptr, &one, &query, &lwork,
         rwork.data(), &info);
  lwork = static_cast<int>(query.real());
  std::vector<dcomplex> work(lwork);
  zgeev_("N", "N", &n, A.data(), &n, w.data(), nullptr, &one, nullptr, &one, work.data(), &lwork,
         rwork.data(), &info);
  if (info != 0) throw NumericalError("zgeev failed to converge, info = " + std::to_string(info));
  return w;
}

RealLU::RealLU(Eigen::MatrixXd A) : lu_(std::move(A)) {
  const int n = static_cast<int>(lu_.rows());
  if (lu_.cols() != n) throw ValidationError("LU: matrix is not square");
  piv_.resize(n);
  dgetrf_(&n, &n, lu_.data(), &n, piv_.data(), &info_);
}

Eigen::MatrixXd RealLU::solve(const Eigen::MatrixXd &B) const {
  if (singular()) throw NumericalError("LU: matrix is exactly singular");
  Eigen::MatrixXd X = B;
  const int n = static_cast<int>(lu_.rows()), nrhs = static_cast<int>(B.cols());
  int info = 0;
  dgetrs_("N", &n, &nrhs, lu_.data(), &n, piv_.data(), X.data(), &n, &info);
  return X;
}

ComplexLU::ComplexLU(Eigen::MatrixXcd A) : lu_(std::move(A)) {
  const int n = static_cast<int>(lu_.rows());
  if (lu_.cols() != n) throw ValidationError("LU: matrix is not square");
  piv_.resize(n);
  zgetrf_(&n, &n, lu_.data(), &n, piv_.data(), &info_);
}

Eigen::MatrixXcd ComplexLU::solve(const Eigen::MatrixXcd &B) const {
  if (singular()) throw NumericalError("LU: matrix is exactly singular");
  Eigen::MatrixXcd X = B;
  const int n = static_cast<int>(lu_.rows()), nrhs = static_cast<int>(B.cols());
  int info = 0;
  zgetrs_("N", &n, &nrhs, lu_.data(), &n, piv_.data(), X.data(), &n, &info);
  return X;
}

} // namespace hsb::lapack
