#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace hsb::lapack {

/// All eigenvalues of a general real matrix (dgeev, no vectors).
Eigen::VectorXcd eigenvalues(Eigen::MatrixXd A);
/// All eigenvalues of a general complex matrix (zgeev, no vectors).
Eigen::VectorXcd eigenvalues(Eigen::MatrixXcd A);

/// Dense LU factorization with partial pivoting (getrf), reusable for solves.
class RealLU {
public:
  explicit RealLU(Eigen::MatrixXd A);
  Eigen::MatrixXd solve(const Eigen::MatrixXd &B) const;
  bool singular() const { return info_ > 0; }

private:
  Eigen::MatrixXd lu_;
  std::vector<int> piv_;
  int info_ = 0;
};

class ComplexLU {
public:
  explicit ComplexLU(Eigen::MatrixXcd A);
  Eigen::MatrixXcd solve(const Eigen::MatrixXcd &B) const;
  bool singular() const { return info_ > 0; }

private:
  Eigen::MatrixXcd lu_;
  std::vector<int> piv_;
  int info_ = 0;
};

} // namespace hsb::lapack
