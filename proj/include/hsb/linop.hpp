#pragma once

#include "hsb/collision.hpp"

#include <complex>
#include <string>

namespace hsb {

using Complex = std::complex<double>;
using Mode = Eigen::Vector3i;

/// Dense velocity-space operator acting on nodal values: (A f)_i = sum_j A_ij f_j.
struct OperatorMatrix {
  VelocityGrid grid;
  WeightSpec weight;
  Eigen::MatrixXd re;
  Eigen::MatrixXd im; // empty for real operators
  /// Optional positive diagonal D such that D^-1 A D is well scaled; dense
  /// matrix functions work in that frame. Empty means the identity.
  Eigen::VectorXd balance;

  int dim() const { return static_cast<int>(re.rows()); }
  bool is_real() const { return im.size() == 0; }
  Eigen::MatrixXcd to_complex() const;
  CGridFunction apply(const CGridFunction &f) const;
  /// Induced norm on <v - center>^{-m} L^1 with this operator's weight.
  double induced_norm() const;
};

/// max_j sum_i q_i w_out_i |A_ij| / (q_j w_in_j)
double induced_l1_norm(const Eigen::MatrixXd &A, const Eigen::VectorXd &q,
                       const Eigen::VectorXd &w_out, const Eigen::VectorXd &w_in);
double induced_l1_norm(const Eigen::MatrixXcd &A, const Eigen::VectorXd &q,
                       const Eigen::VectorXd &w_out, const Eigen::VectorXd &w_in);

/// Closed-form kernels for T = 1/2, mu = 0 (M proportional to exp(-|v|^2)).
double k1_kernel(const Vec3 &v, const Vec3 &u);  // pi exp(-|v|^2) |u - v|
double k23_kernel(const Vec3 &v, const Vec3 &u); // 2 pi |u - v|^-1 exp(-((u - v).v)^2 / |u - v|^2)

/// Integral of 1/|x| over the box [0,a] x [0,b] x [0,c].
double inverse_distance_box_integral(double a, double b, double c);

/// Closed-form K = K1 - (K2 + K3) with q_u folded into the columns. The
/// self-entries of the K2 + K3 part use the cell average of |w|^-1 times the
/// angular mean of the exponential factor.
OperatorMatrix assemble_k_closed_form(const MaxwellParams &p, const VelocityGrid &grid,
                                      const WeightSpec &weight = {});

struct ClosedFormParts {
  Eigen::MatrixXd k1, k23; // K = k1 - k23
};
ClosedFormParts assemble_k_closed_form_parts(const MaxwellParams &p, const VelocityGrid &grid);

/// Matrix-free K f = K1 f - (K2 + K3) f by the sphere-and-velocity quadrature
/// of the collision operator, linearized about cfg.reference.
GridFunction apply_k_spherical(const GridFunction &f, const MaxwellParams &p,
                               const CollisionConfig &cfg);

/// K1 part of the spherical K as a dense matrix: M(v) S |u - v| q_u.
Eigen::MatrixXd assemble_k1_spherical(const GainQuadrature &gain);

/// Linearization of the discrete collision operator about cfg.reference:
///   L0 = diag(nu_h) + Kc,  Kc = K - P (nu_h + K),  K = K1 - (K2 + K3)
/// so that the range of L0 carries no mass, momentum or energy. The same Kc
/// enters every mode operator L_n = L0 + i diag(n.v).
class LinearizedOperator {
public:
  explicit LinearizedOperator(const CollisionConfig &cfg);

  const CollisionConfig &config() const { return op_.config(); }
  const VelocityGrid &grid() const { return op_.config().grid; }
  const MaxwellParams &params() const { return op_.config().reference; }
  const CollisionOperator &collision() const { return op_; }
  const ProjectionP &projection() const { return op_.projection(); }

  const GridFunction &nu() const { return nu_; }
  /// Conservative kernel Kc.
  const Eigen::MatrixXd &k() const { return k_; }
  /// K f without the conservative correction.
  GridFunction apply_k_raw(const GridFunction &f) const;

  OperatorMatrix k_matrix(const WeightSpec &w = {}) const;
  OperatorMatrix ln(const Mode &n, const WeightSpec &w = {}) const;
  /// Diagonal part nu + i n.v of L_n.
  CGridFunction diagonal(const Mode &n) const;

  GridFunction apply_l0(const GridFunction &f) const;
  CGridFunction apply_ln(const Mode &n, const CGridFunction &f) const;

  /// max over the null basis of ||L0 b|| / ||nu b|| (L^1); raw uses K without correction.
  double null_residual() const;
  double null_residual_raw() const;

private:
  CollisionOperator op_;
  GridFunction nu_;
  Eigen::MatrixXd k_;
  Eigen::MatrixXd correction_; // 5 x N: K = Kc + B correction_
};

OperatorMatrix assemble_ln(const Mode &n, const LinearizedOperator &L, const WeightSpec &w = {});

/// K_{zeta,n} = Kc diag(1 / (nu + i n.v - zeta)).
OperatorMatrix assemble_k_zeta_n(Complex zeta, const Mode &n, const LinearizedOperator &L,
                                 const WeightSpec &w = {});

/// Gaussian test functions exp(-|v - c|^2 / 2 s^2), reproducible from a seed.
std::vector<GridFunction> gaussian_test_functions(const VelocityGrid &grid, int count,
                                                  std::uint64_t seed);

struct KernelCrossCheck {
  double constant = 0.0;      // spherical ~ constant * closed form
  double max_deviation = 0.0; // max over tests of ||Ks f - c Kcf f|| / ||Ks f||
  std::vector<double> deviations;
};

/// Least-squares constant linking the spherical and closed-form K on test functions.
KernelCrossCheck cross_validate_kernels(const std::vector<GridFunction> &spherical,
                                        const std::vector<GridFunction> &closed,
                                        const VelocityGrid &grid);

/// Empirical Upsilon_m: max over samples of ||<v>^m K f|| / ||<v>^{m+1} f||, and the
/// exact induced norm of <v>^m K <v>^{-m-1}.
struct UpsilonEstimate {
  double m = 0.0;
  double sampled = 0.0;
  double induced = 0.0;
};
UpsilonEstimate upsilon(const Eigen::MatrixXd &K, const VelocityGrid &grid, double m,
                        int samples, std::uint64_t seed);

/// Row-major (re, im) dumps. The binary form is an int64 dimension followed by
/// dim * dim pairs of little-endian float64.
void write_operator_csv(const std::string &path, const OperatorMatrix &A);
void write_operator_binary(const std::string &path, const OperatorMatrix &A);
OperatorMatrix read_operator_binary(const std::string &path, const VelocityGrid &grid);

} // namespace hsb
