#include "hsb/linop.hpp"

#include "hsb/errors.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>

namespace hsb {

namespace {

constexpr double kPi = std::numbers::pi;

template <class Mat>
double induced_impl(const Mat &A, const Eigen::VectorXd &q, const Eigen::VectorXd &w_out,
                    const Eigen::VectorXd &w_in) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || q.size() != n || w_out.size() != n || w_in.size() != n)
    throw ValidationError("induced norm: dimension mismatch");
  const Eigen::VectorXd row_w = q.cwiseProduct(w_out);
  double best = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double s = row_w.dot(A.col(j).cwiseAbs());
    best = std::max(best, s / (q[j] * w_in[j]));
  }
  return best;
}

} // namespace

Eigen::MatrixXcd OperatorMatrix::to_complex() const {
  Eigen::MatrixXcd A(re.rows(), re.cols());
  if (is_real())
    A = re.cast<Complex>();
  else {
    A.real() = re;
    A.imag() = im;
  }
  return A;
}

CGridFunction OperatorMatrix::apply(const CGridFunction &f) const {
  if (f.size() != dim()) throw ValidationError("operator dimension does not match field");
  const Eigen::VectorXd fr = f.real(), fi = f.imag();
  CGridFunction out(dim());
  if (is_real()) {
    out.real() = re * fr;
    out.imag() = re * fi;
  } else {
    out.real() = re * fr - im * fi;
    out.imag() = re * fi + im * fr;
  }
  return out;
}

double OperatorMatrix::induced_norm() const {
  const Eigen::VectorXd w = weight_values(weight, grid);
  if (is_real()) return induced_l1_norm(re, grid.quad_weights, w, w);
  return induced_l1_norm(to_complex(), grid.quad_weights, w, w);
}

double induced_l1_norm(const Eigen::MatrixXd &A, const Eigen::VectorXd &q,
                       const Eigen::VectorXd &w_out, const Eigen::VectorXd &w_in) {
  return induced_impl(A, q, w_out, w_in);
}

double induced_l1_norm(const Eigen::MatrixXcd &A, const Eigen::VectorXd &q,
                       const Eigen::VectorXd &w_out, const Eigen::VectorXd &w_in) {
  return induced_impl(A, q, w_out, w_in);
}

double k1_kernel(const Vec3 &v, const Vec3 &u) {
  return kPi * std::exp(-v.squaredNorm()) * (u - v).norm();
}

double k23_kernel(const Vec3 &v, const Vec3 &u) {
  const Vec3 w = u - v;
  const double r2 = w.squaredNorm();
  if (r2 == 0.0) throw ValidationError("k23_kernel is singular at u = v");
  const double wv = w.dot(v);
  return 2.0 * kPi / std::sqrt(r2) * std::exp(-wv * wv / r2);
}

double inverse_distance_box_integral(double a, double b, double c) {
  if (!(a > 0.0 && b > 0.0 && c > 0.0)) throw ValidationError("box sides must be positive");
  const double r = std::sqrt(a * a + b * b + c * c);
  return b * c * std::log((a + r) / std::hypot(b, c)) + a * c * std::log((b + r) / std::hypot(a, c)) +
         a * b * std::log((c + r) / std::hypot(a, b)) - 0.5 * a * a * std::atan(b * c / (a * r)) -
         0.5 * b * b * std::atan(a * c / (b * r)) - 0.5 * c * c * std::atan(a * b / (c * r));
}

ClosedFormParts assemble_k_closed_form_parts(const MaxwellParams &p, const VelocityGrid &grid) {
  validate(p);
  if (std::abs(p.T - 0.5) > 1e-14 || p.mu.norm() > 1e-14)
    throw ValidationError("closed-form kernels are stated for T = 1/2, mu = 0 only");
  const int N = grid.size();
  const double h = grid.spacing;
  const double cell_avg = 8.0 * inverse_distance_box_integral(h / 2, h / 2, h / 2) / (h * h * h);
  ClosedFormParts parts;
  parts.k1.resize(N, N);
  parts.k23.resize(N, N);
  for (int j = 0; j < N; ++j) {
    const Vec3 u = grid.nodes.col(j);
    const double q = grid.quad_weights[j];
    for (int i = 0; i < N; ++i) {
      const Vec3 v = grid.nodes.col(i);
      double k23;
      if (i == j) {
        // angular mean of exp(-|v|^2 cos^2) over the sphere
        const double s = v.norm();
        const double ang = s < 1e-12 ? 1.0 : std::sqrt(kPi) * std::erf(s) / (2.0 * s);
        k23 = 2.0 * kPi * cell_avg * ang;
      } else {
        k23 = k23_kernel(v, u);
      }
      parts.k1(i, j) = q * k1_kernel(v, u);
      parts.k23(i, j) = q * k23;
    }
  }
  return parts;
}

OperatorMatrix assemble_k_closed_form(const MaxwellParams &p, const VelocityGrid &grid,
                                      const WeightSpec &weight) {
  ClosedFormParts parts = assemble_k_closed_form_parts(p, grid);
  OperatorMatrix A;
  A.grid = grid;
  A.weight = weight;
  A.re = std::move(parts.k1);
  A.re -= parts.k23;
  return A;
}

GridFunction apply_k_spherical(const GridFunction &f, const MaxwellParams &p,
                               const CollisionConfig &cfg) {
  GainQuadrature gq(cfg.grid, cfg.sphere, Interpolation::Quadratic, p);
  const GridFunction M = maxwellian_on_grid(p, cfg.grid);
  ExitStats stats;
  const std::vector<const GridFunction *> fields{&M, &f};
  const std::vector<GainProduct> prod{{0, 0, 1, 1.0}, {0, 1, 0, 1.0}};
  const GridFunction gain = gq.gains(fields, prod, 1, &stats)[0];
  if (stats.fraction() > cfg.max_exit_fraction)
    throw NumericalError("post-collision velocities leave the box in " +
                         std::to_string(stats.fraction()) + " of stencil evaluations");
  return M.cwiseProduct(gq.speed_convolution(f)) - gain;
}

Eigen::MatrixXd assemble_k1_spherical(const GainQuadrature &gain) {
  const auto &g = gain.grid();
  const int N = g.size();
  const GridFunction M = maxwellian_on_grid(gain.reference(), g);
  const double S = gain.sphere_abs_moment();
  Eigen::MatrixXd K1(N, N);
  for (int j = 0; j < N; ++j) {
    const Vec3 u = g.nodes.col(j);
    const double qs = g.quad_weights[j] * S;
    for (int i = 0; i < N; ++i) K1(i, j) = M[i] * qs * (u - g.nodes.col(i)).norm();
  }
  return K1;
}

LinearizedOperator::LinearizedOperator(const CollisionConfig &cfg) : op_(cfg) {
  const auto &gq = op_.gain();
  const auto &g = grid();
  const int N = g.size();
  nu_ = gq.speed_convolution(maxwellian_on_grid(params(), g));
  // K = K1 - gain, built in the storage of the gain matrix
  k_ = gq.linear_gain_matrix();
  const GridFunction M = maxwellian_on_grid(params(), g);
  const double S = gq.sphere_abs_moment();
  for (int j = 0; j < N; ++j) {
    const Vec3 u = g.nodes.col(j);
    const double qs = g.quad_weights[j] * S;
    for (int i = 0; i < N; ++i) k_(i, j) = M[i] * qs * (u - g.nodes.col(i)).norm() - k_(i, j);
  }
  if (cfg.conservative) {
    const auto &P = projection();
    Eigen::MatrixXd CK = P.C * k_;
    CK += P.C * nu_.asDiagonal();
    correction_ = P.gram_inverse * CK;
    k_.noalias() -= P.B * correction_;
  } else {
    correction_ = Eigen::MatrixXd::Zero(5, N);
  }
}

GridFunction LinearizedOperator::apply_k_raw(const GridFunction &f) const {
  return k_ * f + projection().B * (correction_ * f);
}

OperatorMatrix LinearizedOperator::k_matrix(const WeightSpec &w) const {
  OperatorMatrix A;
  A.grid = grid();
  A.weight = w;
  A.re = k_;
  A.balance = maxwellian_on_grid(params(), grid());
  return A;
}

CGridFunction LinearizedOperator::diagonal(const Mode &n) const {
  const auto &g = grid();
  CGridFunction d(g.size());
  const Vec3 nn = n.cast<double>();
  for (int i = 0; i < g.size(); ++i) d[i] = {nu_[i], nn.dot(g.nodes.col(i))};
  return d;
}

OperatorMatrix LinearizedOperator::ln(const Mode &n, const WeightSpec &w) const {
  OperatorMatrix A = k_matrix(w);
  A.re.diagonal() += nu_;
  if (n != Mode::Zero()) {
    A.im = Eigen::MatrixXd::Zero(A.dim(), A.dim());
    A.im.diagonal() = diagonal(n).imag();
  }
  return A;
}

GridFunction LinearizedOperator::apply_l0(const GridFunction &f) const {
  return nu_.cwiseProduct(f) + k_ * f;
}

CGridFunction LinearizedOperator::apply_ln(const Mode &n, const CGridFunction &f) const {
  const Eigen::VectorXd fr = f.real(), fi = f.imag();
  CGridFunction out(f.size());
  out.real() = k_ * fr;
  out.imag() = k_ * fi;
  return out + diagonal(n).cwiseProduct(f);
}

double LinearizedOperator::null_residual() const {
  const auto &g = grid();
  const WeightSpec w0;
  double worst = 0.0;
  for (const auto &b : projection().basis.b)
    worst = std::max(worst, weighted_l1_norm(apply_l0(b), w0, g) /
                                weighted_l1_norm(GridFunction(nu_.cwiseProduct(b)), w0, g));
  return worst;
}

double LinearizedOperator::null_residual_raw() const {
  const auto &g = grid();
  const WeightSpec w0;
  double worst = 0.0;
  for (const auto &b : projection().basis.b) {
    const GridFunction r = nu_.cwiseProduct(b) + apply_k_raw(b);
    worst = std::max(worst, weighted_l1_norm(r, w0, g) /
                                weighted_l1_norm(GridFunction(nu_.cwiseProduct(b)), w0, g));
  }
  return worst;
}

OperatorMatrix assemble_ln(const Mode &n, const LinearizedOperator &L, const WeightSpec &w) {
  return L.ln(n, w);
}

OperatorMatrix assemble_k_zeta_n(Complex zeta, const Mode &n, const LinearizedOperator &L,
                                 const WeightSpec &w) {
  const CGridFunction d = L.diagonal(n);
  const int N = static_cast<int>(d.size());
  Eigen::VectorXcd inv(N);
  for (int i = 0; i < N; ++i) {
    const Complex r = d[i] - zeta;
    if (std::abs(r) < 1e-12)
      throw NumericalError("zeta lies on the multiplication spectrum nu + i n.v at node " +
                           std::to_string(i));
    inv[i] = 1.0 / r;
  }
  OperatorMatrix A;
  A.grid = L.grid();
  A.weight = w;
  A.balance = maxwellian_on_grid(L.params(), L.grid());
  A.re = L.k() * inv.real().asDiagonal();
  A.im = L.k() * inv.imag().asDiagonal();
  return A;
}

std::vector<GridFunction> gaussian_test_functions(const VelocityGrid &grid, int count,
                                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> centre(-1.0, 1.0), width(0.7, 1.4);
  std::vector<GridFunction> out;
  for (int k = 0; k < count; ++k) {
    const Vec3 c(centre(rng), centre(rng), centre(rng));
    const double s = width(rng);
    GridFunction f(grid.size());
    for (int i = 0; i < grid.size(); ++i)
      f[i] = std::exp(-(grid.nodes.col(i) - c).squaredNorm() / (2.0 * s * s));
    out.push_back(std::move(f));
  }
  return out;
}

KernelCrossCheck cross_validate_kernels(const std::vector<GridFunction> &spherical,
                                        const std::vector<GridFunction> &closed,
                                        const VelocityGrid &grid) {
  if (spherical.size() != closed.size() || spherical.empty())
    throw ValidationError("cross-validation needs matching nonempty sample lists");
  const auto &q = grid.quad_weights;
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < spherical.size(); ++k) {
    num += (q.array() * spherical[k].array() * closed[k].array()).sum();
    den += (q.array() * closed[k].array().square()).sum();
  }
  KernelCrossCheck r;
  r.constant = num / den;
  const WeightSpec w0;
  for (std::size_t k = 0; k < spherical.size(); ++k) {
    const GridFunction d = spherical[k] - r.constant * closed[k];
    r.deviations.push_back(weighted_l1_norm(d, w0, grid) / weighted_l1_norm(spherical[k], w0, grid));
    r.max_deviation = std::max(r.max_deviation, r.deviations.back());
  }
  return r;
}

UpsilonEstimate upsilon(const Eigen::MatrixXd &K, const VelocityGrid &grid, double m,
                        int samples, std::uint64_t seed) {
  UpsilonEstimate u;
  u.m = m;
  const Eigen::VectorXd wm = weight_values({m, Vec3::Zero()}, grid);
  const Eigen::VectorXd wm1 = weight_values({m + 1.0, Vec3::Zero()}, grid);
  u.induced = induced_l1_norm(K, grid.quad_weights, wm, wm1);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> width(0.4, 1.5);
  for (int s = 0; s < samples; ++s) {
    // random signed Gaussian bumps
    const Vec3 c(normal(rng), normal(rng), normal(rng));
    const double sig = width(rng), amp = normal(rng);
    GridFunction f(grid.size());
    for (int i = 0; i < grid.size(); ++i)
      f[i] = amp * std::exp(-(grid.nodes.col(i) - c).squaredNorm() / (2 * sig * sig));
    const GridFunction Kf = K * f;
    const double r = weighted_l1_norm(Kf, {m, Vec3::Zero()}, grid) /
                     weighted_l1_norm(f, {m + 1.0, Vec3::Zero()}, grid);
    u.sampled = std::max(u.sampled, r);
  }
  return u;
}

void write_operator_csv(const std::string &path, const OperatorMatrix &A) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "row,col,re,im\n" << std::setprecision(17);
  for (int i = 0; i < A.dim(); ++i)
    for (int j = 0; j < A.dim(); ++j)
      out << i << ',' << j << ',' << A.re(i, j) << ',' << (A.is_real() ? 0.0 : A.im(i, j)) << '\n';
}

void write_operator_binary(const std::string &path, const OperatorMatrix &A) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  const std::int64_t n = A.dim();
  out.write(reinterpret_cast<const char *>(&n), sizeof n);
  for (int i = 0; i < A.dim(); ++i)
    for (int j = 0; j < A.dim(); ++j) {
      const double pair[2] = {A.re(i, j), A.is_real() ? 0.0 : A.im(i, j)};
      out.write(reinterpret_cast<const char *>(pair), sizeof pair);
    }
}

OperatorMatrix read_operator_binary(const std::string &path, const VelocityGrid &grid) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::int64_t n = 0;
  in.read(reinterpret_cast<char *>(&n), sizeof n);
  if (n != grid.size()) throw ValidationError("operator dump does not match the grid");
  OperatorMatrix A;
  A.grid = grid;
  A.re.resize(n, n);
  A.im.resize(n, n);
  bool any_imag = false;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double pair[2];
      in.read(reinterpret_cast<char *>(pair), sizeof pair);
      A.re(i, j) = pair[0];
      A.im(i, j) = pair[1];
      any_imag = any_imag || pair[1] != 0.0;
    }
  if (!in) throw std::runtime_error("truncated operator dump " + path);
  if (!any_imag) A.im.resize(0, 0);
  return A;
}

} // namespace hsb
