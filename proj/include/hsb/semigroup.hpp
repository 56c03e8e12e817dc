#pragma once

#include "hsb/spectra.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hsb {

enum class ExpMethod {
  Dense, // scaling and squaring on the dense matrix
  Ode,   // adaptive Dormand-Prince integration of du/dt = -A u
};

/// e^{-tA} f. Both methods work in the balanced frame of A when one is set.
CGridFunction semigroup_apply(const OperatorMatrix &A, double t, const CGridFunction &f,
                              ExpMethod method = ExpMethod::Dense, double tol = 1e-12);

/// Repeated application of E = e^{-dt A} for norm curves on a uniform time grid.
class Propagator {
public:
  Propagator(const OperatorMatrix &A, double dt);
  double dt() const { return dt_; }
  CGridFunction step(const CGridFunction &f) const;

private:
  double dt_;
  Eigen::VectorXd d_; // balance
  Eigen::MatrixXcd E_;
};

struct NormCurve {
  std::vector<double> t;
  std::vector<double> norm;
};

/// ||e^{-t A} f|| in the given weighted L^1 norm at t = 0, dt, ..., steps * dt.
NormCurve semigroup_norm_curve(const OperatorMatrix &A, const CGridFunction &f, double dt,
                               int steps, const WeightSpec &w);

struct ContourOptions {
  int refine = 0;
  int order = 16;         // Gauss-Legendre points per panel
  double tail_tol = 1e-14;
  double t_min = 0.5;
  double truncation_tol = 1e-6; // allowed ray-tail estimate relative to the result
};

struct ContourResult {
  CGridFunction value;
  int nodes = 0;
  double tail_estimate = 0.0;
};

/// (1 / 2 pi i) sum over the contour of e^{-t zeta} (zeta - A)^-1 f, with f
/// replaced by (1 - P) f when a projection is given. `spectrum` grades the
/// panels and is computed when empty.
ContourResult contour_semigroup(const OperatorMatrix &A, const ContourGamma &gamma,
                                const ProjectionP *P, double t, const CGridFunction &f,
                                const ContourOptions &opt = {},
                                std::vector<Complex> spectrum = {});

/// Duhamel terms A_0(t) = e^{-t(nu + i n.v)} and
/// A_k(t) = int_0^t A_0(t - s) K A_{k-1}(s) ds, so that e^{-t L_n} = sum (-1)^k A_k(t).
struct DuhamelLedger {
  Mode n = Mode::Zero();
  int k_max = 0;
  WeightSpec weight;
  std::vector<double> t;
  std::vector<std::vector<double>> norms; // norms[k][j] = ||<v>^m A_k(t_j) f||
  std::vector<CGridFunction> terms_at_end; // A_k(t_end) f
  int intervals = 0;                       // final time-grid resolution
};

struct DuhamelOptions {
  int k_max = 3;
  int initial_intervals = 64;
  int max_intervals = 1 << 16;
  double tol = 1e-8; // relative change of the terms under interval doubling
};

DuhamelLedger duhamel_ledger(const LinearizedOperator &L, const Mode &n, double t_end,
                             const CGridFunction &f, const WeightSpec &w,
                             const DuhamelOptions &opt = {});

/// A_k(t) f for a single k.
CGridFunction duhamel_term(int k, const Mode &n, double t, const CGridFunction &f,
                           const LinearizedOperator &L, const DuhamelOptions &opt = {});

/// Oscillation operator K e^{-t(nu + i n.v)} K with the closed-form kernel,
/// v and u on a coarse lattice and the intermediate velocity on a lattice that
/// is refined along the mode direction to resolve the phase e^{-i t n.w}.
class OscillationKernel {
public:
  struct Options {
    int outer_points = 9;      // v and u lattice per axis
    int inner_points = 9;      // intermediate lattice across the mode direction
    int inner_fine = 201;      // intermediate lattice along the mode direction
    double extent = 4.5;
    double constant = 1.0;     // scale of the closed-form kernel
    WeightSpec weight;         // output weight <v>^m; the input carries <v>^{m+3}
  };

  OscillationKernel(const Vec3 &direction, const Options &opt);
  /// Induced norm of K e^{-t(nu + i n.w)} K from <v>^{m+3} L^1 to <v>^m L^1,
  /// for n = s * direction.
  double norm(double s, double t) const;
  const VelocityGrid &outer() const { return outer_; }

private:
  Options opt_;
  Vec3 dir_;
  VelocityGrid outer_;
  Eigen::MatrixXd left_, right_; // K(v, w) q_w and K(w, u) q_u
  Eigen::VectorXd nu_w_, along_; // nu and direction . w on the intermediate nodes
  Eigen::VectorXd w_out_, w_in_;
};

double oscillation_norm(const Mode &n, double t, const OscillationKernel &K);

struct DecayFit {
  double rate = 0.0;        // C0
  double amplitude = 0.0;   // C1
  double weight_loss = 0.0; // Pi used: input weight m + Pi against output weight m
  double r_squared = 0.0;
  double t_lo = 0.0, t_hi = 0.0;
  int samples = 0;
  bool accepted = false;
};

/// Least squares line through log(norm) against t on [t_lo, t_hi]; rate = -slope.
/// A fit is accepted when r^2 >= min_r2 and the rate is positive.
DecayFit fit_decay(const std::vector<double> &t, const std::vector<double> &norm, double t_lo,
                   double t_hi, double min_r2 = 0.98);

std::string format_decay_fit(const DecayFit &f);

/// Log-space fit of C / (1 + |n| t) e^{-lambda t} with lambda fixed.
struct OscillationFit {
  double constant = 0.0;
  double r_squared = 0.0;
};
OscillationFit fit_oscillation(const std::vector<double> &n_abs, const std::vector<double> &t,
                               const std::vector<double> &norm, double lambda);

} // namespace hsb
