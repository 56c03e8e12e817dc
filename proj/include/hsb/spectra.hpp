#pragma once

#include "hsb/linop.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hsb {

struct SpectrumOptions {
  int dense_cap = 4096;     // dense eigendecomposition up to this dimension
  int iterative_count = 32; // eigenvalues extracted above the cap
  /// Relative null-space residual of the operator; the null cluster radius is
  /// max(1e-6, 10 * null_residual).
  double null_residual = 0.0;
  /// Shift for the iterative mode; defaults to -min Re(diag) / 2.
  std::optional<double> shift;
  /// nu + i n.v on the nodes, copied into the report when present.
  CGridFunction essential;
};

struct SpectrumReport {
  Mode n = Mode::Zero();
  std::vector<Complex> eigenvalues; // ascending real part
  std::vector<Complex> null_cluster;
  double cluster_radius = 0.0;
  double gap = 0.0;
  std::vector<Complex> essential_samples;
  std::string grid_meta;
  bool iterative = false;
  double max_residual = 0.0; // iterative mode: max ||A x - lambda x|| / ||x||
};

SpectrumReport compute_spectrum(const OperatorMatrix &A, const Mode &n,
                                const SpectrumOptions &opt = {});

/// Min real part outside the null cluster.
double spectral_gap(const SpectrumReport &r);

/// Eigenvalues of A closest to a real shift, by shift-invert Arnoldi.
std::vector<Complex> eigenvalues_near(const OperatorMatrix &A, double shift, int count,
                                      double *max_residual = nullptr);

/// Three-piece contour around the spectrum of L_n: the segment
/// {theta + i b : |b| <= psi (|n| + 1)} and two rays of slope +-psi (|n| + 1)
/// leaving its endpoints towards Re = +infinity.
struct ContourGamma {
  Mode n = Mode::Zero();
  double theta = 0.0;
  double psi = 0.0;
  Complex segment_low, segment_high;
  double slope = 0.0;
  Complex ray_up_direction, ray_down_direction; // unit vectors
  double half_height() const { return psi * (n.cast<double>().norm() + 1.0); }
  /// Evenly spaced points: `per_unit` per unit length on the segment and on
  /// each ray up to arc length `ray_length`.
  std::vector<Complex> sample(double per_unit, double ray_length) const;
  /// Whether z lies strictly inside the region enclosed by the contour.
  bool encloses(Complex z) const;
  double distance(Complex z) const;
};

ContourGamma contour_gamma(const Mode &n, double theta, double psi, double lambda);

/// Quadrature node on the contour, oriented counterclockwise around the spectrum.
struct ContourNode {
  Complex z;
  Complex w; // includes d zeta
};

/// Composite Gauss-Legendre panels whose length follows the distance to the
/// given spectrum and the oscillation e^{-t zeta}; `refine` halves the panel
/// length. Rays are truncated where e^{-t Re} falls below `tail_tol`.
std::vector<ContourNode> contour_nodes(const ContourGamma &g, const std::vector<Complex> &spectrum,
                                       double t, int refine, double tail_tol = 1e-14,
                                       int order = 16);

/// max over nodes of |nu + i n.v - zeta|^-1 (1 + |v| + |n.v|)
double multiplier_constant(const CGridFunction &diag, const VelocityGrid &grid, const Mode &n,
                           Complex zeta);

struct PsiChoice {
  double psi = 0.0;
  double segment_constant = 0.0; // multiplier constant over the segment
  double ray_constant = 0.0;     // multiplier constant over the rays
};

/// Smallest power of two psi for which the contour encloses the multiplication
/// spectrum and the multiplier constant over the rays does not exceed the one
/// over the segment.
PsiChoice choose_psi(const CGridFunction &diag, const VelocityGrid &grid, const Mode &n,
                     double theta, double lambda, int samples = 64);

/// Induced weighted-L^1 norm of (A - zeta)^-1.
double resolvent_norm(const OperatorMatrix &A, Complex zeta);

/// Resolvent solves through a Hessenberg reduction A = Q H Q^*.
class HessenbergResolvent {
public:
  explicit HessenbergResolvent(const Eigen::MatrixXcd &A);
  /// (zeta - A)^-1 b
  CGridFunction solve(Complex zeta, const CGridFunction &b) const;
  /// Q^* b, and the back transformation Q y, for batched use.
  CGridFunction to_hessenberg(const CGridFunction &b) const;
  CGridFunction from_hessenberg(const CGridFunction &y) const;
  /// (zeta - H)^-1 c in Hessenberg coordinates.
  CGridFunction solve_hessenberg(Complex zeta, const CGridFunction &c) const;

private:
  Eigen::MatrixXcd Q_, H_;
};

struct DeltaConstants {
  double m = 0.0;
  double delta_m0 = 0.0;
  double delta_m1 = 0.0;
  double delta_m2 = 0.0;     // first printed form
  double delta_m2_alt = 0.0; // second printed form
  bool empty_cutoff = false; // no node with |v| > m
};

/// max_{a >= 0} (1 + a^2)^{-m/2} a / sqrt(1 + a^2) in closed form.
double delta_m1_closed(double m);
/// The same by numerical maximization.
double delta_m1_numeric(double m);
/// 2^m int_{z >= m^{3/4}} z^{2m} e^{-z^2/4} dz
double delta_m2_first(double m);
/// 3 2^{m-2} int_{z >= m} z^{3m/2 - 1/4} e^{-z^{3/2}/4} dz
double delta_m2_second(double m);
/// sum over the kernel parts of || chi <v>^m K_l <v>^{-m-1} chi ||_{L^1 -> L^1}
double delta_m0(double m, const VelocityGrid &grid, const std::vector<const Eigen::MatrixXd *> &parts,
                bool *empty = nullptr);

DeltaConstants delta_constants(double m, const VelocityGrid &grid,
                               const std::vector<const Eigen::MatrixXd *> &parts);

/// Plain-text report with complex values as (re, im) pairs.
std::string format_spectrum_report(const SpectrumReport &r);

} // namespace hsb
