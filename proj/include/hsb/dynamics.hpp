#pragma once

#include "hsb/semigroup.hpp"

#include <memory>
#include <string>
#include <vector>

namespace hsb {

/// Truncated Fourier series g(v, x) = sum_n e^{i n.x} g_n(v) over |n|_inf <= n_max.
struct ModeField {
  VelocityGrid grid;
  int n_max = 0;
  std::vector<Mode> modes; // lexicographic in (n1, n2, n3)
  std::vector<CGridFunction> coeffs;

  int size() const { return static_cast<int>(modes.size()); }
  int index(const Mode &n) const; // -1 outside the truncation
  CGridFunction &at(const Mode &n);
  const CGridFunction &at(const Mode &n) const;

  /// g_{-n} = conj(g_n) by averaging each pair, g_0 real.
  void enforce_reality();
  /// max over modes of ||g_{-n} - conj(g_n)||_inf
  double reality_defect() const;

  /// g at a spatial point.
  GridFunction reconstruct(const Vec3 &x) const;
  /// Moments over R^3 x T^3 (only the zero mode contributes).
  Moments total_moments() const;
};

ModeField zero_field(const VelocityGrid &grid, int n_max);
ModeField operator+(const ModeField &a, const ModeField &b);
ModeField operator*(double s, const ModeField &a);

enum class PerturbationShape {
  MaxwellianV1, // M(v) v_1 on the +-mode blocks
};

PerturbationShape perturbation_shape_from_string(const std::string &s);

/// g_0 = M (+ bump * M (|v - mu|^2 / 3T - 1) rescaled to keep the moments),
/// g_{+-mode} = amplitude * shape. Throws if g < 0 at x in {0, pi/2, pi}^3.
ModeField init_perturbation(const MaxwellParams &p, const VelocityGrid &grid, int n_max,
                            const Mode &mode, double amplitude,
                            PerturbationShape shape = PerturbationShape::MaxwellianV1,
                            double isotropic_bump = 0.0);

/// Evolution operators. The linear part uses the linearized operator about the
/// reference Maxwellian; the quadratic part Q(f, f) may use its own sphere rule.
class DynamicsModel {
public:
  DynamicsModel(const CollisionConfig &linear, const SphereQuadrature &quadratic_sphere);

  const LinearizedOperator &linear() const { return lin_; }
  const CollisionOperator &quadratic() const { return quad_; }
  const VelocityGrid &grid() const { return lin_.grid(); }
  const GridFunction &reference() const { return m_; }

  /// d g / dt = -i (n.v) g_n + sum_{n1 + n2 = n} Q(g_n1, g_n2), evaluated in the
  /// perturbation form -L_n f_n + sum Q(f_n1, f_n2) with f = g - M.
  ModeField rhs(const ModeField &g) const;
  /// Quadratic part alone.
  ModeField quadratic_part(const ModeField &f) const;

  /// dt bound c / (nu_max + n_max * extent).
  double stability_bound(int n_max, double c = 1.0) const;

private:
  LinearizedOperator lin_;
  CollisionOperator quad_;
  GridFunction m_;
  double nu_max_ = 0.0;
};

/// Classical RK4 step; throws when dt exceeds the stability bound.
ModeField step_rk4(const ModeField &g, double dt, const DynamicsModel &model, double c = 1.0);

struct Monitors {
  WeightSpec weight;           // distance weight <v - mu>^m
  int x_points = 8;            // positivity lattice per axis
  int norm_points = 64;        // x-quadrature per active axis for the L^1 distance
  double fit_lo = 1.0;
  double fit_hi = -1.0;        // negative: t_end
  double min_r2 = 0.98;
  double controlling_margin = 0.8;
};

struct RelaxationRun {
  MaxwellParams params;
  std::vector<double> t;
  std::vector<double> distance;
  std::vector<Moments> invariants;
  std::vector<double> min_density; // min of g over the x lattice, relative to peak M
  double drift_mass = 0.0, drift_momentum = 0.0, drift_energy = 0.0;
  std::vector<double> controlling;
  double controlling_c0 = 0.0;
  double controlling_ratio = 0.0; // sup / initial
  DecayFit fit;
  bool aborted = false;
  std::string abort_reason;
  ModeField final_state;
};

/// ||<v - mu>^m (g - M_{T,mu})||_{L^1(R^3 x T^3)} by x-quadrature over the axes
/// the active modes depend on.
double relaxation_distance(const ModeField &g, const GridFunction &target, const WeightSpec &w,
                           int points_per_axis);

RelaxationRun run_relaxation(const ModeField &init, double t_end, double dt, const Monitors &mon,
                             const DynamicsModel &model);

/// M(t) = max_{s <= t} e^{C0 s} dist(s)
std::vector<double> controlling_function(const std::vector<double> &t,
                                         const std::vector<double> &dist, double c0);

} // namespace hsb
