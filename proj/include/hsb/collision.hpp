#pragma once

#include "hsb/gain.hpp"
#include "hsb/projection.hpp"

#include <memory>

namespace hsb {

struct CollisionConfig {
  VelocityGrid grid;
  SphereQuadrature sphere;
  Interpolation interpolation = Interpolation::WeightedQuadratic;
  MaxwellParams reference;  // interpolation weight and conservation projector
  bool conservative = true; // remove the moments of Q created by interpolation
  double max_exit_fraction = 0.75;
};

CollisionConfig make_collision_config(const VelocityGrid &grid, const SphereQuadrature &sphere,
                                      const MaxwellParams &reference = {});

/// Discrete hard-sphere collision operator with cached quadrature tables.
class CollisionOperator {
public:
  explicit CollisionOperator(CollisionConfig cfg);

  const CollisionConfig &config() const { return cfg_; }
  const GainQuadrature &gain() const { return gain_; }
  const ProjectionP &projection() const { return proj_; }

  /// Q(f, g) with f evaluated at u' and g at v'.
  GridFunction apply(const GridFunction &f, const GridFunction &g, ExitStats *stats = nullptr) const;
  /// The same without the conservative correction.
  GridFunction apply_raw(const GridFunction &f, const GridFunction &g, ExitStats *stats = nullptr) const;

  /// Throws NumericalError if the exit fraction exceeds the configured limit.
  void check_exits(const ExitStats &s) const;

private:
  CollisionConfig cfg_;
  GainQuadrature gain_;
  ProjectionP proj_;
};

GridFunction apply_q(const GridFunction &f, const GridFunction &g, const CollisionConfig &cfg);

/// nu(v) = 2 pi int |u - v| M(u) du in closed form.
double nu_exact(const MaxwellParams &p, const Vec3 &v);

/// nu at an arbitrary velocity by the grid quadrature used in the loss term of Q.
double eval_nu(const MaxwellParams &p, const Vec3 &v, const CollisionConfig &cfg);

/// nu on all grid nodes, consistent with the loss term of Q.
GridFunction nu_on_grid(const MaxwellParams &p, const CollisionConfig &cfg);

/// Lambda = min over nodes of the exact nu.
double nu_min(const MaxwellParams &p, const VelocityGrid &grid);

} // namespace hsb
