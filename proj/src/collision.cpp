#include "hsb/collision.hpp"

#include "hsb/errors.hpp"

#include <cmath>
#include <numbers>

namespace hsb {

ProjectionP make_projection(const MaxwellParams &p, const VelocityGrid &grid) {
  ProjectionP P;
  P.basis = null_basis(p, grid);
  P.B = P.basis.matrix();
  const int N = grid.size();
  P.C.resize(5, N);
  for (int i = 0; i < N; ++i) {
    const double q = grid.quad_weights[i];
    const Vec3 c = grid.nodes.col(i) - p.mu;
    P.C(0, i) = q;
    P.C(1, i) = q * c.squaredNorm();
    for (int k = 0; k < 3; ++k) P.C(2 + k, i) = q * c[k];
  }
  const Eigen::Matrix<double, 5, 5> gram = P.C * P.B;
  Eigen::JacobiSVD<Eigen::Matrix<double, 5, 5>> svd(gram);
  const auto sv = svd.singularValues();
  if (!(sv[4] > 0.0) || sv[0] / sv[4] > 1e12)
    throw NumericalError("moment Gram matrix is singular: grid too coarse for the projection");
  P.gram_inverse = gram.inverse();
  return P;
}

GridFunction ProjectionP::apply(const GridFunction &f) const {
  if (f.size() != B.rows()) throw ValidationError("grid function size does not match projection");
  return B * (gram_inverse * (C * f));
}

CGridFunction ProjectionP::apply(const CGridFunction &f) const {
  if (f.size() != B.rows()) throw ValidationError("grid function size does not match projection");
  const Eigen::Matrix<std::complex<double>, 5, 1> m = C.cast<std::complex<double>>() * f;
  return B.cast<std::complex<double>>() * (gram_inverse.cast<std::complex<double>>() * m);
}

Eigen::MatrixXd ProjectionP::matrix() const { return B * gram_inverse * C; }

GridFunction apply_projection(const GridFunction &f, const ProjectionP &P) { return P.apply(f); }

CollisionConfig make_collision_config(const VelocityGrid &grid, const SphereQuadrature &sphere,
                                      const MaxwellParams &reference) {
  CollisionConfig c;
  c.grid = grid;
  c.sphere = sphere;
  c.reference = reference;
  return c;
}

CollisionOperator::CollisionOperator(CollisionConfig cfg)
    : cfg_(std::move(cfg)),
      gain_(cfg_.grid, cfg_.sphere, cfg_.interpolation, cfg_.reference),
      proj_(make_projection(cfg_.reference, cfg_.grid)) {
  if (!(cfg_.max_exit_fraction > 0.0 && cfg_.max_exit_fraction <= 1.0))
    throw ValidationError("max_exit_fraction must lie in (0, 1]");
}

void CollisionOperator::check_exits(const ExitStats &s) const {
  if (s.fraction() > cfg_.max_exit_fraction)
    throw NumericalError("post-collision velocities leave the box in " +
                         std::to_string(s.fraction()) + " of stencil evaluations (limit " +
                         std::to_string(cfg_.max_exit_fraction) + "); enlarge the extent");
}

GridFunction CollisionOperator::apply_raw(const GridFunction &f, const GridFunction &g,
                                          ExitStats *stats) const {
  ExitStats local;
  std::vector<const GridFunction *> fields{&f, &g};
  std::vector<GainProduct> prod{{0, 0, 1, 1.0}};
  GridFunction q = gain_.gains(fields, prod, 1, &local)[0];
  check_exits(local);
  if (stats) {
    stats->evaluations += local.evaluations;
    stats->exits += local.exits;
  }
  q.array() -= g.array() * gain_.speed_convolution(f).array();
  return q;
}

GridFunction CollisionOperator::apply(const GridFunction &f, const GridFunction &g,
                                      ExitStats *stats) const {
  GridFunction q = apply_raw(f, g, stats);
  if (cfg_.conservative) q -= proj_.apply(q);
  return q;
}

GridFunction apply_q(const GridFunction &f, const GridFunction &g, const CollisionConfig &cfg) {
  return CollisionOperator(cfg).apply(f, g);
}

double nu_exact(const MaxwellParams &p, const Vec3 &v) {
  validate(p);
  const double s = std::sqrt(2.0 * p.T);
  const double x = (v - p.mu).norm() / s;
  const double pref = 2.0 * std::numbers::pi / kTorusVolume * s;
  if (x < 1e-6) // series of e^{-x^2}/sqrt(pi) + (x + 1/2x) erf(x)
    return pref * (2.0 / std::sqrt(std::numbers::pi)) * (1.0 + x * x / 3.0);
  return pref * (std::exp(-x * x) / std::sqrt(std::numbers::pi) + (x + 0.5 / x) * std::erf(x));
}

double eval_nu(const MaxwellParams &p, const Vec3 &v, const CollisionConfig &cfg) {
  validate(p);
  const auto &g = cfg.grid;
  double s_abs = 0.0;
  for (int k = 0; k < cfg.sphere.size(); ++k)
    s_abs += cfg.sphere.weights[k] * std::abs(cfg.sphere.nodes(2, k));
  double sum = 0.0;
  for (int i = 0; i < g.size(); ++i)
    sum += g.quad_weights[i] * (g.nodes.col(i) - v).norm() * eval_maxwellian(p, g.nodes.col(i));
  return s_abs * sum;
}

GridFunction nu_on_grid(const MaxwellParams &p, const CollisionConfig &cfg) {
  GainQuadrature gq(cfg.grid, cfg.sphere, cfg.interpolation, cfg.reference);
  return gq.speed_convolution(maxwellian_on_grid(p, cfg.grid));
}

double nu_min(const MaxwellParams &p, const VelocityGrid &grid) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid.size(); ++i) m = std::min(m, nu_exact(p, grid.nodes.col(i)));
  return m;
}

} // namespace hsb
