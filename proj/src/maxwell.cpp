#include "hsb/maxwell.hpp"

#include "hsb/errors.hpp"

#include <cmath>
#include <numbers>

namespace hsb {

void validate(const MaxwellParams &p) {
  if (!(p.T > 0.0) || !std::isfinite(p.T)) throw ValidationError("temperature T must be positive");
  if (!p.mu.allFinite()) throw ValidationError("mean velocity mu must be finite");
}

double eval_maxwellian(const MaxwellParams &p, const Vec3 &v) {
  validate(p);
  const double norm = 1.0 / (kTorusVolume * std::pow(2.0 * std::numbers::pi * p.T, 1.5));
  return norm * std::exp(-(v - p.mu).squaredNorm() / (2.0 * p.T));
}

GridFunction maxwellian_on_grid(const MaxwellParams &p, const VelocityGrid &grid) {
  GridFunction f(grid.size());
  for (int i = 0; i < grid.size(); ++i) f[i] = eval_maxwellian(p, grid.nodes.col(i));
  return f;
}

MaxwellParams match_moments(const Moments &total, double mass_tolerance) {
  if (!std::isfinite(total.mass) || !std::isfinite(total.energy) || !total.momentum.allFinite())
    throw ValidationError("moments of the initial data are not finite");
  if (std::abs(total.mass - 1.0) > mass_tolerance)
    throw ValidationError("initial data must have unit total mass (found " +
                          std::to_string(total.mass) + ")");
  MaxwellParams p;
  p.mu = total.momentum / total.mass;
  p.T = (total.energy / total.mass - p.mu.squaredNorm()) / 3.0;
  if (!(p.T > 0.0)) throw ValidationError("moment matching gives a nonpositive temperature");
  return p;
}

MaxwellParams match_moments(const GridFunction &g0, const VelocityGrid &grid,
                            double mass_tolerance) {
  Moments m = moments(g0, grid);
  m.mass *= kTorusVolume;
  m.momentum *= kTorusVolume;
  m.energy *= kTorusVolume;
  return match_moments(m, mass_tolerance);
}

NullBasis null_basis(const MaxwellParams &p, const VelocityGrid &grid) {
  validate(p);
  NullBasis nb;
  nb.params = p;
  const int N = grid.size();
  for (auto &b : nb.b) b.resize(N);
  for (int i = 0; i < N; ++i) {
    const Vec3 c = grid.nodes.col(i) - p.mu;
    const double M = eval_maxwellian(p, grid.nodes.col(i));
    nb.b[0][i] = M;
    nb.b[1][i] = M * (c.squaredNorm() / (2.0 * p.T * p.T) - 1.5 / p.T);
    for (int k = 0; k < 3; ++k) nb.b[2 + k][i] = M * c[k] / p.T;
  }
  return nb;
}

Eigen::MatrixXd NullBasis::matrix() const {
  Eigen::MatrixXd B(b[0].size(), 5);
  for (int k = 0; k < 5; ++k) B.col(k) = b[k];
  return B;
}

} // namespace hsb
