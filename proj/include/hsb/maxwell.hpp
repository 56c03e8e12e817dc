#pragma once

#include "hsb/vgrid.hpp"

#include <array>

namespace hsb {

/// Velocity-only integrals of distributions carry the factor (2 pi)^-3, so
/// that the total mass over R^3 x T^3 is one.
inline constexpr double kTorusVolume = 248.05021344239853; // (2 pi)^3

struct MaxwellParams {
  double T = 0.5;
  Vec3 mu = Vec3::Zero();
};

void validate(const MaxwellParams &p);

/// M_{T,mu}(v) = (2 pi)^-3 (2 pi T)^-3/2 exp(-|v - mu|^2 / 2T)
double eval_maxwellian(const MaxwellParams &p, const Vec3 &v);
GridFunction maxwellian_on_grid(const MaxwellParams &p, const VelocityGrid &grid);

/// Closed-form moment inversion for data of unit total mass. The check on the
/// mass uses `mass_tolerance`; the inversion divides by the measured mass.
MaxwellParams match_moments(const GridFunction &g0, const VelocityGrid &grid,
                            double mass_tolerance = 1e-3);
MaxwellParams match_moments(const Moments &total, double mass_tolerance = 1e-3);

/// b0 = M, b1 = dM/dT, b2..b4 = dM/dmu_k
struct NullBasis {
  MaxwellParams params;
  std::array<GridFunction, 5> b;
  Eigen::MatrixXd matrix() const; // N x 5
};

NullBasis null_basis(const MaxwellParams &p, const VelocityGrid &grid);

} // namespace hsb
