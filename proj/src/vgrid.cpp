#include "hsb/vgrid.hpp"

#include "hsb/errors.hpp"

#include <cmath>
#include <numbers>

namespace hsb {

VelocityGrid make_grid(int points_per_axis, double extent, const Vec3 &center) {
  if (points_per_axis < 5)
    throw ValidationError("points_per_axis must be >= 5");
  if (points_per_axis % 2 == 0)
    throw ValidationError("points_per_axis must be odd so that the grid contains its center");
  if (!(extent > 0.0) || !std::isfinite(extent))
    throw ValidationError("extent must be positive");

  VelocityGrid g;
  const int n = points_per_axis;
  g.points_per_axis = n;
  g.extent = extent;
  g.spacing = 2.0 * extent / (n - 1);
  g.center = center;
  g.axis.resize(n);
  g.axis_weights.assign(n, g.spacing);
  for (int i = 0; i < n; ++i) {
    // symmetric construction so that axis[n-1-i] == -axis[i] bit for bit
    const int k = i - (n - 1) / 2;
    g.axis[i] = k * g.spacing;
  }
  g.axis_weights.front() *= 0.5;
  g.axis_weights.back() *= 0.5;

  const int N = n * n * n;
  g.nodes.resize(3, N);
  g.quad_weights.resize(N);
  for (int iz = 0; iz < n; ++iz)
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const int i = g.index(ix, iy, iz);
        g.nodes.col(i) = center + Vec3(g.axis[ix], g.axis[iy], g.axis[iz]);
        g.quad_weights[i] = g.axis_weights[ix] * g.axis_weights[iy] * g.axis_weights[iz];
      }
  return g;
}

void gauss_legendre(int n, double a, double b, std::vector<double> &x,
                    std::vector<double> &w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double wi = 2.0 / ((1.0 - z * z) * dp * dp);
    const double half = 0.5 * (b - a), mid = 0.5 * (b + a);
    x[i] = mid - half * z;
    x[n - 1 - i] = mid + half * z;
    w[i] = w[n - 1 - i] = wi * half;
  }
}

void orthonormal_frame(const Vec3 &e, Vec3 &e1, Vec3 &e2) {
  // pick the coordinate axis least aligned with e
  Vec3 a = Vec3::UnitX();
  if (std::abs(e.y()) < std::abs(e.x()) && std::abs(e.y()) <= std::abs(e.z()))
    a = Vec3::UnitY();
  else if (std::abs(e.z()) < std::abs(e.x()))
    a = Vec3::UnitZ();
  e1 = (a - a.dot(e) * e).normalized();
  e2 = e.cross(e1);
}

SphereQuadrature make_sphere_quadrature(int n_polar, int n_azimuthal) {
  if (n_polar < 4) throw ValidationError("n_polar must be >= 4");
  if (n_azimuthal < 8) throw ValidationError("n_azimuthal must be >= 8");
  if (n_polar % 2 != 0)
    throw ValidationError("n_polar must be even (the polar rule is split at the equator)");

  SphereQuadrature s;
  s.n_polar = n_polar;
  s.n_azimuthal = n_azimuthal;
  std::vector<double> x, w;
  gauss_legendre(n_polar / 2, 0.0, 1.0, x, w);
  // southern hemisphere first, so cos_theta is increasing
  for (int i = n_polar / 2 - 1; i >= 0; --i) {
    s.cos_theta.push_back(-x[i]);
    s.polar_weights.push_back(w[i]);
  }
  for (int i = 0; i < n_polar / 2; ++i) {
    s.cos_theta.push_back(x[i]);
    s.polar_weights.push_back(w[i]);
  }
  const double dphi = 2.0 * std::numbers::pi / n_azimuthal;
  for (int a = 0; a < n_azimuthal; ++a) s.phi.push_back((a + 0.5) * dphi);

  const int K = n_polar * n_azimuthal;
  s.nodes.resize(3, K);
  s.weights.resize(K);
  for (int p = 0; p < n_polar; ++p) {
    const double ct = s.cos_theta[p];
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    for (int a = 0; a < n_azimuthal; ++a) {
      const int k = p * n_azimuthal + a;
      s.nodes.col(k) = Vec3(st * std::cos(s.phi[a]), st * std::sin(s.phi[a]), ct);
      s.weights[k] = s.polar_weights[p] * dphi;
    }
  }
  return s;
}

SphereQuadrature SphereQuadrature::rotated(const Vec3 &axis) const {
  const double len = axis.norm();
  if (!(len > 0.0)) throw ValidationError("rotation axis must be nonzero");
  const Vec3 e3 = axis / len;
  Vec3 e1, e2;
  orthonormal_frame(e3, e1, e2);
  Eigen::Matrix3d R;
  R.col(0) = e1;
  R.col(1) = e2;
  R.col(2) = e3;
  SphereQuadrature r = *this;
  r.nodes = R * nodes;
  return r;
}

Eigen::VectorXd weight_values(const WeightSpec &w, const VelocityGrid &grid) {
  if (w.m < 0.0) throw ValidationError("weight exponent m must be >= 0");
  Eigen::VectorXd out(grid.size());
  for (int i = 0; i < grid.size(); ++i)
    out[i] = std::pow(1.0 + (grid.nodes.col(i) - w.center).squaredNorm(), 0.5 * w.m);
  return out;
}

Moments moments(const GridFunction &f, const VelocityGrid &grid) {
  if (f.size() != grid.size()) throw ValidationError("grid function size does not match grid");
  Moments m;
  for (int i = 0; i < grid.size(); ++i) {
    const double qf = grid.quad_weights[i] * f[i];
    const Vec3 v = grid.nodes.col(i);
    m.mass += qf;
    m.momentum += qf * v;
    m.energy += qf * v.squaredNorm();
  }
  return m;
}

double weighted_l1_norm(const GridFunction &f, const WeightSpec &w,
                        const VelocityGrid &grid) {
  if (f.size() != grid.size()) throw ValidationError("grid function size does not match grid");
  const Eigen::VectorXd wv = weight_values(w, grid);
  return (grid.quad_weights.array() * wv.array() * f.array().abs()).sum();
}

double weighted_l1_norm(const CGridFunction &f, const WeightSpec &w,
                        const VelocityGrid &grid) {
  if (f.size() != grid.size()) throw ValidationError("grid function size does not match grid");
  const Eigen::VectorXd wv = weight_values(w, grid);
  return (grid.quad_weights.array() * wv.array() * f.array().abs()).sum();
}

} // namespace hsb
