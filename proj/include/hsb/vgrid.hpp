#pragma once

#include <Eigen/Dense>

#include <vector>

namespace hsb {

using Vec3 = Eigen::Vector3d;
using GridFunction = Eigen::VectorXd;
using CGridFunction = Eigen::VectorXcd;

/// Uniform cubic lattice on [-extent, extent]^3 (shifted by center) with
/// product trapezoid weights. Node index is ix + n*(iy + n*iz).
struct VelocityGrid {
  int points_per_axis = 0;
  double extent = 0.0;
  double spacing = 0.0;
  Vec3 center = Vec3::Zero();
  std::vector<double> axis;         // 1D coordinates relative to center
  std::vector<double> axis_weights; // 1D trapezoid weights
  Eigen::Matrix3Xd nodes;
  Eigen::VectorXd quad_weights;

  int size() const { return static_cast<int>(quad_weights.size()); }
  int index(int ix, int iy, int iz) const {
    return ix + points_per_axis * (iy + points_per_axis * iz);
  }
  Vec3 node(int i) const { return nodes.col(i); }
};

VelocityGrid make_grid(int points_per_axis, double extent,
                       const Vec3 &center = Vec3::Zero());

/// Product rule on the unit sphere: Gauss-Legendre in cos(theta), split at the
/// equator, times a uniform azimuthal rule. Nodes are stored in a frame whose
/// polar axis is e3; rotated() maps the polar axis onto another direction.
struct SphereQuadrature {
  int n_polar = 0;
  int n_azimuthal = 0;
  std::vector<double> cos_theta; // polar nodes, n_polar of them
  std::vector<double> polar_weights;
  std::vector<double> phi;       // azimuthal nodes
  Eigen::Matrix3Xd nodes;        // polar-major: k = ip * n_azimuthal + ia
  Eigen::VectorXd weights;

  int size() const { return static_cast<int>(weights.size()); }
  SphereQuadrature rotated(const Vec3 &axis) const;
};

SphereQuadrature make_sphere_quadrature(int n_polar, int n_azimuthal);

/// Gauss-Legendre nodes and weights on [a, b].
void gauss_legendre(int n, double a, double b, std::vector<double> &x,
                    std::vector<double> &w);

/// Orthonormal pair completing unit vector e to a right-handed frame.
void orthonormal_frame(const Vec3 &e, Vec3 &e1, Vec3 &e2);

struct WeightSpec {
  double m = 0.0;
  Vec3 center = Vec3::Zero();
};

/// <w> = sqrt(1 + |w|^2)
inline double japanese(const Vec3 &w) { return std::sqrt(1.0 + w.squaredNorm()); }

/// Per-node weight <v - center>^m.
Eigen::VectorXd weight_values(const WeightSpec &w, const VelocityGrid &grid);

struct Moments {
  double mass = 0.0;
  Vec3 momentum = Vec3::Zero();
  double energy = 0.0;
};

Moments moments(const GridFunction &f, const VelocityGrid &grid);

double weighted_l1_norm(const GridFunction &f, const WeightSpec &w,
                        const VelocityGrid &grid);
double weighted_l1_norm(const CGridFunction &f, const WeightSpec &w,
                        const VelocityGrid &grid);

} // namespace hsb
