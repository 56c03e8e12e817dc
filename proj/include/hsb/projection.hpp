#pragma once

#include "hsb/maxwell.hpp"

namespace hsb {

/// Projection onto span(NullBasis) along the kernel of the moment functionals
/// (mass, momentum and centered energy): P = B (C B)^-1 C.
struct ProjectionP {
  NullBasis basis;
  Eigen::MatrixXd B;                         // N x 5
  Eigen::MatrixXd C;                         // 5 x N, quadrature weights included
  Eigen::Matrix<double, 5, 5> gram_inverse;  // (C B)^-1

  GridFunction apply(const GridFunction &f) const;
  CGridFunction apply(const CGridFunction &f) const;
  Eigen::MatrixXd matrix() const;
};

ProjectionP make_projection(const MaxwellParams &p, const VelocityGrid &grid);
GridFunction apply_projection(const GridFunction &f, const ProjectionP &P);

} // namespace hsb
