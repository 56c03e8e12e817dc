#pragma once

#include "hsb/maxwell.hpp"
#include "hsb/vgrid.hpp"

#include <cstdint>
#include <vector>

namespace hsb {

enum class Interpolation {
  WeightedQuadratic, // triquadratic Lagrange on f / M_ref, rescaled by M_ref
  Trilinear,         // trilinear on f itself
  Quadratic,         // triquadratic Lagrange on f itself
};

const char *to_string(Interpolation p);
Interpolation interpolation_from_string(const std::string &s);

/// One bilinear term: gain[out] += coef * f_first(u') * f_second(v').
struct GainProduct {
  int out = 0;
  int first = 0;
  int second = 0;
  double coef = 1.0;
};

struct ExitStats {
  std::uint64_t evaluations = 0; // (v, u, omega) triples
  std::uint64_t exits = 0;       // triples with u' or v' outside the box
  double fraction() const {
    return evaluations ? static_cast<double>(exits) / static_cast<double>(evaluations) : 0.0;
  }
};

/// Gain-term quadrature in the (u, omega) parameterization. For each lattice
/// difference w = u - v the sphere rule is applied in the frame whose polar
/// axis is w, so that sum_omega |w.omega| reproduces 2 pi |w| exactly, and only
/// the hemisphere w.omega > 0 is visited (omega and -omega give the same pair).
class GainQuadrature {
public:
  GainQuadrature(const VelocityGrid &grid, const SphereQuadrature &sphere,
                 Interpolation interp, const MaxwellParams &reference);

  const VelocityGrid &grid() const { return grid_; }
  const MaxwellParams &reference() const { return ref_; }
  Interpolation interpolation() const { return interp_; }

  /// sum over the full sphere rule of w_i |cos theta_i|; equals 2 pi to round-off
  double sphere_abs_moment() const { return s_abs_; }

  /// Evaluate the gain sums for a list of bilinear products of real fields.
  std::vector<GridFunction> gains(const std::vector<const GridFunction *> &fields,
                                  const std::vector<GainProduct> &products, int n_out,
                                  ExitStats *stats = nullptr) const;

  /// Linear gain operator f -> G(M_ref, f) + G(f, M_ref) with M_ref extended
  /// as the exact Gaussian (interpolation of M_ref / M_ref == 1 everywhere).
  /// Only available for the weighted scheme.
  GridFunction linear_gain(const GridFunction &f, ExitStats *stats = nullptr) const;

  /// Dense matrix of linear_gain, assembled offset by offset.
  Eigen::MatrixXd linear_gain_matrix(std::size_t max_chunk_entries = 40'000'000) const;

  /// Loss-type convolution: v -> sum_u q_u S |u - v| f(u), S = sphere_abs_moment().
  GridFunction speed_convolution(const GridFunction &f) const;

private:
  struct Node {
    double ct, st, cphi, sphi, weight;
  };
  struct Stencil {
    int base[3];
    double c[3][3];
  };
  void make_stencil(const double p[3], Stencil &s) const;

  VelocityGrid grid_;
  Interpolation interp_;
  MaxwellParams ref_;
  int width_;        // stencil width per axis
  std::vector<Node> hemi_;
  double s_abs_ = 0.0;
  Eigen::VectorXd rho_;    // M_ref on nodes (weighted scheme) or ones
  Eigen::VectorXd e_;      // exp(-|v - mu|^2 / 2T)
  double rho_peak_ = 0.0;
};

} // namespace hsb
