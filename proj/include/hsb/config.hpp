#pragma once

#include "hsb/dynamics.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hsb {

struct GridSpec {
  int points_per_axis = 15;
  double extent = 4.5;
};

struct SphereSpec {
  int n_polar = 16;
  int n_azimuthal = 32;
};

struct ContourSpec {
  std::optional<double> theta; // default min(Lambda / 4, gap / 2)
  std::optional<double> psi;   // default from choose_psi
  int samples = 64;
  int refine = 0;
  double t = 1.0;
};

struct IntegratorSpec {
  std::optional<double> dt; // default: the stability bound
  double t_end = 20.0;
  int n_max = 1;
};

struct PerturbationSpec {
  Mode mode = Mode(1, 0, 0);
  double amplitude = 0.1;
  std::string shape = "maxwellian_v1";
  double isotropic_bump = 0.0;
};

struct KernelsSpec {
  int tests = 10;
  std::vector<double> upsilon_m{0, 2, 4, 6};
  int upsilon_samples = 100;
};

struct SpectrumSpec {
  int dense_cap = 4096;
  int iterative_count = 32;
};

struct PropagatorSpec {
  double dt = 1.0;
  int steps = 400;
  double fit_lo = -1.0; // negative: 2 / gap
  double fit_hi = -1.0; // negative: 10 / gap, capped by the curve length
  std::vector<int> oscillation_n{0, 1, 2, 4, 8};
  std::vector<double> oscillation_t{0.5, 1, 2, 4};
  int duhamel_k_max = 3;
  double duhamel_t = 4.0;
};

struct RunConfig {
  GridSpec grid;
  SphereSpec sphere;
  SphereSpec quadratic_sphere{6, 12};
  MaxwellParams reference;
  double weight_m = 0.0;
  std::vector<Mode> modes{Mode(0, 0, 0), Mode(1, 0, 0)};
  ContourSpec contour;
  IntegratorSpec integrator;
  PerturbationSpec perturbation;
  KernelsSpec kernels;
  SpectrumSpec spectrum;
  PropagatorSpec propagator;
  std::string experiment = "spectrum";
  std::string output_dir = "out";
  std::uint64_t seed = 1;
};

/// Parse a JSON document; unknown keys and invalid values raise ValidationError
/// naming the key path.
RunConfig parse_config(const std::string &json_text);
RunConfig load_config(const std::string &path);

/// 9^3 grid, n_max = 1, t_end = 10.
void apply_quick_profile(RunConfig &c);

/// Module preconditions, checked before any computation.
void validate_config(const RunConfig &c);

std::string config_to_json(const RunConfig &c);

CollisionConfig collision_config(const RunConfig &c);

} // namespace hsb
