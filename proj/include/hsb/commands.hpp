#pragma once

#include "hsb/config.hpp"

#include <string>
#include <vector>

namespace hsb {

struct CommandOutput {
  std::vector<std::string> files; // written paths, in write order
  std::string summary;            // human-readable summary, also written to summary.txt
};

CommandOutput cmd_kernels(const RunConfig &c);
CommandOutput cmd_spectrum(const RunConfig &c);
CommandOutput cmd_propagator(const RunConfig &c);
CommandOutput cmd_simulate(const RunConfig &c);

/// Dispatch on the command name; 0 on success, 1 on ValidationError, 2 on
/// NumericalError. Messages go to stderr.
int run_command(const std::string &name, const RunConfig &c);

/// M times a random quartic polynomial in v with (1 - P) applied; deterministic
/// given the seed.
GridFunction generic_perturbation(const LinearizedOperator &L, std::uint64_t seed);

/// "n1_n2_n3" with minus signs spelled as 'm'.
std::string mode_tag(const Mode &n);

/// Default contour abscissa min(Lambda / 4, gap / 2).
double default_theta(double lambda, double gap);

} // namespace hsb
