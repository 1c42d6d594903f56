#pragma once

#include <string>
#include <vector>

#include "mulearn/trajectory.hpp"

namespace mulearn {

struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Ordinary least squares via normal equations with partial pivoting.
// rows[k] is one regressor row; y[k] the matching response. Throws FitError on
// rank deficiency; when `deficient_column` is non-null the first column whose
// pivot collapsed is reported there instead (index into the row layout).
std::vector<double> least_squares(const std::vector<std::vector<double>>& rows,
                                  const std::vector<double>& y,
                                  double rcond = 1e-9,
                                  int* deficient_column = nullptr);

// One finite-difference derivative sample taken over a single control cycle.
// `at` is the segment midpoint between the post-action state and the next
// state; the scheme is exact for dynamics whose state polynomials have degree
// at most two in time (e.g. double integrators).
struct DerivativeSample {
  State at;                      // regressor state (segment midpoint)
  std::map<std::string, double> input;  // resolved action values
  State rate;                    // estimated derivative of each state var
};

// Builds derivative samples from recorded episodes. Terminal sentinel steps
// (empty action or zero duration) are skipped. `state_vars` picks which
// variables get derivative estimates; every other variable still appears in
// `at` so callers can use it as a frozen regressor.
std::vector<DerivativeSample> derivative_samples(
    const TrajectoryData& data, const std::vector<std::string>& state_vars);

}  // namespace mulearn
