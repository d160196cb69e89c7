#pragma once

// Dormand-Prince 5(4) with local extrapolation and 4th-order dense output.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "sigmakit/linalg.hpp"

namespace sigmakit {

struct OdeOptions {
  double rtol = 1e-9;
  double atol = 1e-12;
  double report_dt = 0.01;
  double h_initial = 0.0;  // 0 picks a starting step from the initial slope
  double h_min = 1e-14;
  std::size_t max_steps = 1'000'000;
};

struct OdeSolution {
  std::vector<double> times;  // uniform reporting grid, ends at t_final
  std::vector<Vec> states;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  bool truncated = false;
  std::string diagnostic;
};

using OdeRhs = std::function<Vec(double, const Vec&)>;
/// Called after every accepted step with the step end point.
using StepObserver = std::function<void(double, const Vec&)>;

/// Integrates x' = rhs(t, x) on [0, t_final]. Step-size underflow, the step
/// limit, or an exception from rhs truncate the solution; whatever was
/// reported before that point is kept and `diagnostic` says why.
OdeSolution dormand_prince(const OdeRhs& rhs, const Vec& x0, double t_final, const OdeOptions& opts = {},
                           const StepObserver& observer = {});

}  // namespace sigmakit
