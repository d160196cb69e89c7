#include "sigmakit/ode.hpp"

#include <algorithm>
#include <cmath>

#include "sigmakit/errors.hpp"

namespace sigmakit {

namespace {

// Dormand-Prince tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;
// dense output
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

double error_norm(const Vec& err, const Vec& x0, const Vec& x1, const OdeOptions& opts) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sk = opts.atol + opts.rtol * std::max(std::abs(x0(i)), std::abs(x1(i)));
    acc += (err(i) / sk) * (err(i) / sk);
  }
  return err.size() ? std::sqrt(acc / static_cast<double>(err.size())) : 0.0;
}

}  // namespace

OdeSolution dormand_prince(const OdeRhs& rhs, const Vec& x0, double t_final, const OdeOptions& opts,
                           const StepObserver& observer) {
  if (!(t_final > 0.0)) throw PreconditionError("integration horizon must be positive");
  if (!(opts.report_dt > 0.0)) throw PreconditionError("reporting interval must be positive");
  if (!(opts.rtol > 0.0) || !(opts.atol > 0.0)) throw PreconditionError("integrator tolerances must be positive");

  std::vector<double> grid;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * opts.report_dt;
    if (t >= t_final - 1e-12 * t_final) break;
    grid.push_back(t);
  }
  grid.push_back(t_final);

  OdeSolution sol;
  sol.times.push_back(0.0);
  sol.states.push_back(x0);
  std::size_t next = 1;

  double t = 0.0;
  Vec x = x0;
  Vec k1;
  try {
    k1 = rhs(t, x);
  } catch (const Error& e) {
    sol.truncated = true;
    sol.diagnostic = std::string("right-hand side failed at t = 0: ") + e.what();
    return sol;
  }

  double h = opts.h_initial;
  if (!(h > 0.0)) {
    Vec scale = (opts.atol + opts.rtol * x.cwiseAbs().array()).matrix();
    const double d0 = (x.array() / scale.array()).matrix().norm();
    const double d1n = (k1.array() / scale.array()).matrix().norm();
    h = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
    h = std::min(h, opts.report_dt);
  }

  while (t < t_final) {
    if (sol.accepted_steps + sol.rejected_steps >= opts.max_steps) {
      sol.truncated = true;
      sol.diagnostic = "step limit reached at t = " + std::to_string(t);
      break;
    }
    bool last = false;
    if (t + h >= t_final) {
      h = t_final - t;
      last = true;
    }
    if (h < opts.h_min) {
      sol.truncated = true;
      sol.diagnostic = "step size underflow at t = " + std::to_string(t);
      break;
    }
    Vec x1, k2, k3, k4, k5, k6, k7;
    double err = 0.0;
    try {
      k2 = rhs(t + c2 * h, x + h * a21 * k1);
      k3 = rhs(t + c3 * h, x + h * (a31 * k1 + a32 * k2));
      k4 = rhs(t + c4 * h, x + h * (a41 * k1 + a42 * k2 + a43 * k3));
      k5 = rhs(t + c5 * h, x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      k6 = rhs(t + h, x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      x1 = x + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
      k7 = rhs(t + h, x1);
      Vec e = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      err = error_norm(e, x, x1, opts);
      if (!std::isfinite(err)) err = 1e10;
    } catch (const Error&) {
      // Stage left the domain of the field: shrink and retry.
      err = 1e10;
    }

    if (err <= 1.0) {
      const double t1 = last ? t_final : t + h;
      Vec r2 = x1 - x;
      Vec r3 = h * k1 - r2;
      Vec r4 = r2 - h * k7 - r3;
      Vec r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      while (next < grid.size() && (grid[next] <= t1 || (last && next + 1 == grid.size()))) {
        const double th = (grid[next] - t) / h;
        const double th1 = 1.0 - th;
        sol.times.push_back(grid[next]);
        sol.states.push_back(next + 1 == grid.size() && last ? x1
                                                             : Vec(x + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)))));
        ++next;
      }
      t = t1;
      x = std::move(x1);
      k1 = std::move(k7);
      ++sol.accepted_steps;
      if (observer) {
        try {
          observer(t, x);
        } catch (const Error& e) {
          sol.truncated = true;
          sol.diagnostic = std::string("evaluation failed at t = ") + std::to_string(t) + ": " + e.what();
          break;
        }
      }
      const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      h *= fac;
    } else {
      ++sol.rejected_steps;
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
    }
  }
  return sol;
}

}  // namespace sigmakit
