#pragma once

// Feedback that makes a control-transverse manifold invariant and attracting,
// closed-loop simulation, and equilibrium branches of parametrized families W(mu).

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "sigmakit/ode.hpp"
#include "sigmakit/transverse.hpp"

namespace sigmakit {

/// u(x) = min-norm solution of (dphi G) u = -(dphi f) - lambda phi, so that
/// along closed-loop solutions phi' = -lambda phi.
class FeedbackLaw {
 public:
  FeedbackLaw(TransverseManifold w, ControlAffineSystem sys, double lambda, double mu = 0.0,
              double tol = kDefaultTransversalityTol);

  /// Throws TransversalityError when [T | G] is too close to singular at x.
  Vec control(const Vec& x) const;
  Vec closed_loop(const Vec& x) const;
  /// phi(x), the signed offset from W.
  Vec surface(const Vec& x) const { return w_.defining(x, mu_); }

  double lambda() const { return lambda_; }
  double mu() const { return mu_; }
  const TransverseManifold& manifold() const { return w_; }
  const ControlAffineSystem& system() const { return sys_; }

 private:
  TransverseManifold w_;
  ControlAffineSystem sys_;
  double lambda_;
  double mu_;
  double tol_;
};

FeedbackLaw synthesize_invariance_feedback(const TransverseManifold& w, const ControlAffineSystem& sys, double lambda,
                                           double mu = 0.0, double tol = kDefaultTransversalityTol);

struct SimulationOptions {
  double t_final = 5.0;
  OdeOptions ode;
  /// Monitored only; the law is never saturated.
  std::optional<Box> control_bounds;
};

struct ControlViolation {
  double t = 0.0;
  int component = 0;
  double value = 0.0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> controls;
  std::vector<double> surface_norm;
  std::vector<ControlViolation> violations;  // checked at every accepted step
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  bool truncated = false;
  std::string diagnostic;
};

Trajectory simulate(const FeedbackLaw& law, const Vec& x0, const SimulationOptions& opts = {});

/// Least-squares slope of log |phi| against t over samples with |phi| > floor.
/// Returns nullopt with fewer than two such samples.
std::optional<double> decay_rate(const Trajectory& traj, double floor);

enum class EventType { Fold, EigenvalueZeroCrossing, ImaginaryAxisCrossing };

const char* to_string(EventType t);

struct BifurcationEvent {
  double mu = 0.0;
  EventType type = EventType::Fold;
  Vec point;
  std::complex<double> eigenvalue;  // the one closest to the imaginary axis
  double sigma_margin = 0.0;        // transversality of W(mu) to Sigma at point
};

struct BifurcationOptions {
  double mu_min = -1.0;
  double mu_max = 1.0;
  int n_mu = 41;
  EquilibriumOptions equilibrium;  // its mu is ignored
  double match_radius = 0.25;
  /// Brackets are bisected below this width before any local polishing.
  double bracket_tol = 1e-6;
  double crossing_tol = 1e-10;
};

struct BifurcationDiagram {
  std::vector<double> mu;
  std::vector<std::vector<EquilibriumRecord>> equilibria;  // per sample
  std::vector<std::vector<int>> branch;                    // branch id of each equilibrium
  int branch_count = 0;
  std::vector<BifurcationEvent> events;  // sorted by mu
  std::vector<std::string> diagnostics;
};

/// Equilibria of W(mu) on a uniform mu grid, nearest-neighbour branches, and
/// fold / eigenvalue-crossing events refined in mu.
BifurcationDiagram trace_bifurcation(const TransverseManifold& w, const ControlAffineSystem& sys,
                                     const std::vector<Vec>& seeds, const BifurcationOptions& opts = {});

}  // namespace sigmakit
