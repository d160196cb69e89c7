#pragma once

// The singular set Sigma = { x : f(x) in span(g_1(x), ..., g_m(x)) }.
//
// At a corank-0 point the condition is realized through the residual
// r(x) = U(x)^T f(x), where U(x) is an orthonormal basis of range(G(x))^perp.
// U is a computational gauge: only |r|, zero sets and ranks carry meaning.

#include <optional>
#include <string>
#include <vector>

#include "sigmakit/linalg.hpp"
#include "sigmakit/sysmodel.hpp"

namespace sigmakit {

inline constexpr double kDefaultSigmaTol = 1e-9;
inline constexpr int kDefaultMaxIter = 50;

struct SigmaResidualFrame {
  Mat complement;    // U(x), n x (n-m)
  Vec residual;      // r(x) = U^T f
  Vec coefficients;  // least-squares a with G a ~ f
  double norm() const { return residual.norm(); }
};

/// Frame from already-evaluated drift and control matrix. Throws StratumError
/// when G is rank deficient.
SigmaResidualFrame residual_frame(const Vec& drift, const Mat& g, double rank_tol = kDefaultRankTol);

/// True when G passes through a rank drop between two nearby points.
bool crosses_stratum(const Mat& g_from, const Mat& g_to);

SigmaResidualFrame sigma_residual(const ControlAffineSystem& sys, const Vec& x,
                                  double rank_tol = kDefaultRankTol);

/// Jacobian of r at x in the gauge of `frame`:
///   J_r = U^T (J_f - sum_i a_i J_{g_i}).
Mat residual_jacobian(const ControlAffineSystem& sys, const Vec& x, const SigmaResidualFrame& frame);

/// Local certificate that Sigma is an m-dimensional submanifold at x:
/// the (n-m) x n Jacobian of r has full row rank.
struct DimensionCertificate {
  int expected_rank = 0;
  int rank = 0;
  double smallest_singular_value = 0.0;
  bool certified() const { return rank == expected_rank; }
};

DimensionCertificate dimension_certificate(const ControlAffineSystem& sys, const Vec& x,
                                           double rank_tol = kDefaultRankTol);

enum class SigmaKind { Subspace, Graph, Cloud, Curve };

struct SigmaSet {
  SigmaKind kind = SigmaKind::Cloud;
  double tol = kDefaultSigmaTol;
  Mat basis;                     // Subspace only
  std::vector<Vec> points;
  std::vector<double> residuals;
  std::vector<Vec> tangents;     // Curve only, unit tangents aligned with traversal
};

struct LinearSigma {
  SigmaSet set;
  int dimension = 0;
  bool degenerate = false;
};

/// Sigma of x' = Ax + Bu is the nullspace of U^T A with U spanning range(B)^perp.
LinearSigma sigma_linear(const LinearControlSystem& sys, double rank_tol = kDefaultRankTol);

struct NewtonOptions {
  double tol = kDefaultSigmaTol;
  int max_iter = kDefaultMaxIter;
  double rank_tol = kDefaultRankTol;
};

struct NewtonResult {
  bool converged = false;
  Vec point;
  int iterations = 0;
  double residual = 0.0;
  std::string message;
};

/// Gauss-Newton with minimum-norm steps and Armijo step halving on |r|^2.
/// Throws StratumError if the seed or an iterate leaves the corank-0 stratum.
NewtonResult sigma_newton(const ControlAffineSystem& sys, const Vec& seed, const NewtonOptions& opts = {});

enum class HaltReason { Completed, LeftBox, StratumBoundary, SingularPoint, CorrectorFailure };

const char* to_string(HaltReason r);

struct ContinuationOptions {
  double arc_step = 0.05;
  int n_steps = 100;
  double tol = kDefaultSigmaTol;
  double rank_tol = kDefaultRankTol;
  int max_corrector_iter = 12;
  int max_halvings = 4;
  bool both_directions = false;
  /// Tracing stops after the first point that leaves this box.
  std::optional<Box> box;
};

struct ContinuationResult {
  SigmaSet curve;
  std::vector<HaltReason> halts;  // one per traced direction
  std::vector<std::string> diagnostics;
};

/// Pseudo-arclength predictor-corrector along Sigma for single-input systems.
/// Throws PreconditionError when m != 1, the start is off Sigma, or the
/// dimension certificate fails at the start.
ContinuationResult sigma_continuation(const ControlAffineSystem& sys, const Vec& start,
                                      const ContinuationOptions& opts = {});

struct SampleError {
  double x1 = 0.0;
  std::string message;
};

struct StrictFeedbackResult {
  SigmaSet graph;
  std::vector<SampleError> errors;
};

/// Forward substitution x_{i+1} = -f_i / g_i. Samples where a g_i vanishes or
/// the point fails the general residual test are skipped and reported.
StrictFeedbackResult sigma_strict_feedback(const StrictFeedbackSystem& sys, const std::vector<double>& x1_samples,
                                           double tol = kDefaultSigmaTol, double rank_tol = kDefaultRankTol);

struct GridScanOptions {
  double tol = kDefaultSigmaTol;
  int max_iter = kDefaultMaxIter;
  double rank_tol = kDefaultRankTol;
  std::size_t cap = kDefaultGridCap;
};

struct GridScanResult {
  SigmaSet cloud;
  std::size_t seeds = 0;
  std::size_t converged = 0;
  std::size_t failed = 0;
  std::size_t stratum_rejected = 0;
  std::vector<std::string> warnings;
};

/// Newton from every grid point; converged points closer than step/10 to an
/// earlier one are dropped.
GridScanResult sigma_grid_scan(const ControlAffineSystem& sys, const Box& box, double step,
                               const GridScanOptions& opts = {});

/// Distance from p to the curve through `curve.points`, interpolated by cubic
/// Hermite segments using the stored tangents.
double distance_to_curve(const SigmaSet& curve, const Vec& p);

}  // namespace sigmakit
