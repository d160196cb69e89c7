#include "sigmakit/sigma.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sigmakit/errors.hpp"
#include "sigmakit/parallel.hpp"

namespace sigmakit {

SigmaResidualFrame residual_frame(const Vec& drift, const Mat& g, double rank_tol) {
  const int corank = corank_of(g, rank_tol);
  if (corank != 0) throw StratumError(corank);
  SigmaResidualFrame frame;
  frame.complement = orthonormal_complement(g);
  frame.residual = frame.complement.transpose() * drift;
  frame.coefficients = min_norm_solve(g, drift);
  return frame;
}

bool crosses_stratum(const Mat& g_from, const Mat& g_to) {
  // The Gram cross-determinant keeps its sign while G stays in one stratum.
  return (g_from.transpose() * g_to).determinant() <= 0.0;
}

SigmaResidualFrame sigma_residual(const ControlAffineSystem& sys, const Vec& x, double rank_tol) {
  return residual_frame(sys.drift_at(x), sys.control_matrix(x), rank_tol);
}

Mat residual_jacobian(const ControlAffineSystem& sys, const Vec& x, const SigmaResidualFrame& frame) {
  Mat k = sys.drift_jacobian(x);
  for (int i = 0; i < sys.m(); ++i) k -= frame.coefficients(i) * sys.control_jacobian(i, x);
  return frame.complement.transpose() * k;
}

DimensionCertificate dimension_certificate(const ControlAffineSystem& sys, const Vec& x, double rank_tol) {
  auto frame = sigma_residual(sys, x, rank_tol);
  DimensionCertificate cert;
  cert.expected_rank = sys.n() - sys.m();
  if (cert.expected_rank == 0) {
    cert.smallest_singular_value = std::numeric_limits<double>::infinity();
    return cert;
  }
  Mat jac = residual_jacobian(sys, x, frame);
  cert.rank = numerical_rank(jac, rank_tol);
  cert.smallest_singular_value = smallest_singular_value(jac);
  return cert;
}

LinearSigma sigma_linear(const LinearControlSystem& sys, double rank_tol) {
  Mat u = orthonormal_complement(sys.b());
  Mat reduced = u.transpose() * sys.a();
  LinearSigma out;
  out.set.kind = SigmaKind::Subspace;
  out.set.basis = null_space(reduced, rank_tol);
  out.dimension = static_cast<int>(out.set.basis.cols());
  out.degenerate = out.dimension != sys.m();
  return out;
}

NewtonResult sigma_newton(const ControlAffineSystem& sys, const Vec& seed, const NewtonOptions& opts) {
  NewtonResult res;
  res.point = seed;
  SigmaResidualFrame frame = sigma_residual(sys, seed, opts.rank_tol);
  for (int it = 0;; ++it) {
    res.iterations = it;
    res.residual = frame.norm();
    if (res.residual < opts.tol) {
      res.converged = true;
      return res;
    }
    if (it >= opts.max_iter) {
      res.message = "max_iter exceeded";
      return res;
    }
    Mat jac = residual_jacobian(sys, res.point, frame);
    Vec step = min_norm_solve(jac, -frame.residual);
    if (!step.allFinite()) {
      res.message = "non-finite Newton step";
      return res;
    }
    const double phi0 = res.residual * res.residual;
    double t = 1.0;
    bool accepted = false;
    std::optional<StratumError> crossing;
    for (int k = 0; k < 40 && !accepted; ++k, t *= 0.5) {
      Vec trial = res.point + t * step;
      try {
        SigmaResidualFrame trial_frame = sigma_residual(sys, trial, opts.rank_tol);
        if (crosses_stratum(sys.control_matrix(res.point), sys.control_matrix(trial))) throw StratumError(1);
        const double phi = trial_frame.residual.squaredNorm();
        if (phi <= (1.0 - 2e-4 * t) * phi0) {
          res.point = std::move(trial);
          frame = std::move(trial_frame);
          accepted = true;
        }
      } catch (const StratumError& e) {
        crossing = e;
      } catch (const DomainError&) {
      }
    }
    if (!accepted) {
      if (crossing) throw *crossing;
      res.message = "line search failed to reduce the residual";
      return res;
    }
  }
}

const char* to_string(HaltReason r) {
  switch (r) {
    case HaltReason::Completed: return "completed";
    case HaltReason::LeftBox: return "left_box";
    case HaltReason::StratumBoundary: return "stratum_boundary";
    case HaltReason::SingularPoint: return "singular_point";
    case HaltReason::CorrectorFailure: return "corrector_failure";
  }
  return "unknown";
}

namespace {

struct CurvePoint {
  Vec point;
  Vec tangent;
  double residual = 0.0;
};

// Unit tangent of Sigma at x (m = 1), oriented along `reference` when given.
Vec curve_tangent(const Mat& jac, const Vec* reference) {
  Eigen::JacobiSVD<Mat> svd(jac, Eigen::ComputeFullV);
  Vec t = svd.matrixV().col(jac.cols() - 1);
  if (reference) {
    if (t.dot(*reference) < 0.0) t = -t;
  } else {
    Eigen::Index imax = 0;
    t.cwiseAbs().maxCoeff(&imax);
    if (t(imax) < 0.0) t = -t;
  }
  return t;
}

struct CorrectorOutcome {
  enum class Status { Converged, Failed, Stratum, Singular } status = Status::Failed;
  Vec point;
  SigmaResidualFrame frame;
  std::string message;
};

CorrectorOutcome correct(const ControlAffineSystem& sys, const Vec& predicted, const Vec& tangent,
                         const ContinuationOptions& opts) {
  CorrectorOutcome out;
  Vec y = predicted;
  for (int it = 0; it <= opts.max_corrector_iter; ++it) {
    SigmaResidualFrame frame;
    try {
      frame = sigma_residual(sys, y, opts.rank_tol);
    } catch (const StratumError& e) {
      out.status = CorrectorOutcome::Status::Stratum;
      out.message = e.what();
      return out;
    } catch (const DomainError& e) {
      out.message = e.what();
      return out;
    }
    const double plane = tangent.dot(y - predicted);
    if (frame.norm() < opts.tol && std::abs(plane) < opts.tol) {
      out.status = CorrectorOutcome::Status::Converged;
      out.point = y;
      out.frame = std::move(frame);
      return out;
    }
    if (it == opts.max_corrector_iter) break;
    const auto n = y.size();
    Mat aug(n, n);
    aug << residual_jacobian(sys, y, frame), tangent.transpose();
    Vec rhs(n);
    rhs << -frame.residual, -plane;
    Eigen::JacobiSVD<Mat> svd(aug, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec& s = svd.singularValues();
    if (s(n - 1) <= 1e-12 * s(0)) {
      out.status = CorrectorOutcome::Status::Singular;
      out.message = "augmented Jacobian is singular";
      return out;
    }
    Vec dy = svd.solve(rhs);
    if (!dy.allFinite()) break;
    y += dy;
  }
  out.message = "corrector did not converge";
  return out;
}

HaltReason trace_branch(const ControlAffineSystem& sys, const Vec& start, const Vec& start_tangent,
                        const ContinuationOptions& opts, std::vector<CurvePoint>& out, std::string& diagnostic) {
  const int expected_rank = sys.n() - 1;
  Vec x = start;
  Vec t = start_tangent;
  for (int step = 0; step < opts.n_steps; ++step) {
    double h = opts.arc_step;
    bool accepted = false;
    for (int halvings = 0; halvings <= opts.max_halvings; ++halvings, h *= 0.5) {
      CorrectorOutcome c = correct(sys, x + h * t, t, opts);
      if (c.status == CorrectorOutcome::Status::Stratum) {
        diagnostic = c.message;
        return HaltReason::StratumBoundary;
      }
      if (c.status == CorrectorOutcome::Status::Singular) {
        diagnostic = c.message;
        return HaltReason::SingularPoint;
      }
      if (c.status != CorrectorOutcome::Status::Converged) {
        diagnostic = c.message;
        continue;
      }
      if (crosses_stratum(sys.control_matrix(x), sys.control_matrix(c.point))) {
        diagnostic = "control distribution changes rank between consecutive points";
        return HaltReason::StratumBoundary;
      }
      const double dist = (c.point - x).norm();
      if (dist < 0.5 * h || dist > 1.5 * h) {
        diagnostic = "corrected point at distance " + std::to_string(dist) + " for step " + std::to_string(h);
        continue;
      }
      Mat jac = residual_jacobian(sys, c.point, c.frame);
      if (numerical_rank(jac, opts.rank_tol) != expected_rank) {
        out.push_back({c.point, t, c.frame.norm()});
        diagnostic = "residual Jacobian loses rank: non-generic configuration";
        return HaltReason::SingularPoint;
      }
      Vec t_new = curve_tangent(jac, &t);
      if (t_new.dot(t) < 0.5) {
        diagnostic = "tangent turned too sharply";
        continue;
      }
      out.push_back({c.point, t_new, c.frame.norm()});
      x = c.point;
      t = t_new;
      accepted = true;
      break;
    }
    if (!accepted) {
      diagnostic = "corrector failed after " + std::to_string(opts.max_halvings) + " halvings: " + diagnostic;
      return HaltReason::CorrectorFailure;
    }
    if (opts.box && !opts.box->contains(x)) {
      diagnostic.clear();
      return HaltReason::LeftBox;
    }
  }
  diagnostic.clear();
  return HaltReason::Completed;
}

}  // namespace

ContinuationResult sigma_continuation(const ControlAffineSystem& sys, const Vec& start,
                                      const ContinuationOptions& opts) {
  if (sys.m() != 1) throw PreconditionError("curve continuation requires m = 1");
  if (!(opts.arc_step > 0.0)) throw PreconditionError("arc_step must be positive");
  SigmaResidualFrame frame = sigma_residual(sys, start, opts.rank_tol);
  if (!(frame.norm() < opts.tol))
    throw PreconditionError("start point is not on Sigma (residual " + std::to_string(frame.norm()) + ")");
  Mat jac = residual_jacobian(sys, start, frame);
  if (numerical_rank(jac, opts.rank_tol) != sys.n() - 1)
    throw PreconditionError("residual Jacobian at start is rank deficient: non-generic configuration");
  const Vec t0 = curve_tangent(jac, nullptr);

  ContinuationResult result;
  result.curve.kind = SigmaKind::Curve;
  result.curve.tol = opts.tol;

  std::vector<CurvePoint> backward;
  if (opts.both_directions) {
    std::string diag;
    result.halts.push_back(trace_branch(sys, start, -t0, opts, backward, diag));
    result.diagnostics.push_back(diag);
    std::reverse(backward.begin(), backward.end());
    for (auto& p : backward) p.tangent = -p.tangent;
  }
  std::vector<CurvePoint> forward;
  std::string diag;
  result.halts.push_back(trace_branch(sys, start, t0, opts, forward, diag));
  result.diagnostics.push_back(diag);

  auto push = [&](const CurvePoint& p) {
    result.curve.points.push_back(p.point);
    result.curve.tangents.push_back(p.tangent);
    result.curve.residuals.push_back(p.residual);
  };
  for (const auto& p : backward) push(p);
  push({start, t0, frame.norm()});
  for (const auto& p : forward) push(p);
  return result;
}

StrictFeedbackResult sigma_strict_feedback(const StrictFeedbackSystem& sys, const std::vector<double>& x1_samples,
                                           double tol, double rank_tol) {
  const ControlAffineSystem general = sys.to_control_affine();
  const int n = sys.n();
  StrictFeedbackResult out;
  out.graph.kind = SigmaKind::Graph;
  out.graph.tol = tol;
  for (double x1 : x1_samples) {
    Vec x = Vec::Zero(n);
    x(0) = x1;
    std::span<const double> values(x.data(), static_cast<std::size_t>(n));
    try {
      bool ok = true;
      for (int i = 0; i + 1 < n; ++i) {
        const double gi = sys.g()[i].evaluate(values);
        if (std::abs(gi) <= 1e-14) {
          out.errors.push_back({x1, "g_" + std::to_string(i + 1) + " vanishes"});
          ok = false;
          break;
        }
        x(i + 1) = -sys.f()[i].evaluate(values) / gi;
        if (!std::isfinite(x(i + 1))) {
          out.errors.push_back({x1, "non-finite value for x_" + std::to_string(i + 2)});
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      const double r = sigma_residual(general, x, rank_tol).norm();
      if (!(r < tol)) {
        out.errors.push_back({x1, "residual " + std::to_string(r) + " above tolerance"});
        continue;
      }
      out.graph.points.push_back(x);
      out.graph.residuals.push_back(r);
    } catch (const Error& e) {
      out.errors.push_back({x1, e.what()});
    }
  }
  return out;
}

GridScanResult sigma_grid_scan(const ControlAffineSystem& sys, const Box& box, double step,
                               const GridScanOptions& opts) {
  if (box.dim() != sys.n()) throw PreconditionError("box dimension does not match the system");
  const std::vector<Vec> seeds = grid_points(box, step, opts.cap);

  enum class Status { Converged, Failed, Stratum };
  struct SeedOutcome {
    Status status = Status::Failed;
    NewtonResult newton;
    bool zero_drift = false;
  };
  std::vector<SeedOutcome> outcomes(seeds.size());
  const NewtonOptions newton{opts.tol, opts.max_iter, opts.rank_tol};

  parallel_for(seeds.size(), [&](std::size_t i) {
    SeedOutcome& o = outcomes[i];
    try {
      o.zero_drift = sys.drift_at(seeds[i]).squaredNorm() == 0.0;
      if (distribution_corank(sys, seeds[i], opts.rank_tol) != 0) {
        o.status = Status::Stratum;
        return;
      }
      o.newton = sigma_newton(sys, seeds[i], newton);
      o.status = o.newton.converged ? Status::Converged : Status::Failed;
    } catch (const Error& e) {
      o.status = Status::Failed;
      o.newton.message = e.what();
    }
  });

  GridScanResult out;
  out.cloud.kind = SigmaKind::Cloud;
  out.cloud.tol = opts.tol;
  out.seeds = seeds.size();
  const double radius = step / 10.0;
  bool all_zero_drift = !seeds.empty();
  for (const auto& o : outcomes) {
    all_zero_drift = all_zero_drift && o.zero_drift;
    switch (o.status) {
      case Status::Stratum: ++out.stratum_rejected; continue;
      case Status::Failed: ++out.failed; continue;
      case Status::Converged: ++out.converged; break;
    }
    const Vec& p = o.newton.point;
    const bool duplicate = std::any_of(out.cloud.points.begin(), out.cloud.points.end(),
                                       [&](const Vec& q) { return (q - p).norm() < radius; });
    if (duplicate) continue;
    out.cloud.points.push_back(p);
    out.cloud.residuals.push_back(o.newton.residual);
  }
  if (all_zero_drift)
    out.warnings.push_back("drift vanishes at every seed: Sigma fills the scanned box (degenerate, drift-free system)");
  if (out.failed > 0) out.warnings.push_back(std::to_string(out.failed) + " seeds failed to converge");
  if (out.stratum_rejected > 0)
    out.warnings.push_back(std::to_string(out.stratum_rejected) + " seeds lie outside the corank-0 stratum");
  return out;
}

namespace {

Vec hermite(const Vec& p0, const Vec& m0, const Vec& p1, const Vec& m1, double s) {
  const double s2 = s * s;
  const double s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * m1;
}

}  // namespace

double distance_to_curve(const SigmaSet& curve, const Vec& p) {
  if (curve.points.empty()) return std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : curve.points) best = std::min(best, (q - p).norm());
  const bool have_tangents = curve.tangents.size() == curve.points.size();
  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
    const Vec& p0 = curve.points[i];
    const Vec& p1 = curve.points[i + 1];
    const double len = (p1 - p0).norm();
    if ((p0 - p).norm() - 2.0 * len > best) continue;
    const Vec m0 = have_tangents ? Vec(len * curve.tangents[i]) : Vec(p1 - p0);
    const Vec m1 = have_tangents ? Vec(len * curve.tangents[i + 1]) : Vec(p1 - p0);
    auto dist = [&](double s) { return (hermite(p0, m0, p1, m1, s) - p).norm(); };
    constexpr int kSamples = 16;
    double s_best = 0.0;
    double d_best = dist(0.0);
    for (int k = 1; k <= kSamples; ++k) {
      const double s = static_cast<double>(k) / kSamples;
      const double d = dist(s);
      if (d < d_best) {
        d_best = d;
        s_best = s;
      }
    }
    // golden-section refinement around the best sample
    double a = std::max(0.0, s_best - 1.0 / kSamples);
    double b = std::min(1.0, s_best + 1.0 / kSamples);
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - ratio * (b - a);
    double d = a + ratio * (b - a);
    double fc = dist(c);
    double fd = dist(d);
    for (int it = 0; it < 80; ++it) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - ratio * (b - a);
        fc = dist(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + ratio * (b - a);
        fd = dist(d);
      }
    }
    best = std::min({best, d_best, fc, fd});
  }
  return best;
}

}  // namespace sigmakit
