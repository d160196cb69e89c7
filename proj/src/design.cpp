#include "sigmakit/design.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "sigmakit/errors.hpp"
#include "sigmakit/parallel.hpp"

namespace sigmakit {

FeedbackLaw::FeedbackLaw(TransverseManifold w, ControlAffineSystem sys, double lambda, double mu, double tol)
    : w_(std::move(w)), sys_(std::move(sys)), lambda_(lambda), mu_(mu), tol_(tol) {
  if (w_.states() != sys_.states()) throw PreconditionError("W and the system use different state lists");
  if (w_.m() != sys_.m())
    throw PreconditionError("W has codimension " + std::to_string(w_.m()) + " but the system has " +
                            std::to_string(sys_.m()) + " controls");
  if (!(lambda_ >= 0.0) || !std::isfinite(lambda_)) throw PreconditionError("lambda must be finite and >= 0");
}

Vec FeedbackLaw::control(const Vec& x) const {
  Mat t = w_.tangent_basis(x, mu_);
  Mat g = sys_.control_matrix(x);
  Mat mat(x.size(), x.size());
  mat << t, g;
  const double margin = smallest_singular_value(mat);
  if (!(margin >= tol_)) throw TransversalityError("W is not transverse to D at the queried point", margin);
  Mat s = w_.defining_jacobian(x, mu_);
  Vec rhs = -(s * sys_.drift_at(x)) - lambda_ * w_.defining(x, mu_);
  return min_norm_solve(s * g, rhs);
}

Vec FeedbackLaw::closed_loop(const Vec& x) const { return sys_.drift_at(x) + sys_.control_matrix(x) * control(x); }

FeedbackLaw synthesize_invariance_feedback(const TransverseManifold& w, const ControlAffineSystem& sys, double lambda,
                                           double mu, double tol) {
  return FeedbackLaw(w, sys, lambda, mu, tol);
}

Trajectory simulate(const FeedbackLaw& law, const Vec& x0, const SimulationOptions& opts) {
  if (x0.size() != law.system().n()) throw PreconditionError("initial state has the wrong dimension");
  Trajectory traj;
  auto observer = [&](double t, const Vec& x) {
    if (!opts.control_bounds) return;
    Vec u = law.control(x);
    const Box& b = *opts.control_bounds;
    for (Eigen::Index i = 0; i < u.size(); ++i)
      if (u(i) < b.lower(i) || u(i) > b.upper(i)) traj.violations.push_back({t, static_cast<int>(i), u(i)});
  };
  if (opts.control_bounds && opts.control_bounds->dim() != law.system().m())
    throw PreconditionError("control bounds must have one entry per control");
  auto sol = dormand_prince([&](double, const Vec& x) { return law.closed_loop(x); }, x0, opts.t_final, opts.ode,
                            observer);
  traj.accepted_steps = sol.accepted_steps;
  traj.rejected_steps = sol.rejected_steps;
  traj.truncated = sol.truncated;
  traj.diagnostic = sol.diagnostic;
  for (std::size_t k = 0; k < sol.times.size(); ++k) {
    try {
      Vec u = law.control(sol.states[k]);
      traj.controls.push_back(std::move(u));
      traj.surface_norm.push_back(law.surface(sol.states[k]).norm());
    } catch (const Error& e) {
      traj.truncated = true;
      if (traj.diagnostic.empty()) traj.diagnostic = e.what();
      break;
    }
    traj.times.push_back(sol.times[k]);
    traj.states.push_back(sol.states[k]);
  }
  return traj;
}

std::optional<double> decay_rate(const Trajectory& traj, double floor) {
  double n = 0, st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    if (!(traj.surface_norm[k] > floor)) continue;
    const double t = traj.times[k];
    const double y = std::log(traj.surface_norm[k]);
    n += 1;
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
  }
  if (n < 2) return std::nullopt;
  const double den = n * stt - st * st;
  if (den <= 0.0) return std::nullopt;
  return (n * sty - st * sy) / den;
}

const char* to_string(EventType t) {
  switch (t) {
    case EventType::Fold: return "fold";
    case EventType::EigenvalueZeroCrossing: return "eigenvalue_zero_crossing";
    case EventType::ImaginaryAxisCrossing: return "imaginary_axis_crossing";
  }
  return "unknown";
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

EquilibriumOptions at_mu(const BifurcationOptions& o, double mu) {
  EquilibriumOptions e = o.equilibrium;
  e.mu = mu;
  e.parallel = false;
  return e;
}

// Closest pair of equilibria with opposite determinant signs.
std::optional<std::pair<std::size_t, std::size_t>> opposite_pair(const std::vector<EquilibriumRecord>& eqs,
                                                                 const std::vector<bool>& eligible) {
  std::optional<std::pair<std::size_t, std::size_t>> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < eqs.size(); ++a)
    for (std::size_t b = a + 1; b < eqs.size(); ++b) {
      if (!eligible[a] || !eligible[b]) continue;
      if (eqs[a].jacobian_sign * eqs[b].jacobian_sign >= 0) continue;
      const double d = (eqs[a].point - eqs[b].point).norm();
      if (d < best_d) {
        best_d = d;
        best = std::make_pair(a, b);
      }
    }
  return best;
}

std::complex<double> nearest_to_axis(const std::vector<std::complex<double>>& ev) {
  std::complex<double> out(std::numeric_limits<double>::quiet_NaN(), 0.0);
  for (const auto& z : ev)
    if (std::isnan(out.real()) || std::abs(z.real()) < std::abs(out.real())) out = z;
  return out;
}

double combined_margin(const TransverseManifold& w, const ControlAffineSystem& sys, const Vec& x, double mu,
                       double rank_tol) {
  try {
    return smallest_singular_value(combined_system(w, sys, x, mu, rank_tol).jacobian);
  } catch (const Error&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

struct FoldPoint {
  Vec x;
  double mu = 0.0;
};

// Newton on {phi(x, mu) = 0, r(x) = 0, det J(x, mu) = 0}. The determinant is
// independent of the residual gauge, so it can be differenced across points.
std::optional<FoldPoint> fold_newton(const TransverseManifold& w, const ControlAffineSystem& sys, const Vec& x0,
                                     double mu0, double rank_tol) {
  const int n = sys.n();
  Vec y(n + 1);
  y << x0, mu0;
  auto det_at = [&](const Vec& v) {
    return combined_system(w, sys, v.head(n), v(n), rank_tol).jacobian.determinant();
  };
  try {
    for (int it = 0; it < 40; ++it) {
      const Vec x = y.head(n);
      const double mu = y(n);
      auto cs = combined_system(w, sys, x, mu, rank_tol);
      Vec g(n + 1);
      g << cs.value, cs.jacobian.determinant();
      Mat a = Mat::Zero(n + 1, n + 1);
      a.topLeftCorner(n, n) = cs.jacobian;
      a.block(0, n, w.m(), 1) = w.parameter_derivative(x, mu);
      for (int i = 0; i <= n; ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(y(i)));
        Vec yp = y, ym = y;
        yp(i) += h;
        ym(i) -= h;
        a(n, i) = (det_at(yp) - det_at(ym)) / (2.0 * h);
      }
      Vec step = a.fullPivLu().solve(-g);
      if (!step.allFinite()) return std::nullopt;
      y += step;
      if (step.norm() < 1e-13 * (1.0 + y.norm())) break;
    }
    auto cs = combined_system(w, sys, y.head(n), y(n), rank_tol);
    if (cs.value.norm() > 1e-9) return std::nullopt;
    return FoldPoint{y.head(n), y(n)};
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

BifurcationDiagram trace_bifurcation(const TransverseManifold& w, const ControlAffineSystem& sys,
                                     const std::vector<Vec>& seeds, const BifurcationOptions& opts) {
  if (!w.parametrized()) throw PreconditionError("W does not depend on a parameter");
  if (opts.n_mu < 2) throw PreconditionError("need at least two parameter samples");
  if (!(opts.mu_max > opts.mu_min)) throw PreconditionError("parameter range must satisfy min < max");
  if (seeds.empty()) throw PreconditionError("no seeds for the equilibrium search");
  if (w.states() != sys.states()) throw PreconditionError("W and the system use different state lists");

  BifurcationDiagram diag;
  const auto count = static_cast<std::size_t>(opts.n_mu);
  for (std::size_t i = 0; i < count; ++i)
    diag.mu.push_back(opts.mu_min + (opts.mu_max - opts.mu_min) * static_cast<double>(i) / (opts.n_mu - 1));
  std::vector<EquilibriumSearch> searches(count);
  parallel_for(count, [&](std::size_t i) { searches[i] = find_equilibria(w, sys, seeds, at_mu(opts, diag.mu[i])); });
  for (std::size_t i = 0; i < count; ++i) {
    diag.equilibria.push_back(searches[i].equilibria);
    for (const auto& f : searches[i].failures)
      if (f.message.rfind("root could not be classified", 0) == 0)
        diag.diagnostics.push_back("mu = " + fmt(diag.mu[i]) + ": " + f.message);
  }

  // Branches by greedy nearest-neighbour matching between consecutive samples.
  diag.branch.resize(count);
  std::vector<std::vector<bool>> continued(count);  // matched to the neighbouring sample
  for (std::size_t i = 0; i < count; ++i) {
    const auto& cur = diag.equilibria[i];
    diag.branch[i].assign(cur.size(), -1);
    for (std::size_t a = 0; a < cur.size(); ++a)
      for (std::size_t b = a + 1; b < cur.size(); ++b)
        if ((cur[a].point - cur[b].point).norm() < opts.match_radius) {
          diag.diagnostics.push_back("mu = " + fmt(diag.mu[i]) +
                                     ": equilibria closer than the matching radius, branch assignment is ambiguous");
          a = cur.size();
          break;
        }
    continued[i].assign(cur.size(), false);
    if (i > 0) {
      const auto& prev = diag.equilibria[i - 1];
      struct Cand {
        double d;
        std::size_t a, b;
      };
      std::vector<Cand> cands;
      for (std::size_t a = 0; a < prev.size(); ++a)
        for (std::size_t b = 0; b < cur.size(); ++b) {
          const double d = (prev[a].point - cur[b].point).norm();
          if (d < opts.match_radius) cands.push_back({d, a, b});
        }
      std::stable_sort(cands.begin(), cands.end(), [](const Cand& l, const Cand& r) { return l.d < r.d; });
      std::vector<bool> used_prev(prev.size(), false);
      for (const auto& c : cands) {
        if (used_prev[c.a] || diag.branch[i][c.b] >= 0) continue;
        used_prev[c.a] = true;
        diag.branch[i][c.b] = diag.branch[i - 1][c.a];
        continued[i][c.b] = true;
        continued[i - 1][c.a] = true;
      }
    }
    for (auto& id : diag.branch[i])
      if (id < 0) id = diag.branch_count++;
  }

  // Folds: the equilibrium count changes and two of the extra equilibria have
  // opposite determinant signs.
  const double rank_tol = opts.equilibrium.rank_tol;
  std::vector<BifurcationEvent> events;
  for (std::size_t i = 1; i < count; ++i) {
    const auto& ea = diag.equilibria[i - 1];
    const auto& eb = diag.equilibria[i];
    if (ea.size() == eb.size()) continue;
    const bool pair_at_b = eb.size() > ea.size();
    const std::size_t side = pair_at_b ? i : i - 1;
    const auto& big = diag.equilibria[side];
    std::vector<bool> eligible(big.size());
    for (std::size_t k = 0; k < big.size(); ++k) eligible[k] = !continued[side][k];
    auto pair = opposite_pair(big, eligible);
    if (!pair) pair = opposite_pair(big, std::vector<bool>(big.size(), true));
    if (!pair) {
      diag.diagnostics.push_back("equilibrium count changes between mu = " + fmt(diag.mu[i - 1]) + " and mu = " +
                                 fmt(diag.mu[i]) + " without a determinant sign change");
      continue;
    }
    Vec pa = big[pair->first].point;
    Vec pb = big[pair->second].point;
    double mu_pair = diag.mu[side];
    double mu_none = diag.mu[pair_at_b ? i - 1 : i];
    while (std::abs(mu_pair - mu_none) > opts.bracket_tol) {
      const double mid = 0.5 * (mu_pair + mu_none);
      auto res = find_equilibria(w, sys, {pa, pb, Vec(0.5 * (pa + pb))}, at_mu(opts, mid));
      auto p = opposite_pair(res.equilibria, std::vector<bool>(res.equilibria.size(), true));
      if (p) {
        mu_pair = mid;
        pa = res.equilibria[p->first].point;
        pb = res.equilibria[p->second].point;
      } else {
        mu_none = mid;
      }
    }
    BifurcationEvent ev;
    ev.type = EventType::Fold;
    ev.mu = 0.5 * (mu_pair + mu_none);
    ev.point = 0.5 * (pa + pb);
    auto polished = fold_newton(w, sys, ev.point, mu_pair, rank_tol);
    const double lo = std::min(mu_pair, mu_none) - opts.bracket_tol;
    const double hi = std::max(mu_pair, mu_none) + opts.bracket_tol;
    if (polished && polished->mu >= lo && polished->mu <= hi) {
      ev.mu = polished->mu;
      ev.point = polished->x;
    } else {
      diag.diagnostics.push_back("fold near mu = " + fmt(ev.mu) + " could not be polished; bracket midpoint reported");
    }
    ev.sigma_margin = combined_margin(w, sys, ev.point, ev.mu, rank_tol);
    try {
      ev.eigenvalue = nearest_to_axis(classify_equilibrium(w, sys, ev.point, at_mu(opts, ev.mu)).eigenvalues);
    } catch (const Error&) {
      ev.eigenvalue = {std::numeric_limits<double>::quiet_NaN(), 0.0};
    }
    events.push_back(std::move(ev));
  }

  // Stability changes along branches.
  std::vector<BifurcationEvent> crossings;
  for (std::size_t i = 1; i < count; ++i) {
    for (std::size_t b = 0; b < diag.equilibria[i].size(); ++b) {
      const int id = diag.branch[i][b];
      auto it = std::find(diag.branch[i - 1].begin(), diag.branch[i - 1].end(), id);
      if (it == diag.branch[i - 1].end()) continue;
      const auto& ra = diag.equilibria[i - 1][static_cast<std::size_t>(it - diag.branch[i - 1].begin())];
      const auto& rb = diag.equilibria[i][b];
      if (ra.index == rb.index) continue;
      double lo = diag.mu[i - 1], hi = diag.mu[i];
      Vec xa = ra.point, xb = rb.point;
      EquilibriumRecord last = rb;
      bool lost = false;
      while (hi - lo > opts.crossing_tol) {
        const double mid = 0.5 * (lo + hi);
        Vec seed = xa + (xb - xa) * ((mid - lo) / (hi - lo));
        auto res = find_equilibria(w, sys, {seed, xa, xb}, at_mu(opts, mid));
        if (res.equilibria.empty()) {
          lost = true;
          break;
        }
        std::size_t near = 0;
        for (std::size_t k = 1; k < res.equilibria.size(); ++k)
          if ((res.equilibria[k].point - seed).norm() < (res.equilibria[near].point - seed).norm()) near = k;
        last = res.equilibria[near];
        if (last.index == ra.index) {
          lo = mid;
          xa = last.point;
        } else {
          hi = mid;
          xb = last.point;
        }
      }
      if (lost)
        diag.diagnostics.push_back("branch lost while refining a stability change near mu = " + fmt(0.5 * (lo + hi)));
      BifurcationEvent ev;
      ev.mu = 0.5 * (lo + hi);
      ev.point = last.point;
      ev.eigenvalue = nearest_to_axis(last.eigenvalues);
      const double scale = std::max(1.0, std::abs(ev.eigenvalue));
      const auto ea = nearest_to_axis(ra.eigenvalues);
      const auto eb = nearest_to_axis(rb.eigenvalues);
      const bool real = std::abs(ea.imag()) <= 1e-8 * scale && std::abs(eb.imag()) <= 1e-8 * scale;
      ev.type = real ? EventType::EigenvalueZeroCrossing : EventType::ImaginaryAxisCrossing;
      ev.sigma_margin = combined_margin(w, sys, ev.point, ev.mu, rank_tol);
      crossings.push_back(std::move(ev));
    }
  }
  // A saddle-node carries its own zero eigenvalue; do not report it twice.
  for (auto& c : crossings) {
    bool at_fold = false;
    for (const auto& f : events)
      if (f.type == EventType::Fold && std::abs(f.mu - c.mu) <= opts.bracket_tol &&
          (f.point - c.point).norm() < 1e-3)
        at_fold = true;
    if (!at_fold) events.push_back(std::move(c));
  }

  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.mu < b.mu; });
  for (auto& e : events) {
    bool duplicate = false;
    for (const auto& kept : diag.events)
      if (kept.type == e.type && std::abs(kept.mu - e.mu) <= opts.bracket_tol && (kept.point - e.point).norm() < 1e-3)
        duplicate = true;
    if (!duplicate) diag.events.push_back(std::move(e));
  }
  return diag;
}

}  // namespace sigmakit
