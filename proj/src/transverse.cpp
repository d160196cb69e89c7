#include "sigmakit/transverse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sigmakit/errors.hpp"
#include "sigmakit/parallel.hpp"

namespace sigmakit {

namespace {

Expr::VariableList with_parameter(const std::vector<std::string>& states, const std::optional<std::string>& parameter) {
  std::vector<std::string> names = states;
  if (parameter) {
    if (std::find(states.begin(), states.end(), *parameter) != states.end())
      throw PreconditionError("parameter name '" + *parameter + "' collides with a state");
    names.push_back(*parameter);
  }
  return make_variable_list(std::move(names));
}

void check_split(const std::vector<std::string>& states, const std::vector<int>& ind, const std::vector<int>& dep) {
  const int n = static_cast<int>(states.size());
  if (dep.empty()) throw PreconditionError("W needs at least one dependent coordinate");
  if (static_cast<int>(ind.size() + dep.size()) != n)
    throw PreconditionError("ind and dep must together list all " + std::to_string(n) + " states");
  std::vector<int> seen(n, 0);
  for (const auto* list : {&ind, &dep}) {
    for (int i : *list) {
      if (i < 0 || i >= n) throw PreconditionError("state index " + std::to_string(i + 1) + " out of range");
      if (seen[i]++)
        throw PreconditionError("state " + states[i] + " (index " + std::to_string(i + 1) +
                                ") appears more than once in ind/dep");
    }
  }
}

double scale_of(const Vec& x) { return 1.0 + (x.size() ? x.cwiseAbs().maxCoeff() : 0.0); }

Mat select_columns(const Mat& a, const std::vector<int>& cols) {
  Mat out(a.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(k) = a.col(cols[k]);
  return out;
}

std::vector<std::complex<double>> sorted_eigenvalues(const Mat& a) {
  std::vector<std::complex<double>> out;
  if (a.rows() == 0) return out;
  Eigen::EigenSolver<Mat> es(a, false);
  for (Eigen::Index i = 0; i < a.rows(); ++i) out.push_back(es.eigenvalues()(i));
  std::sort(out.begin(), out.end(), [](const auto& l, const auto& r) {
    if (l.real() != r.real()) return l.real() > r.real();
    return l.imag() < r.imag();
  });
  return out;
}

}  // namespace

TransverseManifold TransverseManifold::graph(std::vector<std::string> states, std::vector<int> ind,
                                             std::vector<int> dep, const std::vector<std::string>& h,
                                             std::optional<std::string> parameter) {
  check_split(states, ind, dep);
  if (h.size() != dep.size())
    throw PreconditionError("W has " + std::to_string(dep.size()) + " dependent states but " +
                            std::to_string(h.size()) + " graph functions");
  TransverseManifold w;
  w.variables_ = with_parameter(states, parameter);
  w.states_ = make_variable_list(std::move(states));
  w.parameter_ = std::move(parameter);
  w.ind_ = std::move(ind);
  w.dep_ = std::move(dep);
  w.graph_ = true;
  for (std::size_t j = 0; j < h.size(); ++j) {
    Expr e = parse(h[j], w.variables_);
    for (int d : w.dep_)
      if (e.depends_on(static_cast<std::size_t>(d)))
        throw PreconditionError("graph function for " + w.states()[w.dep_[j]] + " references dependent state " +
                                w.states()[d]);
    w.phi_.push_back(Expr::variable(static_cast<std::size_t>(w.dep_[j]), w.variables_) - e);
    w.h_.push_back(std::move(e));
  }
  w.finish();
  return w;
}

TransverseManifold TransverseManifold::level_set(std::vector<std::string> states, const std::vector<std::string>& phi,
                                                 const Vec& anchor, std::vector<int> dep,
                                                 std::optional<std::string> parameter, double mu) {
  const int n = static_cast<int>(states.size());
  if (phi.empty() || static_cast<int>(phi.size()) > n)
    throw PreconditionError("level set needs between 1 and n defining functions");
  if (anchor.size() != n) throw PreconditionError("anchor has the wrong dimension");
  TransverseManifold w;
  w.variables_ = with_parameter(states, parameter);
  w.parameter_ = std::move(parameter);
  w.graph_ = false;
  for (const auto& src : phi) w.phi_.push_back(parse(src, w.variables_));
  const int m = static_cast<int>(phi.size());
  // dep/ind must be valid before finish(); fill provisional values.
  w.states_ = make_variable_list(states);
  w.dep_.assign(m, 0);
  w.finish();

  if (dep.empty()) {
    Mat s = w.defining_jacobian(anchor, mu);
    if (numerical_rank(s, kDefaultRankTol) < m)
      throw PreconditionError("no valid graph split: defining functions are dependent at the anchor");
    std::vector<int> pick(n, 0);
    std::fill(pick.end() - m, pick.end(), 1);
    double best = -1.0;
    do {
      std::vector<int> cols;
      for (int i = 0; i < n; ++i)
        if (pick[i]) cols.push_back(i);
      const double sv = smallest_singular_value(select_columns(s, cols));
      if (sv > best) {
        best = sv;
        dep = cols;
      }
    } while (std::next_permutation(pick.begin(), pick.end()));
  }
  std::vector<int> ind;
  for (int i = 0; i < n; ++i)
    if (std::find(dep.begin(), dep.end(), i) == dep.end()) ind.push_back(i);
  check_split(states, ind, dep);
  if (static_cast<int>(dep.size()) != m) throw PreconditionError("dep must list one state per defining function");
  w.ind_ = std::move(ind);
  w.dep_ = std::move(dep);
  w.anchor_ = anchor;
  w.anchor_ = w.lift(w.chart(anchor), mu);
  return w;
}

void TransverseManifold::finish() {
  const std::size_t n = states_->size();
  grad_.clear();
  hess_.clear();
  dmu_.clear();
  for (const auto& p : phi_) {
    std::vector<Expr> g;
    std::vector<std::vector<Expr>> hs;
    for (std::size_t q = 0; q < n; ++q) {
      g.push_back(differentiate(p, q));
      std::vector<Expr> row;
      for (std::size_t r = 0; r < n; ++r) row.push_back(differentiate(g.back(), r));
      hs.push_back(std::move(row));
    }
    grad_.push_back(std::move(g));
    hess_.push_back(std::move(hs));
    dmu_.push_back(parameter_ ? differentiate(p, n) : Expr::constant(0.0, variables_));
  }
}

bool TransverseManifold::parametrized() const {
  if (!parameter_) return false;
  return std::any_of(phi_.begin(), phi_.end(), [&](const Expr& e) { return e.depends_on(states_->size()); });
}

std::vector<double> TransverseManifold::arguments(const Vec& x, double mu) const {
  if (x.size() != n()) throw PreconditionError("point has the wrong dimension for W");
  std::vector<double> args(x.data(), x.data() + x.size());
  if (parameter_) args.push_back(mu);
  return args;
}

Vec TransverseManifold::chart(const Vec& x) const {
  Vec c(dim());
  for (int k = 0; k < dim(); ++k) c(k) = x(ind_[k]);
  return c;
}

Vec TransverseManifold::lift(const Vec& chart, double mu) const {
  if (chart.size() != dim()) throw PreconditionError("chart point has the wrong dimension");
  Vec x = graph_ ? Vec::Zero(n()) : anchor_;
  for (int k = 0; k < dim(); ++k) x(ind_[k]) = chart(k);
  if (graph_) {
    auto args = arguments(x, mu);
    for (int j = 0; j < m(); ++j) x(dep_[j]) = h_[j].evaluate(args);
    return x;
  }
  for (int it = 0; it < 60; ++it) {
    Vec s = defining(x, mu);
    if (s.norm() <= 1e-14 * scale_of(x)) return x;
    Mat sd = select_columns(defining_jacobian(x, mu), dep_);
    Eigen::FullPivLU<Mat> lu(sd);
    if (!lu.isInvertible()) break;
    Vec dx = lu.solve(-s);
    for (int j = 0; j < m(); ++j) x(dep_[j]) += dx(j);
    if (dx.norm() <= 1e-15 * scale_of(x)) return x;
  }
  if (defining(x, mu).norm() <= kMembershipTol * scale_of(x)) return x;
  throw PreconditionError("implicit solve failed: no valid graph split near the queried chart point");
}

Vec TransverseManifold::defining(const Vec& x, double mu) const {
  auto args = arguments(x, mu);
  Vec s(m());
  for (int j = 0; j < m(); ++j) s(j) = phi_[j].evaluate(args);
  return s;
}

Mat TransverseManifold::defining_jacobian(const Vec& x, double mu) const {
  auto args = arguments(x, mu);
  Mat s(m(), n());
  for (int j = 0; j < m(); ++j)
    for (int q = 0; q < n(); ++q) s(j, q) = grad_[j][q].evaluate(args);
  return s;
}

Vec TransverseManifold::parameter_derivative(const Vec& x, double mu) const {
  auto args = arguments(x, mu);
  Vec d(m());
  for (int j = 0; j < m(); ++j) d(j) = dmu_[j].evaluate(args);
  return d;
}

Mat TransverseManifold::tangent_basis(const Vec& x, double mu) const {
  Mat s = defining_jacobian(x, mu);
  Mat sd = select_columns(s, dep_);
  Mat si = select_columns(s, ind_);
  Eigen::FullPivLU<Mat> lu(sd);
  if (!lu.isInvertible()) throw PreconditionError("no valid graph split at the queried point");
  Mat b = lu.solve(-si);
  Mat t = Mat::Zero(n(), dim());
  for (int k = 0; k < dim(); ++k) {
    t(ind_[k], k) = 1.0;
    for (int j = 0; j < m(); ++j) t(dep_[j], k) = b(j, k);
  }
  return t;
}

std::vector<Mat> TransverseManifold::tangent_derivatives(const Vec& x, double mu) const {
  auto args = arguments(x, mu);
  Mat t = tangent_basis(x, mu);
  Eigen::FullPivLU<Mat> lu(select_columns(defining_jacobian(x, mu), dep_));
  std::vector<Mat> hess(m(), Mat(n(), n()));
  for (int j = 0; j < m(); ++j)
    for (int q = 0; q < n(); ++q)
      for (int r = 0; r < n(); ++r) hess[j](q, r) = hess_[j][q][r].evaluate(args);
  std::vector<Mat> out;
  for (int k = 0; k < dim(); ++k) {
    Mat ds(m(), n());
    for (int j = 0; j < m(); ++j) ds.row(j) = (hess[j] * t.col(k)).transpose();
    Mat dep_block = lu.solve(-(ds * t));
    Mat dt = Mat::Zero(n(), dim());
    for (int j = 0; j < m(); ++j) dt.row(dep_[j]) = dep_block.row(j);
    out.push_back(std::move(dt));
  }
  return out;
}

bool TransverseManifold::contains(const Vec& x, double mu, double tol) const {
  return defining(x, mu).cwiseAbs().maxCoeff() <= tol * scale_of(x);
}

TransversalityMargin transversality_to_D(const TransverseManifold& w, const ControlAffineSystem& sys, const Vec& p,
                                         double mu, double tol, double rank_tol) {
  if (!w.contains(p, mu)) throw PreconditionError("point is not on W");
  Mat g = sys.control_matrix(p);
  if (int c = corank_of(g, rank_tol); c != 0) throw StratumError(c);
  Mat t = w.tangent_basis(p, mu);
  if (t.cols() + g.cols() != p.size())
    throw PreconditionError("dim W + number of controls must equal the state dimension");
  Mat mat(p.size(), p.size());
  mat << t, g;
  Eigen::JacobiSVD<Mat> svd(mat);
  const auto& sv = svd.singularValues();
  TransversalityMargin out;
  out.sigma_min = sv(sv.size() - 1);
  out.condition = out.sigma_min > 0.0 ? sv(0) / out.sigma_min : std::numeric_limits<double>::infinity();
  out.transverse = out.sigma_min > tol;
  return out;
}

TransverseDynamics::TransverseDynamics(TransverseManifold w, ControlAffineSystem sys, double mu, double tol)
    : w_(std::move(w)), sys_(std::move(sys)), mu_(mu), tol_(tol) {
  if (w_.states() != sys_.states()) throw PreconditionError("W and the system use different state lists");
  if (w_.m() != sys_.m())
    throw PreconditionError("W has codimension " + std::to_string(w_.m()) + " but the system has " +
                            std::to_string(sys_.m()) + " controls");
}

TransverseDynamics::Decomposition TransverseDynamics::decompose(const Vec& p) const {
  Mat t = w_.tangent_basis(p, mu_);
  Mat g = sys_.control_matrix(p);
  Mat mat(p.size(), p.size());
  mat << t, g;
  Eigen::JacobiSVD<Mat> svd(mat, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Decomposition d;
  d.margin = svd.singularValues()(p.size() - 1);
  if (!(d.margin >= tol_)) throw TransversalityError("W is not transverse to D at the queried point", d.margin);
  Vec z = svd.solve(sys_.drift_at(p));
  d.alpha = z.head(w_.dim());
  d.beta = z.tail(w_.m());
  d.tangent_part = t * d.alpha;
  d.control_part = g * d.beta;
  return d;
}

Vec TransverseDynamics::velocity(const Vec& chart) const { return decompose(w_.lift(chart, mu_)).alpha; }

Mat TransverseDynamics::jacobian(const Vec& chart) const { return jacobian_at(w_.lift(chart, mu_)); }

Mat TransverseDynamics::jacobian_at(const Vec& p) const {
  const int k_dim = w_.dim();
  Mat t = w_.tangent_basis(p, mu_);
  Mat g = sys_.control_matrix(p);
  Mat mat(p.size(), p.size());
  mat << t, g;
  Eigen::JacobiSVD<Mat> svd(mat, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double margin = svd.singularValues()(p.size() - 1);
  if (!(margin >= tol_)) throw TransversalityError("W is not transverse to D at the queried point", margin);
  Vec z = svd.solve(sys_.drift_at(p));
  Vec alpha = z.head(k_dim);
  Vec beta = z.tail(w_.m());
  auto dt = w_.tangent_derivatives(p, mu_);
  Mat jf = sys_.drift_jacobian(p);
  std::vector<Mat> jg;
  for (int i = 0; i < sys_.m(); ++i) jg.push_back(sys_.control_jacobian(i, p));
  // Differentiate M(p) z = f(p) along dp = T_k.
  Mat out(k_dim, k_dim);
  for (int k = 0; k < k_dim; ++k) {
    Vec rhs = jf * t.col(k) - dt[k] * alpha;
    for (int i = 0; i < sys_.m(); ++i) rhs -= beta(i) * (jg[i] * t.col(k));
    out.col(k) = svd.solve(rhs).head(k_dim);
  }
  return out;
}

Mat TransverseDynamics::jacobian_fd(const Vec& chart, double step) const {
  return finite_difference_jacobian([this](const Vec& c) { return velocity(c); }, chart, step);
}

TransverseDynamics transverse_dynamics(const TransverseManifold& w, const ControlAffineSystem& sys, double mu,
                                       double tol) {
  return TransverseDynamics(w, sys, mu, tol);
}

CombinedSystem combined_system(const TransverseManifold& w, const ControlAffineSystem& sys, const Vec& x, double mu,
                               double rank_tol) {
  auto frame = sigma_residual(sys, x, rank_tol);
  const int n = sys.n();
  const int m = w.m();
  CombinedSystem cs;
  cs.value.resize(m + frame.residual.size());
  cs.value << w.defining(x, mu), frame.residual;
  cs.jacobian.resize(cs.value.size(), n);
  cs.jacobian << w.defining_jacobian(x, mu), residual_jacobian(sys, x, frame);
  return cs;
}

namespace {

struct SeedOutcome {
  bool converged = false;
  Vec point;
  double residual = 0.0;
  std::string message;
};

SeedOutcome solve_from_seed(const TransverseManifold& w, const ControlAffineSystem& sys, const Vec& seed,
                            const EquilibriumOptions& opts) {
  SeedOutcome out;
  Vec x = seed;
  CombinedSystem cs;
  try {
    cs = combined_system(w, sys, x, opts.mu, opts.rank_tol);
  } catch (const StratumError& e) {
    out.message = std::string("seed rejected: ") + e.what();
    return out;
  } catch (const DomainError& e) {
    out.message = std::string("seed rejected: ") + e.what();
    return out;
  }
  auto try_point = [&](const Vec& trial) -> std::optional<CombinedSystem> {
    try {
      if (crosses_stratum(sys.control_matrix(x), sys.control_matrix(trial))) return std::nullopt;
      return combined_system(w, sys, trial, opts.mu, opts.rank_tol);
    } catch (const StratumError&) {
    } catch (const DomainError&) {
    }
    return std::nullopt;
  };

  for (int it = 0;; ++it) {
    const double res = cs.value.norm();
    if (res < opts.tol) break;
    if (it >= opts.max_iter) {
      out.message = "no convergence after " + std::to_string(opts.max_iter) + " iterations";
      out.point = x;
      out.residual = res;
      return out;
    }
    Vec step = min_norm_solve(cs.jacobian, -cs.value);
    if (!step.allFinite()) {
      out.message = "non-finite Newton step";
      return out;
    }
    const double phi0 = res * res;
    bool accepted = false;
    double t = 1.0;
    for (int k = 0; k < 40 && !accepted; ++k, t *= 0.5) {
      Vec trial = x + t * step;
      auto next = try_point(trial);
      if (next && next->value.squaredNorm() <= (1.0 - 2e-4 * t) * phi0) {
        x = std::move(trial);
        cs = std::move(*next);
        accepted = true;
      }
    }
    if (!accepted) {
      out.message = "line search failed to reduce the residual";
      out.point = x;
      out.residual = res;
      return out;
    }
  }
  // A couple of plain Newton steps take the iterate to the attainable accuracy.
  for (int k = 0; k < 2; ++k) {
    Vec trial = x + min_norm_solve(cs.jacobian, -cs.value);
    auto next = try_point(trial);
    if (!next || next->value.norm() >= cs.value.norm()) break;
    x = std::move(trial);
    cs = std::move(*next);
  }
  out.converged = true;
  out.point = x;
  out.residual = cs.value.norm();
  return out;
}

}  // namespace

EquilibriumRecord classify_equilibrium(const TransverseManifold& w, const ControlAffineSystem& sys, const Vec& x,
                                       const EquilibriumOptions& opts) {
  EquilibriumRecord rec;
  rec.point = x;
  rec.chart_point = w.chart(x);
  auto cs = combined_system(w, sys, x, opts.mu, opts.rank_tol);
  rec.residual = cs.value.norm();
  Eigen::JacobiSVD<Mat> svd(cs.jacobian);
  const auto& sv = svd.singularValues();
  rec.sigma_margin = sv(sv.size() - 1);
  rec.condition = rec.sigma_margin > 0.0 ? sv(0) / rec.sigma_margin : std::numeric_limits<double>::infinity();
  rec.isolated = rec.condition < opts.isolation_condition;
  const double det = cs.jacobian.fullPivLu().determinant();
  rec.jacobian_sign = det > 0.0 ? 1 : (det < 0.0 ? -1 : 0);
  TransverseDynamics td(w, sys, opts.mu, opts.transversality_tol);
  rec.eigenvalues = sorted_eigenvalues(td.jacobian_at(x));
  rec.index = static_cast<int>(
      std::count_if(rec.eigenvalues.begin(), rec.eigenvalues.end(), [](const auto& z) { return z.real() > 0.0; }));
  return rec;
}

EquilibriumSearch find_equilibria(const TransverseManifold& w, const ControlAffineSystem& sys,
                                  const std::vector<Vec>& seeds, const EquilibriumOptions& opts) {
  if (w.states() != sys.states()) throw PreconditionError("W and the system use different state lists");
  std::vector<SeedOutcome> outcomes(seeds.size());
  auto for_each = [&](std::size_t count, auto&& fn) {
    if (opts.parallel) {
      parallel_for(count, fn);
    } else {
      for (std::size_t i = 0; i < count; ++i) fn(i);
    }
  };
  for_each(seeds.size(), [&](std::size_t i) { outcomes[i] = solve_from_seed(w, sys, seeds[i], opts); });

  EquilibriumSearch out;
  std::vector<std::size_t> unique;  // seed indices of retained roots
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!outcomes[i].converged) {
      out.failures.push_back({i, outcomes[i].message});
      continue;
    }
    bool duplicate = false;
    for (std::size_t j : unique)
      if ((outcomes[j].point - outcomes[i].point).norm() < opts.dedup_radius) duplicate = true;
    if (!duplicate) unique.push_back(i);
  }

  std::vector<std::optional<EquilibriumRecord>> records(unique.size());
  std::vector<std::string> errors(unique.size());
  for_each(unique.size(), [&](std::size_t k) {
    try {
      records[k] = classify_equilibrium(w, sys, outcomes[unique[k]].point, opts);
    } catch (const Error& e) {
      errors[k] = e.what();
    }
  });
  for (std::size_t k = 0; k < unique.size(); ++k) {
    if (records[k]) {
      out.continuum_suspected = out.continuum_suspected || !records[k]->isolated;
      out.equilibria.push_back(std::move(*records[k]));
    } else {
      out.failures.push_back({unique[k], "root could not be classified: " + errors[k]});
    }
  }
  std::sort(out.failures.begin(), out.failures.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
  std::sort(out.equilibria.begin(), out.equilibria.end(), [](const auto& a, const auto& b) {
    return std::lexicographical_compare(a.point.data(), a.point.data() + a.point.size(), b.point.data(),
                                        b.point.data() + b.point.size());
  });
  return out;
}

SigmaTransversality transversality_to_sigma(const TransverseManifold& w, const ControlAffineSystem& sys,
                                            const Vec& point, double mu, double tol, double rank_tol) {
  if (!w.contains(point, mu)) throw PreconditionError("point is not on W");
  auto cs = combined_system(w, sys, point, mu, rank_tol);
  const double r = cs.value.tail(cs.value.size() - w.m()).norm();
  if (r > kMembershipTol * std::max(1.0, sys.drift_at(point).norm())) throw PreconditionError("point is not on Sigma");
  SigmaTransversality out;
  out.margin = cs.jacobian.rows() ? smallest_singular_value(cs.jacobian) : 0.0;
  out.transverse = out.margin > tol;
  return out;
}

}  // namespace sigmakit
