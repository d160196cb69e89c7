#include "sigmakit/sysmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sigmakit/errors.hpp"
#include "sigmakit/parallel.hpp"

namespace sigmakit {

namespace {

void require_same_variables(const Expr& e, const Expr::VariableList& states, const char* what) {
  if (e.variable_list() != states && e.variables() != *states)
    throw PreconditionError(std::string(what) + " is not expressed over the system state list");
}

Mat evaluate_matrix(const std::vector<std::vector<Expr>>& rows, const Vec& x) {
  Mat out(rows.size(), rows.empty() ? 0 : rows.front().size());
  std::span<const double> values(x.data(), static_cast<std::size_t>(x.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) out(i, j) = rows[i][j].evaluate(values);
  return out;
}

std::vector<std::vector<Expr>> symbolic_jacobian(const std::vector<Expr>& field, std::size_t n) {
  std::vector<std::vector<Expr>> jac(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    jac[i].reserve(n);
    for (std::size_t j = 0; j < n; ++j) jac[i].push_back(differentiate(field[i], j));
  }
  return jac;
}

void check_dimension(const Vec& x, int n) {
  if (x.size() != n)
    throw PreconditionError("point has dimension " + std::to_string(x.size()) + ", system has " +
                            std::to_string(n));
}

}  // namespace

LinearControlSystem::LinearControlSystem(Mat a, Mat b, double rank_tol) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() != a_.cols() || a_.rows() == 0) throw PreconditionError("A must be a nonempty square matrix");
  if (b_.rows() != a_.rows()) throw PreconditionError("B must have as many rows as A");
  if (b_.cols() == 0 || b_.cols() > b_.rows()) throw PreconditionError("B must have 1 <= m <= n columns");
  if (numerical_rank(b_, rank_tol) != b_.cols())
    throw PreconditionError("B is not of full column rank " + std::to_string(b_.cols()));
}

ControlAffineSystem::ControlAffineSystem(std::vector<std::string> states, std::vector<Expr> drift,
                                         std::vector<std::vector<Expr>> controls)
    : states_(make_variable_list(std::move(states))), drift_(std::move(drift)), controls_(std::move(controls)) {
  const auto n = states_->size();
  if (n == 0) throw PreconditionError("system needs at least one state");
  if (drift_.size() != n)
    throw PreconditionError("drift has " + std::to_string(drift_.size()) + " components, expected " +
                            std::to_string(n));
  if (controls_.empty() || controls_.size() > n)
    throw PreconditionError("number of control fields must satisfy 1 <= m <= n");
  for (auto& e : drift_) require_same_variables(e, states_, "drift component");
  for (std::size_t i = 0; i < controls_.size(); ++i) {
    if (controls_[i].size() != n)
      throw PreconditionError("control field " + std::to_string(i + 1) + " has wrong length");
    for (auto& e : controls_[i]) require_same_variables(e, states_, "control component");
  }
  drift_jac_ = symbolic_jacobian(drift_, n);
  for (const auto& g : controls_) control_jac_.push_back(symbolic_jacobian(g, n));
}

ControlAffineSystem ControlAffineSystem::from_strings(std::vector<std::string> states,
                                                      const std::vector<std::string>& drift,
                                                      const std::vector<std::vector<std::string>>& controls) {
  auto vars = make_variable_list(states);
  std::vector<Expr> f;
  for (const auto& s : drift) f.push_back(parse(s, vars));
  std::vector<std::vector<Expr>> g;
  for (const auto& col : controls) {
    std::vector<Expr> gi;
    for (const auto& s : col) gi.push_back(parse(s, vars));
    g.push_back(std::move(gi));
  }
  return ControlAffineSystem(std::move(states), std::move(f), std::move(g));
}

ControlAffineSystem ControlAffineSystem::from_linear(const LinearControlSystem& sys) {
  const int n = sys.n();
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("x" + std::to_string(i + 1));
  auto vars = make_variable_list(names);
  std::vector<Expr> f;
  for (int i = 0; i < n; ++i) {
    Expr row = Expr::constant(0.0, vars);
    for (int j = 0; j < n; ++j) row = row + Expr::constant(sys.a()(i, j), vars) * Expr::variable(j, vars);
    f.push_back(row);
  }
  std::vector<std::vector<Expr>> g;
  for (int k = 0; k < sys.m(); ++k) {
    std::vector<Expr> col;
    for (int i = 0; i < n; ++i) col.push_back(Expr::constant(sys.b()(i, k), vars));
    g.push_back(std::move(col));
  }
  return ControlAffineSystem(std::move(names), std::move(f), std::move(g));
}

Vec ControlAffineSystem::drift_at(const Vec& x) const {
  check_dimension(x, n());
  auto v = evaluate_all(drift_, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Mat ControlAffineSystem::control_matrix(const Vec& x) const {
  check_dimension(x, n());
  Mat g(n(), m());
  std::span<const double> values(x.data(), static_cast<std::size_t>(x.size()));
  for (int i = 0; i < m(); ++i) {
    auto col = evaluate_all(controls_[i], values);
    for (int r = 0; r < n(); ++r) g(r, i) = col[r];
  }
  return g;
}

Mat ControlAffineSystem::drift_jacobian(const Vec& x) const {
  check_dimension(x, n());
  return evaluate_matrix(drift_jac_, x);
}

Mat ControlAffineSystem::control_jacobian(int i, const Vec& x) const {
  check_dimension(x, n());
  return evaluate_matrix(control_jac_.at(static_cast<std::size_t>(i)), x);
}

StrictFeedbackSystem::StrictFeedbackSystem(std::vector<std::string> states, std::vector<Expr> f, std::vector<Expr> g)
    : states_(make_variable_list(std::move(states))), f_(std::move(f)), g_(std::move(g)) {
  const auto n = states_->size();
  if (n < 2) throw PreconditionError("strict-feedback form needs n >= 2");
  if (f_.size() != n || g_.size() != n) throw PreconditionError("strict-feedback form needs n f_i and n g_i");
  for (std::size_t i = 0; i < n; ++i) {
    require_same_variables(f_[i], states_, "f_i");
    require_same_variables(g_[i], states_, "g_i");
    if (i + 1 == n) break;
    for (const Expr* e : {&f_[i], &g_[i]}) {
      for (std::size_t v : e->referenced_variables()) {
        if (v > i)
          throw PreconditionError("row " + std::to_string(i + 1) + " depends on " + (*states_)[v] +
                                  ", violating the strict-feedback pattern");
      }
    }
  }
}

StrictFeedbackSystem StrictFeedbackSystem::from_control_affine(const ControlAffineSystem& sys) {
  const auto n = static_cast<std::size_t>(sys.n());
  if (sys.m() != 1) throw PreconditionError("strict-feedback form requires a single input");
  if (n < 2) throw PreconditionError("strict-feedback form needs n >= 2");
  const auto& g_field = sys.controls().front();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    auto c = g_field[i].constant_value();
    if (!c || *c != 0.0)
      throw PreconditionError("control field must be zero in row " + std::to_string(i + 1));
  }
  std::vector<Expr> f;
  std::vector<Expr> g;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Expr& row = sys.drift()[i];
    for (std::size_t v : row.referenced_variables()) {
      if (v > i + 1)
        throw PreconditionError("drift row " + std::to_string(i + 1) + " depends on " + sys.states()[v] +
                                ", violating the strict-feedback pattern");
    }
    Expr gi = differentiate(row, i + 1);
    if (gi.depends_on(i + 1))
      throw PreconditionError("drift row " + std::to_string(i + 1) + " is not affine in " + sys.states()[i + 1]);
    f.push_back(substitute(row, i + 1, 0.0));
    g.push_back(gi);
  }
  f.push_back(sys.drift()[n - 1]);
  g.push_back(g_field[n - 1]);
  return StrictFeedbackSystem(sys.states(), std::move(f), std::move(g));
}

ControlAffineSystem StrictFeedbackSystem::to_control_affine() const {
  const auto n = f_.size();
  std::vector<Expr> drift;
  for (std::size_t i = 0; i + 1 < n; ++i) drift.push_back(f_[i] + g_[i] * Expr::variable(i + 1, states_));
  drift.push_back(f_[n - 1]);
  std::vector<Expr> col(n, Expr::constant(0.0, states_));
  col[n - 1] = g_[n - 1];
  return ControlAffineSystem(*states_, std::move(drift), {std::move(col)});
}

bool Box::contains(const Vec& x, double slack) const {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (x(i) < lower(i) - slack || x(i) > upper(i) + slack) return false;
  return true;
}

namespace {

std::size_t axis_count(double lo, double hi, double step) {
  return static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
}

}  // namespace

std::size_t grid_size(const Box& box, double step) {
  if (!(step > 0.0)) throw PreconditionError("grid step must be positive");
  if (box.lower.size() != box.upper.size() || box.lower.size() == 0)
    throw PreconditionError("box bounds have inconsistent dimensions");
  std::size_t total = 1;
  for (int i = 0; i < box.dim(); ++i) {
    if (!(box.upper(i) > box.lower(i))) throw PreconditionError("box is degenerate along axis " + std::to_string(i + 1));
    const std::size_t k = axis_count(box.lower(i), box.upper(i), step);
    if (total > std::numeric_limits<std::size_t>::max() / k) return std::numeric_limits<std::size_t>::max();
    total *= k;
  }
  return total;
}

std::vector<Vec> grid_points(const Box& box, double step, std::size_t cap) {
  const std::size_t total = grid_size(box, step);
  if (total > cap) throw GridTooLargeError(total, cap);
  const int d = box.dim();
  std::vector<std::size_t> counts(d);
  for (int i = 0; i < d; ++i) counts[i] = axis_count(box.lower(i), box.upper(i), step);
  std::vector<Vec> out;
  out.reserve(total);
  std::vector<std::size_t> k(d, 0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    Vec p(d);
    for (int i = 0; i < d; ++i) {
      double v = box.lower(i) + static_cast<double>(k[i]) * step;
      if (std::abs(v) < 1e-9 * step) v = 0.0;
      p(i) = v;
    }
    out.push_back(std::move(p));
    for (int i = d - 1; i >= 0; --i) {
      if (++k[i] < counts[i]) break;
      k[i] = 0;
    }
  }
  return out;
}

std::vector<Vec> RankStratification::points_with_corank(int c) const {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (corank[i] == c) out.push_back(points[i]);
  return out;
}

Vec eval_drift(const ControlAffineSystem& sys, const Vec& x) { return sys.drift_at(x); }

Mat control_matrix(const ControlAffineSystem& sys, const Vec& x) { return sys.control_matrix(x); }

int corank_of(const Mat& g, double rank_tol) {
  if (!(rank_tol > 0.0 && rank_tol < 1.0)) throw PreconditionError("rank_tol must lie in (0, 1)");
  return static_cast<int>(g.cols()) - numerical_rank(g, rank_tol);
}

int distribution_corank(const ControlAffineSystem& sys, const Vec& x, double rank_tol) {
  return corank_of(sys.control_matrix(x), rank_tol);
}

RankStratification stratify(const ControlAffineSystem& sys, const Box& box, double step, double rank_tol,
                            std::size_t cap) {
  if (box.dim() != sys.n()) throw PreconditionError("box dimension does not match the system");
  RankStratification out;
  out.box = box;
  out.step = step;
  out.points = grid_points(box, step, cap);
  out.corank.assign(out.points.size(), 0);
  parallel_for(out.points.size(), [&](std::size_t i) { out.corank[i] = distribution_corank(sys, out.points[i], rank_tol); });
  const auto regular = std::count(out.corank.begin(), out.corank.end(), 0);
  out.regular_fraction = out.points.empty() ? 0.0 : static_cast<double>(regular) / static_cast<double>(out.points.size());
  return out;
}

}  // namespace sigmakit
