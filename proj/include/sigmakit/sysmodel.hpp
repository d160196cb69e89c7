#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sigmakit/expr.hpp"
#include "sigmakit/linalg.hpp"

namespace sigmakit {

inline constexpr double kDefaultRankTol = 1e-10;

/// x' = A x + B u with B of full column rank.
class LinearControlSystem {
 public:
  LinearControlSystem(Mat a, Mat b, double rank_tol = kDefaultRankTol);

  const Mat& a() const { return a_; }
  const Mat& b() const { return b_; }
  int n() const { return static_cast<int>(a_.rows()); }
  int m() const { return static_cast<int>(b_.cols()); }

 private:
  Mat a_;
  Mat b_;
};

/// x' = f(x) + sum_i u_i g_i(x), all fields given as expressions over `states`.
class ControlAffineSystem {
 public:
  ControlAffineSystem(std::vector<std::string> states, std::vector<Expr> drift,
                      std::vector<std::vector<Expr>> controls);

  static ControlAffineSystem from_strings(std::vector<std::string> states,
                                          const std::vector<std::string>& drift,
                                          const std::vector<std::vector<std::string>>& controls);
  static ControlAffineSystem from_linear(const LinearControlSystem& sys);

  int n() const { return static_cast<int>(states_->size()); }
  int m() const { return static_cast<int>(controls_.size()); }
  const std::vector<std::string>& states() const { return *states_; }
  const Expr::VariableList& variable_list() const { return states_; }
  const std::vector<Expr>& drift() const { return drift_; }
  const std::vector<std::vector<Expr>>& controls() const { return controls_; }

  Vec drift_at(const Vec& x) const;
  Mat control_matrix(const Vec& x) const;
  /// Symbolic Jacobian of f (n x n).
  Mat drift_jacobian(const Vec& x) const;
  /// Symbolic Jacobian of g_i (n x n).
  Mat control_jacobian(int i, const Vec& x) const;

 private:
  Expr::VariableList states_;
  std::vector<Expr> drift_;
  std::vector<std::vector<Expr>> controls_;
  std::vector<std::vector<Expr>> drift_jac_;                  // [row][col]
  std::vector<std::vector<std::vector<Expr>>> control_jac_;   // [i][row][col]
};

/// Triangular form
///   x_i' = f_i(x_1..x_i) + g_i(x_1..x_i) x_{i+1},  i < n
///   x_n' = f_n(x) + g_n(x) u
class StrictFeedbackSystem {
 public:
  /// Throws PreconditionError if f_i or g_i reference a state beyond x_i (i < n).
  StrictFeedbackSystem(std::vector<std::string> states, std::vector<Expr> f, std::vector<Expr> g);

  /// Recovers (f_i, g_i) from a single-input system whose drift is affine in
  /// x_{i+1} row by row and whose control field is g_n e_n.
  static StrictFeedbackSystem from_control_affine(const ControlAffineSystem& sys);

  ControlAffineSystem to_control_affine() const;

  int n() const { return static_cast<int>(f_.size()); }
  const std::vector<std::string>& states() const { return *states_; }
  const std::vector<Expr>& f() const { return f_; }
  const std::vector<Expr>& g() const { return g_; }

 private:
  Expr::VariableList states_;
  std::vector<Expr> f_;
  std::vector<Expr> g_;
};

/// Axis-aligned box [lower, upper].
struct Box {
  Vec lower;
  Vec upper;

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vec& x, double slack = 0.0) const;
  double diameter() const { return (upper - lower).norm(); }
};

inline constexpr std::size_t kDefaultGridCap = 2'000'000;

/// Number of samples of the uniform grid lower + k*step inside the box.
std::size_t grid_size(const Box& box, double step);
/// Grid points in lexicographic order (last coordinate fastest). Coordinates
/// within 1e-9*step of zero are snapped to zero so grids through the origin hit it.
std::vector<Vec> grid_points(const Box& box, double step, std::size_t cap = kDefaultGridCap);

struct RankStratification {
  Box box;
  double step = 0.0;
  std::vector<Vec> points;
  std::vector<int> corank;
  double regular_fraction = 0.0;

  std::vector<Vec> points_with_corank(int c) const;
};

Vec eval_drift(const ControlAffineSystem& sys, const Vec& x);
Mat control_matrix(const ControlAffineSystem& sys, const Vec& x);
int distribution_corank(const ControlAffineSystem& sys, const Vec& x, double rank_tol = kDefaultRankTol);
int corank_of(const Mat& g, double rank_tol = kDefaultRankTol);

/// Labels every grid point with its corank. Throws GridTooLargeError above `cap`.
RankStratification stratify(const ControlAffineSystem& sys, const Box& box, double step,
                            double rank_tol = kDefaultRankTol, std::size_t cap = kDefaultGridCap);

}  // namespace sigmakit
