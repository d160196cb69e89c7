#pragma once

// Control-transverse manifolds W of codimension m and the dynamics they induce.
//
// W is stored through m defining functions phi(x, mu) = 0 together with a
// coordinate split: `dep` holds the m coordinates that are locally solved for,
// `ind` the remaining n - m chart coordinates. The graph form
// x_dep = h(x_ind) is the case phi = x_dep - h.

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "sigmakit/linalg.hpp"
#include "sigmakit/sigma.hpp"
#include "sigmakit/sysmodel.hpp"

namespace sigmakit {

inline constexpr double kDefaultTransversalityTol = 1e-8;
inline constexpr double kMembershipTol = 1e-8;

class TransverseManifold {
 public:
  /// Graph form. `h[j]` gives state dep[j] and must be an expression over
  /// states (plus the parameter, if named) that does not reference any dep state.
  /// Indices are 0-based.
  static TransverseManifold graph(std::vector<std::string> states, std::vector<int> ind, std::vector<int> dep,
                                  const std::vector<std::string>& h,
                                  std::optional<std::string> parameter = std::nullopt);

  /// Level set phi = 0. When `dep` is empty the split with the best conditioned
  /// dep block at `anchor` is chosen. Lifting solves for x_dep by Newton,
  /// starting from the anchor.
  static TransverseManifold level_set(std::vector<std::string> states, const std::vector<std::string>& phi,
                                      const Vec& anchor, std::vector<int> dep = {},
                                      std::optional<std::string> parameter = std::nullopt, double mu = 0.0);

  int n() const { return static_cast<int>(states_->size()); }
  int m() const { return static_cast<int>(dep_.size()); }
  int dim() const { return n() - m(); }
  const std::vector<int>& ind() const { return ind_; }
  const std::vector<int>& dep() const { return dep_; }
  const std::vector<std::string>& states() const { return *states_; }
  const std::optional<std::string>& parameter() const { return parameter_; }
  bool graph_form() const { return graph_; }
  /// True when some defining function references the parameter.
  bool parametrized() const;
  const std::vector<Expr>& defining_functions() const { return phi_; }

  Vec chart(const Vec& x) const;
  Vec lift(const Vec& chart, double mu = 0.0) const;
  /// phi(x, mu), m-vector.
  Vec defining(const Vec& x, double mu = 0.0) const;
  /// d phi / dx, m x n.
  Mat defining_jacobian(const Vec& x, double mu = 0.0) const;
  /// d phi / d mu, m-vector (zero for unparametrized W).
  Vec parameter_derivative(const Vec& x, double mu = 0.0) const;
  /// Columns e_ind(k) + (dx_dep / dx_ind(k)) e_dep, n x (n-m).
  Mat tangent_basis(const Vec& x, double mu = 0.0) const;
  /// Derivative of the tangent basis along chart direction k, for each k.
  std::vector<Mat> tangent_derivatives(const Vec& x, double mu = 0.0) const;
  bool contains(const Vec& x, double mu = 0.0, double tol = kMembershipTol) const;

 private:
  TransverseManifold() = default;
  void finish();
  std::vector<double> arguments(const Vec& x, double mu) const;

  Expr::VariableList states_;
  Expr::VariableList variables_;  // states, then the parameter if any
  std::optional<std::string> parameter_;
  std::vector<int> ind_;
  std::vector<int> dep_;
  bool graph_ = true;
  std::vector<Expr> h_;
  std::vector<Expr> phi_;
  std::vector<std::vector<Expr>> grad_;               // [j][q]
  std::vector<std::vector<std::vector<Expr>>> hess_;  // [j][q][r]
  std::vector<Expr> dmu_;
  Vec anchor_;
};

struct TransversalityMargin {
  bool transverse = false;
  double sigma_min = 0.0;
  double condition = 0.0;
};

/// Smallest singular value and condition number of [T_pW | G(p)].
/// Throws PreconditionError when p is not on W and StratumError off the corank-0 stratum.
TransversalityMargin transversality_to_D(const TransverseManifold& w, const ControlAffineSystem& sys, const Vec& p,
                                         double mu = 0.0, double tol = kDefaultTransversalityTol,
                                         double rank_tol = kDefaultRankTol);

/// Vector field on the chart of W obtained by splitting f(p) = v_W + v_D.
class TransverseDynamics {
 public:
  TransverseDynamics(TransverseManifold w, ControlAffineSystem sys, double mu = 0.0,
                     double tol = kDefaultTransversalityTol);

  struct Decomposition {
    Vec alpha;         // chart velocity
    Vec beta;          // control coefficients
    Vec tangent_part;  // v_W = T alpha
    Vec control_part;  // v_D = G beta
    double margin = 0.0;
  };

  /// Throws TransversalityError when [T | G] is numerically singular.
  Decomposition decompose(const Vec& p) const;
  Vec velocity(const Vec& chart) const;
  Mat jacobian(const Vec& chart) const;
  /// Chart Jacobian at a point p of W (avoids re-lifting on level sets with several branches).
  Mat jacobian_at(const Vec& p) const;
  Mat jacobian_fd(const Vec& chart, double step = 1e-6) const;

  const TransverseManifold& manifold() const { return w_; }
  const ControlAffineSystem& system() const { return sys_; }
  double mu() const { return mu_; }

 private:
  TransverseManifold w_;
  ControlAffineSystem sys_;
  double mu_;
  double tol_;
};

TransverseDynamics transverse_dynamics(const TransverseManifold& w, const ControlAffineSystem& sys, double mu = 0.0,
                                       double tol = kDefaultTransversalityTol);

/// The square system {phi = 0, r = 0} whose zeros are the equilibria on W.
struct CombinedSystem {
  Vec value;     // (phi, r)
  Mat jacobian;  // rows: d phi, J_r
};

CombinedSystem combined_system(const TransverseManifold& w, const ControlAffineSystem& sys, const Vec& x,
                               double mu = 0.0, double rank_tol = kDefaultRankTol);

struct EquilibriumRecord {
  Vec point;
  Vec chart_point;
  std::vector<std::complex<double>> eigenvalues;  // sorted by real part, descending
  int index = 0;                                  // eigenvalues with positive real part
  bool isolated = false;
  double condition = 0.0;     // of the combined Jacobian
  double sigma_margin = 0.0;  // its smallest singular value
  int jacobian_sign = 0;      // sign of its determinant
  double residual = 0.0;
};

struct EquilibriumOptions {
  double mu = 0.0;
  double tol = 1e-10;
  int max_iter = 100;
  double rank_tol = kDefaultRankTol;
  double dedup_radius = 1e-6;
  double isolation_condition = 1e8;
  double transversality_tol = kDefaultTransversalityTol;
  bool parallel = true;  // over seeds
};

struct SeedFailure {
  std::size_t seed = 0;
  std::string message;
};

struct EquilibriumSearch {
  std::vector<EquilibriumRecord> equilibria;  // lexicographic by point
  std::vector<SeedFailure> failures;
  /// Set when a root has an ill-conditioned combined Jacobian, i.e. W is not
  /// transverse to Sigma there and equilibria need not be isolated.
  bool continuum_suspected = false;
};

/// Newton from every seed on the combined system. Seeds that fail are recorded.
EquilibriumSearch find_equilibria(const TransverseManifold& w, const ControlAffineSystem& sys,
                                  const std::vector<Vec>& seeds, const EquilibriumOptions& opts = {});

/// Record for a point already known to lie on W and Sigma.
EquilibriumRecord classify_equilibrium(const TransverseManifold& w, const ControlAffineSystem& sys, const Vec& x,
                                       const EquilibriumOptions& opts = {});

struct SigmaTransversality {
  bool transverse = false;
  double margin = 0.0;
};

/// Smallest singular value of the combined Jacobian at a point of W and Sigma.
SigmaTransversality transversality_to_sigma(const TransverseManifold& w, const ControlAffineSystem& sys,
                                            const Vec& point, double mu = 0.0,
                                            double tol = kDefaultTransversalityTol,
                                            double rank_tol = kDefaultRankTol);

}  // namespace sigmakit
