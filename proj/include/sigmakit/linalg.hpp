#pragma once

#include <Eigen/Dense>
#include <functional>

namespace sigmakit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Number of singular values strictly above rank_tol times the largest one.
/// A zero matrix has rank 0.
int numerical_rank(const Mat& a, double rank_tol);

double smallest_singular_value(const Mat& a);

/// Orthonormal basis of range(g)^perp for a full-column-rank n x m matrix g.
/// The basis is oriented so that det([g | U]) > 0, which makes residuals built
/// from it vary continuously with g.
Mat orthonormal_complement(const Mat& g);

/// Orthonormal basis of the nullspace of `a` (columns), from the SVD.
Mat null_space(const Mat& a, double rank_tol);

/// Minimum-norm least-squares solution of a * x = b.
Vec min_norm_solve(const Mat& a, const Vec& b);

/// Central finite-difference Jacobian of fn at x.
Mat finite_difference_jacobian(const std::function<Vec(const Vec&)>& fn, const Vec& x, double step = 1e-6);

}  // namespace sigmakit
