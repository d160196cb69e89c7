#include "sigmakit/linalg.hpp"

#include <algorithm>

namespace sigmakit {

int numerical_rank(const Mat& a, double rank_tol) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(a);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double threshold = rank_tol * s(0);
  return static_cast<int>((s.array() > threshold).count());
}

double smallest_singular_value(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(a);
  // min(rows, cols) values, sorted descending
  const Vec& s = svd.singularValues();
  return s(s.size() - 1);
}

Mat orthonormal_complement(const Mat& g) {
  const auto n = g.rows();
  const auto m = g.cols();
  if (m == 0) return Mat::Identity(n, n);
  Eigen::JacobiSVD<Mat> svd(g, Eigen::ComputeFullU);
  Mat u = svd.matrixU().rightCols(n - m);
  if (n - m > 0) {
    Mat frame(n, n);
    frame << g, u;
    if (frame.determinant() < 0.0) u.col(n - m - 1) *= -1.0;
  }
  return u;
}

Mat null_space(const Mat& a, double rank_tol) {
  const auto cols = a.cols();
  if (a.rows() == 0) return Mat::Identity(cols, cols);
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullV);
  const int rank = numerical_rank(a, rank_tol);
  return svd.matrixV().rightCols(cols - rank);
}

Vec min_norm_solve(const Mat& a, const Vec& b) {
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(a);
  return cod.solve(b);
}

Mat finite_difference_jacobian(const std::function<Vec(const Vec&)>& fn, const Vec& x, double step) {
  Vec f0 = fn(x);
  Mat jac(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vec xp = x;
    Vec xm = x;
    const double h = step * std::max(1.0, std::abs(x(j)));
    xp(j) += h;
    xm(j) -= h;
    jac.col(j) = (fn(xp) - fn(xm)) / (xp(j) - xm(j));
  }
  return jac;
}

}  // namespace sigmakit
