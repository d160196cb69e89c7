#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "sigmakit/linalg.hpp"
#include "sigmakit/sysmodel.hpp"

namespace sigmakit::testing {

inline ControlAffineSystem pendulum() {
  return ControlAffineSystem::from_strings({"x1", "x2"}, {"x2", "-sin(x1)"}, {{"0", "1"}});
}

// x1' = x1^2 + x2, x2' = u : Sigma is the parabola x2 = -x1^2
inline ControlAffineSystem parabola() {
  return ControlAffineSystem::from_strings({"x1", "x2"}, {"x1^2 + x2", "0"}, {{"0", "1"}});
}

// Controller-canonical single-input system with characteristic coefficients a.
inline LinearControlSystem canonical(const std::vector<double>& a) {
  const int n = static_cast<int>(a.size());
  Mat A = Mat::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) A(i, i + 1) = 1.0;
  for (int j = 0; j < n; ++j) A(n - 1, j) = -a[j];
  Mat B = Mat::Zero(n, 1);
  B(n - 1, 0) = 1.0;
  return LinearControlSystem(A, B);
}

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Vec random_vec(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

inline Mat random_mat(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> d(0.0, 1.0);
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> state_names(int n) {
  std::vector<std::string> s;
  for (int i = 1; i <= n; ++i) s.push_back("x" + std::to_string(i));
  return s;
}

// W: x_n = sum_{i<n} k_i x_i as graph source text.
inline std::string linear_graph(const std::vector<double>& k) {
  std::string out = "0";
  for (std::size_t i = 0; i < k.size(); ++i) out += " + " + num(k[i]) + "*x" + std::to_string(i + 1);
  return out;
}

inline std::vector<int> iota(int from, int to) {
  std::vector<int> v;
  for (int i = from; i < to; ++i) v.push_back(i);
  return v;
}

// Durand-Kerner iteration for the monic polynomial sum_j c[j] s^j (c.back() == 1).
inline std::vector<std::complex<long double>> polynomial_roots(const std::vector<long double>& c) {
  using C = std::complex<long double>;
  const int d = static_cast<int>(c.size()) - 1;
  auto p = [&](C s) {
    C acc = 0;
    for (int j = d; j >= 0; --j) acc = acc * s + c[j];
    return acc;
  };
  std::vector<C> z(d);
  for (int i = 0; i < d; ++i) z[i] = std::pow(C(0.4L, 0.9L), i);
  for (int it = 0; it < 2000; ++it) {
    long double change = 0;
    for (int i = 0; i < d; ++i) {
      C denom = 1;
      for (int j = 0; j < d; ++j)
        if (j != i) denom *= z[i] - z[j];
      C delta = p(z[i]) / denom;
      z[i] -= delta;
      change = std::max(change, std::abs(delta));
    }
    if (change < 1e-30L) break;
  }
  return z;
}

// Largest distance in a greedy one-to-one matching of two multisets.
inline double multiset_distance(std::vector<std::complex<double>> a, std::vector<std::complex<long double>> b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0.0;
  for (const auto& x : a) {
    std::size_t best = 0;
    double bd = INFINITY;
    for (std::size_t j = 0; j < b.size(); ++j) {
      double d = std::abs(std::complex<double>(b[j]) - x);
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    worst = std::max(worst, bd);
    b.erase(b.begin() + static_cast<long>(best));
  }
  return worst;
}

}  // namespace sigmakit::testing
