#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "sigmakit/errors.hpp"
#include "sigmakit/sysmodel.hpp"
#include "test_util.hpp"

using namespace sigmakit;
using namespace sigmakit::testing;

TEST_CASE("eval_drift") {
  auto p = pendulum();
  CHECK(eval_drift(p, vec({0, 0})).norm() == 0.0);
  Vec v = eval_drift(p, vec({std::numbers::pi / 2, 1}));
  CHECK(v(0) == doctest::Approx(1.0));
  CHECK(v(1) == doctest::Approx(-1.0));
  auto q = ControlAffineSystem::from_strings({"x1", "x2"}, {"x1^2 + x2", "0"}, {{"0", "1"}});
  CHECK(eval_drift(q, vec({2, -4})).norm() == 0.0);
}

TEST_CASE("eval_drift reports the failing component and wrong dimensions") {
  auto s = ControlAffineSystem::from_strings({"x1", "x2"}, {"x1", "log(x2)"}, {{"0", "1"}});
  try {
    (void)eval_drift(s, vec({1, 0}));
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(e.component() == std::optional<std::size_t>(1));
  }
  CHECK_THROWS_AS((void)eval_drift(s, vec({1, 2, 3})), PreconditionError);
}

TEST_CASE("system construction validates shapes and names") {
  CHECK_THROWS_AS(ControlAffineSystem::from_strings({"x1", "x2"}, {"x1"}, {{"0", "1"}}), PreconditionError);
  CHECK_THROWS_AS(ControlAffineSystem::from_strings({"x1", "x2"}, {"x1", "x2"}, {{"0"}}), PreconditionError);
  CHECK_THROWS_AS(ControlAffineSystem::from_strings({"x1"}, {"x1"}, {{"1"}, {"2"}}), PreconditionError);
  CHECK_THROWS_AS(ControlAffineSystem::from_strings({"x1", "x2"}, {"x1", "y"}, {{"0", "1"}}),
                  UndeclaredVariableError);
}

TEST_CASE("control_matrix") {
  auto p = pendulum();
  Mat g = control_matrix(p, vec({0.3, -2}));
  CHECK(g(0, 0) == 0.0);
  CHECK(g(1, 0) == 1.0);

  auto s = ControlAffineSystem::from_strings({"x1", "x2", "x3"}, {"0", "0", "0"},
                                             {{"1", "0", "0"}, {"0", "1", "x1"}});
  Mat g2 = control_matrix(s, vec({2, 0, 0}));
  CHECK((g2.col(0) - vec({1, 0, 0})).norm() == 0.0);
  CHECK((g2.col(1) - vec({0, 1, 2})).norm() == 0.0);

  auto r = ControlAffineSystem::from_strings({"x1", "x2"}, {"1", "0"}, {{"x1", "x2"}});
  CHECK(control_matrix(r, vec({0, 0})).norm() == 0.0);
}

TEST_CASE("distribution_corank") {
  auto p = pendulum();
  for (double a : {-2.0, 0.0, 1.7}) CHECK(distribution_corank(p, vec({a, -a}), 1e-10) == 0);

  auto r = ControlAffineSystem::from_strings({"x1", "x2"}, {"1", "0"}, {{"x1", "x2"}});
  CHECK(distribution_corank(r, vec({0, 0}), 1e-10) == 1);
  CHECK(distribution_corank(r, vec({1, 0}), 1e-10) == 0);

  auto d = ControlAffineSystem::from_strings({"x1", "x2"}, {"1", "0"}, {{"1", "0"}, {"x1", "0"}});
  for (double a : {-1.0, 0.0, 3.0}) CHECK(distribution_corank(d, vec({a, 0.5}), 1e-10) == 1);

  CHECK_THROWS_AS((void)distribution_corank(p, vec({0, 0}), 0.0), PreconditionError);
  CHECK_THROWS_AS((void)distribution_corank(p, vec({0, 0}), 1.0), PreconditionError);
}

TEST_CASE("symbolic Jacobians agree with finite differences") {
  auto s = ControlAffineSystem::from_strings({"x1", "x2", "x3"}, {"x2*sin(x3)", "exp(-x1)*x3", "x1^2 - x2"},
                                             {{"1", "x3", "0"}, {"0", "cos(x1)", "1 + x2^2"}});
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    Vec x = random_vec(rng, 3, -1, 1);
    Mat fd = finite_difference_jacobian([&](const Vec& y) { return s.drift_at(y); }, x);
    CHECK((s.drift_jacobian(x) - fd).norm() < 1e-8);
    for (int i = 0; i < 2; ++i) {
      Mat gfd = finite_difference_jacobian([&](const Vec& y) { return Vec(s.control_matrix(y).col(i)); }, x);
      CHECK((s.control_jacobian(i, x) - gfd).norm() < 1e-8);
    }
  }
}

TEST_CASE("stratify examples") {
  auto p = pendulum();
  Box box{vec({-3, -3}), vec({3, 3})};
  auto st = stratify(p, box, 0.5);
  CHECK(st.points.size() == 169);
  CHECK(st.regular_fraction == 1.0);

  auto r = ControlAffineSystem::from_strings({"x1", "x2"}, {"1", "0"}, {{"x1", "x2"}});
  auto sr = stratify(r, Box{vec({-1, -1}), vec({1, 1})}, 1.0);
  auto singular = sr.points_with_corank(1);
  REQUIRE(singular.size() == 1);
  CHECK(singular[0].norm() == 0.0);
}

TEST_CASE("stratify matches a hand enumeration of corank-1 samples") {
  // g1 = (1,0,0), g2 = (0,x2,x3): rank drops exactly where x2 = x3 = 0.
  auto s = ControlAffineSystem::from_strings({"x1", "x2", "x3"}, {"1", "0", "0"},
                                             {{"1", "0", "0"}, {"0", "x2", "x3"}});
  auto st = stratify(s, Box{vec({-1, -1, -1}), vec({1, 1, 1})}, 1.0);
  REQUIRE(st.points.size() == 27);
  // Oracle: enumerate the 27 grid points directly.
  int expected = 0;
  std::size_t idx = 0;
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int c = -1; c <= 1; ++c, ++idx) {
        const int want = (b == 0 && c == 0) ? 1 : 0;
        expected += want;
        CHECK(st.points[idx](0) == a);
        CHECK(st.points[idx](1) == b);
        CHECK(st.points[idx](2) == c);
        CHECK(st.corank[idx] == want);
      }
  CHECK(expected == 3);
  CHECK(st.regular_fraction == doctest::Approx(24.0 / 27.0));
}

TEST_CASE("stratify refuses oversized grids with the required count") {
  auto p = pendulum();
  try {
    (void)stratify(p, Box{vec({-1, -1}), vec({1, 1})}, 0.001, 1e-10, 1000);
    FAIL("expected GridTooLargeError");
  } catch (const GridTooLargeError& e) {
    CHECK(e.required() == 2001u * 2001u);
  }
  CHECK_THROWS_AS((void)stratify(p, Box{vec({-1, 1}), vec({1, 1})}, 0.5), PreconditionError);
  CHECK_THROWS_AS((void)stratify(p, Box{vec({-1, -1}), vec({1, 1})}, 0.0), PreconditionError);
}

TEST_CASE("stratify is a pure function of its inputs") {
  auto s = ControlAffineSystem::from_strings({"x1", "x2"}, {"1", "0"}, {{"x1*x2", "x2 - x1"}});
  Box box{vec({-2, -2}), vec({2, 2})};
  auto a = stratify(s, box, 0.1);
  auto b = stratify(s, box, 0.1);
  CHECK(a.corank == b.corank);
}

TEST_CASE("property: appending dependent columns never lowers rank") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 6);
    const int m = 1 + static_cast<int>(rng() % n);
    Mat g = random_mat(rng, n, m);
    const int rank = numerical_rank(g, 1e-10);
    Mat extended(n, m + 1);
    extended << g, g * random_mat(rng, m, 1);
    const int rank_new = numerical_rank(extended, 1e-10);
    CHECK(rank_new >= rank);
    CHECK(corank_of(extended) == m + 1 - rank_new);
    CHECK(corank_of(extended) <= (m + 1) - rank);
  }
}

TEST_CASE("linear systems have corank 0 everywhere") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 5);
    const int m = 1 + static_cast<int>(rng() % n);
    LinearControlSystem lin(random_mat(rng, n, n), random_mat(rng, n, m));
    auto sys = ControlAffineSystem::from_linear(lin);
    for (int k = 0; k < 10; ++k) {
      Vec x = random_vec(rng, n, -5, 5);
      CHECK(distribution_corank(sys, x) == 0);
      CHECK((sys.drift_at(x) - lin.a() * x).norm() < 1e-12 * (1.0 + x.norm()));
    }
  }
  CHECK_THROWS_AS(LinearControlSystem(Mat::Identity(3, 3), Mat::Zero(3, 1)), PreconditionError);
  Mat b(3, 2);
  b << 1, 2, 0, 0, 0, 0;
  CHECK_THROWS_AS(LinearControlSystem(Mat::Identity(3, 3), b), PreconditionError);
}

TEST_CASE("strict-feedback systems convert both ways") {
  std::vector<std::string> states = {"x1", "x2", "x3"};
  auto vars = make_variable_list(states);
  std::vector<Expr> f = {parse("sin(x1)", vars), parse("x1*x2", vars), parse("x3^2", vars)};
  std::vector<Expr> g = {parse("2 + cos(x1)", vars), parse("1 + x2^2", vars), parse("1", vars)};
  StrictFeedbackSystem sfs(states, f, g);
  auto general = sfs.to_control_affine();
  auto back = StrictFeedbackSystem::from_control_affine(general);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 50; ++k) {
    Vec x = random_vec(rng, 3, -2, 2);
    std::span<const double> xs(x.data(), 3);
    Vec expected(3);
    expected << f[0].evaluate(xs) + g[0].evaluate(xs) * x(1), f[1].evaluate(xs) + g[1].evaluate(xs) * x(2),
        f[2].evaluate(xs);
    CHECK((general.drift_at(x) - expected).norm() < 1e-12);
    CHECK((back.to_control_affine().drift_at(x) - expected).norm() < 1e-12);
  }

  std::vector<Expr> bad_f = {parse("x2", vars), parse("0", vars), parse("0", vars)};
  CHECK_THROWS_AS(StrictFeedbackSystem(states, bad_f, g), PreconditionError);
  auto not_affine = ControlAffineSystem::from_strings({"x1", "x2"}, {"x2^2", "0"}, {{"0", "1"}});
  CHECK_THROWS_AS(StrictFeedbackSystem::from_control_affine(not_affine), PreconditionError);
  auto wrong_input = ControlAffineSystem::from_strings({"x1", "x2"}, {"x2", "0"}, {{"1", "1"}});
  CHECK_THROWS_AS(StrictFeedbackSystem::from_control_affine(wrong_input), PreconditionError);
}
