#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "sigmakit/errors.hpp"
#include "sigmakit/expr.hpp"

using namespace sigmakit;

namespace {

const std::vector<std::string> kVars2 = {"x1", "x2"};
const std::vector<std::string> kVars3 = {"x1", "x2", "x3"};

double eval(const std::string& src, std::vector<double> at, const std::vector<std::string>& vars = kVars2) {
  return parse(src, vars).evaluate(at);
}

double central_difference(const Expr& e, std::vector<double> at, std::size_t var, double h) {
  auto plus = at;
  auto minus = at;
  plus[var] += h;
  minus[var] -= h;
  return (e.evaluate(plus) - e.evaluate(minus)) / (2.0 * h);
}

// Random source text over x1..x3. `smooth` restricts to operations that are
// differentiable everywhere they are defined and keeps values bounded.
std::string random_source(std::mt19937_64& rng, int depth, bool smooth) {
  std::uniform_int_distribution<int> pick(0, smooth ? 9 : 14);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  if (depth == 0) {
    int k = pick(rng) % 4;
    if (k == 3) return std::to_string(coef(rng));
    return "x" + std::to_string(k + 1);
  }
  auto sub = [&] { return random_source(rng, depth - 1, smooth); };
  switch (pick(rng)) {
    case 0: return "(" + sub() + " + " + sub() + ")";
    case 1: return "(" + sub() + " - " + sub() + ")";
    case 2: return "(" + sub() + " * " + sub() + ")";
    case 3: return "(" + sub() + ") / (1.5 + " + sub() + "^2)";
    case 4: return "sin(" + sub() + ")";
    case 5: return "cos(" + sub() + ")";
    case 6: return "tanh(" + sub() + ")";
    case 7: return "(" + sub() + ")^3";
    case 8: return "-" + sub();
    case 9: return "exp(0.3 * sin(" + sub() + "))";
    case 10: return "sqrt(" + sub() + ")";
    case 11: return "log(" + sub() + ")";
    case 12: return "abs(" + sub() + ")";
    case 13: return "tan(" + sub() + ")";
    default: return "(" + sub() + ") / (" + sub() + ")";
  }
}

}  // namespace

TEST_CASE("parse evaluates the documented examples") {
  CHECK(eval("x2", {3, 7}) == 7.0);
  CHECK(eval("-sin(x1)", {0, 5}) == doctest::Approx(0.0));
  CHECK(eval("x1^2 + x2", {2, -1}) == doctest::Approx(3.0));
}

TEST_CASE("operator precedence and associativity") {
  CHECK(eval("-x1^2", {3, 0}) == doctest::Approx(-9.0));
  CHECK(eval("2^3^2", {0, 0}) == doctest::Approx(512.0));
  CHECK(eval("2^-1", {0, 0}) == doctest::Approx(0.5));
  CHECK(eval("8 - 3 - 2", {0, 0}) == doctest::Approx(3.0));
  CHECK(eval("8 / 4 / 2", {0, 0}) == doctest::Approx(1.0));
  CHECK(eval("1 + 2 * 3", {0, 0}) == doctest::Approx(7.0));
  CHECK(eval("-2 * -3", {0, 0}) == doctest::Approx(6.0));
  CHECK(eval("(1 + 2) * 3", {0, 0}) == doctest::Approx(9.0));
  CHECK(eval("1.5e1 + .5 + 2E-1", {0, 0}) == doctest::Approx(15.7));
  CHECK(eval("  x1\t*  x2 ", {2, 5}) == doctest::Approx(10.0));
}

TEST_CASE("every function in the grammar") {
  CHECK(eval("sin(x1)", {0.3, 0}) == doctest::Approx(std::sin(0.3)));
  CHECK(eval("cos(x1)", {0.3, 0}) == doctest::Approx(std::cos(0.3)));
  CHECK(eval("tan(x1)", {0.3, 0}) == doctest::Approx(std::tan(0.3)));
  CHECK(eval("exp(x1)", {0.3, 0}) == doctest::Approx(std::exp(0.3)));
  CHECK(eval("log(x1)", {0.3, 0}) == doctest::Approx(std::log(0.3)));
  CHECK(eval("sqrt(x1)", {0.3, 0}) == doctest::Approx(std::sqrt(0.3)));
  CHECK(eval("tanh(x1)", {0.3, 0}) == doctest::Approx(std::tanh(0.3)));
  CHECK(eval("abs(x1)", {-0.3, 0}) == doctest::Approx(0.3));
}

TEST_CASE("variables may shadow function names when not called") {
  std::vector<std::string> vars = {"sin", "x"};
  CHECK(parse("sin(sin) + x", vars).evaluate(std::vector<double>{0.5, 1.0}) ==
        doctest::Approx(std::sin(0.5) + 1.0));
}

TEST_CASE("syntax errors carry the byte position") {
  try {
    (void)parse("x1 + * x2", kVars2);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.position() == 5);
  }
  CHECK_THROWS_AS((void)parse("sin(x1", kVars2), ParseError);
  CHECK_THROWS_AS((void)parse("x1 x2", kVars2), ParseError);
  CHECK_THROWS_AS((void)parse("", kVars2), ParseError);
  CHECK_THROWS_AS((void)parse("1e", kVars2), ParseError);
  CHECK_THROWS_AS((void)parse("x1 # 2", kVars2), ParseError);
}

TEST_CASE("undeclared variables are reported by name") {
  try {
    (void)parse("x1 + y", kVars2);
    FAIL("expected UndeclaredVariableError");
  } catch (const UndeclaredVariableError& e) {
    CHECK(e.name() == "y");
  }
  CHECK_THROWS_AS((void)parse("x1", std::vector<std::string>{"x1", "x1"}), Error);
}

TEST_CASE("domain errors at evaluation time") {
  CHECK_THROWS_AS(eval("log(x1)", {0, 0}), DomainError);
  CHECK_THROWS_AS(eval("sqrt(x1)", {-1, 0}), DomainError);
  CHECK_THROWS_AS(eval("x2 / x1", {0, 1}), DomainError);
  CHECK_THROWS_AS(eval("x1^0.5", {-2, 0}), DomainError);
  CHECK_THROWS_AS(eval("exp(x1)", {1000, 0}), DomainError);
  Expr e = parse("abs(x1)", kVars2);
  CHECK_THROWS_AS(differentiate(e, "x1").evaluate(std::vector<double>{0.0, 0.0}), DomainError);
  CHECK(differentiate(e, "x1").evaluate(std::vector<double>{-2.0, 0.0}) == doctest::Approx(-1.0));
}

TEST_CASE("evaluate_all tags the failing component") {
  auto vars = make_variable_list(kVars2);
  std::vector<Expr> field = {parse("x1", vars), parse("log(x2)", vars)};
  try {
    (void)evaluate_all(field, std::vector<double>{1.0, -1.0});
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    REQUIRE(e.component().has_value());
    CHECK(*e.component() == 1);
  }
}

TEST_CASE("differentiate examples") {
  const std::vector<double> at = {2, -1};
  CHECK(differentiate(parse("x1^2 + x2", kVars2), "x1").evaluate(at) == doctest::Approx(4.0));
  CHECK(differentiate(parse("x1*x2", kVars2), "x2").evaluate(std::vector<double>{3, 7}) == doctest::Approx(3.0));

  // -sin(x1) at (pi/2, 0): finite-difference oracle with step 1e-5
  Expr e = parse("-sin(x1)", kVars2);
  const std::vector<double> p = {std::numbers::pi / 2, 0.0};
  const double fd = central_difference(e, p, 0, 1e-5);
  const double sym = differentiate(e, "x1").evaluate(p);
  CHECK(std::abs(fd) < 1e-8);
  CHECK(std::abs(sym - fd) < 1e-8);
  CHECK(std::abs(sym) < 1e-12);

  CHECK_THROWS_AS((void)differentiate(e, "z"), UndeclaredVariableError);
}

TEST_CASE("derivatives of the full function set against finite differences") {
  const std::vector<std::string> corpus = {
      "x1^2 + x2",       "x1*x2*x3",         "-sin(x1)",         "cos(x1*x2)",     "tan(0.3*x1)",
      "exp(x1 - x3)",    "log(2 + x1^2)",    "sqrt(3 + x2^2)",   "tanh(x1*x3)",    "x1 / (2 + x2^2)",
      "x2^x1",           "(1 + x1^2)^1.5",   "abs(x1) * x2",     "x3^3 - 2*x3",    "sin(x1)^2 + cos(x1)^2",
  };
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coord(0.2, 1.5);
  for (const auto& src : corpus) {
    Expr e = parse(src, kVars3);
    for (int k = 0; k < 50; ++k) {
      std::vector<double> at = {coord(rng), coord(rng), coord(rng)};
      for (std::size_t v = 0; v < 3; ++v) {
        const double sym = differentiate(e, v).evaluate(at);
        const double fd = central_difference(e, at, v, 1e-6);
        INFO(src << " d/d" << kVars3[v]);
        CHECK(std::abs(sym - fd) / std::max(1.0, std::abs(sym)) < 1e-6);
      }
    }
  }
}

TEST_CASE("property: symbolic derivatives of random smooth expressions match finite differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(-1.5, 1.5);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    Expr e = parse(random_source(rng, 3, true), kVars3);
    for (int k = 0; k < 50; ++k) {
      std::vector<double> at = {coord(rng), coord(rng), coord(rng)};
      for (std::size_t v = 0; v < 3; ++v) {
        double sym = 0.0;
        double fd = 0.0;
        try {
          sym = differentiate(e, v).evaluate(at);
          fd = central_difference(e, at, v, 1e-6);
        } catch (const DomainError&) {
          continue;
        }
        const double scale = std::max({1.0, std::abs(sym), std::abs(e.evaluate(at))});
        INFO(e.to_string());
        CHECK(std::abs(sym - fd) / scale < 1e-6);
        ++checked;
      }
    }
  }
  CHECK(checked > 5000);
}

TEST_CASE("property: pretty-print then re-parse preserves evaluation") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    Expr e = parse(random_source(rng, 4, false), kVars3);
    Expr again = parse(e.to_string(), kVars3);
    int compared = 0;
    for (int k = 0; k < 100; ++k) {
      std::vector<double> at = {coord(rng), coord(rng), coord(rng)};
      double a = 0.0;
      try {
        a = e.evaluate(at);
      } catch (const DomainError&) {
        CHECK_THROWS_AS(again.evaluate(at), DomainError);
        continue;
      }
      INFO(e.to_string());
      CHECK(std::abs(a - again.evaluate(at)) < 1e-12 * std::max(1.0, std::abs(a)));
      ++compared;
    }
    (void)compared;
  }
}

TEST_CASE("derivative folding keeps trees free of eliminated variables") {
  Expr e = parse("sin(x1) + 2*x2", kVars2);
  Expr d = differentiate(e, "x2");
  REQUIRE(d.constant_value().has_value());
  CHECK(*d.constant_value() == 2.0);
  CHECK_FALSE(differentiate(parse("x1^2 + x2", kVars2), "x2").depends_on(1));
}

TEST_CASE("substitute replaces a variable by a constant") {
  Expr e = parse("x1^2 + x1*x2", kVars2);
  Expr s = substitute(e, 1, 0.0);
  CHECK_FALSE(s.depends_on(1));
  CHECK(s.evaluate(std::vector<double>{3.0, 99.0}) == doctest::Approx(9.0));
}
