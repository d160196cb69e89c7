#pragma once

// Scalar expression trees over a fixed list of named variables.
//
// Grammar (whitespace insignificant):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?          right associative
//   primary := number | identifier | function '(' expr ')' | '(' expr ')'
//   function:= sin | cos | tan | exp | log | sqrt | tanh | abs
//
// Expr values are immutable and share subtrees, so copies are cheap and
// concurrent evaluation is safe.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sigmakit {

enum class UnaryOp { Neg, Sin, Cos, Tan, Exp, Log, Sqrt, Tanh, Abs };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

class Expr {
 public:
  struct Node;
  using VariableList = std::shared_ptr<const std::vector<std::string>>;

  static Expr constant(double value, VariableList variables);
  static Expr variable(std::size_t index, VariableList variables);

  /// Evaluates at `values`, which is indexed like variables().
  /// Throws DomainError outside the domain of an operation or on a non-finite result.
  double evaluate(std::span<const double> values) const;

  const std::vector<std::string>& variables() const { return *variables_; }
  const VariableList& variable_list() const { return variables_; }

  /// Fully parenthesized source text; parse(to_string()) evaluates identically.
  std::string to_string() const;

  std::optional<double> constant_value() const;
  bool depends_on(std::size_t index) const;
  std::vector<std::size_t> referenced_variables() const;

  const Node& node() const { return *root_; }

  // Builders with light constant folding (0*u -> 0, 1*u -> u, u+0 -> u, c op c -> c).
  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);
  friend Expr pow(const Expr& base, const Expr& exponent);
  friend Expr apply(UnaryOp op, const Expr& a);

 private:
  Expr(std::shared_ptr<const Node> root, VariableList variables)
      : root_(std::move(root)), variables_(std::move(variables)) {}

  friend class ExprAccess;

  std::shared_ptr<const Node> root_;
  VariableList variables_;
};

struct Expr::Node {
  enum class Kind { Constant, Variable, Unary, Binary };
  Kind kind;
  double value = 0.0;
  std::size_t index = 0;
  UnaryOp unary = UnaryOp::Neg;
  BinaryOp binary = BinaryOp::Add;
  std::shared_ptr<const Node> lhs;
  std::shared_ptr<const Node> rhs;
};

Expr::VariableList make_variable_list(std::vector<std::string> names);

/// Throws ParseError (with byte position) or UndeclaredVariableError.
Expr parse(std::string_view source, std::span<const std::string> variables);
Expr parse(std::string_view source, const Expr::VariableList& variables);

/// Symbolic partial derivative. Throws UndeclaredVariableError if `var` is not declared.
/// d|u| is u/|u| * u', so it raises DomainError when evaluated at u = 0.
Expr differentiate(const Expr& e, std::string_view var);
Expr differentiate(const Expr& e, std::size_t index);

/// Replaces every occurrence of variable `index` with a constant.
Expr substitute(const Expr& e, std::size_t index, double value);

/// Re-expresses `e` over another variable list. `mapping[i]` is the index in
/// `target` of e's variable i.
Expr remap(const Expr& e, std::span<const std::size_t> mapping, const Expr::VariableList& target);

/// Evaluates each component; DomainError is re-thrown carrying the component index.
std::vector<double> evaluate_all(std::span<const Expr> exprs, std::span<const double> values);

}  // namespace sigmakit
