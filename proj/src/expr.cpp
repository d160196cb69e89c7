#include "sigmakit/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

#include "sigmakit/errors.hpp"

namespace sigmakit {

using Node = Expr::Node;
using NodePtr = std::shared_ptr<const Node>;

class ExprAccess {
 public:
  static Expr wrap(NodePtr root, Expr::VariableList vars) { return Expr(std::move(root), std::move(vars)); }
  static const NodePtr& root(const Expr& e) { return e.root_; }
};

namespace {

NodePtr make_constant(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Constant;
  n->value = v;
  return n;
}

NodePtr make_variable(std::size_t index) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Variable;
  n->index = index;
  return n;
}

NodePtr make_unary(UnaryOp op, NodePtr a) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Unary;
  n->unary = op;
  n->lhs = std::move(a);
  return n;
}

NodePtr make_binary(BinaryOp op, NodePtr a, NodePtr b) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Binary;
  n->binary = op;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}

const char* unary_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::Neg: return "-";
    case UnaryOp::Sin: return "sin";
    case UnaryOp::Cos: return "cos";
    case UnaryOp::Tan: return "tan";
    case UnaryOp::Exp: return "exp";
    case UnaryOp::Log: return "log";
    case UnaryOp::Sqrt: return "sqrt";
    case UnaryOp::Tanh: return "tanh";
    case UnaryOp::Abs: return "abs";
  }
  return "?";
}

char binary_symbol(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return '+';
    case BinaryOp::Sub: return '-';
    case BinaryOp::Mul: return '*';
    case BinaryOp::Div: return '/';
    case BinaryOp::Pow: return '^';
  }
  return '?';
}

std::optional<UnaryOp> function_named(std::string_view name) {
  static constexpr std::pair<std::string_view, UnaryOp> table[] = {
      {"sin", UnaryOp::Sin},   {"cos", UnaryOp::Cos},   {"tan", UnaryOp::Tan},
      {"exp", UnaryOp::Exp},   {"log", UnaryOp::Log},   {"sqrt", UnaryOp::Sqrt},
      {"tanh", UnaryOp::Tanh}, {"abs", UnaryOp::Abs},
  };
  for (const auto& [n, op] : table)
    if (n == name) return op;
  return std::nullopt;
}

double apply_unary(UnaryOp op, double a) {
  switch (op) {
    case UnaryOp::Neg: return -a;
    case UnaryOp::Sin: return std::sin(a);
    case UnaryOp::Cos: return std::cos(a);
    case UnaryOp::Tan: return std::tan(a);
    case UnaryOp::Exp: return std::exp(a);
    case UnaryOp::Log:
      if (!(a > 0.0)) throw DomainError("log of nonpositive value");
      return std::log(a);
    case UnaryOp::Sqrt:
      if (a < 0.0) throw DomainError("sqrt of negative value");
      return std::sqrt(a);
    case UnaryOp::Tanh: return std::tanh(a);
    case UnaryOp::Abs: return std::abs(a);
  }
  return 0.0;
}

double apply_binary(BinaryOp op, double a, double b) {
  switch (op) {
    case BinaryOp::Add: return a + b;
    case BinaryOp::Sub: return a - b;
    case BinaryOp::Mul: return a * b;
    case BinaryOp::Div:
      if (b == 0.0) throw DomainError("division by zero");
      return a / b;
    case BinaryOp::Pow: {
      double r = std::pow(a, b);
      if (std::isnan(r)) throw DomainError("pow undefined for negative base and fractional exponent");
      return r;
    }
  }
  return 0.0;
}

double eval_node(const Node& n, std::span<const double> values) {
  double r = 0.0;
  switch (n.kind) {
    case Node::Kind::Constant: return n.value;
    case Node::Kind::Variable: return values[n.index];
    case Node::Kind::Unary: r = apply_unary(n.unary, eval_node(*n.lhs, values)); break;
    case Node::Kind::Binary:
      r = apply_binary(n.binary, eval_node(*n.lhs, values), eval_node(*n.rhs, values));
      break;
  }
  if (!std::isfinite(r)) throw DomainError("non-finite intermediate value");
  return r;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void print_node(const Node& n, const std::vector<std::string>& vars, std::string& out) {
  switch (n.kind) {
    case Node::Kind::Constant:
      if (n.value < 0.0 || std::signbit(n.value)) {
        out += "(-" + format_number(-n.value) + ")";
      } else {
        out += format_number(n.value);
      }
      return;
    case Node::Kind::Variable: out += vars[n.index]; return;
    case Node::Kind::Unary:
      if (n.unary == UnaryOp::Neg) {
        out += "(-";
        print_node(*n.lhs, vars, out);
        out += ")";
      } else {
        out += unary_name(n.unary);
        out += "(";
        print_node(*n.lhs, vars, out);
        out += ")";
      }
      return;
    case Node::Kind::Binary:
      out += "(";
      print_node(*n.lhs, vars, out);
      out += binary_symbol(n.binary);
      print_node(*n.rhs, vars, out);
      out += ")";
      return;
  }
}

void collect_variables(const Node& n, std::set<std::size_t>& out) {
  switch (n.kind) {
    case Node::Kind::Constant: return;
    case Node::Kind::Variable: out.insert(n.index); return;
    case Node::Kind::Unary: collect_variables(*n.lhs, out); return;
    case Node::Kind::Binary:
      collect_variables(*n.lhs, out);
      collect_variables(*n.rhs, out);
      return;
  }
}

std::optional<double> as_constant(const NodePtr& n) {
  if (n->kind == Node::Kind::Constant) return n->value;
  return std::nullopt;
}

// Folding builders used by differentiation and substitution. A constant
// subexpression is folded only when its value is finite and well-defined.
NodePtr fold_unary(UnaryOp op, NodePtr a) {
  if (auto c = as_constant(a)) {
    try {
      double v = apply_unary(op, *c);
      if (std::isfinite(v)) return make_constant(v);
    } catch (const DomainError&) {
    }
  }
  if (op == UnaryOp::Neg && a->kind == Node::Kind::Unary && a->unary == UnaryOp::Neg) return a->lhs;
  return make_unary(op, std::move(a));
}

NodePtr fold_binary(BinaryOp op, NodePtr a, NodePtr b) {
  auto ca = as_constant(a);
  auto cb = as_constant(b);
  if (ca && cb) {
    try {
      double v = apply_binary(op, *ca, *cb);
      if (std::isfinite(v)) return make_constant(v);
    } catch (const DomainError&) {
    }
  }
  switch (op) {
    case BinaryOp::Add:
      if (ca && *ca == 0.0) return b;
      if (cb && *cb == 0.0) return a;
      break;
    case BinaryOp::Sub:
      if (cb && *cb == 0.0) return a;
      if (ca && *ca == 0.0) return fold_unary(UnaryOp::Neg, b);
      break;
    case BinaryOp::Mul:
      if ((ca && *ca == 0.0) || (cb && *cb == 0.0)) return make_constant(0.0);
      if (ca && *ca == 1.0) return b;
      if (cb && *cb == 1.0) return a;
      if (ca && *ca == -1.0) return fold_unary(UnaryOp::Neg, b);
      if (cb && *cb == -1.0) return fold_unary(UnaryOp::Neg, a);
      break;
    case BinaryOp::Div:
      if (cb && *cb == 1.0) return a;
      if (ca && *ca == 0.0 && !(cb && *cb == 0.0)) return make_constant(0.0);
      break;
    case BinaryOp::Pow:
      if (cb && *cb == 1.0) return a;
      if (cb && *cb == 0.0) return make_constant(1.0);
      break;
  }
  return make_binary(op, std::move(a), std::move(b));
}

NodePtr derive(const NodePtr& n, std::size_t var) {
  switch (n->kind) {
    case Node::Kind::Constant: return make_constant(0.0);
    case Node::Kind::Variable: return make_constant(n->index == var ? 1.0 : 0.0);
    case Node::Kind::Unary: {
      const NodePtr& u = n->lhs;
      NodePtr du = derive(u, var);
      if (auto c = as_constant(du); c && *c == 0.0) return du;
      NodePtr outer;
      switch (n->unary) {
        case UnaryOp::Neg: return fold_unary(UnaryOp::Neg, du);
        case UnaryOp::Sin: outer = fold_unary(UnaryOp::Cos, u); break;
        case UnaryOp::Cos: outer = fold_unary(UnaryOp::Neg, fold_unary(UnaryOp::Sin, u)); break;
        case UnaryOp::Tan:
          outer = fold_binary(BinaryOp::Div, make_constant(1.0),
                              fold_binary(BinaryOp::Pow, fold_unary(UnaryOp::Cos, u), make_constant(2.0)));
          break;
        case UnaryOp::Exp: outer = n; break;
        case UnaryOp::Log: return fold_binary(BinaryOp::Div, du, u);
        case UnaryOp::Sqrt:
          return fold_binary(BinaryOp::Div, du, fold_binary(BinaryOp::Mul, make_constant(2.0), n));
        case UnaryOp::Tanh:
          outer = fold_binary(BinaryOp::Sub, make_constant(1.0),
                              fold_binary(BinaryOp::Pow, n, make_constant(2.0)));
          break;
        case UnaryOp::Abs: outer = fold_binary(BinaryOp::Div, u, n); break;
      }
      return fold_binary(BinaryOp::Mul, outer, du);
    }
    case Node::Kind::Binary: {
      const NodePtr& a = n->lhs;
      const NodePtr& b = n->rhs;
      NodePtr da = derive(a, var);
      NodePtr db = derive(b, var);
      switch (n->binary) {
        case BinaryOp::Add: return fold_binary(BinaryOp::Add, da, db);
        case BinaryOp::Sub: return fold_binary(BinaryOp::Sub, da, db);
        case BinaryOp::Mul:
          return fold_binary(BinaryOp::Add, fold_binary(BinaryOp::Mul, da, b), fold_binary(BinaryOp::Mul, a, db));
        case BinaryOp::Div:
          // (a'b - ab') / b^2
          return fold_binary(
              BinaryOp::Div,
              fold_binary(BinaryOp::Sub, fold_binary(BinaryOp::Mul, da, b), fold_binary(BinaryOp::Mul, a, db)),
              fold_binary(BinaryOp::Pow, b, make_constant(2.0)));
        case BinaryOp::Pow: {
          std::set<std::size_t> vars;
          collect_variables(*b, vars);
          if (!vars.contains(var)) {
            // b' = 0: b * a^(b-1) * a'
            NodePtr power = fold_binary(BinaryOp::Pow, a, fold_binary(BinaryOp::Sub, b, make_constant(1.0)));
            return fold_binary(BinaryOp::Mul, fold_binary(BinaryOp::Mul, b, power), da);
          }
          // a^b * (b' log a + b a'/a)
          NodePtr term1 = fold_binary(BinaryOp::Mul, db, fold_unary(UnaryOp::Log, a));
          NodePtr term2 = fold_binary(BinaryOp::Div, fold_binary(BinaryOp::Mul, b, da), a);
          return fold_binary(BinaryOp::Mul, n, fold_binary(BinaryOp::Add, term1, term2));
        }
      }
    }
  }
  return make_constant(0.0);
}

NodePtr substitute_node(const NodePtr& n, std::size_t var, double value) {
  switch (n->kind) {
    case Node::Kind::Constant: return n;
    case Node::Kind::Variable: return n->index == var ? make_constant(value) : n;
    case Node::Kind::Unary: return fold_unary(n->unary, substitute_node(n->lhs, var, value));
    case Node::Kind::Binary:
      return fold_binary(n->binary, substitute_node(n->lhs, var, value), substitute_node(n->rhs, var, value));
  }
  return n;
}

NodePtr remap_node(const NodePtr& n, std::span<const std::size_t> mapping) {
  switch (n->kind) {
    case Node::Kind::Constant: return n;
    case Node::Kind::Variable: return make_variable(mapping[n->index]);
    case Node::Kind::Unary: return make_unary(n->unary, remap_node(n->lhs, mapping));
    case Node::Kind::Binary:
      return make_binary(n->binary, remap_node(n->lhs, mapping), remap_node(n->rhs, mapping));
  }
  return n;
}

class Parser {
 public:
  Parser(std::string_view src, const std::vector<std::string>& vars) : src_(src), vars_(vars) {}

  NodePtr parse_all() {
    NodePtr e = parse_expr();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected character '" + std::string(1, src_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = make_binary(BinaryOp::Add, lhs, parse_term());
      } else if (accept('-')) {
        lhs = make_binary(BinaryOp::Sub, lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = make_binary(BinaryOp::Mul, lhs, parse_unary());
      } else if (accept('/')) {
        lhs = make_binary(BinaryOp::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    if (accept('-')) return make_unary(UnaryOp::Neg, parse_unary());
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    if (accept('^')) return make_binary(BinaryOp::Pow, base, parse_unary());
    return base;
  }

  NodePtr parse_primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = parse_expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  NodePtr parse_number() {
    std::size_t start = pos_;
    auto digits = [&] {
      std::size_t s = pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      return pos_ - s;
    };
    std::size_t n = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) {
      pos_ = start;
      fail("malformed number");
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t mark = pos_++;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) {
        pos_ = mark;
        fail("malformed exponent");
      }
    }
    double value = 0.0;
    auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (res.ec != std::errc() || !std::isfinite(value)) {
      pos_ = start;
      fail("number out of range");
    }
    return make_constant(value);
  }

  NodePtr parse_identifier() {
    std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    std::string_view name = src_.substr(start, pos_ - start);
    if (auto fn = function_named(name)) {
      std::size_t after = pos_;
      if (accept('(')) {
        NodePtr arg = parse_expr();
        if (!accept(')')) fail("expected ')' after function argument");
        return make_unary(*fn, arg);
      }
      pos_ = after;
    }
    auto it = std::find(vars_.begin(), vars_.end(), name);
    if (it == vars_.end()) throw UndeclaredVariableError(std::string(name));
    return make_variable(static_cast<std::size_t>(it - vars_.begin()));
  }

  std::string_view src_;
  const std::vector<std::string>& vars_;
  std::size_t pos_ = 0;
};

std::size_t index_of(const Expr& e, std::string_view var) {
  const auto& vars = e.variables();
  auto it = std::find(vars.begin(), vars.end(), var);
  if (it == vars.end()) throw UndeclaredVariableError(std::string(var));
  return static_cast<std::size_t>(it - vars.begin());
}

}  // namespace

Expr::VariableList make_variable_list(std::vector<std::string> names) {
  return std::make_shared<const std::vector<std::string>>(std::move(names));
}

Expr Expr::constant(double value, VariableList variables) {
  return Expr(make_constant(value), std::move(variables));
}

Expr Expr::variable(std::size_t index, VariableList variables) {
  if (index >= variables->size()) throw Error("variable index out of range");
  return Expr(make_variable(index), std::move(variables));
}

double Expr::evaluate(std::span<const double> values) const {
  if (values.size() < variables_->size())
    throw Error("expression needs " + std::to_string(variables_->size()) + " values, got " +
                std::to_string(values.size()));
  return eval_node(*root_, values);
}

std::string Expr::to_string() const {
  std::string out;
  print_node(*root_, *variables_, out);
  return out;
}

std::optional<double> Expr::constant_value() const { return as_constant(root_); }

bool Expr::depends_on(std::size_t index) const {
  std::set<std::size_t> vars;
  collect_variables(*root_, vars);
  return vars.contains(index);
}

std::vector<std::size_t> Expr::referenced_variables() const {
  std::set<std::size_t> vars;
  collect_variables(*root_, vars);
  return {vars.begin(), vars.end()};
}

Expr operator+(const Expr& a, const Expr& b) {
  return Expr(fold_binary(BinaryOp::Add, a.root_, b.root_), a.variables_);
}
Expr operator-(const Expr& a, const Expr& b) {
  return Expr(fold_binary(BinaryOp::Sub, a.root_, b.root_), a.variables_);
}
Expr operator*(const Expr& a, const Expr& b) {
  return Expr(fold_binary(BinaryOp::Mul, a.root_, b.root_), a.variables_);
}
Expr operator/(const Expr& a, const Expr& b) {
  return Expr(fold_binary(BinaryOp::Div, a.root_, b.root_), a.variables_);
}
Expr operator-(const Expr& a) { return Expr(fold_unary(UnaryOp::Neg, a.root_), a.variables_); }
Expr pow(const Expr& base, const Expr& exponent) {
  return Expr(fold_binary(BinaryOp::Pow, base.root_, exponent.root_), base.variables_);
}
Expr apply(UnaryOp op, const Expr& a) { return Expr(fold_unary(op, a.root_), a.variables_); }

Expr parse(std::string_view source, const Expr::VariableList& variables) {
  std::set<std::string> seen;
  for (const auto& v : *variables) {
    if (!seen.insert(v).second) throw Error("duplicate variable name '" + v + "'");
  }
  Parser p(source, *variables);
  return ExprAccess::wrap(p.parse_all(), variables);
}

Expr parse(std::string_view source, std::span<const std::string> variables) {
  return parse(source, make_variable_list({variables.begin(), variables.end()}));
}

Expr differentiate(const Expr& e, std::size_t index) {
  if (index >= e.variables().size()) throw Error("variable index out of range");
  return ExprAccess::wrap(derive(ExprAccess::root(e), index), e.variable_list());
}

Expr differentiate(const Expr& e, std::string_view var) { return differentiate(e, index_of(e, var)); }

Expr substitute(const Expr& e, std::size_t index, double value) {
  return ExprAccess::wrap(substitute_node(ExprAccess::root(e), index, value), e.variable_list());
}

Expr remap(const Expr& e, std::span<const std::size_t> mapping, const Expr::VariableList& target) {
  for (std::size_t i : e.referenced_variables()) {
    if (i >= mapping.size() || mapping[i] >= target->size())
      throw Error("variable '" + e.variables()[i] + "' has no image in the target variable list");
  }
  return ExprAccess::wrap(remap_node(ExprAccess::root(e), mapping), target);
}

std::vector<double> evaluate_all(std::span<const Expr> exprs, std::span<const double> values) {
  std::vector<double> out(exprs.size());
  for (std::size_t i = 0; i < exprs.size(); ++i) {
    try {
      out[i] = exprs[i].evaluate(values);
    } catch (const DomainError& e) {
      throw DomainError(e.what(), i);
    }
  }
  return out;
}

}  // namespace sigmakit
