#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace sigmakit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Syntax error while parsing an expression; position is a 0-based byte offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : Error(message + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class UndeclaredVariableError : public Error {
 public:
  explicit UndeclaredVariableError(std::string name)
      : Error("undeclared variable '" + name + "'"), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

/// Evaluation outside the domain of an operation (log of nonpositive, division by zero, ...).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& message, std::optional<std::size_t> component = std::nullopt)
      : Error(component ? message + " (component " + std::to_string(*component) + ")" : message),
        component_(component) {}
  std::optional<std::size_t> component() const { return component_; }

 private:
  std::optional<std::size_t> component_;
};

/// The control distribution drops rank at the queried point.
class StratumError : public Error {
 public:
  explicit StratumError(int corank)
      : Error("control distribution has corank " + std::to_string(corank) + " at the queried point"),
        corank_(corank) {}
  int corank() const { return corank_; }

 private:
  int corank_;
};

class TransversalityError : public Error {
 public:
  TransversalityError(const std::string& message, double margin)
      : Error(message), margin_(margin) {}
  double margin() const { return margin_; }

 private:
  double margin_;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class GridTooLargeError : public Error {
 public:
  GridTooLargeError(std::size_t required, std::size_t cap)
      : Error("grid requires " + std::to_string(required) + " samples, cap is " + std::to_string(cap)),
        required_(required) {}
  std::size_t required() const { return required_; }

 private:
  std::size_t required_;
};

}  // namespace sigmakit
