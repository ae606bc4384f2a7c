#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cfdro {

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Bandit log violating its invariants (non-positive propensity, bad shape, ...).
class InvalidLogError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input file that could not be parsed. Carries the 1-based line number (0 if unknown).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Numerical solver failure. The best iterate found so far is kept for diagnostics.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double best_value)
      : std::runtime_error(what), best_value_(best_value) {}
  double best_value() const noexcept { return best_value_; }

 private:
  double best_value_;
};

}  // namespace cfdro
