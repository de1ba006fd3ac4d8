#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tes {

/// Invalid geometry, properties or run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a structural invariant (e.g. forbidden mode flags).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// The scheduling problem has no feasible solution.
class SchedulingInfeasible : public std::runtime_error {
 public:
  SchedulingInfeasible(const std::string& what, std::size_t step,
                       std::string family)
      : std::runtime_error(what), step_(step), family_(std::move(family)) {}

  /// 0-based horizon step of the first constraint found violated.
  std::size_t step() const noexcept { return step_; }
  /// Constraint family name, e.g. "demand", "charge_band".
  const std::string& family() const noexcept { return family_; }

 private:
  std::size_t step_;
  std::string family_;
};

}  // namespace tes
