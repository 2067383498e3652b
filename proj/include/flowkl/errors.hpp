#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowkl {

/// A computation produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or incompatible serialized payload.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged or failed to reach its target.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// A closed-form identity that should hold did not.
class VerificationError : public std::runtime_error {
 public:
  VerificationError(const std::string& quantity, const std::string& detail)
      : std::runtime_error(quantity + ": " + detail), quantity_(quantity) {}

  const std::string& quantity() const noexcept { return quantity_; }

 private:
  std::string quantity_;
};

/// Bad command-line or config input.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flowkl
