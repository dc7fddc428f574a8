#pragma once

#include <stdexcept>
#include <string>

namespace pmap {

// Shape, dimension or label-range mismatch between inputs.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A solver was asked to handle a model it cannot solve exactly
// (non-chain for Viterbi, non-binary or non-supermodular for graph cuts).
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Enumeration over a state space larger than the brute-force guard.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Weighted Hamming weights are undefined when one class has zero volume.
class DegenerateInstanceError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed input file; carries the 1-based line number of the failure.
class InputError : public std::runtime_error {
 public:
  InputError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// An internal consistency check failed (e.g. flow != cut).
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace pmap
