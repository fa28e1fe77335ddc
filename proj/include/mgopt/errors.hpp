#pragma once

#include <stdexcept>
#include <string>

namespace mgopt {

// Every failure the library reports derives from Error so callers (and the
// CLI exit-code mapping) can dispatch on category instead of parsing strings.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatches and out-of-range indices.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Violated preconditions: empty inputs, invalid options, bad call sequences.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed tape wiring (a node referencing a later node).
class GraphError : public Error {
 public:
  using Error::Error;
};

// Problems with external data: CSV syntax, missing ids, duplicate ids.
class DataError : public Error {
 public:
  using Error::Error;
};

// Inputs that make an operation meaningless: zero-norm rows before a
// normalization, all-zero embeddings, empty label sets.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, diverged training, singular linear systems.
class NumericError : public Error {
 public:
  using Error::Error;
};

class SingularSystemError : public NumericError {
 public:
  using NumericError::NumericError;
};

class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& msg, std::size_t epoch)
      : NumericError(msg), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_ = 0;
};

// Iterative routine ran out of iterations; carries the last estimate so the
// caller can inspect how far it got.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& msg, double last_estimate)
      : Error(msg), last_estimate_(last_estimate) {}
  double last_estimate() const { return last_estimate_; }

 private:
  double last_estimate_ = 0.0;
};

}  // namespace mgopt
