#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mckv {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class GridMismatch : public Error {
 public:
  GridMismatch() : Error("grid mismatch: operands live on different torus grids") {}
};

class PositivityFloor : public Error {
 public:
  explicit PositivityFloor(double min_value)
      : Error("density value " + std::to_string(min_value) + " is below the positivity floor"),
        min_value_(min_value) {}
  double min_value() const noexcept { return min_value_; }

 private:
  double min_value_;
};

class NonRealCoefficients : public Error {
 public:
  explicit NonRealCoefficients(double max_imag)
      : Error("Fourier coefficients are not real (max |Im| = " + std::to_string(max_imag) + ")") {}
};

class NoNegativeMode : public Error {
 public:
  NoNegativeMode() : Error("potential has no attractive (negative) Fourier mode") {}
};

class NonConvergence : public Error {
 public:
  NonConvergence(double last_residual, std::size_t iterations)
      : Error("fixed-point iteration did not converge after " + std::to_string(iterations) +
              " iterations (residual " + std::to_string(last_residual) + ")"),
        last_residual_(last_residual),
        iterations_(iterations) {}
  double last_residual() const noexcept { return last_residual_; }
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  double last_residual_;
  std::size_t iterations_;
};

class OverflowGuard : public Error {
 public:
  explicit OverflowGuard(double range)
      : Error("Gibbs exponent range " + std::to_string(range) + " exceeds 700") {}
};

class DimensionUnsupported : public Error {
 public:
  explicit DimensionUnsupported(int d)
      : Error("operation not supported in dimension " + std::to_string(d)) {}
};

class SizeLimit : public Error {
 public:
  using Error::Error;
};

class NonZeroMean : public Error {
 public:
  explicit NonZeroMean(double mean)
      : Error("signed measure must have zero mean (got " + std::to_string(mean) + ")") {}
};

class StepRejected : public Error {
 public:
  using Error::Error;
};

class DtUnderflow : public Error {
 public:
  explicit DtUnderflow(double dt) : Error("time step underflow (dt = " + std::to_string(dt) + ")") {}
};

/// A solver failure at a specific inverse temperature.
class BranchFailure : public Error {
 public:
  BranchFailure(double beta, const std::string& what)
      : Error("solver failed at beta = " + std::to_string(beta) + ": " + what), beta_(beta) {}
  double beta() const noexcept { return beta_; }

 private:
  double beta_;
};

class Timeout : public Error {
 public:
  using Error::Error;
};

/// Too few Monte Carlo points with enough hits to fit a slope.
class InsufficientHits : public Error {
 public:
  InsufficientHits(std::size_t usable, std::size_t required)
      : Error("only " + std::to_string(usable) + " uncensored points, need " + std::to_string(required)) {}
};

}  // namespace mckv
