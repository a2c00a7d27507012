#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dvislam {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Raised when log() is asked for a rotation too close to pi to be unambiguous.
class DegenerateRotation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Cholesky failed. `minor_index` is the 0-based leading minor whose pivot was
/// not positive.
class NotPositiveDefinite : public std::runtime_error {
 public:
  NotPositiveDefinite(const std::string& what, std::size_t minor_index)
      : std::runtime_error(what + " (leading minor " + std::to_string(minor_index) + ")"),
        minor_index_(minor_index) {}

  std::size_t minor_index() const noexcept { return minor_index_; }

 private:
  std::size_t minor_index_;
};

/// Innovation covariance of a (correlated) Kalman update is not SPD.
class InnovationNotSpd : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Triangulation geometry is too weak (low parallax, point behind a camera).
class LowParallax : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ScenarioInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dvislam
