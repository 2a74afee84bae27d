#pragma once

#include <stdexcept>
#include <string>

namespace polychaos {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid_argument"; }
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension_mismatch"; }
};

class UnsupportedMeasure : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "unsupported_measure"; }
};

class DegenerateMeasure : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "degenerate_measure"; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numerical_error"; }
};

class BasisSizeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "basis_size"; }
};

class ExactnessError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "exactness"; }
};

class RankDeficient : public Error {
 public:
  RankDeficient(const std::string& what, long rank, long required)
      : Error(what), rank_(rank), required_(required) {}
  const char* kind() const noexcept override { return "rank_deficient"; }
  long rank() const noexcept { return rank_; }
  long required() const noexcept { return required_; }

 private:
  long rank_;
  long required_;
};

class StabilizabilityError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "stabilizability"; }
};

class LikelihoodCollapse : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "likelihood_collapse"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

}  // namespace polychaos
