#pragma once

#include <stdexcept>
#include <string>

namespace stewart_cbf {

class StewartError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Value outside the mathematical domain of an operation (e.g. Euler pitch at +-pi/2).
class DomainError : public StewartError {
  public:
    using StewartError::StewartError;
};

class ArgumentError : public StewartError {
  public:
    using StewartError::StewartError;
};

// A leg of zero length: the leg direction, and hence J, is undefined.
class SingularGeometryError : public StewartError {
  public:
    using StewartError::StewartError;
};

class NearSingularPoseError : public StewartError {
  public:
    NearSingularPoseError(const std::string& what, double det)
        : StewartError(what), det_(det) {}
    double det() const noexcept { return det_; }

  private:
    double det_;
};

class ConfigError : public StewartError {
  public:
    using StewartError::StewartError;
};

class DivergenceError : public StewartError {
  public:
    DivergenceError(const std::string& what, double last_valid_time)
        : StewartError(what), last_valid_time_(last_valid_time) {}
    double last_valid_time() const noexcept { return last_valid_time_; }

  private:
    double last_valid_time_;
};

}  // namespace stewart_cbf
