#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dtp {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// (x,u) is not an element of the joint constraint set Y.
class ConstraintViolation : public Error {
  public:
    using Error::Error;
};

/// f(x,u) leaves the state box.
class ImageOutOfDomain : public Error {
  public:
    using Error::Error;
};

/// A model description could not be turned into a control system.
class SpecError : public Error {
  public:
    using Error::Error;
};

/// A grid node has no admissible control on the control grid.
class InfeasibleNode : public Error {
  public:
    InfeasibleNode(const std::string& what, std::size_t node) : Error(what), node_(node) {}
    [[nodiscard]] std::size_t node() const { return node_; }

  private:
    std::size_t node_;
};

class NonConvergence : public Error {
  public:
    NonConvergence(const std::string& what, double last_residual)
        : Error(what), last_residual_(last_residual) {}
    [[nodiscard]] double last_residual() const { return last_residual_; }

  private:
    double last_residual_;
};

/// An enumeration or table would exceed its size budget.
class GuardExceeded : public Error {
  public:
    GuardExceeded(const std::string& what, double required) : Error(what), required_(required) {}
    [[nodiscard]] double required() const { return required_; }

  private:
    double required_;
};

/// An open-loop control sequence became inadmissible at step k.
class InadmissibleStep : public Error {
  public:
    InadmissibleStep(const std::string& what, std::size_t step) : Error(what), step_(step) {}
    [[nodiscard]] std::size_t step() const { return step_; }

  private:
    std::size_t step_;
};

class StorageSynthesisFailed : public Error {
  public:
    StorageSynthesisFailed(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    [[nodiscard]] double residual() const { return residual_; }

  private:
    double residual_;
};

class NotPositiveDefinite : public Error {
  public:
    using Error::Error;
};

class RegionError : public Error {
  public:
    using Error::Error;
};

class DomainError : public Error {
  public:
    using Error::Error;
};

class RangeError : public Error {
  public:
    using Error::Error;
};

class ContinuityProbeFailed : public Error {
  public:
    using Error::Error;
};

class LengthError : public Error {
  public:
    using Error::Error;
};

}  // namespace dtp
