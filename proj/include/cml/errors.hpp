#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cml {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Local Newton iteration hit its cap.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double residual, int iterations)
      : Error(what), residual_(residual), iterations_(iterations) {}

  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

/// Global (structural) Newton iteration hit its cap.
class GlobalNonConvergence : public Error {
 public:
  GlobalNonConvergence(const std::string& what, std::size_t step,
                       double residual)
      : Error(what), step_(step), residual_(residual) {}

  std::size_t step() const { return step_; }
  double residual() const { return residual_; }

 private:
  std::size_t step_;
  double residual_;
};

/// Error raised while integrating a loading path, tagged with the step index.
class PathStepError : public Error {
 public:
  PathStepError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

#define CML_DEFINE_ERROR(Name)     \
  class Name : public Error {      \
   public:                         \
    using Error::Error;            \
  };

CML_DEFINE_ERROR(InvalidArgument)
CML_DEFINE_ERROR(InvalidShape)
CML_DEFINE_ERROR(DimensionMismatch)
CML_DEFINE_ERROR(UnknownKind)
CML_DEFINE_ERROR(EmptyRange)
CML_DEFINE_ERROR(MissingLabels)
CML_DEFINE_ERROR(UnknownFamily)
CML_DEFINE_ERROR(LengthMismatch)
CML_DEFINE_ERROR(SingularSystem)
CML_DEFINE_ERROR(NumericFailure)
CML_DEFINE_ERROR(BadMagic)
CML_DEFINE_ERROR(UnsupportedVersion)
CML_DEFINE_ERROR(ShapeMismatch)
CML_DEFINE_ERROR(IoFailure)
CML_DEFINE_ERROR(ConfigError)

#undef CML_DEFINE_ERROR

}  // namespace cml
