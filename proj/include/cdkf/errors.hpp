#pragma once

#include <stdexcept>
#include <string>

namespace cdkf {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values appeared while integrating an ODE/SDE.
struct IntegrationDivergedError : Error {
  explicit IntegrationDivergedError(double t)
      : Error("integration diverged (non-finite values) at t = " +
              std::to_string(t)),
        time(t) {}
  double time;
};

/// Innovation matrix C*Sigma*C^T + R is numerically singular.
struct IllConditionedInnovationError : Error {
  using Error::Error;
};

/// A scheduled event falls outside the filtering horizon.
struct ScheduleOutOfRangeError : Error {
  using Error::Error;
};

/// Quantization requested for a sensor whose total intensity is zero.
struct DegenerateIntensityError : Error {
  using Error::Error;
};

/// Invalid parameter value (non-positive hyperparameter, bad dimension, ...).
struct ParameterError : Error {
  using Error::Error;
};

/// Scenario/config file violates its documented invariants.
struct ConfigError : Error {
  using Error::Error;
};

/// Inconsistent dimensions while transcribing an optimal control problem.
struct TranscriptionError : Error {
  using Error::Error;
};

/// A statistical check was invoked on a model outside its assumptions.
struct PreconditionError : Error {
  using Error::Error;
};

}  // namespace cdkf
