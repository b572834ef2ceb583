#pragma once

#include <stdexcept>

namespace ddnn {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense-output query past the last computed knot.
class QueryBeyondTrajectory : public Error {
public:
    using Error::Error;
};

/// A step longer than the delay would need extrapolated history.
class StepExceedsDelay : public Error {
public:
    using Error::Error;
};

class MaxStepsExceeded : public Error {
public:
    using Error::Error;
};

/// The tolerance cannot be met even at the minimum step size.
class StepUnderflow : public Error {
public:
    using Error::Error;
};

class NonFiniteState : public Error {
public:
    using Error::Error;
};

class NonFiniteOutput : public Error {
public:
    using Error::Error;
};

class NonFiniteGradient : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Evaluation cache does not belong to the parameter vector passed in.
class StaleCache : public Error {
public:
    using Error::Error;
};

/// Loss observation time is not an exact knot of the forward trajectory.
class ObservationNotOnKnot : public Error {
public:
    using Error::Error;
};

/// Prediction and target time grids differ.
class TimeMismatch : public Error {
public:
    using Error::Error;
};

class EmptySplit : public Error {
public:
    using Error::Error;
};

/// Bad run configuration, CLI flags, or input files (usage errors, exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace ddnn
