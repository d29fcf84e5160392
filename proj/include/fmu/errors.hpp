#pragma once

#include <stdexcept>
#include <string>

namespace fmu {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-positive element length or section property.
class InvalidGeometry : public Error {
public:
    using Error::Error;
};

/// Mass matrix not positive definite, or a structure that cannot carry mass.
class DegenerateModel : public Error {
public:
    using Error::Error;
};

/// Malformed model, data or sampler configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Vector or matrix dimensions that do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Covariance matrix that is not symmetric positive definite.
class CovarianceError : public Error {
public:
    using Error::Error;
};

/// Eigensolver failure, underflow, or other floating point breakdown.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Population control could not keep the population inside its hard bounds.
class ControlFailure : public Error {
public:
    using Error::Error;
};

/// Weighted estimate with no usable weight.
class EstimationError : public Error {
public:
    using Error::Error;
};

/// Sampler state that cannot be advanced (non-finite density at the current point).
class InvalidState : public Error {
public:
    using Error::Error;
};

/// Measured values that cannot be used (e.g. a zero reference frequency).
class InvalidData : public Error {
public:
    using Error::Error;
};

}  // namespace fmu
