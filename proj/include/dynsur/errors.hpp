#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dynsur {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid specification, missing label, bad option value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Shape mismatch between matrices, vectors or trajectories.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Row or element index out of bounds.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Size request that the available data cannot satisfy (ED larger than pool etc.).
class SizeError : public Error {
public:
    using Error::Error;
};

/// Base class for numerical failures (exit code 3 in the CLI).
class NumericalError : public Error {
public:
    using Error::Error;
};

class SingularityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class CalibrationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DegenerateDataError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Basis enumeration would exceed the configured cap.
class BasisExplosionError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// A time stepper or recursive forecast left the admissible range.
class DivergenceError : public NumericalError {
public:
    DivergenceError(const std::string& what, std::string stage, std::size_t step)
        : NumericalError(what), stage_(std::move(stage)), step_(step) {}

    const std::string& stage() const noexcept { return stage_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::string stage_;
    std::size_t step_;
};

/// File-system or parse failure on external data (exit code 4 in the CLI).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace dynsur
