#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace markerforge {

// Base class for all library errors. Subclasses distinguish the failure
// classes surfaced by the CLI exit codes (config=1, data=2, internal=3).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A transform produced a non-finite value or is not invertible.
class DegenerateTransformError : public Error {
public:
    using Error::Error;
};

// Input configuration (collinear points, empty quad, ...) admits no solution.
class DegenerateConfigurationError : public Error {
public:
    using Error::Error;
};

// A linear system is too ill-conditioned to trust.
class ConditioningError : public Error {
public:
    using Error::Error;
};

// The epipolar line has a zero normal (query point is the epipole).
class EpipoleDegenerateError : public Error {
public:
    using Error::Error;
};

// Sampler could not place a marker inside the canvas.
class PlacementError : public Error {
public:
    using Error::Error;
};

// Rejection sampler exhausted its draw budget.
class SamplingError : public Error {
public:
    using Error::Error;
};

// Two buffers that must agree in shape do not.
class DimensionMismatchError : public Error {
public:
    using Error::Error;
};

// An operation that needs at least one valid pixel got none.
class EmptyRegionError : public Error {
public:
    using Error::Error;
};

// File or stream problem.
class IoError : public Error {
public:
    using Error::Error;
};

// Bad user-facing configuration (CLI flags, manifest schema, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

struct Size {
    int width = 0;
    int height = 0;

    bool operator==(const Size&) const = default;
};

}  // namespace markerforge
