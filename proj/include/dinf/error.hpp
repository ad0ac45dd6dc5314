#pragma once

#include <stdexcept>
#include <string>

namespace dinf {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration value (bad dimension chain, out-of-range parameter, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite input, failed decomposition, or other numeric breakage.
class NumericError : public Error {
public:
    using Error::Error;
};

// Ill-formed noise schedule (lambda = 0, sigma = 0 where positive required, ...).
class ScheduleError : public Error {
public:
    using Error::Error;
};

// Measurement query payload does not match the measurement kind.
class PayloadError : public Error {
public:
    using Error::Error;
};

// Chained artifacts do not belong to the same run (hash mismatch).
class ProvenanceError : public Error {
public:
    using Error::Error;
};

// Index outside the referenced id set.
class IndexError : public Error {
public:
    using Error::Error;
};

// A dense-oracle guard was exceeded (problem too large for the exact path).
class OracleScaleError : public Error {
public:
    using Error::Error;
};

// Layer kind with no curvature support.
class UnsupportedLayerError : public Error {
public:
    using Error::Error;
};

// Malformed or corrupted artifact container.
class ContainerError : public Error {
public:
    using Error::Error;
};

// Spearman correlation requested on a constant vector.
class CorrelationUndefinedError : public Error {
public:
    using Error::Error;
};

// Training loss became NaN; carries the offending optimization step.
class TrainingDivergedError : public Error {
public:
    explicit TrainingDivergedError(long step)
        : Error("training diverged: NaN loss at step " + std::to_string(step)), step(step) {}
    long step;
};

// Ancestral sampling produced a non-finite state; carries the timestep.
class SamplingDivergedError : public Error {
public:
    explicit SamplingDivergedError(int t)
        : Error("sampling diverged: non-finite state at timestep " + std::to_string(t)), step(t) {}
    int step;
};

}  // namespace dinf
