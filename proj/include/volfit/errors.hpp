#pragma once

#include <stdexcept>
#include <string>

namespace volfit {

/// Malformed or inconsistent configuration (scenario, copula, grid search...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Episode protocol violation, e.g. stepping a finished environment.
struct LifecycleError : std::runtime_error {
    explicit LifecycleError(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor/network dimension mismatch.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// A backward pass was requested against a cache from an older parameter state.
struct CacheError : std::runtime_error {
    explicit CacheError(const std::string& what) : std::runtime_error(what) {}
};

/// Checkpoint could not be parsed or does not match the requested topology.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace volfit
