#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace beamkit {

// Base class for all library errors. The CLI maps subclasses to exit codes:
// usage -> 2, format -> 3, numeric/capacity -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed arguments, bad dimensions, non-finite inputs.
struct InvalidInputError : Error {
  using Error::Error;
};

// On-disk artifact is corrupt or has the wrong magic/version. Carries the
// byte offset at which the problem was detected.
struct FormatError : Error {
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  std::uint64_t byte_offset = 0;
};

// A numeric routine left its domain of validity (ill-conditioned solve,
// non-finite loss, divergent inner iteration).
struct NumericError : Error {
  using Error::Error;
};

// Requested problem size exceeds a hard budget (grid oracle, dataset size).
struct CapacityError : Error {
  using Error::Error;
};

// Inconsistent configuration (flags, arch/scheme mismatch, strategy/dataset
// mismatch).
struct ConfigError : Error {
  using Error::Error;
};

// API used out of order (backward without forward, double backward).
struct LifecycleError : Error {
  using Error::Error;
};

// Checkpoint cannot be loaded into the requested architecture.
struct CheckpointError : Error {
  using Error::Error;
};

// The SCA initializer could not find a feasible starting point.
struct InfeasibleInstanceError : Error {
  using Error::Error;
};

}  // namespace beamkit
