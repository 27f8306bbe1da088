#pragma once

#include <stdexcept>
#include <string>

namespace dlr {

// Error taxonomy mirrors the CLI exit codes: config 2, input 3, numeric 4.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape mismatches, invalid execution paths, malformed checkpoints.
struct DimensionError : InputError {
  explicit DimensionError(const std::string& msg) : InputError(msg) {}
};

struct ConstraintError : InputError {
  explicit ConstraintError(const std::string& msg) : InputError(msg) {}
};

struct FormatError : InputError {
  explicit FormatError(const std::string& msg) : InputError(msg) {}
};

// Divergence and other numeric failures; carries the step that blew up.
struct TrainingError : std::runtime_error {
  int step = -1;
  TrainingError(const std::string& msg, int step_index)
      : std::runtime_error(msg + " (step " + std::to_string(step_index) + ")"),
        step(step_index) {}
};

}  // namespace dlr
