#pragma once

#include <stdexcept>
#include <string>

namespace svs {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed runtime inputs (shape mismatches, out-of-range arguments).
struct InvalidInput : Error {
  explicit InvalidInput(const std::string& msg) : Error("invalid input: " + msg) {}
};

// Bad configuration values discovered before any work starts.
struct InvalidConfig : Error {
  explicit InvalidConfig(const std::string& msg) : Error("invalid config: " + msg) {}
};

// Not enough signal to compute the requested statistic.
struct InsufficientData : Error {
  explicit InsufficientData(const std::string& msg) : Error("insufficient data: " + msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

struct CheckpointError : Error {
  explicit CheckpointError(const std::string& msg) : Error("checkpoint error: " + msg) {}
};

// Model in an unusable state (NaN weights, untrained where training is required).
struct ModelError : Error {
  explicit ModelError(const std::string& msg) : Error("model error: " + msg) {}
};

}  // namespace svs
