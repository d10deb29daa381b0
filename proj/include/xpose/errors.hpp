#pragma once

#include <stdexcept>

namespace xpose {

// Exit-code buckets used by the CLI: config=1, prerequisite=2, numeric=3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PrereqError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Graph wiring problems; the message names the offending layer.
struct ShapeError : ConfigError {
  using ConfigError::ConfigError;
};

// Checkpoint decoding failures, one type per failure mode.
struct BadMagicError : ConfigError {
  using ConfigError::ConfigError;
};
struct TruncatedBlobError : ConfigError {
  using ConfigError::ConfigError;
};
struct ArchMismatchError : ConfigError {
  using ConfigError::ConfigError;
};

}  // namespace xpose
