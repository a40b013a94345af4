// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace skd {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInput : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct DegenerateVector : Error {
  using Error::Error;
};
struct NotFound : Error {
  using Error::Error;
};
struct CorruptData : Error {
  using Error::Error;
};
struct IncompatibleCheckpoint : Error {
  using Error::Error;
};
struct TrainingDivergence : Error {
  using Error::Error;
};

/// Invalid configuration; `key_path` names the offending entry, e.g. "train.lr".
struct ConfigError : Error {
  ConfigError(std::string key_path, const std::string& what)
      : Error(key_path + ": " + what), key_path(std::move(key_path)) {}
  std::string key_path;
};

}  // namespace skd
