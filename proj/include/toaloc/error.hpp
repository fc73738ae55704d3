// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace toaloc {

enum class ErrorKind {
  invalid_argument,
  config,
  runtime,
};

/// Base exception for the engine. The kind decides the C API status code
/// and the CLI exit code (config -> 2, everything else -> 3).
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

inline Error invalid_argument(const std::string& what) {
  return Error(ErrorKind::invalid_argument, what);
}

inline Error config_error(const std::string& what) {
  return Error(ErrorKind::config, what);
}

inline Error runtime_error(const std::string& what) {
  return Error(ErrorKind::runtime, what);
}

}  // namespace toaloc
