#pragma once

#include <stdexcept>
#include <string>

namespace qbench {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

// Malformed records, duplicate ids, schema violations.
class DatasetError : public Error {
 public:
  using Error::Error;
};

// Bad config files, unknown profiles/endpoints, invalid flag combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Gateway failures that survived the retry budget.
class GatewayError : public Error {
 public:
  GatewayError(const std::string& message, int last_status)
      : Error(message), last_status_(last_status) {}
  int last_status() const { return last_status_; }

 private:
  int last_status_ = 0;
};

// Missing interpreters, unwritable state dirs. These abort runs; per-sample
// failures never do.
class EnvironmentError : public Error {
 public:
  using Error::Error;
};

// Another process holds the state directory lock.
class StateLockError : public Error {
 public:
  using Error::Error;
};

}  // namespace qbench
