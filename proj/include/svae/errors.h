#pragma once

#include <stdexcept>
#include <string>

namespace svae {

// Caller broke a documented precondition (wrong rate, shape mismatch, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IncompatibleCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a loss term or gradient goes non-finite. `term()` names the
// offending component so logs can point at it.
class TrainingAbort : public std::runtime_error {
 public:
  TrainingAbort(std::string term, const std::string& detail)
      : std::runtime_error("training aborted: non-finite " + term + " (" + detail + ")"),
        term_(std::move(term)) {}

  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

}  // namespace svae
