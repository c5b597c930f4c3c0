#pragma once

#include <stdexcept>
#include <string>

namespace prefmo {

enum class ErrorKind {
  dimension,
  empty_set,
  unsupported,
  domain,
  config,
  index,
  data,
  fit,
  calibration,
  optimizer,
  policy,
  inconsistent_evidence,
  not_found,
  conflict,
};

const char* to_string(ErrorKind kind);

/// Library-wide exception. The kind is stable and is what callers (the CLI,
/// the HTTP layer) dispatch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string field = {})
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

}  // namespace prefmo
