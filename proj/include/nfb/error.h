#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nfb {

enum class ErrorKind {
  kDimensionMismatch,
  kDegenerateVector,
  kEmptyInput,
  kOutOfRange,
  kParseError,
  kValidationError,
  kVersionError,
  kIoError,
  kInsufficientViews,
  kConfigMismatch,
  kEmptyDataset,
  kMissingCaption,
  kMissingAnchor,
  kCorruptCheckpoint,
  kDuplicateId,
};

std::string_view ToString(ErrorKind kind);

// All library failures surface as this exception. The message always starts
// with the kind name so log lines are greppable.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void Fail(ErrorKind kind, const std::string& message);

}  // namespace nfb
