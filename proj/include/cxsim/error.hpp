#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cxsim {

enum class ErrorKind {
  kMalformedRecord,
  kUnobservedEdge,
  kInvalidWeight,
  kDuplicateNode,
  kSentinelViolation,
  kRemoteUnavailable,
  kDimensionMismatch,
  kMissingEmbedding,
  kDegenerateDataset,
  kLengthMismatch,
  kEmpty,
  kUnknownField,
  kInvalidArgument,
  kInvalidConfig,
  kFormat,
  kIo,
};

std::string_view error_kind_name(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace cxsim
