#include "cxsim/error.hpp"

namespace cxsim {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedRecord: return "MalformedRecord";
    case ErrorKind::kUnobservedEdge: return "UnobservedEdge";
    case ErrorKind::kInvalidWeight: return "InvalidWeight";
    case ErrorKind::kDuplicateNode: return "DuplicateNode";
    case ErrorKind::kSentinelViolation: return "SentinelViolation";
    case ErrorKind::kRemoteUnavailable: return "RemoteUnavailable";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kMissingEmbedding: return "MissingEmbedding";
    case ErrorKind::kDegenerateDataset: return "DegenerateDataset";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kEmpty: return "Empty";
    case ErrorKind::kUnknownField: return "UnknownField";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kFormat: return "Format";
    case ErrorKind::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace cxsim
