#include "derail/error.hpp"

namespace derail {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateCorpus: return "DegenerateCorpus";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::BadLabel: return "BadLabel";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::VocabularyMismatch: return "VocabularyMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::uint64_t> location)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      location_(location) {}

}  // namespace derail
