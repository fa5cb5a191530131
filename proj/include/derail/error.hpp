#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace derail {

enum class ErrorCode {
  MalformedJson,
  SchemaViolation,
  EmptyDocument,
  OutOfBounds,
  UnknownNode,
  BadFormat,
  EmptyCorpus,
  EmptyGraph,
  ShapeMismatch,
  DegenerateCorpus,
  EmptyTestSet,
  MissingFile,
  BadLabel,
  TooSmall,
  VocabularyMismatch,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. `location` carries a byte offset for
/// JSON syntax errors and a 1-based line number for line-oriented inputs.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::uint64_t> location = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::uint64_t> location() const noexcept { return location_; }

 private:
  ErrorCode code_;
  std::optional<std::uint64_t> location_;
};

}  // namespace derail
