#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace concept_audit {

enum class ErrorCode {
  EmptyLabel,
  InvalidBox,
  InvalidScore,
  InvalidRecord,
  DuplicatePromptId,
  DuplicateImageId,
  DuplicateSample,
  UnknownPromptId,
  MalformedLine,
  BoxOutOfRange,
  MissingHeader,
  VersionMismatch,
  IoFailure,
  AliasCycle,
  UnclosedPlaceholder,
  EmptyPlaceholderName,
  InvalidPlaceholderName,
  EmptyValueSet,
  NoPrompts,
  InvalidSpec,
  EmptyCorpus,
  UnknownPrompt,
  EmptyPrompt,
  UnknownConcept,
  NotEnoughImages,
  InvalidParameter,
  OverlappingSets,
  UnknownRun,
  IngestFailed,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure in the library surfaces as an AuditError. Ingest errors carry
// the 1-based line number of the offending input line.
class AuditError : public std::runtime_error {
 public:
  AuditError(ErrorCode code, const std::string& message,
             std::optional<std::size_t> line = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
  std::string detail_;
};

}  // namespace concept_audit
