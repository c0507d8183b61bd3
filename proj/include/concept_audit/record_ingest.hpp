#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "concept_audit/corpus.hpp"

namespace concept_audit {

inline constexpr int kRecordSchemaVersion = 1;

struct IngestDiagnostic {
  std::string source;
  std::size_t line = 0;  // 1-based within `source`
  ErrorCode code = ErrorCode::MalformedLine;
  std::string message;
};

struct IngestOptions {
  /// Skip bad lines and report them instead of failing.
  bool lenient = false;
};

struct RecordSource {
  std::string name;
  std::istream* stream = nullptr;
};

struct IngestResult {
  AuditCorpus corpus;
  std::vector<IngestDiagnostic> diagnostics;
  std::size_t body_lines = 0;  // non-blank lines after the header
  std::size_t records = 0;     // prompt + image records accepted
};

/// Thrown by strict ingest when any body line is rejected. The error code and
/// line are those of the first diagnostic; every diagnostic is attached and
/// records + diagnostics.size() == body_lines.
class IngestFailure : public AuditError {
 public:
  IngestFailure(std::vector<IngestDiagnostic> diagnostics, std::size_t body_lines,
                std::size_t records);

  const std::vector<IngestDiagnostic>& diagnostics() const noexcept { return diagnostics_; }
  std::size_t body_lines() const noexcept { return body_lines_; }
  std::size_t records() const noexcept { return records_; }

 private:
  std::vector<IngestDiagnostic> diagnostics_;
  std::size_t body_lines_;
  std::size_t records_;
};

/// Parses detection-record streams into a corpus. The first source must start
/// with a header line; later sources may repeat a header (same schema
/// version) or go straight to prompt/image lines. Images may reference
/// prompts declared anywhere in the input.
///
/// Header errors (MissingHeader, VersionMismatch, malformed header) always
/// throw. Body errors throw IngestFailure in strict mode and are returned as
/// diagnostics in lenient mode.
IngestResult parse_records(const std::vector<RecordSource>& sources,
                           const IngestOptions& options = {});
IngestResult parse_records(std::istream& in, const IngestOptions& options = {});
IngestResult parse_record_files(const std::vector<std::filesystem::path>& paths,
                                const IngestOptions& options = {});

/// Persisted corpora use the record wire format: header, prompts sorted by id,
/// images sorted by id, with boxes already normalized.
std::string serialize_corpus(const AuditCorpus& corpus);
void write_corpus(const AuditCorpus& corpus, const std::filesystem::path& destination);
/// Strict load. "-" reads standard input.
AuditCorpus load_corpus(const std::filesystem::path& path);

/// Rewrites labels through a one-step alias map. Keys and targets are
/// normalized; identity entries are ignored. Throws AliasCycle when a target
/// is itself aliased (chains are rejected, not followed).
AuditCorpus apply_alias_map(const AuditCorpus& corpus,
                            const std::map<std::string, std::string>& aliases);
/// Reads a JSON object {"raw label": "canonical label", ...}.
std::map<std::string, std::string> load_alias_file(const std::filesystem::path& path);

}  // namespace concept_audit
