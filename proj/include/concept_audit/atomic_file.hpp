#pragma once

#include <filesystem>
#include <string_view>

namespace concept_audit {

/// Writes `contents` to a sibling temp file and renames it over `path`.
/// Throws AuditError(IoFailure).
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace concept_audit
