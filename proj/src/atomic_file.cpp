#include "concept_audit/atomic_file.hpp"

#include <fstream>
#include <system_error>
#include <unistd.h>

#include "concept_audit/errors.hpp"

namespace concept_audit {

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw AuditError(ErrorCode::IoFailure, "cannot open " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw AuditError(ErrorCode::IoFailure, "write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw AuditError(ErrorCode::IoFailure,
                     "rename to " + path.string() + " failed: " + ec.message());
  }
}

}  // namespace concept_audit
