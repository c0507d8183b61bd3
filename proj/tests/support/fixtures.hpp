#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "concept_audit/record_ingest.hpp"

#ifndef CONCEPT_AUDIT_FIXTURE_DIR
#error "CONCEPT_AUDIT_FIXTURE_DIR must be defined by the build"
#endif

namespace concept_audit::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(CONCEPT_AUDIT_FIXTURE_DIR) / name;
}

inline AuditCorpus load_fixture(const std::string& name) {
  return parse_record_files({fixture(name)}).corpus;
}

inline ConceptLabel L(const char* s) { return ConceptLabel::normalize(s); }

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("concept_audit_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace concept_audit::testing
