#include "concept_audit/parallel.hpp"

#include <cstdlib>
#include <string>

namespace concept_audit {

std::size_t worker_count() {
  if (const char* env = std::getenv("CONCEPT_AUDIT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace concept_audit
