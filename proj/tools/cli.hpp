#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace concept_audit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitData = 2;

/// Runs one `concept-audit` invocation. args excludes the program name.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err);

}  // namespace concept_audit::cli
