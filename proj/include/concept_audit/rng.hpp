#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace concept_audit {

/// Portable seeded generator. std::mt19937_64's output sequence is fixed by
/// the standard; the bounded and real-valued draws below are defined here
/// rather than through <random> distributions, whose algorithms vary across
/// standard libraries.
class PortableRng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64+rejection-u64+u01-53bit";

  explicit PortableRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace concept_audit
