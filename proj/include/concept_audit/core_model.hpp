#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "concept_audit/errors.hpp"

namespace concept_audit {

/// A detector label after normalization: NFC, lowercase, whitespace collapsed
/// to single ASCII spaces and trimmed. Never empty.
class ConceptLabel {
 public:
  /// Throws AuditError(EmptyLabel) when nothing is left after normalization.
  static ConceptLabel normalize(std::string_view raw);

  const std::string& str() const noexcept { return text_; }

  friend bool operator==(const ConceptLabel&, const ConceptLabel&) = default;
  friend auto operator<=>(const ConceptLabel&, const ConceptLabel&) = default;

 private:
  explicit ConceptLabel(std::string text) : text_(std::move(text)) {}
  std::string text_;
};

inline ConceptLabel normalize_label(std::string_view raw) {
  return ConceptLabel::normalize(raw);
}

/// Text normalization shared by labels and prompt matching. Unlike
/// normalize_label it accepts an empty result.
std::string normalize_text(std::string_view raw);

/// Axis-aligned box in normalized image coordinates.
class BoundingBox {
 public:
  /// Throws AuditError(InvalidBox) unless 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1.
  static BoundingBox make(double x0, double y0, double x1, double y1);
  /// Converts pixel coordinates using the declared image size.
  static BoundingBox from_pixels(double x0, double y0, double x1, double y1,
                                 double width, double height);
  static BoundingBox full_image() { return BoundingBox(0.0, 0.0, 1.0, 1.0); }

  double x0() const noexcept { return x0_; }
  double y0() const noexcept { return y0_; }
  double x1() const noexcept { return x1_; }
  double y1() const noexcept { return y1_; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  BoundingBox(double x0, double y0, double x1, double y1)
      : x0_(x0), y0_(y0), x1_(x1), y1_(y1) {}
  double x0_, y0_, x1_, y1_;
};

struct Detection {
  ConceptLabel label;
  BoundingBox box;
  double score = 1.0;  // detectors without scores get 1.0

  /// Throws AuditError(InvalidScore) for scores outside [0,1].
  static Detection make(ConceptLabel label, BoundingBox box, double score = 1.0);

  friend bool operator==(const Detection&, const Detection&) = default;
};

enum class Provenance { Template, Empirical };

std::string_view to_string(Provenance p) noexcept;
std::optional<Provenance> parse_provenance(std::string_view s) noexcept;

struct PromptRecord {
  std::string prompt_id;
  std::string text;
  double weight = 1.0;
  Provenance provenance = Provenance::Template;

  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

struct ImageRecord {
  std::string image_id;
  std::string prompt_id;
  std::int64_t sample_index = 0;
  std::vector<Detection> detections;
  std::optional<std::string> image_uri;
  std::string detector_id;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct RunMetadata {
  std::string generator_id;
  std::string detector_id;
  std::int64_t k_nominal = 1;
  std::string created_at;
  std::string config_digest;

  friend bool operator==(const RunMetadata&, const RunMetadata&) = default;
};

/// Deduplicated labels of one image. Several boxes with one label count once.
std::set<ConceptLabel> presence_set(const ImageRecord& image);

}  // namespace concept_audit

template <>
struct std::hash<concept_audit::ConceptLabel> {
  std::size_t operator()(const concept_audit::ConceptLabel& l) const noexcept {
    return std::hash<std::string>{}(l.str());
  }
};
