#include "concept_audit/core_model.hpp"

#include <unicode/normalizer2.h>
#include <unicode/locid.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <cmath>

namespace concept_audit {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyLabel: return "EmptyLabel";
    case ErrorCode::InvalidBox: return "InvalidBox";
    case ErrorCode::InvalidScore: return "InvalidScore";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::DuplicatePromptId: return "DuplicatePromptId";
    case ErrorCode::DuplicateImageId: return "DuplicateImageId";
    case ErrorCode::DuplicateSample: return "DuplicateSample";
    case ErrorCode::UnknownPromptId: return "UnknownPromptId";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::BoxOutOfRange: return "BoxOutOfRange";
    case ErrorCode::MissingHeader: return "MissingHeader";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::AliasCycle: return "AliasCycle";
    case ErrorCode::UnclosedPlaceholder: return "UnclosedPlaceholder";
    case ErrorCode::EmptyPlaceholderName: return "EmptyPlaceholderName";
    case ErrorCode::InvalidPlaceholderName: return "InvalidPlaceholderName";
    case ErrorCode::EmptyValueSet: return "EmptyValueSet";
    case ErrorCode::NoPrompts: return "NoPrompts";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::UnknownPrompt: return "UnknownPrompt";
    case ErrorCode::EmptyPrompt: return "EmptyPrompt";
    case ErrorCode::UnknownConcept: return "UnknownConcept";
    case ErrorCode::NotEnoughImages: return "NotEnoughImages";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::OverlappingSets: return "OverlappingSets";
    case ErrorCode::UnknownRun: return "UnknownRun";
    case ErrorCode::IngestFailed: return "IngestFailed";
  }
  return "Unknown";
}

namespace {

std::string format_error(ErrorCode code, const std::string& message,
                         std::optional<std::size_t> line) {
  std::string out(to_string(code));
  if (line) out += " (line " + std::to_string(*line) + ")";
  out += ": ";
  out += message;
  return out;
}

const icu::Normalizer2& nfc() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status) || n == nullptr) {
    throw std::runtime_error("ICU NFC normalizer unavailable");
  }
  return *n;
}

icu::UnicodeString to_nfc(const icu::UnicodeString& s) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString out = nfc().normalize(s, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU normalization failed");
  return out;
}

}  // namespace

AuditError::AuditError(ErrorCode code, const std::string& message,
                       std::optional<std::size_t> line)
    : std::runtime_error(format_error(code, message, line)),
      code_(code),
      line_(line),
      detail_(message) {}

std::string normalize_text(std::string_view raw) {
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  s = to_nfc(s);
  s.toLower(icu::Locale::getRoot());
  s = to_nfc(s);

  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < s.length();) {
    UChar32 c = s.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = !collapsed.isEmpty();
      continue;
    }
    if (pending_space) {
      collapsed.append(static_cast<UChar>(u' '));
      pending_space = false;
    }
    collapsed.append(c);
  }
  collapsed = to_nfc(collapsed);

  std::string out;
  collapsed.toUTF8String(out);
  return out;
}

ConceptLabel ConceptLabel::normalize(std::string_view raw) {
  std::string text = normalize_text(raw);
  if (text.empty()) {
    throw AuditError(ErrorCode::EmptyLabel,
                     "label '" + std::string(raw) + "' is empty after normalization");
  }
  return ConceptLabel(std::move(text));
}

BoundingBox BoundingBox::make(double x0, double y0, double x1, double y1) {
  const bool ok = std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) &&
                  std::isfinite(y1) && 0.0 <= x0 && x0 < x1 && x1 <= 1.0 &&
                  0.0 <= y0 && y0 < y1 && y1 <= 1.0;
  if (!ok) {
    throw AuditError(ErrorCode::InvalidBox,
                     "box [" + std::to_string(x0) + "," + std::to_string(y0) + "," +
                         std::to_string(x1) + "," + std::to_string(y1) +
                         "] violates 0 <= x0 < x1 <= 1, 0 <= y0 < y1 <= 1");
  }
  return BoundingBox(x0, y0, x1, y1);
}

BoundingBox BoundingBox::from_pixels(double x0, double y0, double x1, double y1,
                                     double width, double height) {
  if (!(width > 0.0) || !(height > 0.0)) {
    throw AuditError(ErrorCode::InvalidBox, "image dimensions must be positive");
  }
  return make(x0 / width, y0 / height, x1 / width, y1 / height);
}

Detection Detection::make(ConceptLabel label, BoundingBox box, double score) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw AuditError(ErrorCode::InvalidScore,
                     "score " + std::to_string(score) + " outside [0,1]");
  }
  return Detection{std::move(label), box, score};
}

std::string_view to_string(Provenance p) noexcept {
  return p == Provenance::Template ? "template" : "empirical";
}

std::optional<Provenance> parse_provenance(std::string_view s) noexcept {
  if (s == "template") return Provenance::Template;
  if (s == "empirical") return Provenance::Empirical;
  return std::nullopt;
}

std::set<ConceptLabel> presence_set(const ImageRecord& image) {
  std::set<ConceptLabel> out;
  for (const auto& d : image.detections) out.insert(d.label);
  return out;
}

}  // namespace concept_audit
