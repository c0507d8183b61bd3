#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "concept_audit/corpus.hpp"
#include "concept_audit/metrics.hpp"

namespace concept_audit {

inline constexpr std::size_t kDefaultEvidenceLimit = 50;

enum class RuleMetric { Support, Confidence, Lift };

std::string_view to_string(RuleMetric m) noexcept;
std::optional<RuleMetric> parse_rule_metric(std::string_view s) noexcept;

/// Market-basket metrics for one unordered pair, `a` < `b`. Transactions are
/// image presence sets and every image counts once regardless of prompt
/// weight:
///   support = joint / images, confidence(a->b) = support / P(a),
///   lift = support / (P(a) P(b)), with P(x) = count(x) / images.
struct CoocRow {
  ConceptLabel a;
  ConceptLabel b;
  std::int64_t joint_count = 0;
  double support = 0.0;
  double confidence_ab = 0.0;
  double confidence_ba = 0.0;
  double lift = 0.0;
};

struct CoocTable {
  std::int64_t total_images = 0;
  double min_support = 0.0;
  std::vector<CoocRow> rows;  // sorted by (a, b)

  /// Order-insensitive lookup.
  const CoocRow* find(const ConceptLabel& x, const ConceptLabel& y) const;
};

/// All unordered pairs (no self-pairs) with support >= min_support. At
/// min_support == 0 this includes pairs that never co-occur.
/// Throws InvalidParameter or EmptyCorpus.
CoocTable cooccurrence(const AuditCorpus& corpus, double min_support = 0.0);

struct PartnerRow {
  ConceptLabel label;
  std::int64_t joint_count = 0;
  double support = 0.0;
  double confidence = 0.0;  // concept -> partner
  double lift = 0.0;
};

/// Top-k co-occurring partners of `concept` by `metric`. Partners co-occur in
/// at least one image and meet min_support. Ties: higher joint_count, then
/// label. Throws UnknownConcept or InvalidParameter (k < 1).
std::vector<PartnerRow> top_cooccurring(const AuditCorpus& corpus, const ConceptLabel& target,
                                        std::size_t k, RuleMetric metric,
                                        double min_support = 0.0);

struct PromptHit {
  std::string prompt_id;
  std::int64_t image_count = 0;
};

struct EvidenceItem {
  std::string image_id;
  std::string prompt_id;
  std::optional<std::string> image_uri;
  std::vector<BoundingBox> boxes;
  std::vector<double> scores;
};

struct ReverseIndexEntry {
  ConceptLabel label;
  std::vector<PromptHit> prompt_hits;  // image_count desc, then prompt_id
  std::vector<EvidenceItem> evidence;  // lowest image_id first, capped
  std::int64_t evidence_total = 0;     // images containing the concept
};

/// Throws UnknownConcept.
ReverseIndexEntry reverse_index(const AuditCorpus& corpus, const ConceptLabel& target,
                                std::size_t evidence_limit = kDefaultEvidenceLimit);

/// Whole-word, case-insensitive occurrence of a normalized label in text.
bool mentions_term(std::string_view text, const ConceptLabel& term);

struct WatchlistFinding {
  FrequencyRow frequency;   // count 0 / p 0 when the concept never appears
  ReverseIndexEntry index;  // empty when absent
  std::vector<bool> explicit_mention;  // aligned with index.prompt_hits
  std::int64_t implicit_prompts = 0;   // hits whose prompt never names the concept
};

/// One finding per watchlist concept, in label order.
std::vector<WatchlistFinding> watchlist_scan(const AuditCorpus& corpus,
                                             const std::set<ConceptLabel>& watchlist,
                                             std::size_t evidence_limit = kDefaultEvidenceLimit);

/// One label per line; blank lines and lines starting with '#' are skipped.
std::set<ConceptLabel> load_watchlist(const std::string& path);

}  // namespace concept_audit
