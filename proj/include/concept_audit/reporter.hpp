#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "concept_audit/association.hpp"
#include "concept_audit/corpus.hpp"
#include "concept_audit/metrics.hpp"

namespace concept_audit {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr std::size_t kDefaultTopM = 30;
inline constexpr std::size_t kDefaultTopPartners = 10;

struct ReportParams {
  double tau = kDefaultTau;
  double cv_cutoff = kDefaultCvCutoff;
  std::size_t top_m = kDefaultTopM;
  std::size_t top_partners = kDefaultTopPartners;
  RuleMetric partner_metric = RuleMetric::Support;
  double min_support = 0.0;
  int ci_groups = kDefaultCiGroups;  // 0 disables intervals
  std::optional<std::int64_t> ci_group_size;  // default: min(1000, images / 2)
  std::uint64_t seed = 0;
  std::set<ConceptLabel> watchlist;
  std::size_t evidence_limit = kDefaultEvidenceLimit;

  /// Throws InvalidParameter naming the offending field and its valid range.
  void validate() const;
};

struct TopConcept {
  FrequencyRow frequency;
  std::optional<IntervalEstimate> interval;
};

struct ConceptPartners {
  ConceptLabel label;
  std::vector<PartnerRow> partners;
};

struct AuditReport {
  const AuditCorpus* corpus = nullptr;  // run summary source; not serialized
  ReportParams params;
  std::int64_t effective_ci_group_size = 0;
  FrequencyTable frequency;
  std::vector<TopConcept> top_concepts;
  StabilityTable stability;
  std::vector<ConceptPartners> cooccurrence;
  std::optional<std::vector<WatchlistFinding>> flags;  // present iff a watchlist was given
  std::vector<ConditionalSlice> prompts;
};

/// Frequency rows ordered by p descending, then label.
std::vector<FrequencyRow> rank_by_frequency(const FrequencyTable& table);

/// Throws EmptyCorpus or InvalidParameter.
AuditReport build_report(const AuditCorpus& corpus, const ReportParams& params);

struct DiffRow {
  ConceptLabel label;
  double p_a = 0.0;
  double p_b = 0.0;
  double delta = 0.0;  // p_b - p_a
};

struct RunDiff {
  std::string run_a;
  std::string run_b;
  double floor = 0.0;
  std::vector<DiffRow> rows;  // union vocabulary, label order
  std::vector<ConceptLabel> exclusive_a;  // p_a >= floor, absent from b
  std::vector<ConceptLabel> exclusive_b;
};

/// Throws EmptyCorpus or InvalidParameter (floor outside [0,1]).
RunDiff compare_runs(const AuditCorpus& a, const AuditCorpus& b, double floor);

struct GenerationDirective {
  std::vector<ConceptLabel> attenuate;
  std::vector<ConceptLabel> amplify;
  std::string negative_text;    // comma-joined attenuate labels
  std::string positive_suffix;  // comma-joined amplify labels
  std::vector<FrequencyRow> baseline;  // current frequency of every listed concept
};

/// Throws OverlappingSets when a concept is both attenuated and amplified.
GenerationDirective suggest_negative_prompts(const AuditCorpus& corpus,
                                             const std::set<ConceptLabel>& attenuate,
                                             const std::set<ConceptLabel>& amplify);

// JSON encoders shared with the HTTP service so both surfaces emit the same
// numbers.
nlohmann::json run_summary_json(const AuditCorpus& corpus);
nlohmann::json to_json(const FrequencyRow& row);
nlohmann::json to_json(const StabilityRow& row);
nlohmann::json to_json(const IntervalEstimate& est);
nlohmann::json to_json(const PartnerRow& row);
nlohmann::json to_json(const CoocRow& row);
nlohmann::json to_json(const EvidenceItem& item);
nlohmann::json to_json(const ReverseIndexEntry& entry);
nlohmann::json to_json(const AuditCorpus& corpus, const WatchlistFinding& finding);
nlohmann::json to_json(const ConditionalSlice& slice, const PromptRecord& prompt);
nlohmann::json to_json(const AuditReport& report);
nlohmann::json to_json(const DiffRow& row);
nlohmann::json to_json(const RunDiff& diff);
nlohmann::json to_json(const GenerationDirective& directive);
nlohmann::json partners_json(const std::string& run_id, const ConceptLabel& target,
                             RuleMetric metric, std::size_t k, double min_support,
                             const std::vector<PartnerRow>& partners);
nlohmann::json flags_json(const AuditCorpus& corpus, const std::vector<WatchlistFinding>& findings);

/// Canonical text form: sorted keys, two-space indent, trailing newline.
std::string canonical_json(const nlohmann::json& doc);

std::string render_markdown(const AuditReport& report);
std::string render_markdown(const RunDiff& diff);

}  // namespace concept_audit
