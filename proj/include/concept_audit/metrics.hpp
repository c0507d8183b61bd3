#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "concept_audit/corpus.hpp"

namespace concept_audit {

inline constexpr double kDefaultTau = 0.05;
inline constexpr double kDefaultCvCutoff = 1.0;
inline constexpr int kDefaultCiGroups = 10;

/// min(1000, images / 2), the default subsample size.
std::int64_t default_ci_group_size(std::size_t image_count) noexcept;

struct FrequencyRow {
  ConceptLabel label;
  std::int64_t count = 0;  // images whose presence set contains the label
  double p = 0.0;
};

/// Marginal concept frequencies, rows sorted by label.
///
/// With uniform prompt weights p = count / total_images. Otherwise every
/// image counts with its prompt's weight: p = sum_i w_i count_i / sum_i w_i n_i,
/// and `weighted` is set.
struct FrequencyTable {
  std::int64_t total_images = 0;
  bool weighted = false;
  std::vector<FrequencyRow> rows;

  const FrequencyRow* find(const ConceptLabel& label) const;
};

/// Throws EmptyCorpus when the corpus has no images.
FrequencyTable concept_frequency(const AuditCorpus& corpus);

struct ConditionalRow {
  ConceptLabel label;
  std::int64_t count = 0;
  double p = 0.0;
};

/// p(c | t) for one prompt; rows sorted by label, absent concepts omitted.
struct ConditionalSlice {
  std::string prompt_id;
  std::int64_t image_count = 0;
  std::vector<ConditionalRow> rows;

  const ConditionalRow* find(const ConceptLabel& label) const;
};

/// Throws UnknownPrompt or EmptyPrompt.
ConditionalSlice conditional_frequency(const AuditCorpus& corpus, std::string_view prompt_id);

/// Slices for every prompt that has at least one image, in prompt_id order.
std::vector<ConditionalSlice> conditional_table(const AuditCorpus& corpus);

enum class StabilityClass { Persistent, Triggered };

std::string_view to_string(StabilityClass c) noexcept;

struct StabilityRow {
  ConceptLabel label;
  double p = 0.0;
  double sigma = 0.0;
  double cv = 0.0;
  StabilityClass classification = StabilityClass::Persistent;
};

struct StabilityTable {
  double tau = kDefaultTau;
  double cv_cutoff = kDefaultCvCutoff;
  std::vector<StabilityRow> rows;  // only concepts with p > tau, sorted by label

  const StabilityRow* find(const ConceptLabel& label) const;
};

/// Spread of p(c|t_i) across prompts for every concept with P(c) > tau:
///   sigma_c = sqrt(1/N * sum_i (P(c|t_i) - P(c))^2),  cv = sigma_c / P(c),
/// with N the prompt count and P(c) the marginal from concept_frequency.
/// Non-uniform prompt weights replace 1/N by w_i / sum(w).
/// A concept is persistent when cv < cv_cutoff, triggered otherwise.
///
/// Requires 0 <= tau < 1 and cv_cutoff > 0 (InvalidParameter), a non-empty
/// corpus (EmptyCorpus) and at least one image for every prompt (EmptyPrompt).
StabilityTable concept_stability(const AuditCorpus& corpus, double tau = kDefaultTau,
                                 double cv_cutoff = kDefaultCvCutoff);

struct IntervalEstimate {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::string method = "subsample_percentile";
  int groups = 0;
  std::int64_t group_size = 0;
  std::uint64_t seed = 0;
};

/// Linear-interpolated percentile (q in [0,1]) of an ascending sample.
double percentile_linear(const std::vector<double>& sorted, double q);

/// Draws `groups` subsamples of `group_size` images (without replacement
/// inside a group, independent across groups) and estimates P(c) in each.
/// point is the mean of the group estimates; [lo, hi] are their 2.5th and
/// 97.5th percentiles. A concept absent from the corpus yields 0 everywhere.
///
/// Requires groups >= 2 and group_size >= 1 (InvalidParameter), and at least
/// group_size images (NotEnoughImages).
IntervalEstimate subsample_ci(const AuditCorpus& corpus, const ConceptLabel& label, int groups,
                              std::int64_t group_size, std::uint64_t seed);

}  // namespace concept_audit
