#include "concept_audit/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "concept_audit/parallel.hpp"
#include "concept_audit/rng.hpp"

namespace concept_audit {

namespace {

template <typename Row>
const Row* find_row(const std::vector<Row>& rows, const ConceptLabel& label) {
  auto it = std::lower_bound(rows.begin(), rows.end(), label,
                             [](const Row& r, const ConceptLabel& l) { return r.label < l; });
  return (it != rows.end() && it->label == label) ? &*it : nullptr;
}

void require_images(const AuditCorpus& corpus) {
  if (corpus.image_count() == 0) {
    throw AuditError(ErrorCode::EmptyCorpus, "run '" + corpus.run_id() + "' has no images");
  }
}

// Weighted image mass sum_i w_i n_i, or 0 for uniform weights.
double weighted_image_mass(const AuditCorpus& corpus) {
  double mass = 0.0;
  for (PromptIndex i = 0; i < corpus.prompt_count(); ++i) {
    mass += corpus.prompts()[i].weight * static_cast<double>(corpus.images_of(i).size());
  }
  return mass;
}

double marginal(const AuditCorpus& corpus, ConceptId c, double weighted_mass) {
  const auto postings = corpus.images_with(c);
  if (corpus.uniform_weights()) {
    return static_cast<double>(postings.size()) / static_cast<double>(corpus.image_count());
  }
  double num = 0.0;
  for (ImageIndex img : postings) num += corpus.prompts()[corpus.prompt_of(img)].weight;
  return num / weighted_mass;
}

}  // namespace

std::int64_t default_ci_group_size(std::size_t image_count) noexcept {
  return std::min<std::int64_t>(1000, static_cast<std::int64_t>(image_count / 2));
}

const FrequencyRow* FrequencyTable::find(const ConceptLabel& label) const {
  return find_row(rows, label);
}

const ConditionalRow* ConditionalSlice::find(const ConceptLabel& label) const {
  return find_row(rows, label);
}

const StabilityRow* StabilityTable::find(const ConceptLabel& label) const {
  return find_row(rows, label);
}

std::string_view to_string(StabilityClass c) noexcept {
  return c == StabilityClass::Persistent ? "persistent" : "triggered";
}

FrequencyTable concept_frequency(const AuditCorpus& corpus) {
  require_images(corpus);
  FrequencyTable table;
  table.total_images = static_cast<std::int64_t>(corpus.image_count());
  table.weighted = !corpus.uniform_weights();
  const double mass = table.weighted ? weighted_image_mass(corpus) : 0.0;
  if (table.weighted && !(mass > 0.0)) {
    throw AuditError(ErrorCode::EmptyCorpus,
                     "every image belongs to a zero-weight prompt in run '" + corpus.run_id() + "'");
  }
  table.rows.reserve(corpus.concepts().size());
  for (ConceptId c = 0; c < corpus.concepts().size(); ++c) {
    table.rows.push_back({corpus.label(c), static_cast<std::int64_t>(corpus.images_with(c).size()),
                          marginal(corpus, c, mass)});
  }
  return table;
}

namespace {

ConditionalSlice slice_for(const AuditCorpus& corpus, PromptIndex prompt) {
  const auto imgs = corpus.images_of(prompt);
  ConditionalSlice slice;
  slice.prompt_id = corpus.prompts()[prompt].prompt_id;
  slice.image_count = static_cast<std::int64_t>(imgs.size());

  std::vector<ConceptId> ids;
  for (ImageIndex img : imgs) {
    const auto present = corpus.presence(img);
    ids.insert(ids.end(), present.begin(), present.end());
  }
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size();) {
    std::size_t j = i;
    while (j < ids.size() && ids[j] == ids[i]) ++j;
    const auto count = static_cast<std::int64_t>(j - i);
    slice.rows.push_back({corpus.label(ids[i]), count,
                          static_cast<double>(count) / static_cast<double>(slice.image_count)});
    i = j;
  }
  return slice;
}

}  // namespace

ConditionalSlice conditional_frequency(const AuditCorpus& corpus, std::string_view prompt_id) {
  const auto idx = corpus.prompt_index(prompt_id);
  if (!idx) throw AuditError(ErrorCode::UnknownPrompt, "unknown prompt '" + std::string(prompt_id) + "'");
  if (corpus.images_of(*idx).empty()) {
    throw AuditError(ErrorCode::EmptyPrompt, "prompt '" + std::string(prompt_id) + "' has no images");
  }
  return slice_for(corpus, *idx);
}

std::vector<ConditionalSlice> conditional_table(const AuditCorpus& corpus) {
  std::vector<ConditionalSlice> out;
  for (PromptIndex i = 0; i < corpus.prompt_count(); ++i) {
    if (!corpus.images_of(i).empty()) out.push_back(slice_for(corpus, i));
  }
  return out;
}

StabilityTable concept_stability(const AuditCorpus& corpus, double tau, double cv_cutoff) {
  if (!(tau >= 0.0 && tau < 1.0)) {
    throw AuditError(ErrorCode::InvalidParameter, "tau must be in [0,1)");
  }
  if (!(cv_cutoff > 0.0) || !std::isfinite(cv_cutoff)) {
    throw AuditError(ErrorCode::InvalidParameter, "cv_cutoff must be > 0");
  }
  require_images(corpus);
  for (PromptIndex i = 0; i < corpus.prompt_count(); ++i) {
    if (corpus.images_of(i).empty()) {
      throw AuditError(ErrorCode::EmptyPrompt,
                       "prompt '" + corpus.prompts()[i].prompt_id + "' has no images");
    }
  }

  const FrequencyTable freq = concept_frequency(corpus);
  const bool weighted = freq.weighted;
  const std::size_t n_prompts = corpus.prompt_count();
  double weight_sum = 0.0;
  if (weighted) {
    for (const auto& p : corpus.prompts()) weight_sum += p.weight;
  }

  std::vector<ConceptId> selected;
  for (ConceptId c = 0; c < freq.rows.size(); ++c) {
    if (freq.rows[c].p > tau) selected.push_back(c);
  }

  using Rows = std::vector<StabilityRow>;
  Rows rows = parallel_reduce<Rows>(
      selected.size(), 16,
      [&](std::size_t begin, std::size_t end) {
        Rows out;
        std::vector<std::int64_t> per_prompt(n_prompts, 0);
        for (std::size_t s = begin; s < end; ++s) {
          const ConceptId c = selected[s];
          const double p = freq.rows[c].p;
          std::fill(per_prompt.begin(), per_prompt.end(), 0);
          for (ImageIndex img : corpus.images_with(c)) ++per_prompt[corpus.prompt_of(img)];

          double acc = 0.0;
          for (PromptIndex i = 0; i < n_prompts; ++i) {
            const double cond = static_cast<double>(per_prompt[i]) /
                                static_cast<double>(corpus.images_of(i).size());
            const double diff = cond - p;
            acc += weighted ? corpus.prompts()[i].weight * (diff * diff) : diff * diff;
          }
          const double variance =
              weighted ? acc / weight_sum : acc / static_cast<double>(n_prompts);
          const double sigma = std::sqrt(variance);
          const double cv = sigma / p;
          out.push_back({freq.rows[c].label, p, sigma, cv,
                         cv < cv_cutoff ? StabilityClass::Persistent : StabilityClass::Triggered});
        }
        return out;
      },
      [](Rows& acc, Rows&& more) {
        acc.insert(acc.end(), std::make_move_iterator(more.begin()),
                   std::make_move_iterator(more.end()));
      });

  StabilityTable table;
  table.tau = tau;
  table.cv_cutoff = cv_cutoff;
  table.rows = std::move(rows);
  return table;
}

double percentile_linear(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw AuditError(ErrorCode::InvalidParameter, "percentile of empty sample");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  if (sorted[lo] == sorted[lo + 1]) return sorted[lo];
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

IntervalEstimate subsample_ci(const AuditCorpus& corpus, const ConceptLabel& label, int groups,
                              std::int64_t group_size, std::uint64_t seed) {
  if (groups < 2) throw AuditError(ErrorCode::InvalidParameter, "groups must be >= 2");
  if (group_size < 1) throw AuditError(ErrorCode::InvalidParameter, "group_size must be >= 1");
  const auto n = static_cast<std::int64_t>(corpus.image_count());
  if (n < group_size) {
    throw AuditError(ErrorCode::NotEnoughImages,
                     "need " + std::to_string(group_size) + " images, corpus has " +
                         std::to_string(n));
  }

  IntervalEstimate est;
  est.groups = groups;
  est.group_size = group_size;
  est.seed = seed;
  const auto id = corpus.concept_id(label);
  if (!id) return est;

  std::vector<char> has(corpus.image_count(), 0);
  for (ImageIndex img : corpus.images_with(*id)) has[img] = 1;

  std::vector<ImageIndex> perm(corpus.image_count());
  for (ImageIndex i = 0; i < perm.size(); ++i) perm[i] = i;

  PortableRng rng(seed);
  std::vector<double> estimates;
  estimates.reserve(static_cast<std::size_t>(groups));
  std::int64_t total_hits = 0;
  for (int g = 0; g < groups; ++g) {
    // Partial Fisher-Yates: the first group_size slots become a uniform
    // subset regardless of the permutation left by earlier groups.
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < group_size; ++i) {
      const auto j = i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n - i)));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
      hits += has[perm[static_cast<std::size_t>(i)]];
    }
    total_hits += hits;
    estimates.push_back(static_cast<double>(hits) / static_cast<double>(group_size));
  }
  // Equal group sizes make the mean of estimates a single ratio.
  est.point = static_cast<double>(total_hits) /
              (static_cast<double>(groups) * static_cast<double>(group_size));
  std::sort(estimates.begin(), estimates.end());
  est.lo = percentile_linear(estimates, 0.025);
  est.hi = percentile_linear(estimates, 0.975);
  return est;
}

}  // namespace concept_audit
