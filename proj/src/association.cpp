#include "concept_audit/association.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <tuple>
#include <unordered_map>

#include "concept_audit/parallel.hpp"

namespace concept_audit {

namespace {

using PairCounts = std::unordered_map<std::uint64_t, std::int64_t>;

std::uint64_t pair_key(ConceptId a, ConceptId b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

bool is_word_byte(unsigned char c) {
  return c >= 0x80 || std::isalnum(c) || c == '_';
}

void require_images(const AuditCorpus& corpus) {
  if (corpus.image_count() == 0) {
    throw AuditError(ErrorCode::EmptyCorpus, "run '" + corpus.run_id() + "' has no images");
  }
}

ConceptId require_concept(const AuditCorpus& corpus, const ConceptLabel& label) {
  auto id = corpus.concept_id(label);
  if (!id) {
    throw AuditError(ErrorCode::UnknownConcept,
                     "concept '" + label.str() + "' does not occur in run '" + corpus.run_id() + "'");
  }
  return *id;
}

double marginal(const AuditCorpus& corpus, ConceptId c) {
  return static_cast<double>(corpus.images_with(c).size()) /
         static_cast<double>(corpus.image_count());
}

}  // namespace

std::string_view to_string(RuleMetric m) noexcept {
  switch (m) {
    case RuleMetric::Support: return "support";
    case RuleMetric::Confidence: return "confidence";
    case RuleMetric::Lift: return "lift";
  }
  return "support";
}

std::optional<RuleMetric> parse_rule_metric(std::string_view s) noexcept {
  if (s == "support") return RuleMetric::Support;
  if (s == "confidence") return RuleMetric::Confidence;
  if (s == "lift") return RuleMetric::Lift;
  return std::nullopt;
}

const CoocRow* CoocTable::find(const ConceptLabel& x, const ConceptLabel& y) const {
  const ConceptLabel& a = x < y ? x : y;
  const ConceptLabel& b = x < y ? y : x;
  auto it = std::lower_bound(rows.begin(), rows.end(), std::tie(a, b),
                             [](const CoocRow& r, const auto& key) {
                               return std::tie(r.a, r.b) < key;
                             });
  return (it != rows.end() && it->a == a && it->b == b) ? &*it : nullptr;
}

CoocTable cooccurrence(const AuditCorpus& corpus, double min_support) {
  if (!(min_support >= 0.0 && min_support <= 1.0)) {
    throw AuditError(ErrorCode::InvalidParameter, "min_support must be in [0,1]");
  }
  require_images(corpus);
  const double total = static_cast<double>(corpus.image_count());

  // Pairs come from each image's own presence set, so the work is quadratic in
  // per-image set size rather than in vocabulary size.
  PairCounts joint = parallel_reduce<PairCounts>(
      corpus.image_count(), 4096,
      [&](std::size_t begin, std::size_t end) {
        PairCounts local;
        for (std::size_t img = begin; img < end; ++img) {
          const auto ids = corpus.presence(static_cast<ImageIndex>(img));
          for (std::size_t i = 0; i < ids.size(); ++i) {
            for (std::size_t j = i + 1; j < ids.size(); ++j) ++local[pair_key(ids[i], ids[j])];
          }
        }
        return local;
      },
      [](PairCounts& acc, PairCounts&& more) {
        for (const auto& [k, v] : more) acc[k] += v;
      });

  std::vector<std::uint64_t> keys;
  if (min_support == 0.0) {
    const auto v = static_cast<ConceptId>(corpus.concepts().size());
    keys.reserve(static_cast<std::size_t>(v) * (v > 0 ? v - 1 : 0) / 2);
    for (ConceptId a = 0; a < v; ++a) {
      for (ConceptId b = a + 1; b < v; ++b) keys.push_back(pair_key(a, b));
    }
  } else {
    for (const auto& [k, count] : joint) {
      if (static_cast<double>(count) / total >= min_support) keys.push_back(k);
    }
    std::sort(keys.begin(), keys.end());
  }

  CoocTable table;
  table.total_images = static_cast<std::int64_t>(corpus.image_count());
  table.min_support = min_support;
  table.rows.reserve(keys.size());
  for (std::uint64_t key : keys) {
    const auto a = static_cast<ConceptId>(key >> 32);
    const auto b = static_cast<ConceptId>(key & 0xffffffffu);
    auto it = joint.find(key);
    const std::int64_t count = it == joint.end() ? 0 : it->second;
    const double support = static_cast<double>(count) / total;
    const double pa = marginal(corpus, a);
    const double pb = marginal(corpus, b);
    table.rows.push_back({corpus.label(a), corpus.label(b), count, support, support / pa,
                          support / pb, support / (pa * pb)});
  }
  return table;
}

std::vector<PartnerRow> top_cooccurring(const AuditCorpus& corpus, const ConceptLabel& target,
                                        std::size_t k, RuleMetric metric, double min_support) {
  if (k < 1) throw AuditError(ErrorCode::InvalidParameter, "k must be >= 1");
  if (!(min_support >= 0.0 && min_support <= 1.0)) {
    throw AuditError(ErrorCode::InvalidParameter, "min_support must be in [0,1]");
  }
  const ConceptId c = require_concept(corpus, target);
  const double total = static_cast<double>(corpus.image_count());

  std::unordered_map<ConceptId, std::int64_t> joint;
  for (ImageIndex img : corpus.images_with(c)) {
    for (ConceptId other : corpus.presence(img)) {
      if (other != c) ++joint[other];
    }
  }

  const double pc = marginal(corpus, c);
  std::vector<PartnerRow> rows;
  for (const auto& [other, count] : joint) {
    const double support = static_cast<double>(count) / total;
    if (support < min_support) continue;
    const double po = marginal(corpus, other);
    rows.push_back({corpus.label(other), count, support, support / pc, support / (pc * po)});
  }

  auto score = [metric](const PartnerRow& r) {
    switch (metric) {
      case RuleMetric::Support: return r.support;
      case RuleMetric::Confidence: return r.confidence;
      case RuleMetric::Lift: return r.lift;
    }
    return r.support;
  };
  std::sort(rows.begin(), rows.end(), [&](const PartnerRow& x, const PartnerRow& y) {
    const double sx = score(x), sy = score(y);
    if (sx != sy) return sx > sy;
    if (x.joint_count != y.joint_count) return x.joint_count > y.joint_count;
    return x.label < y.label;
  });
  if (rows.size() > k) rows.erase(rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end());
  return rows;
}

ReverseIndexEntry reverse_index(const AuditCorpus& corpus, const ConceptLabel& target,
                                std::size_t evidence_limit) {
  const ConceptId c = require_concept(corpus, target);
  const auto postings = corpus.images_with(c);

  ReverseIndexEntry entry{target, {}, {}, static_cast<std::int64_t>(postings.size())};
  std::unordered_map<PromptIndex, std::int64_t> per_prompt;
  for (ImageIndex img : postings) ++per_prompt[corpus.prompt_of(img)];
  for (const auto& [p, count] : per_prompt) {
    entry.prompt_hits.push_back({corpus.prompts()[p].prompt_id, count});
  }
  std::sort(entry.prompt_hits.begin(), entry.prompt_hits.end(),
            [](const PromptHit& x, const PromptHit& y) {
              if (x.image_count != y.image_count) return x.image_count > y.image_count;
              return x.prompt_id < y.prompt_id;
            });

  // Postings are in image_id order already.
  const std::size_t n = std::min(evidence_limit, postings.size());
  entry.evidence.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& img = corpus.images()[postings[i]];
    EvidenceItem item{img.image_id, img.prompt_id, img.image_uri, {}, {}};
    for (const auto& d : img.detections) {
      if (d.label == target) {
        item.boxes.push_back(d.box);
        item.scores.push_back(d.score);
      }
    }
    entry.evidence.push_back(std::move(item));
  }
  return entry;
}

bool mentions_term(std::string_view text, const ConceptLabel& term) {
  const std::string haystack = normalize_text(text);
  const std::string& needle = term.str();
  for (std::size_t pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + 1)) {
    const bool left_ok = pos == 0 || !is_word_byte(static_cast<unsigned char>(haystack[pos - 1]));
    const std::size_t end = pos + needle.size();
    const bool right_ok =
        end == haystack.size() || !is_word_byte(static_cast<unsigned char>(haystack[end]));
    if (left_ok && right_ok) return true;
  }
  return false;
}

std::vector<WatchlistFinding> watchlist_scan(const AuditCorpus& corpus,
                                             const std::set<ConceptLabel>& watchlist,
                                             std::size_t evidence_limit) {
  std::optional<FrequencyTable> freq;
  if (corpus.image_count() > 0) freq = concept_frequency(corpus);

  std::vector<WatchlistFinding> out;
  out.reserve(watchlist.size());
  for (const auto& label : watchlist) {
    WatchlistFinding f{FrequencyRow{label, 0, 0.0}, ReverseIndexEntry{label, {}, {}, 0}, {}, 0};
    const FrequencyRow* row = freq ? freq->find(label) : nullptr;
    if (row != nullptr) {
      f.frequency = *row;
      f.index = reverse_index(corpus, label, evidence_limit);
      for (const auto& hit : f.index.prompt_hits) {
        const auto& prompt = corpus.prompts()[*corpus.prompt_index(hit.prompt_id)];
        const bool named = mentions_term(prompt.text, label);
        f.explicit_mention.push_back(named);
        if (!named) ++f.implicit_prompts;
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::set<ConceptLabel> load_watchlist(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AuditError(ErrorCode::IoFailure, "cannot read " + path);
  std::set<ConceptLabel> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::string text = normalize_text(line);
    if (text.empty() || text.front() == '#') continue;
    out.insert(ConceptLabel::normalize(text));
  }
  return out;
}

}  // namespace concept_audit
