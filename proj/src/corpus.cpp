#include "concept_audit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <utility>

namespace concept_audit {

AuditCorpus::AuditCorpus(std::string run_id, RunMetadata metadata,
                         std::vector<PromptRecord> prompts,
                         std::vector<ImageRecord> images)
    : run_id_(std::move(run_id)),
      metadata_(std::move(metadata)),
      prompts_(std::move(prompts)),
      images_(std::move(images)) {
  if (metadata_.k_nominal < 1) {
    throw AuditError(ErrorCode::InvalidRecord, "K_nominal must be >= 1");
  }
  if (prompts_.size() >= std::numeric_limits<PromptIndex>::max() ||
      images_.size() >= std::numeric_limits<ImageIndex>::max()) {
    throw AuditError(ErrorCode::InvalidRecord, "corpus too large");
  }

  std::sort(prompts_.begin(), prompts_.end(),
            [](const auto& a, const auto& b) { return a.prompt_id < b.prompt_id; });
  std::sort(images_.begin(), images_.end(),
            [](const auto& a, const auto& b) { return a.image_id < b.image_id; });

  prompt_lookup_.reserve(prompts_.size());
  for (PromptIndex i = 0; i < prompts_.size(); ++i) {
    const auto& p = prompts_[i];
    if (!(p.weight >= 0.0) || !std::isfinite(p.weight)) {
      throw AuditError(ErrorCode::InvalidRecord,
                       "prompt '" + p.prompt_id + "' has invalid weight");
    }
    if (!prompt_lookup_.emplace(p.prompt_id, i).second) {
      throw AuditError(ErrorCode::DuplicatePromptId,
                       "duplicate prompt_id '" + p.prompt_id + "'");
    }
    if (p.weight != prompts_.front().weight) uniform_weights_ = false;
  }

  std::set<ConceptLabel> vocabulary;
  for (const auto& img : images_) {
    for (const auto& d : img.detections) vocabulary.insert(d.label);
  }
  concepts_.assign(vocabulary.begin(), vocabulary.end());
  concept_lookup_.reserve(concepts_.size());
  for (ConceptId c = 0; c < concepts_.size(); ++c) concept_lookup_.emplace(concepts_[c], c);

  image_lookup_.reserve(images_.size());
  presence_.resize(images_.size());
  postings_.resize(concepts_.size());
  image_prompt_.resize(images_.size());
  prompt_images_.resize(prompts_.size());
  std::set<std::pair<std::string_view, std::int64_t>> samples;

  for (ImageIndex i = 0; i < images_.size(); ++i) {
    const auto& img = images_[i];
    if (!image_lookup_.emplace(img.image_id, i).second) {
      throw AuditError(ErrorCode::DuplicateImageId,
                       "duplicate image_id '" + img.image_id + "'");
    }
    auto p = prompt_lookup_.find(img.prompt_id);
    if (p == prompt_lookup_.end()) {
      throw AuditError(ErrorCode::UnknownPromptId, "image '" + img.image_id +
                                                       "' references unknown prompt_id '" +
                                                       img.prompt_id + "'");
    }
    if (img.sample_index < 0) {
      throw AuditError(ErrorCode::InvalidRecord,
                       "image '" + img.image_id + "' has negative sample_index");
    }
    if (!samples.emplace(img.prompt_id, img.sample_index).second) {
      throw AuditError(ErrorCode::DuplicateSample,
                       "duplicate (prompt_id, sample_index) for image '" + img.image_id + "'");
    }
    image_prompt_[i] = p->second;
    prompt_images_[p->second].push_back(i);

    auto& ids = presence_[i];
    ids.reserve(img.detections.size());
    for (const auto& d : img.detections) ids.push_back(concept_lookup_.at(d.label));
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (ConceptId c : ids) postings_[c].push_back(i);
  }
}

std::optional<PromptIndex> AuditCorpus::prompt_index(std::string_view prompt_id) const {
  auto it = prompt_lookup_.find(std::string(prompt_id));
  if (it == prompt_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<ImageIndex> AuditCorpus::image_index(std::string_view image_id) const {
  auto it = image_lookup_.find(std::string(image_id));
  if (it == image_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<ConceptId> AuditCorpus::concept_id(const ConceptLabel& label) const {
  auto it = concept_lookup_.find(label);
  if (it == concept_lookup_.end()) return std::nullopt;
  return it->second;
}

}  // namespace concept_audit
