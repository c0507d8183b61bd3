#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "concept_audit/core_model.hpp"

namespace concept_audit {

using ConceptId = std::uint32_t;
using ImageIndex = std::uint32_t;
using PromptIndex = std::uint32_t;

/// Indexed collection of prompts, images and detections for one run.
///
/// Prompts and images are stored sorted by id. Each image carries its
/// presence set as sorted concept ids, and the inverse index (concept ->
/// sorted image indices) is derived from those sets at construction. The
/// object is immutable afterwards and safe to share across threads.
class AuditCorpus {
 public:
  /// Validates uniqueness of prompt ids, image ids and (prompt_id,
  /// sample_index) pairs, and that every image references a known prompt.
  AuditCorpus(std::string run_id, RunMetadata metadata,
              std::vector<PromptRecord> prompts, std::vector<ImageRecord> images);

  const std::string& run_id() const noexcept { return run_id_; }
  const RunMetadata& metadata() const noexcept { return metadata_; }

  std::span<const PromptRecord> prompts() const noexcept { return prompts_; }
  std::span<const ImageRecord> images() const noexcept { return images_; }
  std::size_t prompt_count() const noexcept { return prompts_.size(); }
  std::size_t image_count() const noexcept { return images_.size(); }

  std::optional<PromptIndex> prompt_index(std::string_view prompt_id) const;
  std::optional<ImageIndex> image_index(std::string_view image_id) const;

  /// Sorted vocabulary; ConceptId indexes into it.
  std::span<const ConceptLabel> concepts() const noexcept { return concepts_; }
  std::optional<ConceptId> concept_id(const ConceptLabel& label) const;
  const ConceptLabel& label(ConceptId id) const { return concepts_.at(id); }

  std::span<const ConceptId> presence(ImageIndex image) const {
    return presence_.at(image);
  }
  std::span<const ImageIndex> images_with(ConceptId id) const {
    return postings_.at(id);
  }
  PromptIndex prompt_of(ImageIndex image) const { return image_prompt_.at(image); }
  std::span<const ImageIndex> images_of(PromptIndex prompt) const {
    return prompt_images_.at(prompt);
  }

  /// True when every prompt weight equals the first one (including the
  /// empty-corpus case).
  bool uniform_weights() const noexcept { return uniform_weights_; }

  /// Structural equality over run id, metadata, prompts and images. The
  /// derived indices follow from those.
  friend bool operator==(const AuditCorpus& a, const AuditCorpus& b) {
    return a.run_id_ == b.run_id_ && a.metadata_ == b.metadata_ &&
           a.prompts_ == b.prompts_ && a.images_ == b.images_;
  }

 private:
  std::string run_id_;
  RunMetadata metadata_;
  std::vector<PromptRecord> prompts_;
  std::vector<ImageRecord> images_;

  std::unordered_map<std::string, PromptIndex> prompt_lookup_;
  std::unordered_map<std::string, ImageIndex> image_lookup_;
  std::vector<ConceptLabel> concepts_;
  std::unordered_map<ConceptLabel, ConceptId> concept_lookup_;
  std::vector<std::vector<ConceptId>> presence_;
  std::vector<std::vector<ImageIndex>> postings_;
  std::vector<PromptIndex> image_prompt_;
  std::vector<std::vector<ImageIndex>> prompt_images_;
  bool uniform_weights_ = true;
};

}  // namespace concept_audit
