#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "staytime/base_models.hpp"
#include "staytime/domain.hpp"
#include "staytime/embedding_table.hpp"
#include "staytime/nn/checkpoint.hpp"

namespace staytime::features {

inline constexpr std::size_t kActivityLevels = kMaxActivityLevel + 1;
/// activity one-hot, log1p(history videos), log1p(history comment interactions)
inline constexpr std::size_t kUserDenseDim = kActivityLevels + 2;
/// log1p(duration), log1p(watchtime), min(watch ratio, 5), log1p(avg top-5 likes), log1p(#comments)
inline constexpr std::size_t kVideoDenseDim = 5;
/// log1p(likes), log1p(replies), log1p(popularity rank)
inline constexpr std::size_t kCommentDenseDim = 3;

enum class MissingEmbeddingPolicy { ZeroFallback, Strict };

MissingEmbeddingPolicy parse_missing_policy(const std::string& name);
std::string to_string(MissingEmbeddingPolicy policy);

/// Id -> row maps learned on the training split. Row 0 is shared by every
/// id not seen in training.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<Id> ids);

  std::size_t rows() const { return ids_.size() + 1; }
  std::size_t row_of(Id id) const;
  const std::vector<Id>& ids() const { return ids_; }

 private:
  std::vector<Id> ids_;
  std::unordered_map<Id, std::size_t> index_;
};

/// Per-column standardisation fitted on training rows.
struct Standardizer {
  std::vector<double> mean, scale;
  static Standardizer fit(std::span<const double> rows, std::size_t cols, std::span<const std::uint8_t> keep = {});
  void apply(std::span<double> rows) const;
};

/// Everything learned from the training split that features depend on.
struct FeatureContext {
  Vocab users, videos;
  Standardizer user_dense, video_dense, comment_dense;
  /// Training impressions per video id (exposure groups).
  std::unordered_map<Id, std::size_t> video_train_count;
  std::size_t k = kDefaultSampledComments;

  void append_sections(std::vector<nn::Section>& out) const;
  /// Restores vocabularies and standardisers; `video_train_count` is not
  /// stored and stays empty.
  static FeatureContext from_sections(const std::vector<nn::Section>& sections);
};

/// Model-ready rows. Comment-slot tensors have k rows per example.
struct ExampleSet {
  std::size_t k = 0;
  std::vector<Id> user_ids, video_ids;
  std::vector<std::size_t> user_rows, video_rows;
  nn::Tensor user_dense;     ///< n x kUserDenseDim
  nn::Tensor video_dense;    ///< n x kVideoDenseDim
  nn::Tensor video_llm;      ///< n x dim(E^V); 0 columns without tables
  nn::Tensor comment_llm;    ///< (n*k) x dim(E^C)
  nn::Tensor comment_dense;  ///< (n*k) x kCommentDenseDim
  std::vector<Id> comment_ids;  ///< n*k, kNoComment on padded slots
  std::vector<std::uint8_t> slot_mask;
  std::vector<std::uint8_t> slot_labels;
  std::vector<std::vector<std::size_t>> popularity_order;
  models::HeadTargets targets;

  std::size_t size() const { return user_ids.size(); }
  ExampleSet subset(std::span<const std::size_t> rows) const;
  /// Rows with opened == 1.
  std::vector<std::size_t> opened_rows() const;
};

struct EmbeddingSources {
  const EmbeddingTable* videos = nullptr;
  const EmbeddingTable* comments = nullptr;
  MissingEmbeddingPolicy policy = MissingEmbeddingPolicy::ZeroFallback;
};

/// Ids that fell back to zero vectors under ZeroFallback.
struct MissingEmbeddingCounts {
  std::size_t videos = 0;
  std::size_t comments = 0;
};

FeatureContext fit_context(const Dataset& dataset, const CommentIndex& index,
                           const std::vector<ImpressionRecord>& train, std::size_t k = kDefaultSampledComments);

/// Throws ValidationError on an impression whose user or video is unknown
/// and, under the Strict policy, on a missing embedding id.
ExampleSet build_examples(const Dataset& dataset, const CommentIndex& index,
                          const std::vector<ImpressionRecord>& impressions, const FeatureContext& context,
                          const EmbeddingSources& embeddings, MissingEmbeddingCounts* missing = nullptr);

}  // namespace staytime::features
