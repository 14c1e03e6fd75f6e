#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "staytime/domain.hpp"
#include "staytime/embedding_table.hpp"

namespace staytime::datagen {

/// Shape parameters of the mean-staytime response surface.
///
///   mean = base
///        * exp(-like_decay * log1p(min(a, like_knee)) / log1p(like_knee))
///        * (1 + interaction_gain * log1p(min(n, interaction_knee)))
///        * (1 + watch_slope * w / watch_ref_s + completion_jump * [w >= min(d, completion_threshold_s)])
///        * (1 + affinity_gain * clamp(affinity, -1, 1))
///
/// where a = average likes of the top-5 comments, n = comment interactions,
/// w = watchtime, d = video duration.
struct ResponseParams {
  double base_staytime_s = 20.0;
  double like_knee = 2000.0;
  double like_decay = 1.2;
  double interaction_gain = 0.45;
  double interaction_knee = 20.0;
  double watch_slope = 0.3;
  double watch_ref_s = 60.0;
  double completion_threshold_s = 120.0;
  double completion_jump = 0.25;
  double affinity_gain = 0.5;  ///< keeps the affinity factor inside [0.5, 1.5]
};

double staytime_response(double avg_top5_likes, double n_interactions, double watchtime_s, double duration_s,
                         double affinity, const ResponseParams& params = {});

struct GeneratorConfig {
  std::int64_t n_users = 1000;
  std::int64_t n_videos = 1500;
  std::int64_t n_impressions = 50000;
  std::int64_t comments_per_video_min = 3;
  std::int64_t comments_per_video_max = 30;
  double like_exponent = 1.8;  ///< Pareto tail exponent of per-comment likes (> 1)
  double open_rate = 0.6;
  double noise_sigma = 0.35;   ///< lognormal sigma of observed / expected staytime
  std::int64_t latent_dim = 4;
  double embedding_noise = 0.15;
  /// Extra pure-noise dimensions appended to the mock embeddings.
  std::int64_t embedding_extra_dims = 3;
  std::uint64_t seed = 7;
  ResponseParams response;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

/// Ground-truth latent factors shared by the staytime response and the mock embedder.
struct LatentState {
  std::map<Id, std::vector<double>> user_topics;
  std::map<Id, std::vector<double>> video_topics;
  std::map<Id, std::vector<double>> comment_topics;
  std::map<Id, double> comment_quality;
};

struct SyntheticData {
  Dataset dataset;
  LatentState latent;
  EmbeddingTable video_embeddings;
  EmbeddingTable comment_embeddings;
};

/// Pure function of the config (seed included).
SyntheticData generate_synthetic(const GeneratorConfig& config);

/// Average like count of a video's five most popular comments (0 without comments).
double avg_top5_likes(const VideoRecord& video, const CommentIndex& index);

inline constexpr const char* kVideoEmbeddingFile = "video_embeddings.lcue";
inline constexpr const char* kCommentEmbeddingFile = "comment_embeddings.lcue";

/// Writes the canonical dataset plus both embedding tables into `dir`.
void save_synthetic(const SyntheticData& data, const std::string& dir);

// --- external data -----------------------------------------------------------

/// Source file paths of a KuaiComt-shaped export.
struct ExternalPaths {
  std::string users, videos, comments, impressions, comment_interactions;

  /// The five canonical file names inside `dir`.
  static ExternalPaths in_directory(const std::string& dir);
};

/// canonical column name -> column name used by the source files. Columns
/// absent from the map are looked up under their canonical name.
using ColumnMap = std::map<std::string, std::string>;

/// Parses a JSON object {canonical_name: external_name}.
ColumnMap parse_column_map(const std::string& json_text);

struct LoadResult {
  Dataset dataset;
  /// Rejected rows per canonical file name.
  std::map<std::string, std::size_t> rejected;

  std::size_t total_rejected() const;
};

/// Loads an external export into the canonical schema. Rows that break an
/// invariant (or reference a rejected/unknown row) are written to
/// `<reject_dir>/<file>.rejects.csv` with a trailing `reason` column instead
/// of being dropped silently. Unreadable files and missing mapped columns
/// throw IoError. Video comment lists are rebuilt from the surviving
/// comments in canonical popularity order.
LoadResult load_external(const ExternalPaths& paths, const ColumnMap& column_map, const std::string& reject_dir);

/// Canonical directory load; throws ValidationError if any row is rejected.
Dataset load_dataset(const std::string& dir);

// --- splitting -------------------------------------------------------------

struct Splits {
  std::vector<ImpressionRecord> train;
  std::vector<ImpressionRecord> validation;
  std::vector<ImpressionRecord> test;
};

/// Sorts impressions by (timestamp, user_id, video_id), stable on file order,
/// and cuts at floor(4n/6) and floor(5n/6). Throws ValidationError when empty.
Splits time_split(const std::vector<ImpressionRecord>& impressions);

}  // namespace staytime::datagen
