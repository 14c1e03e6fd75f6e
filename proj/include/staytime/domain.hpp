#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace staytime {

using Id = std::int64_t;

/// Marks a padded comment slot.
inline constexpr Id kNoComment = -1;

inline constexpr int kMaxActivityLevel = 4;

/// Default number of comment slots per training example.
inline constexpr std::size_t kDefaultSampledComments = 6;
/// Size of the popularity head of the candidate pool.
inline constexpr std::size_t kPopularCandidatePool = 7;

struct UserHistory {
  std::vector<Id> video_ids;                ///< ascending timestamp
  std::vector<Id> comment_interaction_ids;  ///< ascending timestamp
};

struct UserRecord {
  Id user_id = 0;
  int activity_level = 0;  ///< ordinal 0..4
  UserHistory history;
};

struct VideoRecord {
  Id video_id = 0;
  double duration_s = 0.0;
  std::string caption_tokens;
  std::vector<Id> comment_ids;  ///< canonical popularity order
};

struct CommentRecord {
  Id comment_id = 0;
  Id video_id = 0;
  std::int64_t like_count = 0;
  std::int64_t reply_count = 0;
  std::string content_tokens;
};

/// One user x video exposure.
struct ImpressionRecord {
  Id user_id = 0;
  Id video_id = 0;
  std::int64_t timestamp = 0;
  bool opened = false;
  double staytime_s = 0.0;
  double watchtime_s = 0.0;
  /// In the order the interactions happened (oldest first).
  std::vector<Id> interacted_comment_ids;
};

/// A like or reply event on a single comment.
struct CommentInteraction {
  Id user_id = 0;
  Id video_id = 0;
  Id comment_id = 0;
  std::int64_t timestamp = 0;
  std::string kind;  ///< "like" or "reply"
};

struct Dataset {
  std::vector<UserRecord> users;
  std::vector<VideoRecord> videos;
  std::vector<CommentRecord> comments;
  std::vector<ImpressionRecord> impressions;
  std::vector<CommentInteraction> comment_interactions;
};

/// Strict weak order of canonical popularity: likes desc, replies desc, id asc.
bool more_popular(const CommentRecord& a, const CommentRecord& b);

/// Per-video comment lists in canonical popularity order plus id lookup.
/// Immutable once built; safe for concurrent readers.
class CommentIndex {
 public:
  CommentIndex() = default;

  std::span<const Id> comments_of(Id video_id) const;
  const CommentRecord* find(Id comment_id) const;
  /// 0-based position of the comment inside its video's popularity list.
  std::size_t popularity_rank(Id comment_id) const;
  std::size_t video_count() const { return by_video_.size(); }
  std::size_t comment_count() const { return comments_.size(); }

 private:
  friend CommentIndex build_comment_index(std::span<const CommentRecord>, std::span<const VideoRecord>);
  friend CommentIndex build_comment_index(std::span<const CommentRecord>);

  std::unordered_map<Id, std::vector<Id>> by_video_;
  std::unordered_map<Id, CommentRecord> comments_;
  std::unordered_map<Id, std::size_t> rank_;
};

/// Groups comments by video in popularity order. With `videos`, a comment
/// whose video is unknown raises ValidationError naming the comment.
CommentIndex build_comment_index(std::span<const CommentRecord> comments, std::span<const VideoRecord> videos);
CommentIndex build_comment_index(std::span<const CommentRecord> comments);

/// The k comment slots attached to one training example.
struct SampledComments {
  std::vector<Id> comment_ids;          ///< k entries, kNoComment when padded
  std::vector<std::uint8_t> mask;       ///< 1 = real comment
  std::vector<std::uint8_t> interaction_labels;
  std::vector<std::int64_t> like_counts;   ///< 0 on padded slots
  std::vector<std::int64_t> reply_counts;  ///< 0 on padded slots
  /// Interacted comments that did not fit into k slots.
  std::size_t dropped_interactions = 0;

  std::size_t slots() const { return comment_ids.size(); }
  std::size_t real_count() const;
  /// Slot indices of real comments, most popular first (ListMLE order).
  std::vector<std::size_t> popularity_order() const;
  /// Canonical text form; equal inputs give byte-identical strings.
  std::string serialize() const;
};

/// Candidate pool = top-7 popular comments plus every interacted comment.
/// Interacted comments are kept first (most recent ones if more than k),
/// the remaining slots take the most popular non-interacted candidates.
/// Chosen comments are emitted in popularity order, then padded to k.
SampledComments sample_comments(const ImpressionRecord& impression, const CommentIndex& index,
                                std::size_t k = kDefaultSampledComments,
                                std::size_t popular_pool = kPopularCandidatePool);

struct Violation {
  std::string rule;
  std::string record;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool valid() const { return violations.empty(); }
  std::string to_string() const;
};

/// Lists every invariant violation. Never throws on bad data.
ValidationReport validate_dataset(const Dataset& dataset);

// --- canonical on-disk schema ------------------------------------------------

inline constexpr const char* kSchemaVersion = "staytime-lab/1";

/// Canonical file names, in manifest order.
inline constexpr const char* kUsersFile = "users.csv";
inline constexpr const char* kVideosFile = "videos.csv";
inline constexpr const char* kCommentsFile = "comments.csv";
inline constexpr const char* kImpressionsFile = "impressions.csv";
inline constexpr const char* kInteractionsFile = "comment_interactions.csv";

/// Canonical column names per file.
const std::vector<std::string>& user_columns();
const std::vector<std::string>& video_columns();
const std::vector<std::string>& comment_columns();
const std::vector<std::string>& impression_columns();
const std::vector<std::string>& interaction_columns();

/// Writes the five CSV files and manifest.json into `dir` (created if needed).
void save_dataset(const Dataset& dataset, const std::string& dir);

/// 64-bit FNV-1a of a file's bytes, as 16 lowercase hex digits.
std::string file_hash(const std::string& path);

}  // namespace staytime
