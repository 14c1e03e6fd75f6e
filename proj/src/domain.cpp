#include "staytime/domain.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "binary_io.hpp"
#include "csv.hpp"
#include "staytime/error.hpp"

namespace staytime {

bool more_popular(const CommentRecord& a, const CommentRecord& b) {
  if (a.like_count != b.like_count) return a.like_count > b.like_count;
  if (a.reply_count != b.reply_count) return a.reply_count > b.reply_count;
  return a.comment_id < b.comment_id;
}

// --- CommentIndex --------------------------------------------------------------

std::span<const Id> CommentIndex::comments_of(Id video_id) const {
  const auto it = by_video_.find(video_id);
  if (it == by_video_.end()) return {};
  return it->second;
}

const CommentRecord* CommentIndex::find(Id comment_id) const {
  const auto it = comments_.find(comment_id);
  return it == comments_.end() ? nullptr : &it->second;
}

std::size_t CommentIndex::popularity_rank(Id comment_id) const {
  const auto it = rank_.find(comment_id);
  if (it == rank_.end()) throw ValidationError("comment " + std::to_string(comment_id) + " is not indexed");
  return it->second;
}

CommentIndex build_comment_index(std::span<const CommentRecord> comments) {
  CommentIndex index;
  for (const CommentRecord& c : comments) {
    if (!index.comments_.emplace(c.comment_id, c).second) {
      throw ValidationError("duplicate comment_id " + std::to_string(c.comment_id));
    }
    index.by_video_[c.video_id].push_back(c.comment_id);
  }
  for (auto& [video, ids] : index.by_video_) {
    std::sort(ids.begin(), ids.end(),
              [&](Id a, Id b) { return more_popular(index.comments_.at(a), index.comments_.at(b)); });
    for (std::size_t r = 0; r < ids.size(); ++r) index.rank_[ids[r]] = r;
  }
  return index;
}

CommentIndex build_comment_index(std::span<const CommentRecord> comments, std::span<const VideoRecord> videos) {
  std::unordered_set<Id> known;
  for (const VideoRecord& v : videos) known.insert(v.video_id);
  for (const CommentRecord& c : comments) {
    if (!known.contains(c.video_id)) {
      throw ValidationError("comment " + std::to_string(c.comment_id) + " references unknown video " +
                            std::to_string(c.video_id));
    }
  }
  return build_comment_index(comments);
}

// --- sampling ------------------------------------------------------------------

std::size_t SampledComments::real_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

std::vector<std::size_t> SampledComments::popularity_order() const {
  // Slots are already emitted in popularity order; real slots precede padding.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) order.push_back(i);
  }
  return order;
}

std::string SampledComments::serialize() const {
  std::ostringstream out;
  out << "k=" << comment_ids.size() << " dropped=" << dropped_interactions;
  for (std::size_t i = 0; i < comment_ids.size(); ++i) {
    out << '|' << comment_ids[i] << ',' << int(mask[i]) << ',' << int(interaction_labels[i]) << ','
        << like_counts[i] << ',' << reply_counts[i];
  }
  return out.str();
}

SampledComments sample_comments(const ImpressionRecord& impression, const CommentIndex& index, std::size_t k,
                                std::size_t popular_pool) {
  if (k == 0) throw ValidationError("sample_comments: k must be >= 1");
  const std::span<const Id> ranked = index.comments_of(impression.video_id);

  // Distinct interacted comments in interaction order; the last ones are the most recent.
  std::vector<Id> interacted;
  std::unordered_set<Id> interacted_set;
  for (Id c : impression.interacted_comment_ids) {
    if (interacted_set.insert(c).second) interacted.push_back(c);
  }

  SampledComments out;
  std::vector<Id> chosen;
  if (interacted.size() > k) {
    out.dropped_interactions = interacted.size() - k;
    chosen.assign(interacted.end() - static_cast<std::ptrdiff_t>(k), interacted.end());
  } else {
    chosen = interacted;
    const std::size_t pool = std::min(popular_pool, ranked.size());
    for (std::size_t r = 0; r < pool && chosen.size() < k; ++r) {
      if (!interacted_set.contains(ranked[r])) chosen.push_back(ranked[r]);
    }
  }
  for (Id c : chosen) {
    if (index.find(c) == nullptr) {
      throw ValidationError("impression (user " + std::to_string(impression.user_id) + ", video " +
                            std::to_string(impression.video_id) + ") interacted with unindexed comment " +
                            std::to_string(c));
    }
  }
  std::sort(chosen.begin(), chosen.end(), [&](Id a, Id b) { return more_popular(*index.find(a), *index.find(b)); });

  out.comment_ids.assign(k, kNoComment);
  out.mask.assign(k, 0);
  out.interaction_labels.assign(k, 0);
  out.like_counts.assign(k, 0);
  out.reply_counts.assign(k, 0);
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const CommentRecord& c = *index.find(chosen[i]);
    out.comment_ids[i] = c.comment_id;
    out.mask[i] = 1;
    out.interaction_labels[i] = interacted_set.contains(c.comment_id) ? 1 : 0;
    out.like_counts[i] = c.like_count;
    out.reply_counts[i] = c.reply_count;
  }
  return out;
}

// --- validation ----------------------------------------------------------------

std::string ValidationReport::to_string() const {
  std::ostringstream out;
  for (const Violation& v : violations) out << v.rule << " [" << v.record << "]: " << v.detail << '\n';
  return out.str();
}

ValidationReport validate_dataset(const Dataset& d) {
  ValidationReport report;
  auto flag = [&](std::string rule, std::string record, std::string detail) {
    report.violations.push_back({std::move(rule), std::move(record), std::move(detail)});
  };
  auto id = [](Id v) { return std::to_string(v); };

  std::unordered_set<Id> users, videos;
  std::unordered_map<Id, const CommentRecord*> comments;
  for (const VideoRecord& v : d.videos) {
    if (!videos.insert(v.video_id).second) flag("video.unique_id", "video " + id(v.video_id), "duplicate id");
    if (!(v.duration_s > 0.0)) flag("video.duration_positive", "video " + id(v.video_id), "duration_s <= 0");
  }
  for (const CommentRecord& c : d.comments) {
    const std::string rec = "comment " + id(c.comment_id);
    if (!comments.emplace(c.comment_id, &c).second) flag("comment.unique_id", rec, "duplicate id");
    if (c.like_count < 0) flag("comment.like_count_nonnegative", rec, "like_count < 0");
    if (c.reply_count < 0) flag("comment.reply_count_nonnegative", rec, "reply_count < 0");
    if (!videos.contains(c.video_id)) flag("comment.known_video", rec, "unknown video " + id(c.video_id));
  }

  // Video comment lists must equal the canonical popularity order of its comments.
  std::unordered_map<Id, std::vector<const CommentRecord*>> per_video;
  for (const auto& [cid, c] : comments) per_video[c->video_id].push_back(c);
  for (const VideoRecord& v : d.videos) {
    auto& list = per_video[v.video_id];
    std::sort(list.begin(), list.end(), [](auto* a, auto* b) { return more_popular(*a, *b); });
    std::vector<Id> expected;
    for (const auto* c : list) expected.push_back(c->comment_id);
    if (expected != v.comment_ids) {
      flag("video.comment_order", "video " + id(v.video_id),
           "comment_ids do not match the video's comments in popularity order");
    }
  }

  for (const UserRecord& u : d.users) {
    const std::string rec = "user " + id(u.user_id);
    if (!users.insert(u.user_id).second) flag("user.unique_id", rec, "duplicate id");
    if (u.activity_level < 0 || u.activity_level > kMaxActivityLevel) {
      flag("user.activity_level", rec, "activity_level " + std::to_string(u.activity_level) + " outside [0,4]");
    }
    for (Id v : u.history.video_ids) {
      if (!videos.contains(v)) flag("user.history_video", rec, "unknown video " + id(v));
    }
    for (Id c : u.history.comment_interaction_ids) {
      if (!comments.contains(c)) flag("user.history_comment", rec, "unknown comment " + id(c));
    }
  }

  for (std::size_t i = 0; i < d.impressions.size(); ++i) {
    const ImpressionRecord& imp = d.impressions[i];
    const std::string rec = "impression #" + std::to_string(i) + " (user " + id(imp.user_id) + ", video " +
                            id(imp.video_id) + ")";
    if (!users.contains(imp.user_id)) flag("impression.known_user", rec, "unknown user");
    if (!videos.contains(imp.video_id)) flag("impression.known_video", rec, "unknown video");
    if (!(imp.staytime_s >= 0.0)) flag("impression.staytime_nonnegative", rec, "staytime_s < 0");
    if (!(imp.watchtime_s >= 0.0)) flag("impression.watchtime_nonnegative", rec, "watchtime_s < 0");
    if (!imp.opened && imp.staytime_s != 0.0) {
      flag("impression.staytime_requires_open", rec, "staytime_s > 0 on an unopened impression");
    }
    if (!imp.opened && !imp.interacted_comment_ids.empty()) {
      flag("impression.interactions_require_open", rec, "interactions on an unopened impression");
    }
    for (Id c : imp.interacted_comment_ids) {
      const auto it = comments.find(c);
      if (it == comments.end()) {
        flag("impression.known_comment", rec, "unknown comment " + id(c));
      } else if (it->second->video_id != imp.video_id) {
        flag("impression.comment_of_video", rec,
             "comment " + id(c) + " belongs to video " + id(it->second->video_id));
      }
    }
  }

  for (std::size_t i = 0; i < d.comment_interactions.size(); ++i) {
    const CommentInteraction& ev = d.comment_interactions[i];
    const std::string rec = "interaction #" + std::to_string(i);
    if (!users.contains(ev.user_id)) flag("interaction.known_user", rec, "unknown user " + id(ev.user_id));
    const auto it = comments.find(ev.comment_id);
    if (it == comments.end()) {
      flag("interaction.known_comment", rec, "unknown comment " + id(ev.comment_id));
    } else if (it->second->video_id != ev.video_id) {
      flag("interaction.comment_of_video", rec, "comment " + id(ev.comment_id) + " is not on video " + id(ev.video_id));
    }
    if (ev.kind != "like" && ev.kind != "reply") flag("interaction.kind", rec, "kind '" + ev.kind + "'");
  }
  return report;
}

// --- on-disk schema --------------------------------------------------------------

const std::vector<std::string>& user_columns() {
  static const std::vector<std::string> cols = {"user_id", "activity_level", "history_video_ids",
                                                "history_comment_interaction_ids"};
  return cols;
}
const std::vector<std::string>& video_columns() {
  static const std::vector<std::string> cols = {"video_id", "duration_s", "caption_tokens", "comment_ids"};
  return cols;
}
const std::vector<std::string>& comment_columns() {
  static const std::vector<std::string> cols = {"comment_id", "video_id", "like_count", "reply_count",
                                                "content_tokens"};
  return cols;
}
const std::vector<std::string>& impression_columns() {
  static const std::vector<std::string> cols = {"user_id",     "video_id",    "timestamp",
                                                "opened",      "staytime_s",  "watchtime_s",
                                                "interacted_comment_ids"};
  return cols;
}
const std::vector<std::string>& interaction_columns() {
  static const std::vector<std::string> cols = {"user_id", "video_id", "comment_id", "timestamp", "kind"};
  return cols;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

void save_dataset(const Dataset& d, const std::string& dir) {
  namespace fs = std::filesystem;
  using detail::format_double;
  using detail::format_ids;
  using detail::format_int;
  fs::create_directories(dir);
  const fs::path root(dir);
  {
    auto out = open_out(root / kUsersFile);
    detail::write_csv_row(out, user_columns());
    for (const UserRecord& u : d.users) {
      const std::vector<std::string> row = {format_int(u.user_id), format_int(u.activity_level),
                                            format_ids(u.history.video_ids),
                                            format_ids(u.history.comment_interaction_ids)};
      detail::write_csv_row(out, row);
    }
  }
  {
    auto out = open_out(root / kVideosFile);
    detail::write_csv_row(out, video_columns());
    for (const VideoRecord& v : d.videos) {
      const std::vector<std::string> row = {format_int(v.video_id), format_double(v.duration_s), v.caption_tokens,
                                            format_ids(v.comment_ids)};
      detail::write_csv_row(out, row);
    }
  }
  {
    auto out = open_out(root / kCommentsFile);
    detail::write_csv_row(out, comment_columns());
    for (const CommentRecord& c : d.comments) {
      const std::vector<std::string> row = {format_int(c.comment_id), format_int(c.video_id),
                                            format_int(c.like_count), format_int(c.reply_count), c.content_tokens};
      detail::write_csv_row(out, row);
    }
  }
  {
    auto out = open_out(root / kImpressionsFile);
    detail::write_csv_row(out, impression_columns());
    for (const ImpressionRecord& i : d.impressions) {
      const std::vector<std::string> row = {format_int(i.user_id),       format_int(i.video_id),
                                            format_int(i.timestamp),     i.opened ? "1" : "0",
                                            format_double(i.staytime_s), format_double(i.watchtime_s),
                                            format_ids(i.interacted_comment_ids)};
      detail::write_csv_row(out, row);
    }
  }
  {
    auto out = open_out(root / kInteractionsFile);
    detail::write_csv_row(out, interaction_columns());
    for (const CommentInteraction& e : d.comment_interactions) {
      const std::vector<std::string> row = {format_int(e.user_id), format_int(e.video_id), format_int(e.comment_id),
                                            format_int(e.timestamp), e.kind};
      detail::write_csv_row(out, row);
    }
  }

  nlohmann::ordered_json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["row_counts"] = {{"users", d.users.size()},
                            {"videos", d.videos.size()},
                            {"comments", d.comments.size()},
                            {"impressions", d.impressions.size()},
                            {"comment_interactions", d.comment_interactions.size()}};
  nlohmann::ordered_json hashes;
  for (const char* name : {kUsersFile, kVideosFile, kCommentsFile, kImpressionsFile, kInteractionsFile}) {
    hashes[name] = file_hash((root / name).string());
  }
  manifest["content_hashes"] = hashes;
  auto out = open_out(root / "manifest.json");
  out << manifest.dump(2) << '\n';
}

std::string file_hash(const std::string& path) {
  const std::vector<char> bytes = detail::read_file_bytes(path);
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace staytime
