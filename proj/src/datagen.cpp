#include "staytime/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "csv.hpp"
#include "staytime/error.hpp"

namespace staytime::datagen {

double staytime_response(double avg_top5_likes, double n_interactions, double watchtime_s, double duration_s,
                         double affinity, const ResponseParams& p) {
  const double likes = std::min(std::max(avg_top5_likes, 0.0), p.like_knee);
  const double like_factor = std::exp(-p.like_decay * std::log1p(likes) / std::log1p(p.like_knee));
  const double interactions = std::min(std::max(n_interactions, 0.0), p.interaction_knee);
  const double interaction_factor = 1.0 + p.interaction_gain * std::log1p(interactions);
  const double completed = watchtime_s >= std::min(duration_s, p.completion_threshold_s) ? 1.0 : 0.0;
  const double watch_factor = 1.0 + p.watch_slope * watchtime_s / p.watch_ref_s + p.completion_jump * completed;
  const double affinity_factor = 1.0 + p.affinity_gain * std::clamp(affinity, -1.0, 1.0);
  return p.base_staytime_s * like_factor * interaction_factor * watch_factor * affinity_factor;
}

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("generator config: " + what); };
  if (n_users <= 0) fail("n_users must be positive");
  if (n_videos <= 0) fail("n_videos must be positive");
  if (n_impressions <= 0) fail("n_impressions must be positive");
  if (comments_per_video_min < 0 || comments_per_video_max < comments_per_video_min) {
    fail("comments_per_video range is empty");
  }
  if (!(like_exponent > 1.0)) fail("like_exponent must be > 1");
  if (!(open_rate > 0.0 && open_rate < 1.0)) fail("open_rate must be in (0, 1)");
  if (!(noise_sigma > 0.0)) fail("noise_sigma must be > 0");
  if (latent_dim <= 0) fail("latent_dim must be positive");
  if (!(embedding_noise >= 0.0)) fail("embedding_noise must be >= 0");
  if (embedding_extra_dims < 0) fail("embedding_extra_dims must be >= 0");
  const ResponseParams& r = response;
  if (!(r.base_staytime_s > 0.0)) fail("response.base_staytime_s must be > 0");
  if (!(r.like_knee > 0.0) || !(r.interaction_knee > 0.0)) fail("response knees must be > 0");
  if (!(r.like_decay >= 0.0) || !(r.interaction_gain >= 0.0) || !(r.watch_slope >= 0.0) ||
      !(r.completion_jump >= 0.0)) {
    fail("response shape parameters must be >= 0");
  }
  if (!(r.watch_ref_s > 0.0) || !(r.completion_threshold_s > 0.0)) fail("response time scales must be > 0");
  if (!(r.affinity_gain >= 0.0 && r.affinity_gain <= 0.5)) fail("response.affinity_gain must be in [0, 0.5]");
}

double avg_top5_likes(const VideoRecord& video, const CommentIndex& index) {
  const auto ids = index.comments_of(video.video_id);
  const std::size_t n = std::min<std::size_t>(5, ids.size());
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += static_cast<double>(index.find(ids[i])->like_count);
  return total / static_cast<double>(n);
}

namespace {

using Rng = std::mt19937_64;

// Independent stream per generation stage.
Rng stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return Rng(seq);
}

std::vector<double> unit_vector(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = n(rng);
      norm += x * x;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<double> normalized(std::vector<double> v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::string token_text(char prefix, std::size_t count, std::size_t vocab, Rng& rng) {
  std::uniform_int_distribution<std::size_t> word(0, vocab - 1);
  std::string s;
  for (std::size_t i = 0; i < count; ++i) {
    if (i) s.push_back(' ');
    s.push_back(prefix);
    s += std::to_string(word(rng));
  }
  return s;
}

constexpr Id kVideoIdBase = 100000;
constexpr Id kCommentIdBase = 1000000;
constexpr std::int64_t kEpochStart = 1700000000;
constexpr std::int64_t kWindowSeconds = 30LL * 24 * 3600;

}  // namespace

SyntheticData generate_synthetic(const GeneratorConfig& config) {
  config.validate();
  const auto dim = static_cast<std::size_t>(config.latent_dim);
  SyntheticData out;
  Dataset& d = out.dataset;
  LatentState& latent = out.latent;

  // Videos, their topics and their comments.
  {
    Rng rng = stream(config.seed, 1);
    std::lognormal_distribution<double> duration(std::log(45.0), 0.8);
    std::normal_distribution<double> like_scale(2.0, 1.0);
    std::uniform_int_distribution<std::int64_t> n_comments(config.comments_per_video_min,
                                                           config.comments_per_video_max);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> caption_len(3, 8);
    Id next_comment = kCommentIdBase;
    for (std::int64_t v = 0; v < config.n_videos; ++v) {
      VideoRecord video;
      video.video_id = kVideoIdBase + v;
      video.duration_s = std::round(std::clamp(duration(rng), 5.0, 600.0) * 10.0) / 10.0;
      video.caption_tokens = token_text('w', caption_len(rng), 500, rng);
      const auto topic = unit_vector(dim, rng);
      latent.video_topics[video.video_id] = topic;
      const double scale = std::exp(like_scale(rng));
      const std::int64_t count = n_comments(rng);
      std::vector<CommentRecord> comments;
      for (std::int64_t c = 0; c < count; ++c) {
        CommentRecord comment;
        comment.comment_id = next_comment++;
        comment.video_id = video.video_id;
        std::vector<double> ct(dim);
        for (std::size_t i = 0; i < dim; ++i) ct[i] = topic[i] + 0.8 * gauss(rng);
        latent.comment_topics[comment.comment_id] = normalized(std::move(ct));
        const double quality = std::exp(0.5 * gauss(rng));
        latent.comment_quality[comment.comment_id] = quality;
        // Pareto(x_m = 1, alpha) tail scaled by the video's popularity and the comment's quality.
        const double pareto = std::pow(1.0 - unif(rng), -1.0 / (config.like_exponent - 1.0));
        comment.like_count = static_cast<std::int64_t>(std::floor(scale * quality * pareto));
        comment.reply_count = static_cast<std::int64_t>(
            std::floor(0.05 * static_cast<double>(comment.like_count) * unif(rng) + 2.0 * unif(rng)));
        comment.content_tokens = token_text('t', caption_len(rng), 2000, rng);
        comments.push_back(std::move(comment));
      }
      std::sort(comments.begin(), comments.end(), more_popular);
      for (const auto& c : comments) video.comment_ids.push_back(c.comment_id);
      std::sort(comments.begin(), comments.end(),
                [](const CommentRecord& a, const CommentRecord& b) { return a.comment_id < b.comment_id; });
      d.comments.insert(d.comments.end(), comments.begin(), comments.end());
      d.videos.push_back(std::move(video));
    }
  }
  const CommentIndex index = build_comment_index(d.comments, d.videos);

  // Users: activity, topic and a pre-window history.
  {
    Rng rng = stream(config.seed, 2);
    std::discrete_distribution<int> activity({0.15, 0.25, 0.3, 0.2, 0.1});
    std::uniform_int_distribution<std::size_t> any_video(0, d.videos.size() - 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::int64_t u = 0; u < config.n_users; ++u) {
      UserRecord user;
      user.user_id = u + 1;
      user.activity_level = activity(rng);
      latent.user_topics[user.user_id] = unit_vector(dim, rng);
      std::poisson_distribution<int> history_len(2.0 + 3.0 * user.activity_level);
      const int n_hist = history_len(rng);
      for (int h = 0; h < n_hist; ++h) {
        const VideoRecord& v = d.videos[any_video(rng)];
        user.history.video_ids.push_back(v.video_id);
        if (!v.comment_ids.empty() && unif(rng) < 0.1 + 0.08 * user.activity_level) {
          user.history.comment_interaction_ids.push_back(v.comment_ids.front());
        }
      }
      d.users.push_back(std::move(user));
    }
  }

  // Impressions.
  {
    Rng rng = stream(config.seed, 3);
    std::vector<double> user_weights;
    for (const UserRecord& u : d.users) user_weights.push_back(1.0 + u.activity_level);
    std::discrete_distribution<std::size_t> pick_user(user_weights.begin(), user_weights.end());
    std::vector<std::size_t> video_rank(d.videos.size());
    std::iota(video_rank.begin(), video_rank.end(), 0);
    std::shuffle(video_rank.begin(), video_rank.end(), rng);
    std::vector<double> video_weights(d.videos.size());
    for (std::size_t i = 0; i < d.videos.size(); ++i) {
      video_weights[i] = 1.0 / std::pow(static_cast<double>(video_rank[i]) + 10.0, 0.9);
    }
    std::discrete_distribution<std::size_t> pick_video(video_weights.begin(), video_weights.end());
    std::uniform_int_distribution<std::int64_t> when(0, kWindowSeconds - 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::bernoulli_distribution opened(config.open_rate);

    std::vector<double> avg_likes(d.videos.size());
    for (std::size_t i = 0; i < d.videos.size(); ++i) avg_likes[i] = avg_top5_likes(d.videos[i], index);

    std::vector<std::int64_t> times(static_cast<std::size_t>(config.n_impressions));
    for (auto& t : times) t = kEpochStart + when(rng);
    std::sort(times.begin(), times.end());

    for (std::int64_t n = 0; n < config.n_impressions; ++n) {
      const UserRecord& user = d.users[pick_user(rng)];
      const std::size_t vi = pick_video(rng);
      const VideoRecord& video = d.videos[vi];
      const auto& ut = latent.user_topics.at(user.user_id);
      const double video_affinity = dot(ut, latent.video_topics.at(video.video_id));

      ImpressionRecord imp;
      imp.user_id = user.user_id;
      imp.video_id = video.video_id;
      imp.timestamp = times[static_cast<std::size_t>(n)];
      const double p_complete = 0.15 + 0.2 * (video_affinity + 1.0) / 2.0;
      const double fraction = unif(rng) < p_complete ? 1.0 : 0.05 + 0.95 * unif(rng);
      imp.watchtime_s = std::round(fraction * video.duration_s * 10.0) / 10.0;
      imp.opened = opened(rng);
      if (imp.opened) {
        // Browse the comments; interaction probability rises with user-comment affinity.
        double comment_affinity = 0.0;
        std::size_t top = 0;
        std::vector<Id> interacted;
        for (std::size_t r = 0; r < video.comment_ids.size(); ++r) {
          const Id cid = video.comment_ids[r];
          const double a = dot(ut, latent.comment_topics.at(cid));
          if (r < 5) {
            comment_affinity += a;
            ++top;
          }
          const double logit = -0.6 + 2.5 * a + 0.5 * std::log(latent.comment_quality.at(cid)) +
                               0.3 * (user.activity_level - 2) - 0.08 * static_cast<double>(r);
          if (unif(rng) < 1.0 / (1.0 + std::exp(-logit))) interacted.push_back(cid);
        }
        if (top) comment_affinity /= static_cast<double>(top);
        // Interactions happen in random order during the stay.
        std::shuffle(interacted.begin(), interacted.end(), rng);
        const double affinity = 0.5 * video_affinity + 0.5 * comment_affinity;
        const double mean = staytime_response(avg_likes[vi], static_cast<double>(interacted.size()), imp.watchtime_s,
                                              video.duration_s, affinity, config.response);
        const double noise = std::exp(config.noise_sigma * gauss(rng) - 0.5 * config.noise_sigma * config.noise_sigma);
        imp.staytime_s = std::round(mean * noise * 1000.0) / 1000.0;
        if (imp.staytime_s <= 0.0) imp.staytime_s = 0.001;
        std::int64_t offset = 1;
        for (Id cid : interacted) {
          CommentInteraction ev;
          ev.user_id = imp.user_id;
          ev.video_id = imp.video_id;
          ev.comment_id = cid;
          ev.timestamp = imp.timestamp + offset++;
          ev.kind = unif(rng) < 0.75 ? "like" : "reply";
          d.comment_interactions.push_back(std::move(ev));
        }
        imp.interacted_comment_ids = std::move(interacted);
      }
      d.impressions.push_back(std::move(imp));
    }
  }

  // Mock embeddings: topic vector, quality scalar, noise dims, all perturbed.
  {
    Rng rng = stream(config.seed, 4);
    std::normal_distribution<double> noise(0.0, config.embedding_noise);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto extra = static_cast<std::size_t>(config.embedding_extra_dims);
    const auto emb_dim = static_cast<std::uint32_t>(dim + 1 + extra);
    out.video_embeddings = EmbeddingTable(emb_dim);
    out.comment_embeddings = EmbeddingTable(emb_dim);
    auto build = [&](const std::vector<double>& topic, double quality) {
      std::vector<double> v;
      v.reserve(emb_dim);
      for (double x : topic) v.push_back(to_storage_precision(x + noise(rng)));
      v.push_back(to_storage_precision(quality + noise(rng)));
      for (std::size_t i = 0; i < extra; ++i) v.push_back(to_storage_precision(0.5 * gauss(rng)));
      return v;
    };
    for (const VideoRecord& v : d.videos) {
      double mean_quality = 0.0;
      for (Id c : v.comment_ids) mean_quality += latent.comment_quality.at(c);
      if (!v.comment_ids.empty()) mean_quality /= static_cast<double>(v.comment_ids.size());
      out.video_embeddings.insert(v.video_id, build(latent.video_topics.at(v.video_id), std::log(mean_quality + 1e-9)));
    }
    for (const CommentRecord& c : d.comments) {
      out.comment_embeddings.insert(c.comment_id,
                                    build(latent.comment_topics.at(c.comment_id), std::log(latent.comment_quality.at(c.comment_id))));
    }
  }
  return out;
}

void save_synthetic(const SyntheticData& data, const std::string& dir) {
  save_dataset(data.dataset, dir);
  const std::filesystem::path root(dir);
  write_embedding_table(data.video_embeddings, (root / kVideoEmbeddingFile).string());
  write_embedding_table(data.comment_embeddings, (root / kCommentEmbeddingFile).string());
}

// --- external loading ----------------------------------------------------------

ExternalPaths ExternalPaths::in_directory(const std::string& dir) {
  const std::filesystem::path root(dir);
  return {(root / kUsersFile).string(), (root / kVideosFile).string(), (root / kCommentsFile).string(),
          (root / kImpressionsFile).string(), (root / kInteractionsFile).string()};
}

ColumnMap parse_column_map(const std::string& json_text) {
  ColumnMap map;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("column map is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("column map must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw ConfigError("column map entry '" + k + "' must be a string");
    map[k] = v.get<std::string>();
  }
  return map;
}

std::size_t LoadResult::total_rejected() const {
  std::size_t n = 0;
  for (const auto& [file, count] : rejected) n += count;
  return n;
}

namespace {

// One source file viewed through the column map.
class MappedTable {
 public:
  MappedTable(const std::string& path, const std::vector<std::string>& canonical, const ColumnMap& map)
      : path_(path), table_(detail::read_csv(path)) {
    for (const std::string& name : canonical) {
      const auto it = map.find(name);
      const std::string& external = it == map.end() ? name : it->second;
      const auto pos = std::find(table_.header.begin(), table_.header.end(), external);
      if (pos == table_.header.end()) {
        throw IoError(path + ": missing column '" + external + "' (canonical '" + name + "')");
      }
      columns_.push_back(static_cast<std::size_t>(pos - table_.header.begin()));
    }
  }

  std::size_t size() const { return table_.rows.size(); }
  const detail::CsvRow& raw(std::size_t r) const { return table_.rows[r]; }
  const detail::CsvRow& header() const { return table_.header; }

  // Field `col` (canonical position) of row r; throws invalid_argument on short rows.
  const std::string& field(std::size_t r, std::size_t col) const {
    const auto& row = table_.rows[r];
    if (row.size() != table_.header.size()) {
      throw std::invalid_argument("row has " + std::to_string(row.size()) + " fields, header has " +
                                  std::to_string(table_.header.size()));
    }
    return row[columns_[col]];
  }

 private:
  std::string path_;
  detail::CsvTable table_;
  std::vector<std::size_t> columns_;
};

class RejectSink {
 public:
  RejectSink(const std::string& dir, const std::string& file, const detail::CsvRow& header) {
    std::filesystem::create_directories(dir);
    const auto path = std::filesystem::path(dir) / (file + ".rejects.csv");
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open reject file '" + path.string() + "'");
    detail::CsvRow h = header;
    h.push_back("reason");
    detail::write_csv_row(out_, h);
  }

  void reject(const detail::CsvRow& row, const std::string& reason) {
    detail::CsvRow r = row;
    r.push_back(reason);
    detail::write_csv_row(out_, r);
    ++count_;
  }

  std::size_t count() const { return count_; }

 private:
  std::ofstream out_;
  std::size_t count_ = 0;
};

}  // namespace

LoadResult load_external(const ExternalPaths& paths, const ColumnMap& column_map, const std::string& reject_dir) {
  using namespace detail;
  MappedTable videos_in(paths.videos, video_columns(), column_map);
  MappedTable comments_in(paths.comments, comment_columns(), column_map);
  MappedTable users_in(paths.users, user_columns(), column_map);
  MappedTable impressions_in(paths.impressions, impression_columns(), column_map);
  MappedTable interactions_in(paths.comment_interactions, interaction_columns(), column_map);

  LoadResult result;
  Dataset& d = result.dataset;

  std::unordered_set<Id> video_ids;
  {
    RejectSink sink(reject_dir, kVideosFile, videos_in.header());
    for (std::size_t r = 0; r < videos_in.size(); ++r) {
      try {
        VideoRecord v;
        v.video_id = parse_int(videos_in.field(r, 0));
        v.duration_s = parse_double(videos_in.field(r, 1));
        v.caption_tokens = videos_in.field(r, 2);
        v.comment_ids = parse_ids(videos_in.field(r, 3));
        if (!(v.duration_s > 0.0)) throw std::invalid_argument("duration_s must be > 0");
        if (video_ids.contains(v.video_id)) throw std::invalid_argument("duplicate video_id");
        video_ids.insert(v.video_id);
        d.videos.push_back(std::move(v));
      } catch (const std::invalid_argument& e) {
        sink.reject(videos_in.raw(r), e.what());
      }
    }
    result.rejected[kVideosFile] = sink.count();
  }

  std::unordered_map<Id, Id> comment_video;
  {
    RejectSink sink(reject_dir, kCommentsFile, comments_in.header());
    for (std::size_t r = 0; r < comments_in.size(); ++r) {
      try {
        CommentRecord c;
        c.comment_id = parse_int(comments_in.field(r, 0));
        c.video_id = parse_int(comments_in.field(r, 1));
        c.like_count = parse_int(comments_in.field(r, 2));
        c.reply_count = parse_int(comments_in.field(r, 3));
        c.content_tokens = comments_in.field(r, 4);
        if (c.like_count < 0 || c.reply_count < 0) throw std::invalid_argument("negative like/reply count");
        if (!video_ids.contains(c.video_id)) throw std::invalid_argument("unknown video " + std::to_string(c.video_id));
        if (comment_video.contains(c.comment_id)) throw std::invalid_argument("duplicate comment_id");
        comment_video[c.comment_id] = c.video_id;
        d.comments.push_back(std::move(c));
      } catch (const std::invalid_argument& e) {
        sink.reject(comments_in.raw(r), e.what());
      }
    }
    result.rejected[kCommentsFile] = sink.count();
  }
  {
    const CommentIndex index = build_comment_index(d.comments);
    for (VideoRecord& v : d.videos) {
      const auto ids = index.comments_of(v.video_id);
      v.comment_ids.assign(ids.begin(), ids.end());
    }
  }

  std::unordered_set<Id> user_ids;
  {
    RejectSink sink(reject_dir, kUsersFile, users_in.header());
    for (std::size_t r = 0; r < users_in.size(); ++r) {
      try {
        UserRecord u;
        u.user_id = parse_int(users_in.field(r, 0));
        const std::int64_t level = parse_int(users_in.field(r, 1));
        if (level < 0 || level > kMaxActivityLevel) throw std::invalid_argument("activity_level outside [0,4]");
        u.activity_level = static_cast<int>(level);
        u.history.video_ids = parse_ids(users_in.field(r, 2));
        u.history.comment_interaction_ids = parse_ids(users_in.field(r, 3));
        for (Id v : u.history.video_ids) {
          if (!video_ids.contains(v)) throw std::invalid_argument("history references unknown video " + std::to_string(v));
        }
        for (Id c : u.history.comment_interaction_ids) {
          if (!comment_video.contains(c)) {
            throw std::invalid_argument("history references unknown comment " + std::to_string(c));
          }
        }
        if (user_ids.contains(u.user_id)) throw std::invalid_argument("duplicate user_id");
        user_ids.insert(u.user_id);
        d.users.push_back(std::move(u));
      } catch (const std::invalid_argument& e) {
        sink.reject(users_in.raw(r), e.what());
      }
    }
    result.rejected[kUsersFile] = sink.count();
  }

  {
    RejectSink sink(reject_dir, kImpressionsFile, impressions_in.header());
    for (std::size_t r = 0; r < impressions_in.size(); ++r) {
      try {
        ImpressionRecord imp;
        imp.user_id = parse_int(impressions_in.field(r, 0));
        imp.video_id = parse_int(impressions_in.field(r, 1));
        imp.timestamp = parse_int(impressions_in.field(r, 2));
        imp.opened = parse_bool(impressions_in.field(r, 3));
        imp.staytime_s = parse_double(impressions_in.field(r, 4));
        imp.watchtime_s = parse_double(impressions_in.field(r, 5));
        imp.interacted_comment_ids = parse_ids(impressions_in.field(r, 6));
        if (!user_ids.contains(imp.user_id)) throw std::invalid_argument("unknown user " + std::to_string(imp.user_id));
        if (!video_ids.contains(imp.video_id)) throw std::invalid_argument("unknown video " + std::to_string(imp.video_id));
        if (imp.staytime_s < 0.0 || imp.watchtime_s < 0.0) throw std::invalid_argument("negative staytime/watchtime");
        if (!imp.opened && imp.staytime_s != 0.0) throw std::invalid_argument("staytime_s > 0 on an unopened impression");
        if (!imp.opened && !imp.interacted_comment_ids.empty()) {
          throw std::invalid_argument("interactions on an unopened impression");
        }
        for (Id c : imp.interacted_comment_ids) {
          const auto it = comment_video.find(c);
          if (it == comment_video.end()) throw std::invalid_argument("unknown comment " + std::to_string(c));
          if (it->second != imp.video_id) {
            throw std::invalid_argument("comment " + std::to_string(c) + " belongs to another video");
          }
        }
        d.impressions.push_back(std::move(imp));
      } catch (const std::invalid_argument& e) {
        sink.reject(impressions_in.raw(r), e.what());
      }
    }
    result.rejected[kImpressionsFile] = sink.count();
  }

  {
    RejectSink sink(reject_dir, kInteractionsFile, interactions_in.header());
    for (std::size_t r = 0; r < interactions_in.size(); ++r) {
      try {
        CommentInteraction ev;
        ev.user_id = parse_int(interactions_in.field(r, 0));
        ev.video_id = parse_int(interactions_in.field(r, 1));
        ev.comment_id = parse_int(interactions_in.field(r, 2));
        ev.timestamp = parse_int(interactions_in.field(r, 3));
        ev.kind = interactions_in.field(r, 4);
        if (ev.kind != "like" && ev.kind != "reply") throw std::invalid_argument("kind must be like or reply");
        if (!user_ids.contains(ev.user_id)) throw std::invalid_argument("unknown user " + std::to_string(ev.user_id));
        const auto it = comment_video.find(ev.comment_id);
        if (it == comment_video.end() || it->second != ev.video_id) {
          throw std::invalid_argument("comment " + std::to_string(ev.comment_id) + " is not on video " +
                                      std::to_string(ev.video_id));
        }
        d.comment_interactions.push_back(std::move(ev));
      } catch (const std::invalid_argument& e) {
        sink.reject(interactions_in.raw(r), e.what());
      }
    }
    result.rejected[kInteractionsFile] = sink.count();
  }
  return result;
}

Dataset load_dataset(const std::string& dir) {
  const auto rejects = (std::filesystem::path(dir) / "rejects").string();
  LoadResult r = load_external(ExternalPaths::in_directory(dir), {}, rejects);
  if (r.total_rejected() != 0) {
    throw ValidationError("dataset in '" + dir + "' has " + std::to_string(r.total_rejected()) +
                          " invalid rows; see " + rejects);
  }
  return std::move(r.dataset);
}

// --- splitting -------------------------------------------------------------

Splits time_split(const std::vector<ImpressionRecord>& impressions) {
  if (impressions.empty()) throw ValidationError("time_split: empty dataset");
  std::vector<std::size_t> order(impressions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = impressions[a];
    const auto& y = impressions[b];
    if (x.timestamp != y.timestamp) return x.timestamp < y.timestamp;
    if (x.user_id != y.user_id) return x.user_id < y.user_id;
    return x.video_id < y.video_id;
  });
  const std::size_t n = impressions.size();
  const std::size_t cut1 = n * 4 / 6;
  const std::size_t cut2 = n * 5 / 6;
  Splits s;
  for (std::size_t i = 0; i < n; ++i) {
    const ImpressionRecord& imp = impressions[order[i]];
    if (i < cut1) {
      s.train.push_back(imp);
    } else if (i < cut2) {
      s.validation.push_back(imp);
    } else {
      s.test.push_back(imp);
    }
  }
  return s;
}

}  // namespace staytime::datagen
