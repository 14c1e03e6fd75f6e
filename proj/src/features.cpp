#include "staytime/features.hpp"

#include <algorithm>
#include <cmath>

#include "staytime/datagen.hpp"
#include "staytime/error.hpp"

namespace staytime::features {

MissingEmbeddingPolicy parse_missing_policy(const std::string& name) {
  if (name == "zero") return MissingEmbeddingPolicy::ZeroFallback;
  if (name == "strict") return MissingEmbeddingPolicy::Strict;
  throw ConfigError("unknown missing-embedding policy '" + name + "' (expected zero|strict)");
}

std::string to_string(MissingEmbeddingPolicy policy) {
  return policy == MissingEmbeddingPolicy::Strict ? "strict" : "zero";
}

Vocab::Vocab(std::vector<Id> ids) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], i + 1);
}

std::size_t Vocab::row_of(Id id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? 0 : it->second;
}

Standardizer Standardizer::fit(std::span<const double> rows, std::size_t cols, std::span<const std::uint8_t> keep) {
  Standardizer s;
  s.mean.assign(cols, 0.0);
  s.scale.assign(cols, 1.0);
  const std::size_t n = cols == 0 ? 0 : rows.size() / cols;
  std::vector<double> sum(cols, 0.0), sq(cols, 0.0);
  double count = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (!keep.empty() && !keep[r]) continue;
    count += 1.0;
    for (std::size_t c = 0; c < cols; ++c) sum[c] += rows[r * cols + c];
  }
  if (count == 0.0) return s;
  for (std::size_t c = 0; c < cols; ++c) s.mean[c] = sum[c] / count;
  for (std::size_t r = 0; r < n; ++r) {
    if (!keep.empty() && !keep[r]) continue;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = rows[r * cols + c] - s.mean[c];
      sq[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < cols; ++c) {
    const double sd = std::sqrt(sq[c] / count);
    s.scale[c] = sd > 1e-9 ? sd : 1.0;
  }
  return s;
}

void Standardizer::apply(std::span<double> rows) const {
  const std::size_t cols = mean.size();
  if (cols == 0) return;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t c = i % cols;
    rows[i] = (rows[i] - mean[c]) / scale[c];
  }
}

namespace {

nn::Tensor row_of_ids(const std::vector<Id>& ids) {
  nn::Tensor t(1, ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) t[i] = static_cast<double>(ids[i]);
  return t;
}

std::vector<Id> ids_of_row(const nn::Tensor& t) {
  std::vector<Id> ids;
  ids.reserve(t.size());
  for (double v : t.values()) ids.push_back(static_cast<Id>(v));
  return ids;
}

void append_standardizer(const std::string& prefix, const Standardizer& s, std::vector<nn::Section>& out) {
  out.push_back({prefix + ".mean", nn::Tensor(1, s.mean.size(), s.mean)});
  out.push_back({prefix + ".scale", nn::Tensor(1, s.scale.size(), s.scale)});
}

const nn::Section& require_section(const std::vector<nn::Section>& sections, const std::string& name) {
  const nn::Section* s = nn::find_section(sections, name);
  if (s == nullptr) throw ValidationError("checkpoint lacks section '" + name + "'");
  return *s;
}

Standardizer read_standardizer(const std::string& prefix, const std::vector<nn::Section>& sections) {
  Standardizer s;
  const auto& mean = require_section(sections, prefix + ".mean").data.values();
  const auto& scale = require_section(sections, prefix + ".scale").data.values();
  s.mean.assign(mean.begin(), mean.end());
  s.scale.assign(scale.begin(), scale.end());
  return s;
}

struct Lookups {
  std::unordered_map<Id, const UserRecord*> users;
  std::unordered_map<Id, const VideoRecord*> videos;
  std::unordered_map<Id, double> avg_top5;
};

Lookups make_lookups(const Dataset& dataset, const CommentIndex& index) {
  Lookups l;
  for (const auto& u : dataset.users) l.users.emplace(u.user_id, &u);
  for (const auto& v : dataset.videos) {
    l.videos.emplace(v.video_id, &v);
    l.avg_top5.emplace(v.video_id, datagen::avg_top5_likes(v, index));
  }
  return l;
}

// Unstandardised dense features of one impression.
void raw_user_dense(const UserRecord& u, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  out[static_cast<std::size_t>(std::clamp(u.activity_level, 0, kMaxActivityLevel))] = 1.0;
  out[kActivityLevels] = std::log1p(static_cast<double>(u.history.video_ids.size()));
  out[kActivityLevels + 1] = std::log1p(static_cast<double>(u.history.comment_interaction_ids.size()));
}

void raw_video_dense(const ImpressionRecord& imp, const VideoRecord& v, double avg_top5, std::span<double> out) {
  out[0] = std::log1p(v.duration_s);
  out[1] = std::log1p(imp.watchtime_s);
  out[2] = std::min(imp.watchtime_s / v.duration_s, 5.0);
  out[3] = std::log1p(avg_top5);
  out[4] = std::log1p(static_cast<double>(v.comment_ids.size()));
}

void raw_comment_dense(const SampledComments& s, std::size_t slot, const CommentIndex& index, std::span<double> out) {
  if (!s.mask[slot]) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  out[0] = std::log1p(static_cast<double>(s.like_counts[slot]));
  out[1] = std::log1p(static_cast<double>(s.reply_counts[slot]));
  out[2] = std::log1p(static_cast<double>(index.popularity_rank(s.comment_ids[slot])));
}

template <typename T>
const T& require(const std::unordered_map<Id, T>& map, Id id, const char* what, std::size_t row) {
  const auto it = map.find(id);
  if (it == map.end()) {
    throw ValidationError("impression " + std::to_string(row) + " references unknown " + what + " " +
                          std::to_string(id));
  }
  return it->second;
}

}  // namespace

void FeatureContext::append_sections(std::vector<nn::Section>& out) const {
  out.push_back({"vocab.users", row_of_ids(users.ids())});
  out.push_back({"vocab.videos", row_of_ids(videos.ids())});
  out.push_back({"vocab.k", nn::Tensor(1, 1, {static_cast<double>(k)})});
  append_standardizer("features.user", user_dense, out);
  append_standardizer("features.video", video_dense, out);
  append_standardizer("features.comment", comment_dense, out);
}

FeatureContext FeatureContext::from_sections(const std::vector<nn::Section>& sections) {
  FeatureContext c;
  c.users = Vocab(ids_of_row(require_section(sections, "vocab.users").data));
  c.videos = Vocab(ids_of_row(require_section(sections, "vocab.videos").data));
  c.k = static_cast<std::size_t>(require_section(sections, "vocab.k").data[0]);
  c.user_dense = read_standardizer("features.user", sections);
  c.video_dense = read_standardizer("features.video", sections);
  c.comment_dense = read_standardizer("features.comment", sections);
  return c;
}

FeatureContext fit_context(const Dataset& dataset, const CommentIndex& index,
                           const std::vector<ImpressionRecord>& train, std::size_t k) {
  if (train.empty()) throw ValidationError("cannot fit features on an empty training split");
  if (k == 0) throw ConfigError("comment slots k must be >= 1");
  const Lookups l = make_lookups(dataset, index);
  FeatureContext c;
  c.k = k;
  std::vector<Id> uids, vids;
  std::vector<double> u(train.size() * kUserDenseDim), v(train.size() * kVideoDenseDim),
      cm(train.size() * k * kCommentDenseDim);
  std::vector<std::uint8_t> slot_mask(train.size() * k);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto& imp = train[i];
    uids.push_back(imp.user_id);
    vids.push_back(imp.video_id);
    ++c.video_train_count[imp.video_id];
    const UserRecord& user = *require(l.users, imp.user_id, "user", i);
    const VideoRecord& video = *require(l.videos, imp.video_id, "video", i);
    raw_user_dense(user, {u.data() + i * kUserDenseDim, kUserDenseDim});
    raw_video_dense(imp, video, l.avg_top5.at(imp.video_id), {v.data() + i * kVideoDenseDim, kVideoDenseDim});
    const SampledComments s = sample_comments(imp, index, k);
    for (std::size_t j = 0; j < k; ++j) {
      slot_mask[i * k + j] = s.mask[j];
      raw_comment_dense(s, j, index, {cm.data() + (i * k + j) * kCommentDenseDim, kCommentDenseDim});
    }
  }
  c.users = Vocab(std::move(uids));
  c.videos = Vocab(std::move(vids));
  c.user_dense = Standardizer::fit(u, kUserDenseDim);
  c.video_dense = Standardizer::fit(v, kVideoDenseDim);
  c.comment_dense = Standardizer::fit(cm, kCommentDenseDim, slot_mask);
  return c;
}

ExampleSet build_examples(const Dataset& dataset, const CommentIndex& index,
                          const std::vector<ImpressionRecord>& impressions, const FeatureContext& context,
                          const EmbeddingSources& embeddings, MissingEmbeddingCounts* missing) {
  const Lookups l = make_lookups(dataset, index);
  const std::size_t n = impressions.size();
  const std::size_t k = context.k;
  const std::size_t ev_dim = embeddings.videos ? embeddings.videos->dim() : 0;
  const std::size_t ec_dim = embeddings.comments ? embeddings.comments->dim() : 0;
  const bool strict = embeddings.policy == MissingEmbeddingPolicy::Strict;

  ExampleSet e;
  e.k = k;
  e.user_dense = nn::Tensor(n, kUserDenseDim);
  e.video_dense = nn::Tensor(n, kVideoDenseDim);
  e.video_llm = nn::Tensor(n, ev_dim);
  e.comment_llm = nn::Tensor(n * k, ec_dim);
  e.comment_dense = nn::Tensor(n * k, kCommentDenseDim);
  e.comment_ids.assign(n * k, kNoComment);
  e.slot_mask.assign(n * k, 0);
  e.slot_labels.assign(n * k, 0);
  e.popularity_order.resize(n);
  e.targets.staytime_s.resize(n);
  e.targets.opened.resize(n);
  e.targets.duration_s.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& imp = impressions[i];
    const UserRecord& user = *require(l.users, imp.user_id, "user", i);
    const VideoRecord& video = *require(l.videos, imp.video_id, "video", i);
    e.user_ids.push_back(imp.user_id);
    e.video_ids.push_back(imp.video_id);
    e.user_rows.push_back(context.users.row_of(imp.user_id));
    e.video_rows.push_back(context.videos.row_of(imp.video_id));
    raw_user_dense(user, e.user_dense.row(i));
    raw_video_dense(imp, video, l.avg_top5.at(imp.video_id), e.video_dense.row(i));
    e.targets.staytime_s[i] = imp.staytime_s;
    e.targets.opened[i] = imp.opened ? 1 : 0;
    e.targets.duration_s[i] = video.duration_s;

    if (embeddings.videos) {
      if (const auto* vec = embeddings.videos->find(imp.video_id)) {
        std::copy(vec->begin(), vec->end(), e.video_llm.row(i).begin());
      } else if (strict) {
        throw ValidationError("video " + std::to_string(imp.video_id) + " has no entry in the video embedding table");
      } else if (missing) {
        ++missing->videos;
      }
    }

    const SampledComments s = sample_comments(imp, index, k);
    e.popularity_order[i] = s.popularity_order();
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t r = i * k + j;
      e.comment_ids[r] = s.comment_ids[j];
      e.slot_mask[r] = s.mask[j];
      e.slot_labels[r] = s.interaction_labels[j];
      raw_comment_dense(s, j, index, e.comment_dense.row(r));
      if (embeddings.comments && s.mask[j]) {
        if (const auto* vec = embeddings.comments->find(s.comment_ids[j])) {
          std::copy(vec->begin(), vec->end(), e.comment_llm.row(r).begin());
        } else if (strict) {
          throw ValidationError("comment " + std::to_string(s.comment_ids[j]) +
                                " has no entry in the comment embedding table");
        } else if (missing) {
          ++missing->comments;
        }
      }
    }
  }
  context.user_dense.apply(e.user_dense.values());
  context.video_dense.apply(e.video_dense.values());
  context.comment_dense.apply(e.comment_dense.values());
  // Padded slots stay exactly zero after standardisation.
  for (std::size_t r = 0; r < n * k; ++r) {
    if (!e.slot_mask[r]) std::fill(e.comment_dense.row(r).begin(), e.comment_dense.row(r).end(), 0.0);
  }
  return e;
}

ExampleSet ExampleSet::subset(std::span<const std::size_t> rows) const {
  ExampleSet s;
  s.k = k;
  const std::size_t n = rows.size();
  s.user_dense = nn::Tensor(n, user_dense.cols());
  s.video_dense = nn::Tensor(n, video_dense.cols());
  s.video_llm = nn::Tensor(n, video_llm.cols());
  s.comment_llm = nn::Tensor(n * k, comment_llm.cols());
  s.comment_dense = nn::Tensor(n * k, comment_dense.cols());
  auto copy_row = [](const nn::Tensor& from, std::size_t fr, nn::Tensor& to, std::size_t tr) {
    const auto src = from.row(fr);
    std::copy(src.begin(), src.end(), to.row(tr).begin());
  };
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = rows[i];
    s.user_ids.push_back(user_ids[r]);
    s.video_ids.push_back(video_ids[r]);
    s.user_rows.push_back(user_rows[r]);
    s.video_rows.push_back(video_rows[r]);
    copy_row(user_dense, r, s.user_dense, i);
    copy_row(video_dense, r, s.video_dense, i);
    copy_row(video_llm, r, s.video_llm, i);
    for (std::size_t j = 0; j < k; ++j) {
      copy_row(comment_llm, r * k + j, s.comment_llm, i * k + j);
      copy_row(comment_dense, r * k + j, s.comment_dense, i * k + j);
      s.comment_ids.push_back(comment_ids[r * k + j]);
      s.slot_mask.push_back(slot_mask[r * k + j]);
      s.slot_labels.push_back(slot_labels[r * k + j]);
    }
    s.popularity_order.push_back(popularity_order[r]);
    s.targets.staytime_s.push_back(targets.staytime_s[r]);
    s.targets.opened.push_back(targets.opened[r]);
    s.targets.duration_s.push_back(targets.duration_s[r]);
  }
  return s;
}

std::vector<std::size_t> ExampleSet::opened_rows() const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < size(); ++i) {
    if (targets.opened[i]) rows.push_back(i);
  }
  return rows;
}

}  // namespace staytime::features
