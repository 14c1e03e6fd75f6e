#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "staytime/nn/checkpoint.hpp"
#include "staytime/nn/layers.hpp"

namespace staytime::models {

enum class ModelKind { VR, WLR, NDT, PCR, D2Q };

std::string to_string(ModelKind kind);
/// Accepts "vr", "wlr", "ndt", "pcr", "d2q" (any case); throws ConfigError otherwise.
ModelKind parse_model_kind(const std::string& name);

/// True for every kind except NDT.
bool has_staytime_inverse(ModelKind kind);
/// VR, PCR and D2Q regress on opened impressions only; WLR and NDT also
/// consume unopened ones.
bool trains_on_unopened(ModelKind kind);

inline constexpr std::size_t kDefaultDurationBuckets = 30;

/// Equal-frequency duration buckets with the sorted training staytimes of
/// each bucket; maps staytime to a within-bucket quantile and back.
class DurationBuckets {
 public:
  DurationBuckets() = default;

  /// Throws ValidationError when the sample is empty, lengths differ, or a
  /// bucket ends up empty (too many buckets for the distinct durations).
  static DurationBuckets fit(std::span<const double> durations, std::span<const double> staytimes,
                             std::size_t n_buckets = kDefaultDurationBuckets);

  std::size_t size() const { return upper_edges_.size(); }
  /// Inclusive upper duration edge of every bucket; the last one is +inf.
  const std::vector<double>& upper_edges() const { return upper_edges_; }
  const std::vector<double>& bucket_staytimes(std::size_t b) const { return staytimes_.at(b); }

  /// Durations beyond the training range clamp into the end buckets.
  std::size_t bucket_of(double duration_s) const;
  /// Mid-rank empirical CDF: (#less + 0.5 * #equal) / n.
  double transform(std::size_t bucket, double staytime_s) const;
  /// Inverse of the mid-rank CDF, linear between order statistics;
  /// q = 0 gives the bucket minimum and q = 1 the maximum.
  double inverse(std::size_t bucket, double q) const;
  /// Largest gap between adjacent order statistics of a bucket.
  double max_adjacent_gap(std::size_t bucket) const;

  void append_sections(const std::string& prefix, std::vector<nn::Section>& out) const;
  static DurationBuckets from_sections(const std::string& prefix, const std::vector<nn::Section>& sections);

 private:
  std::vector<double> upper_edges_;
  std::vector<std::vector<double>> staytimes_;
};

/// NDT's normalised dwell time: clamp(log(1 + st) / log(1 + p99), 0, 1).
double ndt_target(double staytime_s, double p99_staytime_s);

/// Per-row supervision for a staytime head.
struct HeadTargets {
  std::vector<double> staytime_s;
  std::vector<std::uint8_t> opened;
  std::vector<double> duration_s;
};

/// Loss value and gradients with respect to the raw tower outputs.
struct HeadLoss {
  double loss = 0.0;
  std::vector<double> d_a;  ///< tower A (the only tower unless WLR)
  std::vector<double> d_b;  ///< tower B (WLR only)
};

struct HeadForward {
  nn::Mlp3Cache cache_a, cache_b;
  std::vector<double> a, b;
};

/// A base staytime predictor: label transform, loss, inverse transform,
/// over one (or, for WLR, two) 3-layer MLP towers reading a shared
/// representation.
class StaytimeHead {
 public:
  StaytimeHead() = default;
  StaytimeHead(ModelKind kind, std::size_t input_dim, std::size_t hidden_dim);

  ModelKind kind() const { return kind_; }

  /// Fits transform state (VR scale, NDT p99, D2Q buckets) from training
  /// rows and biases the towers' output toward the transformed target mean.
  void fit_transform(const HeadTargets& train, std::size_t n_buckets = kDefaultDurationBuckets);
  void init(nn::Rng& rng);

  HeadForward forward(const nn::Tensor& representation) const;
  /// Mean loss over the rows this kind trains on. WLR throws
  /// ValidationError on an opened row with staytime <= 0.
  HeadLoss loss(const HeadForward& out, const HeadTargets& targets) const;
  /// Accumulates tower gradients and returns dLoss/dRepresentation.
  nn::Tensor backward(const HeadForward& out, const HeadLoss& grads);

  /// Throws UnsupportedOperation for NDT.
  std::vector<double> predict_staytime(const HeadForward& out, std::span<const double> durations) const;
  /// Ordering score. Kinds with an inverse rank by predicted staytime
  /// (unclamped for VR and PCR); NDT by sigmoid(logit); WLR by
  /// sigmoid(logit_A) * exp(logit_B).
  std::vector<double> predict_rank(const HeadForward& out, std::span<const double> durations) const;

  /// Regression/classification target before the tower (exposed for tests).
  double transformed_target(double staytime_s, double duration_s) const;

  void collect(nn::ParamList& out);
  void append_state_sections(std::vector<nn::Section>& out) const;
  void load_state_sections(const std::vector<nn::Section>& sections);

  double vr_scale() const { return vr_scale_; }
  double ndt_p99() const { return ndt_p99_; }
  const DurationBuckets& buckets() const { return buckets_; }

  nn::Mlp3 tower_a, tower_b;

 private:
  ModelKind kind_ = ModelKind::VR;
  double vr_scale_ = 1.0;
  double ndt_p99_ = 1.0;
  DurationBuckets buckets_;
  double bias_a_ = 0.0, bias_b_ = 0.0;
};

}  // namespace staytime::models
