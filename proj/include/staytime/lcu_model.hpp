#pragma once

#include <cstddef>
#include <vector>

#include "staytime/base_models.hpp"
#include "staytime/features.hpp"
#include "staytime/nn/layers.hpp"
#include "staytime/objectives.hpp"

namespace staytime::lcu {

struct ModelConfig {
  models::ModelKind kind = models::ModelKind::VR;
  /// Off: the head reads [user token, video token] only.
  bool lcu = true;
  std::size_t model_dim = 32;
  std::size_t n_heads = 2;
  std::size_t id_embedding_dim = 8;
  std::size_t projection_hidden = 32;  ///< hidden width of the E^V / E^C projection MLPs
  std::size_t head_hidden = 64;        ///< first hidden width of the staytime towers
  std::size_t aux_hidden = 32;         ///< first hidden width of the auxiliary heads
  std::size_t n_buckets = models::kDefaultDurationBuckets;
  /// e' = tokens + MHSA(tokens) when set, MHSA(tokens) otherwise.
  bool attention_residual = true;
  LossWeights weights;
  /// Auxiliary heads still train on their losses but send no gradient
  /// into the shared representation.
  bool detach_aux = false;

  /// Throws ConfigError on a zero width or indivisible head count.
  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double staytime = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
};

/// Intermediate values of one forward pass, kept for backward.
struct ForwardPass {
  std::size_t n = 0, k = 0;
  nn::Tensor user_in, video_in;
  nn::Tensor user_tok, video_tok;
  nn::Mlp2Cache ev_cache, ec_cache;
  nn::Tensor tokens;                     ///< (n * (3 + k)) x model_dim
  std::vector<std::uint8_t> token_mask;  ///< per token row
  nn::MhsaCache attention;
  nn::Tensor fused;                      ///< e'
  nn::Tensor slot_rows;                  ///< comment rows of e', (n*k) x model_dim
  nn::Mlp3Cache aux1_cache, aux2_cache;
  std::vector<double> y1, y2;            ///< per slot, masked ones included
  nn::Tensor representation;
  models::HeadForward head;
};

/// Base model head over either plain feature tokens or the fused LCU
/// representation, with the two auxiliary comment-ranking heads.
class LcuModel {
 public:
  LcuModel(const ModelConfig& config, std::size_t user_rows, std::size_t video_rows, std::size_t ev_dim,
           std::size_t ec_dim);

  const ModelConfig& config() const { return config_; }
  std::size_t n_tokens(std::size_t k) const { return 3 + k; }
  std::size_t representation_dim() const;

  /// Fits the head's label transform on training rows.
  void fit_transform(const features::ExampleSet& train);
  void init(nn::Rng& rng);

  ForwardPass forward(const features::ExampleSet& batch) const;
  LossBreakdown loss(const ForwardPass& pass, const features::ExampleSet& batch, models::HeadLoss* head_grads = nullptr,
                     std::vector<double>* dy1 = nullptr, std::vector<double>* dy2 = nullptr) const;
  /// Forward, loss and backward; accumulates into parameter gradients.
  LossBreakdown accumulate_gradients(const features::ExampleSet& batch);

  std::vector<double> predict_rank(const features::ExampleSet& batch) const;
  /// Throws UnsupportedOperation for NDT.
  std::vector<double> predict_staytime(const features::ExampleSet& batch) const;

  nn::ParamList params();
  /// Parameters plus head transform state.
  std::vector<nn::Section> state_sections();
  void load_state(const std::vector<nn::Section>& sections);

  models::StaytimeHead& head() { return head_; }
  const models::StaytimeHead& head() const { return head_; }

  nn::Embedding user_embedding, video_embedding;
  nn::Dense user_proj, video_proj;
  nn::Mlp2 video_llm_proj, comment_llm_proj;
  nn::Dense comment_feature_proj;
  nn::Mhsa attention;
  nn::Mlp3 aux_r1, aux_r2;

 private:
  void backward(const ForwardPass& pass, const models::HeadLoss& head_grads, const std::vector<double>& dy1,
                const std::vector<double>& dy2, const features::ExampleSet& batch);

  ModelConfig config_;
  models::StaytimeHead head_;
};

}  // namespace staytime::lcu
