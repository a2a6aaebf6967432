#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "preformer/data.hpp"
#include "preformer/decomposition.hpp"
#include "preformer/segcorr.hpp"

namespace preformer {

/// Architecture hyperparameters. Defaults are a 64-wide, 8-head model with
/// L0 = 4, two encoder layers and one decoder layer.
struct ModelConfig {
  Index d_model = 64;
  Index d_ff = 256;
  Index n_heads = 8;
  Index l0 = 4;
  Index e_layers = 2;
  Index d_layers = 1;
  Index input_len = 96;
  Index pred_len = 96;
  Index d_x = 1;
  Index d_y = 1;
  Index d_cov = kCovariateCount;
  Index decomp_kernel = 25;
  double dropout = 0.05;
  bool predictive = true;
  bool multiscale = true;
  AlphaOrder alpha_order = AlphaOrder::kIncreasing;

  void validate() const;
  /// Encoder and decoder self-attention; never predictive.
  SegCorrConfig self_attention() const;
  /// Decoder-to-encoder attention; predictive when `predictive` is set.
  SegCorrConfig cross_attention() const;

  /// Closed form:
  ///   2 * ((d_x + d_cov) * d_model + d_model)              embeddings
  /// + e_layers * (A + F)                                     encoder
  /// + d_layers * (2 A + F + 3 * d_model * d_x)               decoder
  /// + d_model * d_x + d_x * d_y + d_y                        output head
  /// with A = 4 (d_model^2 + d_model), F = 2 d_model d_ff + d_ff + d_model.
  std::size_t parameter_count() const;

  bool operator==(const ModelConfig&) const = default;
};

struct EmbeddingParams {
  Tensor w, b;
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

struct EncoderLayerParams {
  AttentionParams attention;
  FeedForwardParams ffn;
};

struct DecoderLayerParams {
  AttentionParams self_attention;
  AttentionParams cross_attention;
  FeedForwardParams ffn;
  // d_model -> d_x projections of the three extracted trends.
  Tensor trend_self, trend_cross, trend_ffn;
};

struct PreformerParams {
  EmbeddingParams enc_embedding;
  EmbeddingParams dec_embedding;
  std::vector<EncoderLayerParams> encoder;
  std::vector<DecoderLayerParams> decoder;
  Tensor seasonal_projection;  // d_model x d_x
  Tensor w_out, b_out;         // d_x x d_y, 1 x d_y

  /// Xavier-uniform weights and zero biases drawn in a fixed order from
  /// `seed`; the output map starts as the identity when d_x == d_y.
  static PreformerParams init(const ModelConfig& cfg, std::uint64_t seed);

  /// Every parameter with a stable dotted name, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> tensors() const;
  std::size_t count() const;
};

enum class Mode { kTrain, kEval };

struct ForwardContext {
  Mode mode = Mode::kEval;
  std::mt19937_64* rng = nullptr;  // required for dropout in training mode
  OpCounter* counter = nullptr;
};

/// Fixed sinusoidal position code, (len x d_model).
Matrix positional_encoding(Index len, Index d_model);

/// Linear map of [values, covariates] plus the position code; dropout with
/// probability `dropout_p` in training mode.
Tensor embed(const Tensor& values, const Tensor& covariates, const EmbeddingParams& params,
             const ForwardContext& ctx, double dropout_p = 0.0);

Tensor feed_forward(const Tensor& h, const FeedForwardParams& params);

Tensor encoder_layer(const Tensor& h, const EncoderLayerParams& params, const ModelConfig& cfg,
                     const ForwardContext& ctx);

struct DecoderLayerOutput {
  Tensor h;
  Tensor trend_delta;
};

DecoderLayerOutput decoder_layer(const Tensor& h, const Tensor& enc_out,
                                 const DecoderLayerParams& params, const ModelConfig& cfg,
                                 const ForwardContext& ctx);

/// (pred_len x d_y) forecast for one window.
Tensor forward(const SeriesWindow& window, const PreformerParams& params, const ModelConfig& cfg,
               const ForwardContext& ctx);

/// Config plus parameters.
class Preformer {
 public:
  Preformer(ModelConfig cfg, std::uint64_t seed);
  Preformer(ModelConfig cfg, PreformerParams params);

  const ModelConfig& config() const { return cfg_; }
  const PreformerParams& params() const { return params_; }
  PreformerParams& params() { return params_; }

  Tensor forward(const SeriesWindow& window, const ForwardContext& ctx = {}) const;
  /// Eval-mode forward without recording gradients.
  Matrix predict(const SeriesWindow& window, OpCounter* counter = nullptr) const;

  /// Snapshot / restore of all parameter values.
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

 private:
  ModelConfig cfg_;
  PreformerParams params_;
};

}  // namespace preformer
