#include "preformer/model.hpp"

#include <cmath>

namespace preformer {

void ModelConfig::validate() const {
  auto positive = [](Index v, const char* name) {
    if (v < 1) throw InvalidConfig(std::string(name) + " must be positive");
  };
  positive(d_model, "d_model");
  positive(d_ff, "d_ff");
  positive(n_heads, "n_heads");
  positive(l0, "l0");
  positive(e_layers, "e_layers");
  positive(d_layers, "d_layers");
  positive(input_len, "input_len");
  positive(pred_len, "pred_len");
  positive(d_x, "d_x");
  positive(d_y, "d_y");
  positive(d_cov, "d_cov");
  if (d_model % n_heads != 0) throw InvalidConfig("n_heads must divide d_model");
  if (input_len % 2 != 0) throw OddInputLength("input_len must be even");
  if (decomp_kernel < 1 || decomp_kernel % 2 == 0) {
    throw InvalidKernel("decomp_kernel must be odd and positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidConfig("dropout must lie in [0, 1)");
}

SegCorrConfig ModelConfig::self_attention() const {
  SegCorrConfig s;
  s.l0 = l0;
  s.d_model = d_model;
  s.n_heads = n_heads;
  s.predictive = false;
  s.multiscale = multiscale;
  s.alpha_order = alpha_order;
  return s;
}

SegCorrConfig ModelConfig::cross_attention() const {
  SegCorrConfig s = self_attention();
  s.predictive = predictive;
  return s;
}

std::size_t ModelConfig::parameter_count() const {
  const auto dm = static_cast<std::size_t>(d_model);
  const auto ff = static_cast<std::size_t>(d_ff);
  const auto dx = static_cast<std::size_t>(d_x);
  const auto dy = static_cast<std::size_t>(d_y);
  const auto dc = static_cast<std::size_t>(d_cov);
  const std::size_t attention = 4 * (dm * dm + dm);
  const std::size_t ffn = 2 * dm * ff + ff + dm;
  return 2 * ((dx + dc) * dm + dm) + static_cast<std::size_t>(e_layers) * (attention + ffn) +
         static_cast<std::size_t>(d_layers) * (2 * attention + ffn + 3 * dm * dx) + dm * dx +
         dx * dy + dy;
}

namespace {

EmbeddingParams make_embedding(Index in, Index d_model, std::mt19937_64& rng) {
  return {xavier_uniform(in, d_model, rng), Tensor::zeros(1, d_model, true)};
}

FeedForwardParams make_ffn(Index d_model, Index d_ff, std::mt19937_64& rng) {
  FeedForwardParams p;
  p.w1 = xavier_uniform(d_model, d_ff, rng);
  p.b1 = Tensor::zeros(1, d_ff, true);
  p.w2 = xavier_uniform(d_ff, d_model, rng);
  p.b2 = Tensor::zeros(1, d_model, true);
  return p;
}

void push_attention(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                    const AttentionParams& a) {
  out.emplace_back(prefix + ".w_q", a.w_q);
  out.emplace_back(prefix + ".b_q", a.b_q);
  out.emplace_back(prefix + ".w_k", a.w_k);
  out.emplace_back(prefix + ".b_k", a.b_k);
  out.emplace_back(prefix + ".w_v", a.w_v);
  out.emplace_back(prefix + ".b_v", a.b_v);
  out.emplace_back(prefix + ".w_o", a.w_o);
  out.emplace_back(prefix + ".b_o", a.b_o);
}

void push_ffn(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
              const FeedForwardParams& f) {
  out.emplace_back(prefix + ".w1", f.w1);
  out.emplace_back(prefix + ".b1", f.b1);
  out.emplace_back(prefix + ".w2", f.w2);
  out.emplace_back(prefix + ".b2", f.b2);
}

Tensor seasonal_part(const Tensor& x, Index kernel) { return decompose(x, kernel).seasonal; }

}  // namespace

PreformerParams PreformerParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  PreformerParams p;
  p.enc_embedding = make_embedding(cfg.d_x + cfg.d_cov, cfg.d_model, rng);
  p.dec_embedding = make_embedding(cfg.d_x + cfg.d_cov, cfg.d_model, rng);
  for (Index l = 0; l < cfg.e_layers; ++l) {
    EncoderLayerParams layer;
    layer.attention = make_attention_params(cfg.d_model, rng);
    layer.ffn = make_ffn(cfg.d_model, cfg.d_ff, rng);
    p.encoder.push_back(std::move(layer));
  }
  for (Index l = 0; l < cfg.d_layers; ++l) {
    DecoderLayerParams layer;
    layer.self_attention = make_attention_params(cfg.d_model, rng);
    layer.cross_attention = make_attention_params(cfg.d_model, rng);
    layer.ffn = make_ffn(cfg.d_model, cfg.d_ff, rng);
    layer.trend_self = xavier_uniform(cfg.d_model, cfg.d_x, rng);
    layer.trend_cross = xavier_uniform(cfg.d_model, cfg.d_x, rng);
    layer.trend_ffn = xavier_uniform(cfg.d_model, cfg.d_x, rng);
    p.decoder.push_back(std::move(layer));
  }
  p.seasonal_projection = xavier_uniform(cfg.d_model, cfg.d_x, rng);
  // Identity when input and output features coincide, so the trend stream
  // reaches the output unchanged at initialization.
  p.w_out = cfg.d_x == cfg.d_y ? Tensor(Matrix::Identity(cfg.d_x, cfg.d_y), true)
                               : xavier_uniform(cfg.d_x, cfg.d_y, rng);
  p.b_out = Tensor::zeros(1, cfg.d_y, true);
  return p;
}

std::vector<std::pair<std::string, Tensor>> PreformerParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("enc_embedding.w", enc_embedding.w);
  out.emplace_back("enc_embedding.b", enc_embedding.b);
  out.emplace_back("dec_embedding.w", dec_embedding.w);
  out.emplace_back("dec_embedding.b", dec_embedding.b);
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string prefix = "encoder." + std::to_string(l);
    push_attention(out, prefix + ".attention", encoder[l].attention);
    push_ffn(out, prefix + ".ffn", encoder[l].ffn);
  }
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    const std::string prefix = "decoder." + std::to_string(l);
    push_attention(out, prefix + ".self_attention", decoder[l].self_attention);
    push_attention(out, prefix + ".cross_attention", decoder[l].cross_attention);
    push_ffn(out, prefix + ".ffn", decoder[l].ffn);
    out.emplace_back(prefix + ".trend_self", decoder[l].trend_self);
    out.emplace_back(prefix + ".trend_cross", decoder[l].trend_cross);
    out.emplace_back(prefix + ".trend_ffn", decoder[l].trend_ffn);
  }
  out.emplace_back("seasonal_projection", seasonal_projection);
  out.emplace_back("w_out", w_out);
  out.emplace_back("b_out", b_out);
  return out;
}

std::vector<Tensor> PreformerParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::size_t PreformerParams::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += static_cast<std::size_t>(t.size());
  return n;
}

Matrix positional_encoding(Index len, Index d_model) {
  Matrix pe(len, d_model);
  for (Index pos = 0; pos < len; ++pos) {
    for (Index i = 0; i < d_model; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Tensor embed(const Tensor& values, const Tensor& covariates, const EmbeddingParams& params,
             const ForwardContext& ctx, double dropout_p) {
  if (values.rows() != covariates.rows()) {
    throw ShapeMismatch("values and covariates differ in length");
  }
  if (values.cols() + covariates.cols() != params.w.rows()) {
    throw ShapeMismatch("embedding expects " + std::to_string(params.w.rows()) + " input columns");
  }
  const Tensor projected = matmul(concat_cols({values, covariates}), params.w) + params.b;
  Tensor out = projected + Tensor(positional_encoding(values.rows(), params.w.cols()));
  if (ctx.mode == Mode::kTrain && dropout_p > 0.0 && ctx.rng) {
    out = dropout(out, dropout_p, *ctx.rng);
  }
  return out;
}

Tensor feed_forward(const Tensor& h, const FeedForwardParams& params) {
  return matmul(relu(matmul(h, params.w1) + params.b1), params.w2) + params.b2;
}

Tensor encoder_layer(const Tensor& h, const EncoderLayerParams& params, const ModelConfig& cfg,
                     const ForwardContext& ctx) {
  const Tensor attended = h + mssc_forward(h, h, params.attention, cfg.self_attention(), ctx.counter);
  const Tensor h1 = seasonal_part(attended, cfg.decomp_kernel);
  return seasonal_part(h1 + feed_forward(h1, params.ffn), cfg.decomp_kernel);
}

DecoderLayerOutput decoder_layer(const Tensor& h, const Tensor& enc_out,
                                 const DecoderLayerParams& params, const ModelConfig& cfg,
                                 const ForwardContext& ctx) {
  const Decomposed self_part = decompose(
      h + mssc_forward(h, h, params.self_attention, cfg.self_attention(), ctx.counter),
      cfg.decomp_kernel);
  const Tensor x1 = self_part.seasonal;
  const Decomposed cross_part = decompose(
      x1 + mssc_forward(x1, enc_out, params.cross_attention, cfg.cross_attention(), ctx.counter),
      cfg.decomp_kernel);
  const Tensor x2 = cross_part.seasonal;
  const Decomposed ffn_part = decompose(x2 + feed_forward(x2, params.ffn), cfg.decomp_kernel);

  Tensor trend = matmul(self_part.trend, params.trend_self) +
                 matmul(cross_part.trend, params.trend_cross) +
                 matmul(ffn_part.trend, params.trend_ffn);
  return {ffn_part.seasonal, std::move(trend)};
}

Tensor forward(const SeriesWindow& window, const PreformerParams& params, const ModelConfig& cfg,
               const ForwardContext& ctx) {
  const Index half = cfg.input_len / 2;
  if (window.enc_values.rows() != cfg.input_len || window.enc_values.cols() != cfg.d_x ||
      window.enc_cov.rows() != cfg.input_len || window.enc_cov.cols() != cfg.d_cov ||
      window.dec_cov.rows() != half + cfg.pred_len || window.dec_cov.cols() != cfg.d_cov) {
    throw ConfigMismatch("window shapes do not match the model configuration");
  }
  const Tensor enc_values(window.enc_values);

  Tensor enc = embed(enc_values, Tensor(window.enc_cov), params.enc_embedding, ctx, cfg.dropout);
  for (const auto& layer : params.encoder) enc = encoder_layer(enc, layer, cfg, ctx);

  const DecoderInputs inputs = build_decoder_inputs(enc_values, cfg.pred_len, cfg.decomp_kernel);
  Tensor dec = embed(inputs.seasonal, Tensor(window.dec_cov), params.dec_embedding, ctx, cfg.dropout);
  Tensor trend = inputs.trend;
  for (const auto& layer : params.decoder) {
    DecoderLayerOutput out = decoder_layer(dec, enc, layer, cfg, ctx);
    dec = std::move(out.h);
    trend = trend + out.trend_delta;
  }
  const Tensor combined = matmul(dec, params.seasonal_projection) + trend;
  return matmul(slice_rows(combined, half, cfg.pred_len), params.w_out) + params.b_out;
}

Preformer::Preformer(ModelConfig cfg, std::uint64_t seed)
    : cfg_(cfg), params_(PreformerParams::init(cfg, seed)) {}

Preformer::Preformer(ModelConfig cfg, PreformerParams params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
}

Tensor Preformer::forward(const SeriesWindow& window, const ForwardContext& ctx) const {
  return preformer::forward(window, params_, cfg_, ctx);
}

Matrix Preformer::predict(const SeriesWindow& window, OpCounter* counter) const {
  NoGradGuard guard;
  ForwardContext ctx;
  ctx.counter = counter;
  return forward(window, ctx).value();
}

std::vector<Matrix> Preformer::snapshot() const {
  std::vector<Matrix> out;
  for (const auto& t : params_.tensors()) out.push_back(t.value());
  return out;
}

void Preformer::restore(const std::vector<Matrix>& values) {
  auto tensors = params_.tensors();
  if (values.size() != tensors.size()) throw ConfigMismatch("snapshot size mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (values[i].rows() != tensors[i].rows() || values[i].cols() != tensors[i].cols()) {
      throw ConfigMismatch("snapshot shape mismatch");
    }
    tensors[i].mutable_value() = values[i];
  }
}

}  // namespace preformer
