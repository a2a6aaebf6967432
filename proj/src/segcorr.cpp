#include "preformer/segcorr.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace preformer {

void SegCorrConfig::validate() const {
  if (l0 < 1) throw InvalidConfig("l0 must be >= 1");
  if (d_model < 1 || n_heads < 1) throw InvalidConfig("d_model and n_heads must be positive");
  if (d_model % n_heads != 0) {
    throw InvalidConfig("n_heads (" + std::to_string(n_heads) + ") must divide d_model (" +
                        std::to_string(d_model) + ")");
  }
}

int max_scale_level(Index length, Index l0) {
  if (l0 < 1 || l0 > length) {
    throw InvalidConfig("initial segment length " + std::to_string(l0) +
                        " must lie in [1, " + std::to_string(length) + "]");
  }
  int level = 0;
  while ((l0 << (level + 1)) <= length) ++level;
  return level;
}

std::vector<ScaleLevel> scale_weights(int l_max, Index l0, AlphaOrder order) {
  if (l_max < 0 || l_max > 62) throw InvalidConfig("scale level out of range");
  const std::uint64_t denominator = (std::uint64_t{1} << (l_max + 1)) - 1;
  std::vector<ScaleLevel> levels;
  for (int l = 0; l <= l_max; ++l) {
    ScaleLevel s;
    s.level = l;
    s.segment_length = l0 << l;
    const int exponent = order == AlphaOrder::kIncreasing ? l : l_max - l;
    s.weight_numerator = std::uint64_t{1} << exponent;
    s.weight_denominator = denominator;
    levels.push_back(s);
  }
  return levels;
}

std::vector<ScaleLevel> scale_plan(Index lq, Index lk, const SegCorrConfig& cfg) {
  const Index shortest = std::min(lq, lk);
  int l_max = max_scale_level(shortest, cfg.l0);
  if (!cfg.multiscale) l_max = 0;
  if (cfg.predictive) {
    while (l_max > 0 && segment_count(lk, cfg.l0 << l_max) < 2) --l_max;
  }
  if (!cfg.multiscale) {
    ScaleLevel s;
    s.segment_length = cfg.l0;
    return {s};
  }
  return scale_weights(l_max, cfg.l0, cfg.alpha_order);
}

std::uint64_t segment_correlation_mul_adds(Index lq, Index lk, Index d_model, Index l_seg,
                                           bool predictive) {
  const Index m = segment_count(lq, l_seg);
  const Index n = segment_count(lk, l_seg);
  const Index nk = predictive ? n - 1 : n;
  return 2ULL * static_cast<std::uint64_t>(m * nk * l_seg * d_model);
}

Tensor segment_correlation(const Tensor& q, const Tensor& k, const Tensor& v, Index n_heads,
                           Index l_seg, bool predictive, OpCounter* counter) {
  auto weights = std::make_shared<SegmentWeights<double>>();
  Matrix out = segment_correlation_forward<double>(q.value(), k.value(), v.value(), n_heads, l_seg,
                                                   predictive, counter, weights.get());
  return Tensor::from_op(
      std::move(out), {q, k, v}, [n_heads, l_seg, predictive, weights](detail::Node& self) {
        auto& pq = *self.parents[0];
        auto& pk = *self.parents[1];
        auto& pv = *self.parents[2];
        Matrix gq = Matrix::Zero(pq.value.rows(), pq.value.cols());
        Matrix gk = Matrix::Zero(pk.value.rows(), pk.value.cols());
        Matrix gv = Matrix::Zero(pv.value.rows(), pv.value.cols());
        segment_correlation_backward<double>(pq.value, pk.value, pv.value, n_heads, l_seg,
                                             predictive, *weights, self.grad, &gq, &gk, &gv);
        auto add = [](detail::Node& p, const Matrix& g) {
          if (!p.requires_grad) return;
          if (p.grad.size() == 0) {
            p.grad = g;
          } else {
            p.grad += g;
          }
        };
        add(pq, gq);
        add(pk, gk);
        add(pv, gv);
      });
}

Tensor multiscale_segment_correlation(const Tensor& q, const Tensor& k, const Tensor& v,
                                      const SegCorrConfig& cfg, OpCounter* counter) {
  cfg.validate();
  if (q.cols() != cfg.d_model) {
    throw ShapeMismatch("expected width " + std::to_string(cfg.d_model) + ", got " +
                        std::to_string(q.cols()));
  }
  const auto plan = scale_plan(q.rows(), k.rows(), cfg);
  Tensor fused;
  for (const auto& level : plan) {
    Tensor y = segment_correlation(q, k, v, cfg.n_heads, level.segment_length, cfg.predictive,
                                   counter);
    if (plan.size() > 1) y = y * level.alpha();
    fused = fused.defined() ? fused + y : y;
  }
  return fused;
}

Tensor xavier_uniform(Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix w(fan_in, fan_out);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return Tensor(std::move(w), true);
}

AttentionParams make_attention_params(Index d_model, std::mt19937_64& rng) {
  AttentionParams p;
  p.w_q = xavier_uniform(d_model, d_model, rng);
  p.b_q = Tensor::zeros(1, d_model, true);
  p.w_k = xavier_uniform(d_model, d_model, rng);
  p.b_k = Tensor::zeros(1, d_model, true);
  p.w_v = xavier_uniform(d_model, d_model, rng);
  p.b_v = Tensor::zeros(1, d_model, true);
  p.w_o = xavier_uniform(d_model, d_model, rng);
  p.b_o = Tensor::zeros(1, d_model, true);
  return p;
}

Tensor mssc_forward(const Tensor& query_src, const Tensor& kv_src, const AttentionParams& params,
                    const SegCorrConfig& cfg, OpCounter* counter) {
  const Tensor q = matmul(query_src, params.w_q) + params.b_q;
  const Tensor k = matmul(kv_src, params.w_k) + params.b_k;
  const Tensor v = matmul(kv_src, params.w_v) + params.b_v;
  const Tensor heads = multiscale_segment_correlation(q, k, v, cfg, counter);
  return matmul(heads, params.w_o) + params.b_o;
}

}  // namespace preformer
