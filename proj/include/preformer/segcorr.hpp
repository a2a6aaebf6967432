#pragma once

// Segment-Correlation attention.
//
// Queries, keys and values are cut into contiguous segments of `l_seg` rows.
// Two segments are compared by the mean of their elementwise product, a
// softmax over key segments turns those scores into weights, and each output
// segment is the weighted sum of value segments. The predictive form queries
// output segment i with query segment i-1 (segment m for i = 1) and lets the
// weight of key segment j pick value segment j+1.
//
// The numeric kernels are templates over the scalar type and work on plain
// Eigen matrices; the Tensor wrappers at the bottom add them to the tape.

#include <cstdint>
#include <string>
#include <vector>

#include "preformer/kernels.hpp"
#include "preformer/tensor.hpp"

namespace preformer {

/// Tally of scalar multiply-accumulates spent in correlation and value
/// aggregation, plus the largest transient workspace seen.
struct OpCounter {
  std::uint64_t mul_adds = 0;
  std::uint64_t peak_workspace_bytes = 0;

  void add(std::uint64_t n) { mul_adds += n; }
  void note_workspace(std::uint64_t bytes) {
    if (bytes > peak_workspace_bytes) peak_workspace_bytes = bytes;
  }
};

/// How the per-scale fusion weights are ordered. kIncreasing is the
/// 2^l / sum(2^l) rule; kDecreasing mirrors it (2^(lmax-l) / sum).
enum class AlphaOrder { kIncreasing, kDecreasing };

struct SegCorrConfig {
  Index l0 = 4;
  Index d_model = 64;
  Index n_heads = 8;
  bool predictive = false;
  bool multiscale = true;
  AlphaOrder alpha_order = AlphaOrder::kIncreasing;

  Index d_head() const { return d_model / n_heads; }
  void validate() const;
};

/// One level of the multi-scale pyramid. The weight is kept as an exact
/// fraction so the weights can be checked to sum to one without rounding.
struct ScaleLevel {
  int level = 0;
  Index segment_length = 0;
  std::uint64_t weight_numerator = 1;
  std::uint64_t weight_denominator = 1;

  double alpha() const {
    return static_cast<double>(weight_numerator) / static_cast<double>(weight_denominator);
  }
};

/// floor(log2(length / l0)); requires 1 <= l0 <= length.
int max_scale_level(Index length, Index l0);

/// Fusion weights alpha_0..alpha_lmax as exact fractions.
std::vector<ScaleLevel> scale_weights(int l_max, Index l0, AlphaOrder order = AlphaOrder::kIncreasing);

/// Segment lengths and weights used for a query/key pair of lengths lq, lk.
/// Multi-scale uses l_max from min(lq, lk). In the predictive form, levels
/// whose key side would have fewer than two segments are dropped and the
/// remaining weights renormalised; single-scale returns just l0.
std::vector<ScaleLevel> scale_plan(Index lq, Index lk, const SegCorrConfig& cfg);

inline Index segment_count(Index length, Index l_seg) { return (length + l_seg - 1) / l_seg; }

/// Splits rows into segments of l_seg rows, zero-padding the final one.
template <typename Scalar>
std::vector<MatrixX<Scalar>> segment(const MatrixX<Scalar>& x, Index l_seg) {
  if (l_seg < 1) throw InvalidConfig("segment length must be positive");
  const Index n = segment_count(x.rows(), l_seg);
  std::vector<MatrixX<Scalar>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index s = 0; s < n; ++s) {
    MatrixX<Scalar> seg = MatrixX<Scalar>::Zero(l_seg, x.cols());
    const Index take = std::min(l_seg, x.rows() - s * l_seg);
    seg.topRows(take) = x.middleRows(s * l_seg, take);
    out.push_back(std::move(seg));
  }
  return out;
}

/// Mean of the elementwise product of two equally shaped segments.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar correlation(const Eigen::MatrixBase<DerivedA>& qi,
                                      const Eigen::MatrixBase<DerivedB>& kj) {
  if (qi.rows() != kj.rows() || qi.cols() != kj.cols()) {
    throw ShapeMismatch("correlation of differently shaped segments");
  }
  using Scalar = typename DerivedA::Scalar;
  return qi.cwiseProduct(kj).sum() / Scalar(qi.rows() * qi.cols());
}

namespace detail {

// Copies the columns of one head into an (n_seg x l_seg*d_head) matrix whose
// row s is segment s flattened row-major; rows past the input are zero.
template <typename Scalar>
MatrixX<Scalar> pack_segments(const MatrixX<Scalar>& x, Index n_seg, Index l_seg, Index col0,
                              Index d_head) {
  MatrixX<Scalar> packed = MatrixX<Scalar>::Zero(n_seg, l_seg * d_head);
  for (Index r = 0; r < x.rows(); ++r) {
    packed.row(r / l_seg).segment((r % l_seg) * d_head, d_head) = x.row(r).segment(col0, d_head);
  }
  return packed;
}

template <typename Scalar>
void unpack_segments(const MatrixX<Scalar>& packed, Index l_seg, Index col0, Index d_head,
                     MatrixX<Scalar>& x) {
  for (Index r = 0; r < x.rows(); ++r) {
    x.row(r).segment(col0, d_head) = packed.row(r / l_seg).segment((r % l_seg) * d_head, d_head);
  }
}

// Query segment feeding output segment i.
inline Index query_source(Index i, Index m, bool predictive) {
  if (!predictive) return i;
  return i == 0 ? m - 1 : i - 1;
}

}  // namespace detail

/// Softmax weights retained from a forward pass, one (m x n_keys) block per head.
template <typename Scalar>
struct SegmentWeights {
  std::vector<MatrixX<Scalar>> per_head;
};

template <typename Scalar>
std::uint64_t segment_correlation_workspace(Index lq, Index lk, Index d_model, Index n_heads,
                                            Index l_seg, bool predictive) {
  const Index m = segment_count(lq, l_seg);
  const Index n = segment_count(lk, l_seg);
  const Index nk = predictive ? n - 1 : n;
  const Index width = l_seg * (d_model / n_heads);
  // Packed q/k/v and the aggregated output per head, plus scores and
  // softmax weights for every head (the weights outlive the head loop).
  const Index transient = m * width + 2 * n * width + m * width + m * nk;
  const Index retained = n_heads * m * nk;
  return static_cast<std::uint64_t>(transient + retained) * sizeof(Scalar);
}

/// Multi-head Segment-Correlation on already projected q (lq x d_model),
/// k and v (lk x d_model). Head h uses columns [h*d_head, (h+1)*d_head).
template <typename Scalar>
MatrixX<Scalar> segment_correlation_forward(const MatrixX<Scalar>& q, const MatrixX<Scalar>& k,
                                            const MatrixX<Scalar>& v, Index n_heads, Index l_seg,
                                            bool predictive, OpCounter* counter = nullptr,
                                            SegmentWeights<Scalar>* weights = nullptr) {
  if (k.rows() != v.rows() || q.cols() != k.cols() || k.cols() != v.cols()) {
    throw ShapeMismatch("segment correlation needs k, v of equal shape and matching widths");
  }
  if (l_seg < 1) throw InvalidConfig("segment length must be positive");
  if (n_heads < 1 || q.cols() % n_heads != 0) {
    throw InvalidConfig("head count must divide the model width");
  }
  const Index d_head = q.cols() / n_heads;
  const Index m = segment_count(q.rows(), l_seg);
  const Index n = segment_count(k.rows(), l_seg);
  if (predictive && n < 2) {
    throw TooFewSegments("predictive segment correlation needs at least two key segments, got " +
                         std::to_string(n));
  }
  const Index nk = predictive ? n - 1 : n;
  const Scalar scale = Scalar(1) / Scalar(d_head * l_seg);

  MatrixX<Scalar> out(q.rows(), q.cols());
  if (weights) weights->per_head.clear();
  for (Index h = 0; h < n_heads; ++h) {
    const Index col0 = h * d_head;
    const MatrixX<Scalar> qs = detail::pack_segments(q, m, l_seg, col0, d_head);
    const MatrixX<Scalar> ks = detail::pack_segments(k, n, l_seg, col0, d_head);
    const MatrixX<Scalar> vs = detail::pack_segments(v, n, l_seg, col0, d_head);

    MatrixX<Scalar> queries(m, qs.cols());
    for (Index i = 0; i < m; ++i) queries.row(i) = qs.row(detail::query_source(i, m, predictive));
    const auto keys = ks.topRows(nk);
    const auto values = vs.bottomRows(nk);

    const MatrixX<Scalar> scores = scale * (queries * keys.transpose());
    MatrixX<Scalar> w = softmax_rows(scores);
    const MatrixX<Scalar> ys = w * values;
    detail::unpack_segments(ys, l_seg, col0, d_head, out);
    if (weights) weights->per_head.push_back(std::move(w));
  }
  if (counter) {
    counter->add(2ULL * static_cast<std::uint64_t>(n_heads * m * nk * l_seg * d_head));
    counter->note_workspace(segment_correlation_workspace<Scalar>(q.rows(), k.rows(), q.cols(),
                                                                  n_heads, l_seg, predictive));
  }
  return out;
}

/// Reverse pass of segment_correlation_forward given its retained weights.
/// Gradients are accumulated into grad_q/grad_k/grad_v, each pre-sized.
template <typename Scalar>
void segment_correlation_backward(const MatrixX<Scalar>& q, const MatrixX<Scalar>& k,
                                  const MatrixX<Scalar>& v, Index n_heads, Index l_seg,
                                  bool predictive, const SegmentWeights<Scalar>& weights,
                                  const MatrixX<Scalar>& grad_out, MatrixX<Scalar>* grad_q,
                                  MatrixX<Scalar>* grad_k, MatrixX<Scalar>* grad_v) {
  const Index d_head = q.cols() / n_heads;
  const Index m = segment_count(q.rows(), l_seg);
  const Index n = segment_count(k.rows(), l_seg);
  const Index nk = predictive ? n - 1 : n;
  const Index key_offset = 0;
  const Index value_offset = predictive ? 1 : 0;
  const Scalar scale = Scalar(1) / Scalar(d_head * l_seg);

  MatrixX<Scalar> gq_full = MatrixX<Scalar>::Zero(q.rows(), q.cols());
  MatrixX<Scalar> gk_full = MatrixX<Scalar>::Zero(k.rows(), k.cols());
  MatrixX<Scalar> gv_full = MatrixX<Scalar>::Zero(v.rows(), v.cols());
  for (Index h = 0; h < n_heads; ++h) {
    const Index col0 = h * d_head;
    const MatrixX<Scalar> qs = detail::pack_segments(q, m, l_seg, col0, d_head);
    const MatrixX<Scalar> ks = detail::pack_segments(k, n, l_seg, col0, d_head);
    const MatrixX<Scalar> vs = detail::pack_segments(v, n, l_seg, col0, d_head);
    const MatrixX<Scalar> gys = detail::pack_segments(grad_out, m, l_seg, col0, d_head);
    const MatrixX<Scalar>& w = weights.per_head[static_cast<std::size_t>(h)];

    MatrixX<Scalar> queries(m, qs.cols());
    for (Index i = 0; i < m; ++i) queries.row(i) = qs.row(detail::query_source(i, m, predictive));
    const auto keys = ks.middleRows(key_offset, nk);
    const auto values = vs.middleRows(value_offset, nk);

    const MatrixX<Scalar> g_values = w.transpose() * gys;
    const MatrixX<Scalar> g_w = gys * values.transpose();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_dot = w.cwiseProduct(g_w).rowwise().sum();
    const MatrixX<Scalar> g_scores = w.cwiseProduct(g_w - row_dot.replicate(1, nk));
    const MatrixX<Scalar> g_queries = scale * (g_scores * keys);
    const MatrixX<Scalar> g_keys = scale * (g_scores.transpose() * queries);

    MatrixX<Scalar> gqs = MatrixX<Scalar>::Zero(m, qs.cols());
    for (Index i = 0; i < m; ++i) gqs.row(detail::query_source(i, m, predictive)) += g_queries.row(i);
    MatrixX<Scalar> gks = MatrixX<Scalar>::Zero(n, ks.cols());
    gks.middleRows(key_offset, nk) = g_keys;
    MatrixX<Scalar> gvs = MatrixX<Scalar>::Zero(n, vs.cols());
    gvs.middleRows(value_offset, nk) = g_values;

    detail::unpack_segments(gqs, l_seg, col0, d_head, gq_full);
    detail::unpack_segments(gks, l_seg, col0, d_head, gk_full);
    detail::unpack_segments(gvs, l_seg, col0, d_head, gv_full);
  }
  if (grad_q) *grad_q += gq_full;
  if (grad_k) *grad_k += gk_full;
  if (grad_v) *grad_v += gv_full;
}

template <typename Scalar>
std::uint64_t full_attention_workspace(Index lq, Index lk, Index d_model, Index n_heads) {
  const Index transient = 2 * lq * lk + lq * (d_model / n_heads);
  const Index retained = n_heads * lq * lk;
  return static_cast<std::uint64_t>(transient + retained) * sizeof(Scalar);
}

/// Point-wise multi-head softmax attention, softmax(scale * q k^T) v per head.
/// Used as the comparison mechanism for benchmarking.
template <typename Scalar>
MatrixX<Scalar> full_attention_forward(const MatrixX<Scalar>& q, const MatrixX<Scalar>& k,
                                       const MatrixX<Scalar>& v, Index n_heads, Scalar scale,
                                       OpCounter* counter = nullptr) {
  if (k.rows() != v.rows() || q.cols() != k.cols() || k.cols() != v.cols()) {
    throw ShapeMismatch("attention needs k, v of equal shape and matching widths");
  }
  const Index d_head = q.cols() / n_heads;
  MatrixX<Scalar> out(q.rows(), q.cols());
  for (Index h = 0; h < n_heads; ++h) {
    const Index col0 = h * d_head;
    const MatrixX<Scalar> scores =
        scale * (q.middleCols(col0, d_head) * k.middleCols(col0, d_head).transpose());
    out.middleCols(col0, d_head) = softmax_rows(scores) * v.middleCols(col0, d_head);
  }
  if (counter) {
    counter->add(2ULL * static_cast<std::uint64_t>(n_heads * q.rows() * k.rows() * d_head));
    counter->note_workspace(full_attention_workspace<Scalar>(q.rows(), k.rows(), q.cols(), n_heads));
  }
  return out;
}

/// Exact multiply-accumulate count of one single-scale pass.
std::uint64_t segment_correlation_mul_adds(Index lq, Index lk, Index d_model, Index l_seg,
                                           bool predictive);

// Tape-aware wrappers.

/// Segment-Correlation at one segment length; output truncated to q.rows().
Tensor segment_correlation(const Tensor& q, const Tensor& k, const Tensor& v, Index n_heads,
                           Index l_seg, bool predictive, OpCounter* counter = nullptr);

/// Weighted fusion of segment_correlation over the levels of scale_plan.
Tensor multiscale_segment_correlation(const Tensor& q, const Tensor& k, const Tensor& v,
                                      const SegCorrConfig& cfg, OpCounter* counter = nullptr);

/// Learned projections around multi-scale Segment-Correlation.
struct AttentionParams {
  Tensor w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
};

AttentionParams make_attention_params(Index d_model, std::mt19937_64& rng);

/// Projects queries from `query_src` and keys/values from `kv_src`, runs the
/// multi-scale kernel per head, concatenates heads and applies the output
/// projection. Returns (query_src.rows() x d_model).
Tensor mssc_forward(const Tensor& query_src, const Tensor& kv_src, const AttentionParams& params,
                    const SegCorrConfig& cfg, OpCounter* counter = nullptr);

/// Xavier-uniform initialised (fan_in x fan_out) leaf.
Tensor xavier_uniform(Index fan_in, Index fan_out, std::mt19937_64& rng);

}  // namespace preformer
