#include "preformer/decomposition.hpp"

#include <string>

namespace preformer {

Decomposed decompose(const Tensor& x, Index kernel) {
  Tensor trend = avg_pool_1d(x, kernel);
  Tensor seasonal = x - trend;
  return {std::move(trend), std::move(seasonal)};
}

DecoderInputs build_decoder_inputs(const Tensor& x, Index horizon, Index kernel) {
  if (x.rows() % 2 != 0) {
    throw OddInputLength("input length " + std::to_string(x.rows()) + " must be even");
  }
  if (horizon < 1) throw InvalidConfig("horizon must be >= 1");
  const Index half = x.rows() / 2;
  const Tensor x_half = slice_rows(x, half, half);
  const Decomposed parts = decompose(x_half, kernel);

  const Tensor zeros = Tensor::zeros(horizon, x.cols());
  const RowVector half_mean = x_half.value().colwise().mean();
  const Tensor mean_rows(half_mean.replicate(horizon, 1));
  return {concat_rows({parts.seasonal, zeros}), concat_rows({parts.trend, mean_rows})};
}

}  // namespace preformer
