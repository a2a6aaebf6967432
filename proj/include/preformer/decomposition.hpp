#pragma once

#include "preformer/tensor.hpp"

namespace preformer {

/// Moving-average trend and the seasonal residual; trend + seasonal == input.
struct Decomposed {
  Tensor trend;
  Tensor seasonal;
};

Decomposed decompose(const Tensor& x, Index kernel);

/// Seasonal and trend streams fed to the decoder: the decomposed final half
/// of the encoder window followed by `horizon` placeholder rows (zeros for
/// the seasonal stream, the per-feature mean of that half for the trend).
struct DecoderInputs {
  Tensor seasonal;
  Tensor trend;
};

DecoderInputs build_decoder_inputs(const Tensor& x, Index horizon, Index kernel);

}  // namespace preformer
