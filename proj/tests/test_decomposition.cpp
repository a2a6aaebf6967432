#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "preformer/decomposition.hpp"
#include "test_util.hpp"

using namespace preformer;
using preformer::testing::random_matrix;

TEST(Decompose, ConstantIsAllTrend) {
  const Decomposed d = decompose(Tensor(Matrix::Constant(30, 2, -1.5)), 25);
  EXPECT_EQ(d.trend.value(), Matrix::Constant(30, 2, -1.5));
  EXPECT_EQ(d.seasonal.value(), Matrix::Zero(30, 2));
}

TEST(Decompose, ReconstructsInput) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = random_matrix(40, 3, rng, 5.0);
    const Decomposed d = decompose(Tensor(x), 7);
    EXPECT_LT((d.trend.value() + d.seasonal.value() - x).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Decompose, PeriodicSignalLandsInSeasonal) {
  Matrix x(64, 1);
  for (Index t = 0; t < 64; ++t) x(t, 0) = std::sin(2.0 * std::numbers::pi * t / 8.0);
  const Decomposed d = decompose(Tensor(x), 25);
  // Away from the edges a 25-wide window spans three full periods plus one
  // sample, so the trend is at most one sample's weight.
  for (Index t = 12; t < 52; ++t) EXPECT_LE(std::abs(d.trend.value()(t, 0)), 1.0 / 25.0 + 1e-12);
  // Near the ends the replicated edge value dominates; compare to a direct sum.
  for (Index t = 0; t < 64; ++t) {
    double acc = 0.0;
    for (Index k = t - 12; k <= t + 12; ++k) acc += x(std::clamp<Index>(k, 0, 63), 0);
    EXPECT_NEAR(d.trend.value()(t, 0), acc / 25.0, 1e-12);
    EXPECT_NEAR(d.seasonal.value()(t, 0), x(t, 0) - acc / 25.0, 1e-12);
  }
}

TEST(Decompose, IsLinear) {
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(33, 2, rng);
  const Matrix y = random_matrix(33, 2, rng);
  const double a = 1.7, b = -0.3;
  const Decomposed dx = decompose(Tensor(x), 9);
  const Decomposed dy = decompose(Tensor(y), 9);
  const Decomposed dc = decompose(Tensor(Matrix(a * x + b * y)), 9);
  EXPECT_LT((dc.trend.value() - (a * dx.trend.value() + b * dy.trend.value())).cwiseAbs().maxCoeff(),
            1e-12);
  EXPECT_LT(
      (dc.seasonal.value() - (a * dx.seasonal.value() + b * dy.seasonal.value())).cwiseAbs().maxCoeff(),
      1e-12);
}

TEST(Decompose, RejectsEvenKernel) {
  EXPECT_THROW(decompose(Tensor::zeros(10, 1), 24), InvalidKernel);
}

TEST(DecoderInputs, ZeroAndConstantInputs) {
  const DecoderInputs zero = build_decoder_inputs(Tensor::zeros(8, 2), 4, 3);
  EXPECT_EQ(zero.seasonal.value(), Matrix::Zero(8, 2));
  EXPECT_EQ(zero.trend.value(), Matrix::Zero(8, 2));

  const DecoderInputs five = build_decoder_inputs(Tensor(Matrix::Constant(8, 1, 5.0)), 4, 3);
  EXPECT_EQ(five.trend.value(), Matrix::Constant(8, 1, 5.0));
  EXPECT_EQ(five.seasonal.value(), Matrix::Zero(8, 1));
}

TEST(DecoderInputs, PlaceholderIsHalfWindowMean) {
  Matrix ramp(8, 1);
  for (Index t = 0; t < 8; ++t) ramp(t, 0) = static_cast<double>(t + 1);
  const DecoderInputs in = build_decoder_inputs(Tensor(ramp), 2, 3);
  ASSERT_EQ(in.trend.rows(), 6);
  EXPECT_DOUBLE_EQ(in.trend.value()(4, 0), 6.5);
  EXPECT_DOUBLE_EQ(in.trend.value()(5, 0), 6.5);
  EXPECT_EQ(in.seasonal.value().bottomRows(2), Matrix::Zero(2, 1));
}

TEST(DecoderInputs, StreamsRebuildTheLatterHalf) {
  std::mt19937_64 rng(3);
  const Matrix x = random_matrix(24, 3, rng);
  const DecoderInputs in = build_decoder_inputs(Tensor(x), 10, 5);
  EXPECT_EQ(in.seasonal.rows(), 22);
  EXPECT_EQ(in.trend.rows(), 22);
  const Matrix rebuilt = (in.seasonal.value() + in.trend.value()).topRows(12);
  EXPECT_LT((rebuilt - x.bottomRows(12)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DecoderInputs, OddInputLengthThrows) {
  EXPECT_THROW(build_decoder_inputs(Tensor::zeros(7, 1), 2, 3), OddInputLength);
}
