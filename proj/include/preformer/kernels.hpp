#pragma once

#include <algorithm>

#include "preformer/tensor.hpp"

namespace preformer {

/// Moving average along rows, replicating the first and last rows at the
/// boundary. Runs in O(rows * cols) with a sliding window sum.
template <typename Derived>
MatrixX<typename Derived::Scalar> moving_average(const Eigen::MatrixBase<Derived>& x,
                                                 Index kernel) {
  using Scalar = typename Derived::Scalar;
  if (kernel <= 0 || kernel % 2 == 0) {
    throw InvalidKernel("kernel must be odd and positive, got " + std::to_string(kernel));
  }
  const Index len = x.rows();
  const Index half = (kernel - 1) / 2;
  MatrixX<Scalar> out(len, x.cols());
  if (len == 0) return out;
  auto clamp_row = [len](Index r) { return std::clamp<Index>(r, 0, len - 1); };

  RowVectorX<Scalar> window = RowVectorX<Scalar>::Zero(x.cols());
  for (Index o = -half; o <= half; ++o) window += x.row(clamp_row(o));
  const Scalar inv = Scalar(1) / Scalar(kernel);
  out.row(0) = window * inv;
  for (Index t = 1; t < len; ++t) {
    window += x.row(clamp_row(t + half)) - x.row(clamp_row(t - 1 - half));
    out.row(t) = window * inv;
  }
  return out;
}

/// Adjoint of moving_average: scatters each output gradient back over the
/// (clamped) input rows that produced it.
template <typename Derived>
MatrixX<typename Derived::Scalar> moving_average_adjoint(const Eigen::MatrixBase<Derived>& grad_out,
                                                         Index kernel) {
  using Scalar = typename Derived::Scalar;
  const Index len = grad_out.rows();
  const Index half = (kernel - 1) / 2;
  const Scalar inv = Scalar(1) / Scalar(kernel);
  MatrixX<Scalar> grad_in = MatrixX<Scalar>::Zero(len, grad_out.cols());
  for (Index t = 0; t < len; ++t) {
    for (Index o = -half; o <= half; ++o) {
      grad_in.row(std::clamp<Index>(t + o, 0, len - 1)) += grad_out.row(t) * inv;
    }
  }
  return grad_in;
}

/// Row-wise softmax with max subtraction.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar peak = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - peak).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace preformer
