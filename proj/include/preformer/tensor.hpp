#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "preformer/errors.hpp"

namespace preformer {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Index = Eigen::Index;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads self.grad and accumulates into the parents' grad buffers.
  std::function<void(Node& self)> backward;
};

}  // namespace detail

/// Dense rank-2 array of doubles taking part in reverse-mode differentiation.
///
/// A Tensor is a cheap handle; copies share the same node. Rows are the time
/// axis throughout the library, columns the feature axis. A scalar is 1x1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false);
  static Tensor ones(Index rows, Index cols, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index size() const { return node_->value.size(); }
  std::array<Index, 2> shape() const { return {rows(), cols()}; }

  const Matrix& value() const { return node_->value; }
  /// Writable storage, for optimizers and initializers working on leaves.
  Matrix& mutable_value() { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }
  bool has_grad() const { return node_->grad.size() != 0; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  void zero_grad();
  /// Drops the gradient buffer entirely (has_grad() becomes false).
  void clear_grad() { node_->grad.resize(0, 0); }

  /// Position of the producing op in execution order.
  std::uint64_t sequence() const { return node_->seq; }

  /// Accumulates d(this)/d(leaf) into every reachable leaf that requires grad.
  void backward() const;

  // Used by op implementations.
  static Tensor from_op(Matrix value, std::vector<Tensor> inputs,
                        std::function<void(detail::Node&)> backward);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Ops executed while a guard is alive do not record parents, so evaluation
/// does not retain intermediate buffers.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// The ordered record of differentiable ops reachable from a root, sorted by
/// execution order. backward() walks it last-to-first.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  /// Execution sequence numbers in the order backward visits them.
  std::vector<std::uint64_t> backward_order() const;
  void backward(const Tensor& root) const;

 private:
  std::vector<detail::Node*> nodes_;  // ascending seq
};

void backward(const Tensor& loss);

// Arithmetic. `b` may also be a 1xC row that is broadcast over rows, or 1x1.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, double s);
inline Tensor operator*(double s, const Tensor& a) { return a * s; }
Tensor operator-(const Tensor& a);
Tensor hadamard(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
/// Max-stabilised softmax along `axis` (0: down columns, 1: across rows).
Tensor softmax(const Tensor& x, int axis);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, Index begin, Index count);
Tensor slice_cols(const Tensor& x, Index begin, Index count);

/// Stride-1 moving average along rows with first/last-row replication so the
/// output keeps the input length. `kernel` must be odd and positive.
Tensor avg_pool_1d(const Tensor& x, Index kernel);

/// Inverted dropout: surviving entries are scaled by 1/(1-p).
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);

}  // namespace preformer
