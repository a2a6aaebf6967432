#include "preformer/tensor.hpp"

#include <algorithm>
#include <string>
#include <unordered_set>

#include "preformer/kernels.hpp"

namespace preformer {

namespace {

thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_next_seq = 1;

std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "," + std::to_string(m.cols()) + ")";
}

void accumulate(detail::Node& parent, const Matrix& g) {
  if (!parent.requires_grad) return;
  if (parent.grad.size() == 0) {
    parent.grad = g;
  } else {
    parent.grad += g;
  }
}

// Reduce a full-shape gradient to the shape of a broadcast operand.
Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1 && cols == g.cols()) return g.colwise().sum();
  throw ShapeMismatch("cannot reduce gradient " + shape_str(g));
}

enum class Broadcast { kSame, kRow, kScalar };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  throw ShapeMismatch(std::string(op) + " of " + shape_str(a) + " and " + shape_str(b));
}

Matrix apply_broadcast(const Matrix& a, const Matrix& b, Broadcast kind, double sign) {
  switch (kind) {
    case Broadcast::kSame:
      return a + sign * b;
    case Broadcast::kRow:
      return a.rowwise() + sign * b.row(0);
    case Broadcast::kScalar:
      return a.array() + sign * b(0, 0);
  }
  return a;
}

}  // namespace

Tensor::Tensor(Matrix value, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->seq = g_next_seq++;
}

Tensor Tensor::zeros(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

Tensor Tensor::ones(Index rows, Index cols, bool requires_grad) {
  return Tensor(Matrix::Ones(rows, cols), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(Matrix::Constant(1, 1, v), requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw NotScalar("item() on tensor " + shape_str(value()));
  return node_->value(0, 0);
}

void Tensor::zero_grad() {
  node_->grad = Matrix::Zero(rows(), cols());
}

Tensor Tensor::from_op(Matrix value, std::vector<Tensor> inputs,
                       std::function<void(detail::Node&)> backward) {
  Tensor out(std::move(value));
  out.node_->is_leaf = false;
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(inputs.size());
  for (auto& in : inputs) out.node_->parents.push_back(in.node_);
  out.node_->backward = std::move(backward);
  return out;
}

void Tensor::backward() const { preformer::backward(*this); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.requires_grad()) return tape;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{root.node().get()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    tape.nodes_.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq < b->seq; });
  return tape;
}

std::vector<std::uint64_t> Tape::backward_order() const {
  std::vector<std::uint64_t> order;
  order.reserve(nodes_.size());
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) order.push_back((*it)->seq);
  return order;
}

void Tape::backward(const Tensor& root) const {
  if (nodes_.empty()) return;
  // Interior gradients live only for the duration of one pass; leaves keep
  // theirs, so repeated passes accumulate.
  for (detail::Node* n : nodes_) {
    if (!n->is_leaf) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  }
  detail::Node* top = root.node().get();
  if (top->is_leaf) {
    accumulate(*top, Matrix::Ones(1, 1));
    return;
  }
  top->grad = Matrix::Ones(1, 1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->is_leaf && n->backward) n->backward(*n);
  }
  for (detail::Node* n : nodes_) {
    if (!n->is_leaf) n->grad.resize(0, 0);
  }
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw NotScalar("backward() needs a scalar loss, got " + shape_str(loss.value()));
  }
  Tape::record(loss).backward(loss);
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "add");
  const Index br = b.rows(), bc = b.cols();
  return Tensor::from_op(apply_broadcast(a.value(), b.value(), kind, 1.0), {a, b},
                         [br, bc](detail::Node& self) {
                           accumulate(*self.parents[0], self.grad);
                           if (self.parents[1]->requires_grad) {
                             accumulate(*self.parents[1], reduce_to(self.grad, br, bc));
                           }
                         });
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "sub");
  const Index br = b.rows(), bc = b.cols();
  return Tensor::from_op(apply_broadcast(a.value(), b.value(), kind, -1.0), {a, b},
                         [br, bc](detail::Node& self) {
                           accumulate(*self.parents[0], self.grad);
                           if (self.parents[1]->requires_grad) {
                             accumulate(*self.parents[1], -reduce_to(self.grad, br, bc));
                           }
                         });
}

Tensor operator*(const Tensor& a, double s) {
  return Tensor::from_op(a.value() * s, {a},
                         [s](detail::Node& self) { accumulate(*self.parents[0], self.grad * s); });
}

Tensor operator-(const Tensor& a) { return a * -1.0; }

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("hadamard of " + shape_str(a.value()) + " and " + shape_str(b.value()));
  }
  return Tensor::from_op(a.value().cwiseProduct(b.value()), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) accumulate(pb, self.grad.cwiseProduct(pa.value));
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeMismatch("matmul of " + shape_str(a.value()) + " and " + shape_str(b.value()));
  }
  Matrix out = a.value() * b.value();
  return Tensor::from_op(std::move(out), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, self.grad * pb.value.transpose());
    if (pb.requires_grad) accumulate(pb, pa.value.transpose() * self.grad);
  });
}

Tensor relu(const Tensor& x) {
  return Tensor::from_op(x.value().cwiseMax(0.0), {x}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    accumulate(p, (p.value.array() > 0.0).select(self.grad, 0.0));
  });
}

Tensor square(const Tensor& x) {
  return Tensor::from_op(x.value().array().square().matrix(), {x}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    accumulate(p, 2.0 * self.grad.cwiseProduct(p.value));
  });
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis != 0 && axis != 1) throw ShapeMismatch("softmax axis must be 0 or 1");
  Matrix out = axis == 1 ? softmax_rows(x.value())
                         : Matrix(softmax_rows(x.value().transpose()).transpose());
  return Tensor::from_op(std::move(out), {x}, [axis](detail::Node& self) {
    const Matrix& y = self.value;
    const Matrix gy = self.grad.cwiseProduct(y);
    Matrix gx;
    if (axis == 1) {
      gx = gy - y.cwiseProduct(gy.rowwise().sum().replicate(1, y.cols()));
    } else {
      gx = gy - y.cwiseProduct(gy.colwise().sum().replicate(y.rows(), 1));
    }
    accumulate(*self.parents[0], gx);
  });
}

Tensor sum(const Tensor& x) {
  const Index r = x.rows(), c = x.cols();
  return Tensor::from_op(Matrix::Constant(1, 1, x.value().sum()), {x}, [r, c](detail::Node& self) {
    accumulate(*self.parents[0], Matrix::Constant(r, c, self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& x) { return sum(x) * (1.0 / static_cast<double>(x.size())); }

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows of nothing");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeMismatch("concat_rows with differing column counts");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return Tensor::from_op(std::move(out), parts, [offsets](detail::Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      if (p.requires_grad) accumulate(p, self.grad.middleRows(offsets[i], p.value.rows()));
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
  Index cols = 0;
  const Index rows = parts.front().rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeMismatch("concat_cols with differing row counts");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return Tensor::from_op(std::move(out), parts, [offsets](detail::Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      if (p.requires_grad) accumulate(p, self.grad.middleCols(offsets[i], p.value.cols()));
    }
  });
}

Tensor slice_rows(const Tensor& x, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > x.rows()) {
    throw ShapeMismatch("slice_rows out of range");
  }
  return Tensor::from_op(x.value().middleRows(begin, count), {x},
                         [begin, count](detail::Node& self) {
                           auto& p = *self.parents[0];
                           Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
                           g.middleRows(begin, count) = self.grad;
                           accumulate(p, g);
                         });
}

Tensor slice_cols(const Tensor& x, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > x.cols()) {
    throw ShapeMismatch("slice_cols out of range");
  }
  return Tensor::from_op(x.value().middleCols(begin, count), {x},
                         [begin, count](detail::Node& self) {
                           auto& p = *self.parents[0];
                           Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
                           g.middleCols(begin, count) = self.grad;
                           accumulate(p, g);
                         });
}

Tensor avg_pool_1d(const Tensor& x, Index kernel) {
  Matrix out = moving_average(x.value(), kernel);
  return Tensor::from_op(std::move(out), {x}, [kernel](detail::Node& self) {
    accumulate(*self.parents[0], moving_average_adjoint(self.grad, kernel));
  });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : 0.0;
  Matrix out = x.value().cwiseProduct(mask);
  return Tensor::from_op(std::move(out), {x}, [mask = std::move(mask)](detail::Node& self) {
    accumulate(*self.parents[0], self.grad.cwiseProduct(mask));
  });
}

}  // namespace preformer
