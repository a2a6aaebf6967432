#include "preformer/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

namespace preformer {

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0)) throw InvalidConfig("lr0 must be non-negative");
  if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
  if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  if (patience < 1) throw InvalidConfig("patience must be >= 1");
  if (!(lr_decay > 0.0)) throw InvalidConfig("lr_decay must be positive");
}

double TrainConfig::learning_rate(int epoch) const {
  return lr0 * std::pow(lr_decay, epoch - 1);
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) throw ShapeMismatch("mse_loss of differently shaped tensors");
  return mean(square(pred - target));
}

AdamState AdamState::for_params(const std::vector<Tensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.first_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
    s.second_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  return s;
}

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr) {
  if (state.first_moment.size() != params.size()) {
    throw ConfigMismatch("optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].requires_grad() && !params[i].has_grad()) {
      throw MissingGrad("parameter " + std::to_string(i) + " has no gradient");
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].requires_grad()) continue;
    const Matrix& g = params[i].grad();
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
    params[i].mutable_value().array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  }
}

double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.has_grad()) sq += p.grad().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& p : params) {
      if (p.has_grad()) p.mutable_grad() *= scale;
    }
  }
  return norm;
}

double dataset_mse(const Preformer& model, const WindowDataset& data) {
  if (data.size() == 0) throw EmptyDataset("no windows to evaluate");
  double total = 0.0;
  for (Index i = 0; i < data.size(); ++i) {
    const SeriesWindow w = data.at(i);
    total += (model.predict(w) - w.target).squaredNorm() / static_cast<double>(w.target.size());
  }
  return total / static_cast<double>(data.size());
}

TrainResult train(Preformer& model, const WindowDataset& train_data, const WindowDataset& val_data,
                  const TrainConfig& cfg, std::ostream* metrics_log) {
  cfg.validate();
  if (train_data.size() == 0) throw EmptyDataset("training split has no windows");
  if (val_data.size() == 0) throw EmptyDataset("validation split has no windows");

  std::mt19937_64 rng(cfg.seed);
  std::vector<Tensor> params = model.params().tensors();
  AdamState adam = AdamState::for_params(params);

  std::vector<Index> order(static_cast<std::size_t>(train_data.size()));
  std::iota(order.begin(), order.end(), Index{0});

  TrainResult result;
  std::vector<Matrix> best = model.snapshot();
  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate(epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      for (auto& p : params) p.zero_grad();
      for (std::size_t b = start; b < stop; ++b) {
        const SeriesWindow w = train_data.at(order[b]);
        ForwardContext ctx;
        ctx.mode = Mode::kTrain;
        ctx.rng = &rng;
        const Tensor loss = mse_loss(model.forward(w, ctx), Tensor(w.target));
        epoch_loss += loss.item();
        backward(loss * inv_batch);
      }
      clip_grad_norm(params, cfg.clip_norm);
      adam_step(params, adam, lr);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_mse = epoch_loss / static_cast<double>(order.size());
    rec.val_mse = dataset_mse(model, val_data);
    result.history.push_back(rec);
    if (metrics_log) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch=%d train_mse=%.17g val_mse=%.17g lr=%.17g\n",
                    rec.epoch, rec.train_mse, rec.val_mse, rec.lr);
      *metrics_log << line << std::flush;
    }

    if (rec.val_mse < best_val) {
      best_val = rec.val_mse;
      best = model.snapshot();
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      result.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  for (auto& p : params) p.clear_grad();
  model.restore(best);
  result.best_val_mse = best_val;
  return result;
}

}  // namespace preformer
