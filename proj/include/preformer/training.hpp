#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "preformer/model.hpp"

namespace preformer {

struct TrainConfig {
  double lr0 = 1e-4;  // 0 freezes the parameters
  int epochs = 10;
  int batch_size = 32;
  int patience = 3;
  double lr_decay = 0.5;  // lr of epoch e (1-based) is lr0 * lr_decay^(e-1)
  double clip_norm = 5.0;  // global gradient norm cap; <= 0 disables
  std::uint64_t seed = 2021;

  void validate() const;
  double learning_rate(int epoch) const;
};

/// Mean of squared differences over all elements.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// Bias-corrected Adam moments for a fixed list of parameters.
struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const std::vector<Tensor>& params);
};

/// One in-place Adam update. Every parameter requiring grad must hold one.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr);

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

struct EpochRecord {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_mse = 0.0;
  bool stopped_early = false;
};

/// Mean normalized-scale MSE of eval-mode predictions over a dataset.
double dataset_mse(const Preformer& model, const WindowDataset& data);

/// Shuffled mini-batch training with early stopping on validation MSE. On
/// return `model` holds the parameters of the best validation epoch. When
/// `metrics_log` is given, one line per epoch is written to it.
TrainResult train(Preformer& model, const WindowDataset& train_data, const WindowDataset& val_data,
                  const TrainConfig& cfg, std::ostream* metrics_log = nullptr);

}  // namespace preformer
