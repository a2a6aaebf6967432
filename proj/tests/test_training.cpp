#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "preformer/training.hpp"
#include "test_util.hpp"

using namespace preformer;
using preformer::testing::random_matrix;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.n_heads = 2;
  cfg.l0 = 2;
  cfg.e_layers = 1;
  cfg.d_layers = 1;
  cfg.input_len = 16;
  cfg.pred_len = 8;
  cfg.d_x = 3;
  cfg.d_y = 3;
  cfg.decomp_kernel = 5;
  return cfg;
}

struct SmallData {
  WindowDataset train, val;
};

SmallData small_data() {
  const SeriesTable t = synth("multi-sine", 400, 3);
  const SplitTables s = split(t, SplitScheme{}, 24);
  const Normalizer n = Normalizer::fit(s.train.values);
  return {WindowDataset(s.train, 16, 8, n), WindowDataset(s.val, 16, 8, n)};
}

}  // namespace

TEST(MseLoss, KnownValue) {
  const Tensor a(Matrix{{1.0, 2.0, 3.0}});
  const Tensor b(Matrix{{1.0, 2.0, 4.0}});
  EXPECT_DOUBLE_EQ(mse_loss(a, b).item(), 1.0 / 3.0);
}

TEST(MseLoss, MatchesLoop) {
  std::mt19937_64 rng(1);
  const Matrix p = random_matrix(7, 3, rng);
  const Matrix t = random_matrix(7, 3, rng);
  double acc = 0.0;
  for (Index i = 0; i < 7; ++i) {
    for (Index j = 0; j < 3; ++j) acc += (p(i, j) - t(i, j)) * (p(i, j) - t(i, j));
  }
  EXPECT_NEAR(mse_loss(Tensor(p), Tensor(t)).item(), acc / 21.0, 1e-14);
  EXPECT_THROW(mse_loss(Tensor(p), Tensor(Matrix(t.topRows(6)))), ShapeMismatch);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::mt19937_64 rng(2);
  std::vector<Tensor> params{Tensor(random_matrix(3, 2, rng), true)};
  const Matrix before = params[0].value();
  params[0].mutable_grad() = Matrix::Zero(3, 2);
  AdamState st = AdamState::for_params(params);
  adam_step(params, st, 0.1);
  EXPECT_EQ(params[0].value(), before);
}

TEST(Adam, FirstStepHasLearningRateMagnitude) {
  std::vector<Tensor> params{Tensor(Matrix{{1.0, -2.0}}, true)};
  params[0].mutable_grad() = Matrix{{0.5, -3.0}};
  AdamState st = AdamState::for_params(params);
  adam_step(params, st, 0.1);
  EXPECT_NEAR(params[0].value()(0, 0), 0.9, 1e-6);
  EXPECT_NEAR(params[0].value()(0, 1), -1.9, 1e-6);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, DeterministicSequence) {
  auto run = [] {
    std::mt19937_64 rng(3);
    std::vector<Tensor> params{Tensor(random_matrix(4, 4, rng), true)};
    AdamState st = AdamState::for_params(params);
    for (int s = 0; s < 5; ++s) {
      params[0].mutable_grad() = random_matrix(4, 4, rng);
      adam_step(params, st, 0.01);
    }
    return Matrix(params[0].value());
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, MissingGradient) {
  std::vector<Tensor> params{Tensor(Matrix::Ones(2, 2), true)};
  AdamState st = AdamState::for_params(params);
  EXPECT_THROW(adam_step(params, st, 0.1), MissingGrad);
}

TEST(Adam, DescendsQuadraticBowl) {
  std::vector<Tensor> params{Tensor(Matrix{{3.0, -4.0}}, true)};
  AdamState st = AdamState::for_params(params);
  double last = 25.0;
  for (int s = 0; s < 200; ++s) {
    params[0].zero_grad();
    const Tensor loss = sum(square(params[0]));
    if (s > 0) {
      EXPECT_LT(loss.item(), last);
    }
    last = loss.item();
    backward(loss);
    adam_step(params, st, 1e-3);
  }
  EXPECT_LT(last, 25.0);
}

TEST(ClipGradNorm, RescalesOnlyAboveCap) {
  std::vector<Tensor> params{Tensor(Matrix::Zero(1, 2), true), Tensor(Matrix::Zero(1, 1), true)};
  params[0].mutable_grad() = Matrix{{3.0, 0.0}};
  params[1].mutable_grad() = Matrix{{4.0}};
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(params[1].grad()(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(params[0].grad()(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(params[1].grad()(0, 0), 0.8, 1e-15);
}

TEST(TrainConfig, HalvingSchedule) {
  TrainConfig cfg;
  cfg.lr0 = 1e-3;
  EXPECT_DOUBLE_EQ(cfg.learning_rate(1), 1e-3);
  EXPECT_DOUBLE_EQ(cfg.learning_rate(3), 2.5e-4);
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), InvalidConfig);
}

TEST(Train, LossDecreases) {
  const SmallData d = small_data();
  Preformer model(small_config(), 1);
  TrainConfig cfg;
  cfg.lr0 = 1e-3;
  cfg.epochs = 3;
  cfg.patience = 10;
  const double before = dataset_mse(model, d.train);
  const TrainResult r = train(model, d.train, d.val, cfg);
  ASSERT_EQ(r.history.size(), 3u);
  EXPECT_LT(r.history.back().train_mse, r.history.front().train_mse);
  EXPECT_LT(dataset_mse(model, d.train), before);
}

TEST(Train, FrozenLearningRateStopsEarly) {
  const SmallData d = small_data();
  Preformer model(small_config(), 1);
  const std::vector<Matrix> start = model.snapshot();
  TrainConfig cfg;
  cfg.lr0 = 0.0;
  cfg.epochs = 10;
  cfg.patience = 1;
  const TrainResult r = train(model, d.train, d.val, cfg);
  EXPECT_EQ(r.history.size(), 2u);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(model.snapshot(), start);
}

TEST(Train, RestoresBestEpochAndIsReproducible) {
  const SmallData d = small_data();
  TrainConfig cfg;
  cfg.lr0 = 3e-3;
  cfg.epochs = 4;
  cfg.patience = 4;
  Preformer a(small_config(), 5);
  Preformer b(small_config(), 5);
  std::ostringstream log_a, log_b;
  const TrainResult ra = train(a, d.train, d.val, cfg, &log_a);
  const TrainResult rb = train(b, d.train, d.val, cfg, &log_b);

  double best = ra.history.front().val_mse;
  for (const EpochRecord& e : ra.history) best = std::min(best, e.val_mse);
  EXPECT_EQ(ra.best_val_mse, best);
  EXPECT_EQ(ra.history[static_cast<std::size_t>(ra.best_epoch - 1)].val_mse, best);
  EXPECT_EQ(dataset_mse(a, d.val), best);

  EXPECT_EQ(log_a.str(), log_b.str());
  EXPECT_EQ(a.snapshot(), b.snapshot());
}

TEST(Train, DatasetsMustHoldWindows) {
  const SmallData d = small_data();
  EXPECT_THROW(WindowDataset(d.train.table().rows(0, 23), 16, 8, d.train.normalizer()), TooShort);
  EXPECT_THROW(Normalizer::fit(Matrix(0, 3)), EmptyDataset);
}
