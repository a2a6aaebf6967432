#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "preformer/model.hpp"
#include "preformer/training.hpp"

namespace preformer {

/// Error metrics on the original (denormalized) scale, averaged over every
/// window, step and variable. horizon_* hold the same averages per step.
struct EvalReport {
  std::string name;
  double mse = 0.0;
  double mae = 0.0;
  std::vector<double> horizon_mse;
  std::vector<double> horizon_mae;
  std::string config_fingerprint;
  std::uint64_t data_fingerprint = 0;
  Index windows = 0;
};

/// Maps a normalized window to a normalized (pred_len x d_y) forecast.
using Forecaster = std::function<Matrix(const SeriesWindow&)>;

/// Metrics from paired predictions and truths already on the original scale.
EvalReport evaluate_predictions(const std::vector<Matrix>& predictions,
                                const std::vector<Matrix>& truths);

EvalReport evaluate(const Forecaster& forecaster, const WindowDataset& windows);
EvalReport evaluate(const Preformer& model, const WindowDataset& windows);

enum class Baseline { kPersistence, kSeasonalNaive, kHistoricalMean };

std::string to_string(Baseline b);

/// persistence repeats the last encoder row; seasonal-naive repeats the last
/// `period` rows; historical-mean repeats the encoder-window mean.
Forecaster make_baseline(Baseline kind, Index pred_len, Index period = 24);

/// All three baselines, evaluated exactly like a model.
std::vector<EvalReport> baselines(const WindowDataset& windows, Index period = 24);

std::string config_fingerprint(const ModelConfig& cfg);

/// Plot data: one row per forecast step with <name>_mse and <name>_mae
/// columns for every report. Reports must share a horizon.
void write_horizon_csv(std::ostream& out, const std::vector<EvalReport>& reports);

// Ablation runner.

enum class AblationMode { kMsPred, kOnlyPred, kOnlyMs, kNone };

AblationMode parse_ablation_mode(const std::string& text);
std::string to_string(AblationMode m);

struct ExperimentData {
  WindowDataset train;
  WindowDataset val;
  WindowDataset test;
};

/// Normalizer fitted on train, then windows for the three splits.
ExperimentData make_experiment_data(const SeriesTable& table, const SplitScheme& scheme,
                                    Index input_len, Index pred_len);

struct AblationRow {
  std::string label;
  Index l0 = 0;
  bool multiscale = true;
  bool predictive = true;
  EvalReport report;
  TrainResult training;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  /// Population std of test MSE over the L0 sweep, with and without the
  /// multi-scale structure; set only when a sweep ran.
  std::optional<double> sweep_std_multiscale;
  std::optional<double> sweep_std_single_scale;
};

/// Trains and evaluates one model per mode, then (if `l0_sweep` is non-empty)
/// one per L0 value with and without multi-scale. Every run uses the same
/// data and seeds.
AblationTable ablate(const ModelConfig& base, const TrainConfig& train_cfg,
                     const ExperimentData& data, const std::vector<AblationMode>& modes,
                     const std::vector<Index>& l0_sweep = {}, std::uint64_t model_seed = 1);

void write_ablation_csv(std::ostream& out, const AblationTable& table);
std::string ablation_json(const AblationTable& table);

double population_std(const std::vector<double>& values);

// Attention efficiency harness.

enum class Mechanism { kFullAttention, kSegmentCorrelation, kMultiScale };

Mechanism parse_mechanism(const std::string& text);
std::string to_string(Mechanism m);

struct BenchConfig {
  std::vector<Mechanism> mechanisms{Mechanism::kFullAttention, Mechanism::kSegmentCorrelation,
                                    Mechanism::kMultiScale};
  std::vector<Index> lengths{96, 192, 336, 720};
  int reps = 1000;
  Index d_model = 64;
  Index n_heads = 8;
  Index l0 = 4;
  std::uint64_t workspace_cap_bytes = std::uint64_t{1} << 30;
  std::uint64_t seed = 7;
};

struct BenchRecord {
  std::string mechanism;
  Index length = 0;
  std::uint64_t mul_adds = 0;
  double wall_mean_s = 0.0;
  double wall_std_s = 0.0;
  std::uint64_t peak_workspace_bytes = 0;
  int reps = 0;
  bool out_of_memory = false;
};

/// Multiply-accumulates and workspace of one self-attention pass, computed
/// without running the kernel.
BenchRecord estimate_mechanism(Mechanism m, Index length, const BenchConfig& cfg);

/// Runs each mechanism `reps` times per length on fixed random inputs.
/// Mechanisms whose workspace would exceed the cap are reported as
/// out-of-memory and not run.
std::vector<BenchRecord> bench_attention(const BenchConfig& cfg);

void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records);
std::string bench_json(const std::vector<BenchRecord>& records);

}  // namespace preformer
