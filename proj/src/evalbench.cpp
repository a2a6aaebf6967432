#include "preformer/evalbench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace preformer {

EvalReport evaluate_predictions(const std::vector<Matrix>& predictions,
                                const std::vector<Matrix>& truths) {
  if (predictions.empty()) throw EmptyDataset("no predictions to evaluate");
  if (predictions.size() != truths.size()) throw ShapeMismatch("prediction/truth count differs");
  const Index steps = predictions.front().rows();
  const Index vars = predictions.front().cols();
  EvalReport r;
  r.windows = static_cast<Index>(predictions.size());
  r.horizon_mse.assign(static_cast<std::size_t>(steps), 0.0);
  r.horizon_mae.assign(static_cast<std::size_t>(steps), 0.0);
  for (std::size_t w = 0; w < predictions.size(); ++w) {
    if (predictions[w].rows() != steps || predictions[w].cols() != vars ||
        truths[w].rows() != steps || truths[w].cols() != vars) {
      throw ShapeMismatch("prediction and truth shapes differ");
    }
    const Matrix diff = predictions[w] - truths[w];
    for (Index t = 0; t < steps; ++t) {
      r.horizon_mse[static_cast<std::size_t>(t)] += diff.row(t).squaredNorm();
      r.horizon_mae[static_cast<std::size_t>(t)] += diff.row(t).cwiseAbs().sum();
    }
  }
  const double per_step = static_cast<double>(predictions.size()) * static_cast<double>(vars);
  for (Index t = 0; t < steps; ++t) {
    auto& m = r.horizon_mse[static_cast<std::size_t>(t)];
    auto& a = r.horizon_mae[static_cast<std::size_t>(t)];
    r.mse += m;
    r.mae += a;
    m /= per_step;
    a /= per_step;
  }
  r.mse /= per_step * static_cast<double>(steps);
  r.mae /= per_step * static_cast<double>(steps);
  return r;
}

EvalReport evaluate(const Forecaster& forecaster, const WindowDataset& windows) {
  if (windows.size() == 0) throw EmptyDataset("no test windows");
  std::vector<Matrix> preds, truths;
  preds.reserve(static_cast<std::size_t>(windows.size()));
  truths.reserve(static_cast<std::size_t>(windows.size()));
  const Normalizer& norm = windows.normalizer();
  for (Index i = 0; i < windows.size(); ++i) {
    const SeriesWindow w = windows.at(i);
    preds.push_back(norm.denormalize(forecaster(w)));
    truths.push_back(norm.denormalize(w.target));
  }
  EvalReport r = evaluate_predictions(preds, truths);
  r.data_fingerprint = windows.fingerprint();
  return r;
}

EvalReport evaluate(const Preformer& model, const WindowDataset& windows) {
  EvalReport r = evaluate([&model](const SeriesWindow& w) { return model.predict(w); }, windows);
  r.name = "preformer";
  r.config_fingerprint = config_fingerprint(model.config());
  return r;
}

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::kPersistence:
      return "persistence";
    case Baseline::kSeasonalNaive:
      return "seasonal-naive";
    case Baseline::kHistoricalMean:
      return "historical-mean";
  }
  return "?";
}

Forecaster make_baseline(Baseline kind, Index pred_len, Index period) {
  switch (kind) {
    case Baseline::kPersistence:
      return [pred_len](const SeriesWindow& w) -> Matrix {
        return w.enc_values.bottomRows(1).replicate(pred_len, 1);
      };
    case Baseline::kSeasonalNaive:
      if (period < 1) throw InvalidConfig("seasonal period must be positive");
      return [pred_len, period](const SeriesWindow& w) -> Matrix {
        if (period > w.enc_values.rows()) {
          throw InvalidConfig("seasonal period longer than the input window");
        }
        const Index first = w.enc_values.rows() - period;
        Matrix out(pred_len, w.enc_values.cols());
        for (Index h = 0; h < pred_len; ++h) out.row(h) = w.enc_values.row(first + h % period);
        return out;
      };
    case Baseline::kHistoricalMean:
      return [pred_len](const SeriesWindow& w) -> Matrix {
        return w.enc_values.colwise().mean().replicate(pred_len, 1);
      };
  }
  throw InvalidConfig("unknown baseline");
}

std::vector<EvalReport> baselines(const WindowDataset& windows, Index period) {
  std::vector<EvalReport> out;
  for (Baseline b : {Baseline::kPersistence, Baseline::kSeasonalNaive, Baseline::kHistoricalMean}) {
    EvalReport r = evaluate(make_baseline(b, windows.pred_len(), period), windows);
    r.name = to_string(b);
    r.config_fingerprint = b == Baseline::kSeasonalNaive ? "period=" + std::to_string(period) : "";
    out.push_back(std::move(r));
  }
  return out;
}

std::string config_fingerprint(const ModelConfig& c) {
  std::ostringstream s;
  s << "d_model=" << c.d_model << ";d_ff=" << c.d_ff << ";n_heads=" << c.n_heads << ";l0=" << c.l0
    << ";e_layers=" << c.e_layers << ";d_layers=" << c.d_layers << ";input_len=" << c.input_len
    << ";pred_len=" << c.pred_len << ";d_x=" << c.d_x << ";d_y=" << c.d_y << ";d_cov=" << c.d_cov
    << ";kernel=" << c.decomp_kernel << ";dropout=" << c.dropout
    << ";predictive=" << c.predictive << ";multiscale=" << c.multiscale
    << ";alpha=" << (c.alpha_order == AlphaOrder::kIncreasing ? "increasing" : "decreasing");
  return s.str();
}

AblationMode parse_ablation_mode(const std::string& text) {
  if (text == "ms+pred") return AblationMode::kMsPred;
  if (text == "only-pred") return AblationMode::kOnlyPred;
  if (text == "only-ms") return AblationMode::kOnlyMs;
  if (text == "none") return AblationMode::kNone;
  throw InvalidConfig("unknown ablation mode '" + text +
                      "' (expected ms+pred, only-pred, only-ms or none)");
}

std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::kMsPred:
      return "ms+pred";
    case AblationMode::kOnlyPred:
      return "only-pred";
    case AblationMode::kOnlyMs:
      return "only-ms";
    case AblationMode::kNone:
      return "none";
  }
  return "?";
}

ExperimentData make_experiment_data(const SeriesTable& table, const SplitScheme& scheme,
                                    Index input_len, Index pred_len) {
  const SplitTables parts = split(table, scheme, input_len + pred_len);
  const Normalizer norm = Normalizer::fit(parts.train.values);
  return {WindowDataset(parts.train, input_len, pred_len, norm),
          WindowDataset(parts.val, input_len, pred_len, norm),
          WindowDataset(parts.test, input_len, pred_len, norm)};
}

double population_std(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double m = 0.0;
  for (double v : values) m += v;
  m /= static_cast<double>(values.size());
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(values.size()));
}

namespace {

AblationRow run_variant(const std::string& label, ModelConfig cfg, const TrainConfig& train_cfg,
                        const ExperimentData& data, std::uint64_t model_seed) {
  Preformer model(cfg, model_seed);
  AblationRow row;
  row.label = label;
  row.l0 = cfg.l0;
  row.multiscale = cfg.multiscale;
  row.predictive = cfg.predictive;
  row.training = train(model, data.train, data.val, train_cfg);
  row.report = evaluate(model, data.test);
  row.report.name = label;
  return row;
}

}  // namespace

AblationTable ablate(const ModelConfig& base, const TrainConfig& train_cfg,
                     const ExperimentData& data, const std::vector<AblationMode>& modes,
                     const std::vector<Index>& l0_sweep, std::uint64_t model_seed) {
  AblationTable table;
  for (AblationMode mode : modes) {
    ModelConfig cfg = base;
    cfg.multiscale = mode == AblationMode::kMsPred || mode == AblationMode::kOnlyMs;
    cfg.predictive = mode == AblationMode::kMsPred || mode == AblationMode::kOnlyPred;
    table.rows.push_back(run_variant(to_string(mode), cfg, train_cfg, data, model_seed));
  }
  if (!l0_sweep.empty()) {
    std::vector<double> with_ms, without_ms;
    for (bool ms : {true, false}) {
      for (Index l0 : l0_sweep) {
        ModelConfig cfg = base;
        cfg.multiscale = ms;
        cfg.l0 = l0;
        const std::string label = std::string(ms ? "sweep-ms" : "sweep-single") + "-l0=" +
                                  std::to_string(l0);
        table.rows.push_back(run_variant(label, cfg, train_cfg, data, model_seed));
        (ms ? with_ms : without_ms).push_back(table.rows.back().report.mse);
      }
    }
    table.sweep_std_multiscale = population_std(with_ms);
    table.sweep_std_single_scale = population_std(without_ms);
  }
  return table;
}

void write_horizon_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
  if (reports.empty()) return;
  const std::size_t steps = reports.front().horizon_mse.size();
  out << "step";
  for (const auto& r : reports) {
    if (r.horizon_mse.size() != steps || r.horizon_mae.size() != steps) {
      throw ShapeMismatch("reports have different horizons");
    }
    out << "," << r.name << "_mse," << r.name << "_mae";
  }
  out << "\n";
  char buf[64];
  for (std::size_t h = 0; h < steps; ++h) {
    out << h + 1;
    for (const auto& r : reports) {
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g", r.horizon_mse[h], r.horizon_mae[h]);
      out << buf;
    }
    out << "\n";
  }
}

void write_ablation_csv(std::ostream& out, const AblationTable& table) {
  out << "label,l0,multiscale,predictive,mse,mae,best_epoch,epochs_run,data_fingerprint\n";
  char buf[320];
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof buf, "%s,%lld,%d,%d,%.17g,%.17g,%d,%zu,%016llx\n", r.label.c_str(),
                  static_cast<long long>(r.l0), r.multiscale ? 1 : 0, r.predictive ? 1 : 0,
                  r.report.mse, r.report.mae, r.training.best_epoch, r.training.history.size(),
                  static_cast<unsigned long long>(r.report.data_fingerprint));
    out << buf;
  }
}

std::string ablation_json(const AblationTable& table) {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : table.rows) {
    j["rows"].push_back({{"label", r.label},
                         {"l0", r.l0},
                         {"multiscale", r.multiscale},
                         {"predictive", r.predictive},
                         {"mse", r.report.mse},
                         {"mae", r.report.mae},
                         {"best_epoch", r.training.best_epoch},
                         {"data_fingerprint", r.report.data_fingerprint}});
  }
  if (table.sweep_std_multiscale) {
    j["sweep_std_multiscale_x1000"] = *table.sweep_std_multiscale * 1000.0;
    j["sweep_std_single_scale_x1000"] = *table.sweep_std_single_scale * 1000.0;
  }
  return j.dump(2);
}

Mechanism parse_mechanism(const std::string& text) {
  if (text == "full") return Mechanism::kFullAttention;
  if (text == "sc") return Mechanism::kSegmentCorrelation;
  if (text == "mssc") return Mechanism::kMultiScale;
  throw InvalidConfig("unknown mechanism '" + text + "' (expected full, sc or mssc)");
}

std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::kFullAttention:
      return "full";
    case Mechanism::kSegmentCorrelation:
      return "sc";
    case Mechanism::kMultiScale:
      return "mssc";
  }
  return "?";
}

namespace {

SegCorrConfig bench_segcorr(const BenchConfig& cfg, bool multiscale) {
  SegCorrConfig s;
  s.l0 = cfg.l0;
  s.d_model = cfg.d_model;
  s.n_heads = cfg.n_heads;
  s.predictive = false;
  s.multiscale = multiscale;
  return s;
}

}  // namespace

BenchRecord estimate_mechanism(Mechanism m, Index length, const BenchConfig& cfg) {
  BenchRecord r;
  r.mechanism = to_string(m);
  r.length = length;
  r.reps = cfg.reps;
  if (m == Mechanism::kFullAttention) {
    r.mul_adds = 2ULL * static_cast<std::uint64_t>(length * length * cfg.d_model);
    r.peak_workspace_bytes = full_attention_workspace<double>(length, length, cfg.d_model, cfg.n_heads);
    return r;
  }
  const auto plan = scale_plan(length, length, bench_segcorr(cfg, m == Mechanism::kMultiScale));
  for (const auto& level : plan) {
    r.mul_adds += segment_correlation_mul_adds(length, length, cfg.d_model, level.segment_length, false);
    r.peak_workspace_bytes = std::max(
        r.peak_workspace_bytes, segment_correlation_workspace<double>(length, length, cfg.d_model,
                                                                      cfg.n_heads,
                                                                      level.segment_length, false));
  }
  return r;
}

std::vector<BenchRecord> bench_attention(const BenchConfig& cfg) {
  if (cfg.reps < 1) throw InvalidConfig("reps must be >= 1");
  std::vector<BenchRecord> out;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Index length : cfg.lengths) {
    Matrix q(length, cfg.d_model), k(length, cfg.d_model), v(length, cfg.d_model);
    for (Matrix* m : {&q, &k, &v}) {
      for (Index i = 0; i < m->size(); ++i) m->data()[i] = dist(rng);
    }
    for (Mechanism mech : cfg.mechanisms) {
      BenchRecord rec = estimate_mechanism(mech, length, cfg);
      if (rec.peak_workspace_bytes > cfg.workspace_cap_bytes) {
        rec.out_of_memory = true;
        out.push_back(rec);
        continue;
      }
      const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_model / cfg.n_heads));
      std::vector<double> times;
      OpCounter counter;
      for (int rep = 0; rep < cfg.reps; ++rep) {
        OpCounter c;
        const auto t0 = std::chrono::steady_clock::now();
        Matrix y;
        switch (mech) {
          case Mechanism::kFullAttention:
            y = full_attention_forward<double>(q, k, v, cfg.n_heads, scale, &c);
            break;
          case Mechanism::kSegmentCorrelation:
            y = segment_correlation_forward<double>(q, k, v, cfg.n_heads, cfg.l0, false, &c);
            break;
          case Mechanism::kMultiScale: {
            const auto plan = scale_plan(length, length, bench_segcorr(cfg, true));
            y = Matrix::Zero(length, cfg.d_model);
            for (const auto& level : plan) {
              y += level.alpha() * segment_correlation_forward<double>(q, k, v, cfg.n_heads,
                                                                       level.segment_length, false, &c);
            }
            break;
          }
        }
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
        counter = c;
      }
      rec.mul_adds = counter.mul_adds;
      rec.peak_workspace_bytes = counter.peak_workspace_bytes;
      double mean = 0.0;
      for (double t : times) mean += t;
      mean /= static_cast<double>(times.size());
      rec.wall_mean_s = mean;
      rec.wall_std_s = population_std(times);
      out.push_back(rec);
    }
  }
  return out;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
  out << "mechanism,length,mul_adds,wall_mean_s,wall_std_s,peak_workspace_bytes,reps,out_of_memory\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%s,%lld,%llu,%.9g,%.9g,%llu,%d,%d\n", r.mechanism.c_str(),
                  static_cast<long long>(r.length), static_cast<unsigned long long>(r.mul_adds),
                  r.wall_mean_s, r.wall_std_s,
                  static_cast<unsigned long long>(r.peak_workspace_bytes), r.reps,
                  r.out_of_memory ? 1 : 0);
    out << buf;
  }
}

std::string bench_json(const std::vector<BenchRecord>& records) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : records) {
    j.push_back({{"mechanism", r.mechanism},
                 {"length", r.length},
                 {"mul_adds", r.mul_adds},
                 {"wall_mean_s", r.wall_mean_s},
                 {"wall_std_s", r.wall_std_s},
                 {"peak_workspace_bytes", r.peak_workspace_bytes},
                 {"reps", r.reps},
                 {"out_of_memory", r.out_of_memory}});
  }
  return j.dump(2);
}

}  // namespace preformer
