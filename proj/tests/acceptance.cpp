// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "preformer/cli.hpp"
#include "preformer/decomposition.hpp"
#include "preformer/evalbench.hpp"
#include "preformer/segcorr.hpp"

using namespace preformer;
namespace fs = std::filesystem;

namespace {

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Single-head softmax attention with scores q.k / d, by loops.
Matrix naive_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  const double d = static_cast<double>(q.cols());
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  for (Index i = 0; i < q.rows(); ++i) {
    std::vector<double> s(static_cast<std::size_t>(k.rows()));
    double mx = -INFINITY;
    for (Index j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (Index c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      s[static_cast<std::size_t>(j)] = dot / d;
      mx = std::max(mx, s[static_cast<std::size_t>(j)]);
    }
    double z = 0.0;
    for (double& e : s) z += (e = std::exp(e - mx));
    for (Index j = 0; j < k.rows(); ++j) out.row(i) += s[static_cast<std::size_t>(j)] / z * v.row(j);
  }
  return out;
}

Outcome kernel_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<Index> len(1, 32), width(1, 16);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index lq = len(rng), lk = len(rng), d = width(rng);
    const Matrix q = random_matrix(lq, d, rng), k = random_matrix(lk, d, rng), v = random_matrix(lk, d, rng);
    const Matrix y = segment_correlation_forward<double>(q, k, v, 1, 1, false);
    worst = std::max(worst, (y - naive_attention(q, k, v)).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-10, "max abs diff " + fmt("%.3g", worst)};
}

Outcome multiscale_composition() {
  std::mt19937_64 rng(102);
  double worst = 0.0;
  for (Index L : {32, 96}) {
    for (Index l0 : {2, 4}) {
      SegCorrConfig cfg;
      cfg.d_model = 8;
      cfg.n_heads = 2;
      cfg.l0 = l0;
      const AttentionParams p = make_attention_params(8, rng);
      const Matrix x = random_matrix(L, 8, rng), mem = random_matrix(L, 8, rng);
      const Matrix y = mssc_forward(Tensor(x), Tensor(mem), p, cfg).value();

      const Matrix q = (x * p.w_q.value()).rowwise() + RowVector(p.b_q.value());
      const Matrix k = (mem * p.w_k.value()).rowwise() + RowVector(p.b_k.value());
      const Matrix v = (mem * p.w_v.value()).rowwise() + RowVector(p.b_v.value());
      const int l_max = static_cast<int>(std::floor(std::log2(static_cast<double>(L) / l0)));
      const double denom = std::ldexp(1.0, l_max + 1) - 1.0;
      Matrix fused = Matrix::Zero(L, 8);
      for (int l = 0; l <= l_max; ++l) {
        fused += std::ldexp(1.0, l) / denom *
                 segment_correlation_forward<double>(q, k, v, 2, l0 << l, false);
      }
      const Matrix expected = (fused * p.w_o.value()).rowwise() + RowVector(p.b_o.value());
      worst = std::max(worst, (y - expected).cwiseAbs().maxCoeff());
    }
  }
  return {worst < 1e-12, "max abs diff " + fmt("%.3g", worst)};
}

Outcome alpha_weights() {
  bool ok = true;
  for (int l_max = 0; l_max <= 6; ++l_max) {
    const auto w = scale_weights(l_max, 4);
    std::uint64_t num = 0;
    const std::uint64_t den = (std::uint64_t{1} << (l_max + 1)) - 1;
    ok &= static_cast<int>(w.size()) == l_max + 1;
    for (int l = 0; l <= l_max && ok; ++l) {
      const auto& s = w[static_cast<std::size_t>(l)];
      ok &= s.weight_denominator == den && s.weight_numerator == (std::uint64_t{1} << l);
      ok &= s.alpha() == std::ldexp(1.0, l) / static_cast<double>(den);
      num += s.weight_numerator;
    }
    ok &= num == den;
  }
  return {ok, "l_max 0..6 exact"};
}

Outcome predictive_routing() {
  bool ok = true;
  // One-hot correlations: query segments align with one key segment only.
  for (Index target = 0; target < 3 && ok; ++target) {
    const Index l = 2, n = 4;
    Matrix q = Matrix::Constant(n * l, 1, 1e3);
    Matrix k = Matrix::Constant(n * l, 1, -1e3);
    k.middleRows(target * l, l).setConstant(1e3);
    Matrix v(n * l, 1);
    for (Index i = 0; i < n * l; ++i) v(i, 0) = static_cast<double>(i + 1);
    const Matrix y = segment_correlation_forward<double>(q, k, v, 1, l, true);
    for (Index s = 0; s < n; ++s) ok &= y.middleRows(s * l, l) == v.middleRows((target + 1) * l, l);
  }
  std::mt19937_64 rng(104);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Index l = 1 + trial % 4, m = 3 + trial % 3;
    const Matrix q = random_matrix(l * m, 4, rng), k = random_matrix(l * (m + 1), 4, rng),
                 v = random_matrix(l * (m + 1), 4, rng);
    const Matrix base = segment_correlation_forward<double>(q, k, v, 2, l, true);
    for (Index j = 0; j < m; ++j) {
      Matrix q2 = q;
      q2.middleRows(j * l, l) += random_matrix(l, 4, rng);
      const Matrix y = segment_correlation_forward<double>(q2, k, v, 2, l, true);
      for (Index i = 0; i < m; ++i) {
        const bool changed = y.middleRows(i * l, l) != base.middleRows(i * l, l);
        ok &= changed == (i == (j + 1) % m);
      }
      ++checked;
    }
  }
  return {ok, std::to_string(checked) + " perturbations"};
}

Outcome gradient_suite() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.n_heads = 2;
  cfg.l0 = 2;
  cfg.e_layers = 1;
  cfg.d_layers = 1;
  cfg.input_len = 16;
  cfg.pred_len = 8;
  cfg.d_x = cfg.d_y = 2;
  cfg.decomp_kernel = 5;
  cfg.dropout = 0.0;
  Preformer model(cfg, 105);
  std::mt19937_64 rng(105);
  SeriesWindow w;
  w.enc_values = random_matrix(16, 2, rng);
  w.enc_cov = random_matrix(16, kCovariateCount, rng, 0.3);
  w.dec_cov = random_matrix(16, kCovariateCount, rng, 0.3);
  w.target = random_matrix(8, 2, rng);
  auto loss = [&] { return mean(square(model.forward(w) - Tensor(w.target))); };

  auto named = model.params().named();
  for (auto& [name, t] : named) t.zero_grad();
  backward(loss());
  // Step sized for the rounding noise on parameters whose gradient is exactly zero.
  const double h = 1e-4;
  double worst = 0.0;
  std::string where;
  NoGradGuard guard;
  for (auto& [name, t] : named) {
    Matrix& v = t.mutable_value();
    for (Index i = 0; i < v.size(); ++i) {
      const double saved = v.data()[i];
      v.data()[i] = saved + h;
      const double up = loss().item();
      v.data()[i] = saved - h;
      const double down = loss().item();
      v.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = t.grad().data()[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      if (rel > worst) {
        worst = rel;
        where = name;
      }
    }
  }
  return {worst < 1e-4, "max rel err " + fmt("%.3g", worst) + " (" + where + ", " +
                            std::to_string(model.params().count()) + " params)"};
}

Outcome complexity_bound() {
  std::mt19937_64 rng(106);
  bool ok = true;
  double ratio = 0.0;
  std::ostringstream detail;
  for (Index L : {64, 256, 1024}) {
    SegCorrConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.l0 = 4;
    const Matrix x = random_matrix(L, 16, rng);
    OpCounter multi, single, full;
    {
      NoGradGuard guard;
      multiscale_segment_correlation(Tensor(x), Tensor(x), Tensor(x), cfg, &multi);
      cfg.multiscale = false;
      multiscale_segment_correlation(Tensor(x), Tensor(x), Tensor(x), cfg, &single);
    }
    full_attention_forward<double>(x, x, x, 2, 1.0, &full);
    ok &= multi.mul_adds <= 2 * single.mul_adds && multi.mul_adds < full.mul_adds;
    ratio = static_cast<double>(multi.mul_adds) / static_cast<double>(full.mul_adds);
    detail << "L=" << L << " mssc/sc=" << fmt("%.3f", static_cast<double>(multi.mul_adds) / single.mul_adds)
           << " mssc/full=" << fmt("%.3f", ratio) << "; ";
  }
  ok &= ratio >= 0.3 && ratio <= 0.7;
  return {ok, detail.str()};
}

Outcome decomposition_identity() {
  std::mt19937_64 rng(107);
  std::uniform_int_distribution<Index> len(1, 200), feats(1, 5);
  const Index kernels[] = {3, 5, 7, 25};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix x = random_matrix(len(rng), feats(rng), rng, 10.0);
    const Decomposed d = decompose(Tensor(x), kernels[trial % 4]);
    worst = std::max(worst, (d.trend.value() + d.seasonal.value() - x).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-12, "max abs diff " + fmt("%.3g", worst)};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int cli(std::vector<std::string> args, std::string* captured = nullptr) {
  args.insert(args.begin(), "preformer");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (captured) *captured = out.str();
  if (code != 0) std::cerr << err.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome forecasting_quality() {
  TempDir dir("preformer_acceptance_c8");
  // Default model and training configuration on the default synthetic source.
  if (cli({"train", "--data", "synth:multi-sine", "--synth-len", "4000", "--input-len", "96",
           "--pred-len", "96", "--epochs", "10", "--out", dir.path.string()}) != 0) {
    return {false, "train command failed"};
  }
  const auto report = nlohmann::json::parse(slurp(dir.path / "report.json"));
  const double model = report["test"]["mse"].get<double>();
  double persistence = 0.0, seasonal = 0.0;
  for (const auto& b : report["baselines"]) {
    if (b["name"] == "persistence") persistence = b["mse"].get<double>();
    if (b["name"] == "seasonal-naive") seasonal = b["mse"].get<double>();
  }
  const double gain_p = 1.0 - model / persistence;
  const double gain_s = 1.0 - model / seasonal;
  return {gain_p >= 0.3 && gain_s >= 0.3,
          "mse " + fmt("%.4f", model) + " vs persistence " + fmt("%.4f", persistence) + " (" +
              fmt("%+.0f%%", 100 * gain_p) + "), seasonal-naive " + fmt("%.4f", seasonal) + " (" +
              fmt("%+.0f%%", 100 * gain_s) + "), epochs " +
              std::to_string(report["training"]["history"].size())};
}

// Desk protocol shared by the ablation and segment-length checks.
struct DeskRun {
  std::vector<AblationTable> tables;
};

DeskRun desk_runs() {
  DeskRun out;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const ExperimentData data =
        make_experiment_data(synth("trend-plus-season", 2000, seed), SplitScheme{}, 48, 24);
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.n_heads = 2;
    cfg.e_layers = 1;
    cfg.d_layers = 1;
    cfg.input_len = 48;
    cfg.pred_len = 24;
    cfg.d_x = cfg.d_y = 2;
    TrainConfig tc;
    tc.epochs = 10;
    tc.lr0 = 1e-3;
    tc.seed = seed;
    out.tables.push_back(ablate(cfg, tc, data,
                                {AblationMode::kMsPred, AblationMode::kOnlyMs, AblationMode::kOnlyPred},
                                {2, 4, 8}, seed));
  }
  return out;
}

double row_mse(const AblationTable& t, const std::string& label) {
  for (const auto& r : t.rows) {
    if (r.label == label) return r.report.mse;
  }
  return NAN;
}

Outcome ablation_direction(const DeskRun& runs) {
  int wins = 0;
  std::ostringstream detail;
  for (std::size_t s = 0; s < runs.tables.size(); ++s) {
    const auto& t = runs.tables[s];
    const double full = row_mse(t, "ms+pred"), ms = row_mse(t, "only-ms"), pred = row_mse(t, "only-pred");
    const bool win = full <= ms && full <= pred;
    wins += win;
    detail << "seed " << s + 1 << ": " << fmt("%.4f", full) << "/" << fmt("%.4f", ms) << "/"
           << fmt("%.4f", pred) << (win ? " win" : " loss") << "; ";
  }
  return {wins >= 2, "ms+pred/only-ms/only-pred " + detail.str() + std::to_string(wins) + "/3"};
}

Outcome segment_length_stability(const DeskRun& runs) {
  double with_ms = 0.0, without_ms = 0.0;
  std::ostringstream detail;
  for (std::size_t s = 0; s < runs.tables.size(); ++s) {
    const auto& t = runs.tables[s];
    with_ms += *t.sweep_std_multiscale;
    without_ms += *t.sweep_std_single_scale;
    detail << "seed " << s + 1 << ": " << fmt("%.3f", 1000 * *t.sweep_std_multiscale) << " vs "
           << fmt("%.3f", 1000 * *t.sweep_std_single_scale) << "; ";
  }
  with_ms /= static_cast<double>(runs.tables.size());
  without_ms /= static_cast<double>(runs.tables.size());
  return {with_ms <= without_ms, "std x1000 with/without multi-scale " + detail.str() + "mean " +
                                     fmt("%.3f", 1000 * with_ms) + " vs " + fmt("%.3f", 1000 * without_ms)};
}

Outcome reproducibility() {
  TempDir a("preformer_acceptance_c11a"), b("preformer_acceptance_c11b");
  auto args = [](const fs::path& out) {
    return std::vector<std::string>{"train", "--data", "synth:trend-plus-season", "--synth-len", "1200",
                                    "--input-len", "48", "--pred-len", "24", "--d-model", "16",
                                    "--d-ff", "32", "--heads", "2", "--epochs", "3", "--lr", "1e-3",
                                    "--seed", "11", "--out", out.string()};
  };
  if (cli(args(a.path)) != 0 || cli(args(b.path)) != 0) return {false, "train command failed"};
  const std::string ca = slurp(a.path / "checkpoint.bin"), cb = slurp(b.path / "checkpoint.bin");
  const std::string la = slurp(a.path / "metrics.log"), lb = slurp(b.path / "metrics.log");
  const bool ok = !ca.empty() && !la.empty() && ca == cb && la == lb;
  return {ok, "checkpoint " + std::to_string(ca.size()) + " bytes, log " + std::to_string(la.size()) +
                  " bytes, " + (ok ? "identical" : "different")};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::printf("%s %2d %-28s %8.2fs  %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "kernel-oracle", kernel_oracle);
  report(2, "multiscale-composition", multiscale_composition);
  report(3, "alpha-weights", alpha_weights);
  report(4, "predictive-routing", predictive_routing);
  report(5, "gradient-suite", gradient_suite);
  report(6, "complexity-bound", complexity_bound);
  report(7, "decomposition-identity", decomposition_identity);
  report(8, "forecasting-quality", forecasting_quality);

  const auto t0 = std::chrono::steady_clock::now();
  DeskRun runs;
  try {
    runs = desk_runs();
  } catch (const std::exception& e) {
    std::printf("desk runs failed: %s\n", e.what());
  }
  const double desk_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("     desk ablation runs (3 seeds, 9 models each) %.1fs\n", desk_secs);
  if (runs.tables.size() == 3) {
    report(9, "ablation-direction", [&] { return ablation_direction(runs); });
    report(10, "segment-length-stability", [&] { return segment_length_stability(runs); });
  } else {
    report(9, "ablation-direction", [] { return Outcome{false, "no desk runs"}; });
    report(10, "segment-length-stability", [] { return Outcome{false, "no desk runs"}; });
  }
  report(11, "reproducibility", reproducibility);

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
