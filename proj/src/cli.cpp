#include "preformer/cli.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "preformer/checkpoint.hpp"

namespace preformer {

namespace fs = std::filesystem;
using nlohmann::json;

std::string default_out_dir() {
  const char* env = std::getenv("PREFORMER_OUT_DIR");
  return env && *env ? env : "preformer-out";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

// Shortest text that reads back as the same double.
std::string num(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T v{};
  in >> v;
  if (in.fail() || !in.eof()) throw InvalidConfig("bad value '" + value + "' for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw InvalidConfig("bad boolean '" + value + "' for " + key);
}

AlphaOrder parse_alpha_order(const std::string& value) {
  if (value == "increasing") return AlphaOrder::kIncreasing;
  if (value == "decreasing") return AlphaOrder::kDecreasing;
  throw InvalidConfig("alpha_order must be increasing or decreasing");
}

std::string to_string(AlphaOrder o) {
  return o == AlphaOrder::kIncreasing ? "increasing" : "decreasing";
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("line " + std::to_string(line_no) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("line " + std::to_string(line_no) + ": expected key = value");
    }
    if (section.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": key outside of a section");
    }
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '-', '_');
    out[section + "." + key] = trim(line.substr(eq + 1));
  }
  return out;
}

void apply_config(RunConfig& cfg, const std::map<std::string, std::string>& entries) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto index = [](Index& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_number<Index>(k, v); };
  };
  auto integer = [](int& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_number<int>(k, v); };
  };
  auto real = [](double& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_number<double>(k, v); };
  };
  auto text = [](std::string& dst) -> Setter {
    return [&dst](const std::string&, const std::string& v) { dst = v; };
  };
  auto flag = [](bool& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_bool(k, v); };
  };
  ModelConfig& m = cfg.model;
  TrainConfig& t = cfg.train;
  const std::map<std::string, Setter> setters{
      {"model.d_model", index(m.d_model)},
      {"model.d_ff", index(m.d_ff)},
      {"model.n_heads", index(m.n_heads)},
      {"model.l0", index(m.l0)},
      {"model.e_layers", index(m.e_layers)},
      {"model.d_layers", index(m.d_layers)},
      {"model.input_len", index(m.input_len)},
      {"model.pred_len", index(m.pred_len)},
      {"model.decomp_kernel", index(m.decomp_kernel)},
      {"model.dropout", real(m.dropout)},
      {"model.predictive", flag(m.predictive)},
      {"model.multiscale", flag(m.multiscale)},
      {"model.alpha_order",
       [&m](const std::string&, const std::string& v) { m.alpha_order = parse_alpha_order(v); }},
      {"train.lr", real(t.lr0)},
      {"train.epochs", integer(t.epochs)},
      {"train.batch_size", integer(t.batch_size)},
      {"train.patience", integer(t.patience)},
      {"train.lr_decay", real(t.lr_decay)},
      {"train.clip_norm", real(t.clip_norm)},
      {"data.source", text(cfg.data)},
      {"data.columns",
       [&cfg](const std::string&, const std::string& v) { cfg.columns = split_list(v); }},
      {"data.timestamp_column", text(cfg.timestamp_column)},
      {"data.task", text(cfg.task)},
      {"data.target", text(cfg.target)},
      {"data.split", text(cfg.split)},
      {"data.synth_len", index(cfg.synth_len)},
      {"data.period", index(cfg.period)},
      {"run.out_dir", text(cfg.out_dir)},
      {"run.seed",
       [&cfg](const std::string& k, const std::string& v) {
         cfg.seed = parse_number<std::uint64_t>(k, v);
       }},
  };
  for (const auto& [key, value] : entries) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw InvalidConfig("unknown config key " + key);
    it->second(key, value);
  }
}

std::string render_config(const RunConfig& cfg) {
  const ModelConfig& m = cfg.model;
  const TrainConfig& t = cfg.train;
  std::ostringstream s;
  s << "[model]\n"
    << "d_model = " << m.d_model << "\n"
    << "d_ff = " << m.d_ff << "\n"
    << "n_heads = " << m.n_heads << "\n"
    << "l0 = " << m.l0 << "\n"
    << "e_layers = " << m.e_layers << "\n"
    << "d_layers = " << m.d_layers << "\n"
    << "input_len = " << m.input_len << "\n"
    << "pred_len = " << m.pred_len << "\n"
    << "decomp_kernel = " << m.decomp_kernel << "\n"
    << "dropout = " << num(m.dropout) << "\n"
    << "predictive = " << (m.predictive ? "true" : "false") << "\n"
    << "multiscale = " << (m.multiscale ? "true" : "false") << "\n"
    << "alpha_order = " << to_string(m.alpha_order) << "\n"
    << "\n[train]\n"
    << "lr = " << num(t.lr0) << "\n"
    << "epochs = " << t.epochs << "\n"
    << "batch_size = " << t.batch_size << "\n"
    << "patience = " << t.patience << "\n"
    << "lr_decay = " << num(t.lr_decay) << "\n"
    << "clip_norm = " << num(t.clip_norm) << "\n"
    << "\n[data]\n"
    << "source = " << cfg.data << "\n"
    << "columns = " << join(cfg.columns) << "\n"
    << "timestamp_column = " << cfg.timestamp_column << "\n"
    << "task = " << cfg.task << "\n"
    << "target = " << cfg.target << "\n"
    << "split = " << cfg.split << "\n"
    << "synth_len = " << cfg.synth_len << "\n"
    << "period = " << cfg.period << "\n"
    << "\n[run]\n"
    << "out_dir = " << cfg.out_dir << "\n"
    << "seed = " << cfg.seed << "\n";
  return s.str();
}

namespace {

// Raised for problems with flags or configuration; mapped to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataSource {
  std::string source;
  std::vector<std::string> columns;
  std::string timestamp_column = "date";
  std::string task = "multivariate";
  std::string target;
  Index synth_len = 4000;
  std::uint64_t seed = 2021;
};

SeriesTable load_source(const DataSource& d) {
  if (d.source.empty()) throw UsageError("no data source given (--data)");
  SeriesTable table;
  if (d.source.rfind("synth:", 0) == 0) {
    table = synth(d.source.substr(6), d.synth_len, d.seed);
  } else {
    table = load_csv(d.source, {}, d.timestamp_column);
  }
  if (d.task == "univariate") {
    const std::string target = d.target.empty() ? table.feature_names.back() : d.target;
    return select_columns(table, {target});
  }
  if (d.task != "multivariate") throw UsageError("task must be multivariate or univariate");
  return d.columns.empty() ? table : select_columns(table, d.columns);
}

DataSource source_of(const RunConfig& cfg) {
  return {cfg.data, cfg.columns, cfg.timestamp_column, cfg.task, cfg.target, cfg.synth_len, cfg.seed};
}

std::string prepare_out_dir(const std::string& dir) {
  const std::string out = dir.empty() ? default_out_dir() : dir;
  fs::create_directories(out);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot write " + path.string());
  f << text;
}

json report_json(const EvalReport& r) {
  return {{"name", r.name},
          {"mse", r.mse},
          {"mae", r.mae},
          {"windows", r.windows},
          {"horizon_mse", r.horizon_mse},
          {"horizon_mae", r.horizon_mae},
          {"config_fingerprint", r.config_fingerprint},
          {"data_fingerprint", r.data_fingerprint}};
}

json training_json(const TrainResult& t) {
  json history = json::array();
  for (const auto& e : t.history) {
    history.push_back({{"epoch", e.epoch}, {"train_mse", e.train_mse}, {"val_mse", e.val_mse},
                       {"lr", e.lr}});
  }
  return {{"best_epoch", t.best_epoch},
          {"best_val_mse", t.best_val_mse},
          {"stopped_early", t.stopped_early},
          {"history", history}};
}

SplitScheme parse_split(const std::string& text) {
  try {
    return SplitScheme::parse(text);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
}

// Everything that can be checked before the data is read.
void check_run_config(const RunConfig& cfg) {
  parse_split(cfg.split);
  ModelConfig probe = cfg.model;
  probe.d_x = probe.d_y = 1;
  probe.validate();
  cfg.train.validate();
  if (cfg.period < 1 || cfg.period > cfg.model.input_len) {
    throw InvalidConfig("period must lie in [1, input_len]; pass --period for short input windows");
  }
}

ExperimentData resolve_experiment(RunConfig& cfg, const SeriesTable& table) {
  cfg.model.d_x = cfg.model.d_y = table.features();
  cfg.model.validate();
  cfg.columns = table.feature_names;
  return make_experiment_data(table, parse_split(cfg.split), cfg.model.input_len,
                              cfg.model.pred_len);
}

void write_horizon_file(const fs::path& path, const std::vector<EvalReport>& reports) {
  std::ostringstream csv;
  write_horizon_csv(csv, reports);
  write_text(path, csv.str());
}

void print_report(std::ostream& out, const EvalReport& r) {
  char line[160];
  std::snprintf(line, sizeof line, "%-16s mse=%.6g mae=%.6g windows=%lld\n", r.name.c_str(), r.mse,
                r.mae, static_cast<long long>(r.windows));
  out << line;
}

int cmd_train(RunConfig cfg, std::ostream& out) {
  check_run_config(cfg);
  const SeriesTable table = load_source(source_of(cfg));
  const ExperimentData data = resolve_experiment(cfg, table);
  const std::string dir = prepare_out_dir(cfg.out_dir);
  cfg.out_dir = dir;
  write_text(fs::path(dir) / "config.ini", render_config(cfg));

  Preformer model(cfg.model, cfg.seed);
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = cfg.seed;
  TrainResult result;
  {
    std::ofstream log(fs::path(dir) / "metrics.log", std::ios::binary);
    result = train(model, data.train, data.val, train_cfg, &log);
  }

  const Normalizer& norm = data.train.normalizer();
  std::map<std::string, std::string> meta{
      {"data.source", cfg.data},
      {"data.columns", join(cfg.columns)},
      {"data.timestamp_column", cfg.timestamp_column},
      {"data.task", cfg.task},
      {"data.target", cfg.task == "univariate" ? cfg.columns.front() : ""},
      {"data.split", cfg.split},
      {"data.synth_len", std::to_string(cfg.synth_len)},
      {"data.period", std::to_string(cfg.period)},
      {"run.seed", std::to_string(cfg.seed)},
  };
  save_checkpoint((fs::path(dir) / "checkpoint.bin").string(),
                  make_checkpoint(model, meta,
                                  {{"normalizer.mean", Matrix(norm.mean())},
                                   {"normalizer.std", Matrix(norm.stddev())}}));

  const EvalReport test = evaluate(model, data.test);
  json report{{"test", report_json(test)}, {"training", training_json(result)}};
  report["baselines"] = json::array();
  print_report(out, test);
  std::vector<EvalReport> curves{test};
  for (const auto& b : baselines(data.test, cfg.period)) {
    report["baselines"].push_back(report_json(b));
    print_report(out, b);
    curves.push_back(b);
  }
  write_text(fs::path(dir) / "report.json", report.dump(2) + "\n");
  write_horizon_file(fs::path(dir) / "horizon.csv", curves);
  out << "best epoch " << result.best_epoch << ", artifacts in " << dir << "\n";
  return 0;
}

struct LoadedModel {
  Checkpoint ckpt;
  Normalizer normalizer;
  SeriesTable table;
};

// Overrides left empty fall back to what the checkpoint recorded.
LoadedModel load_for_inference(const std::string& path, DataSource overrides) {
  LoadedModel lm{load_checkpoint(path), {}, {}};
  const auto& meta = lm.ckpt.metadata;
  auto meta_or = [&meta](const std::string& key, const std::string& fallback) {
    const auto it = meta.find(key);
    return it == meta.end() ? fallback : it->second;
  };
  DataSource d;
  d.source = overrides.source.empty() ? meta_or("data.source", "") : overrides.source;
  d.timestamp_column = overrides.timestamp_column.empty()
                           ? meta_or("data.timestamp_column", "date")
                           : overrides.timestamp_column;
  d.task = meta_or("data.task", "multivariate");
  d.target = meta_or("data.target", "");
  d.synth_len = std::stoll(meta_or("data.synth_len", "4000"));
  d.seed = std::stoull(meta_or("run.seed", "2021"));
  SeriesTable all = load_source(d);

  std::vector<std::string> wanted = overrides.columns;
  if (wanted.empty()) {
    const auto recorded = split_list(meta_or("data.columns", ""));
    const bool present = std::all_of(recorded.begin(), recorded.end(), [&](const std::string& c) {
      return std::find(all.feature_names.begin(), all.feature_names.end(), c) !=
             all.feature_names.end();
    });
    if (present) wanted = recorded;
  }
  lm.table = wanted.empty() ? std::move(all) : select_columns(all, wanted);
  if (lm.table.features() != lm.ckpt.config.d_x) {
    throw ConfigMismatch("checkpoint expects " + std::to_string(lm.ckpt.config.d_x) +
                         " features, data has " + std::to_string(lm.table.features()));
  }
  const Matrix* mean = lm.ckpt.find("normalizer.mean");
  const Matrix* stddev = lm.ckpt.find("normalizer.std");
  lm.normalizer = mean && stddev ? Normalizer(*mean, *stddev) : Normalizer::identity(lm.table.features());
  return lm;
}

SeriesWindow final_window(const SeriesTable& table, const ModelConfig& cfg, const Normalizer& norm) {
  const Index t0 = cfg.input_len;
  if (table.length() < t0) {
    throw TooShort("series of " + std::to_string(table.length()) + " rows is shorter than input_len " +
                   std::to_string(t0));
  }
  const std::int64_t step = table.interval();
  if (step <= 0) throw TooShort("need at least two rows to extrapolate timestamps");
  const SeriesTable tail = table.rows(table.length() - t0, t0);
  SeriesWindow w;
  w.enc_values = norm.normalize(tail.values);
  w.enc_cov = covariates(tail.timestamps);
  std::vector<Timestamp> dec_ts(tail.timestamps.begin() + t0 / 2, tail.timestamps.end());
  for (Index h = 1; h <= cfg.pred_len; ++h) {
    w.target_timestamps.push_back(tail.timestamps.back() + h * step);
    dec_ts.push_back(w.target_timestamps.back());
  }
  w.dec_cov = covariates(dec_ts);
  w.target = Matrix::Zero(cfg.pred_len, cfg.d_y);
  return w;
}

void write_forecast_rows(std::ostream& out, const SeriesWindow& w, const Matrix& pred,
                         const Matrix* truth, const std::vector<std::string>& names, Index horizon) {
  char buf[256];
  for (Index h = 0; h < horizon; ++h) {
    const std::string ts = format_timestamp(w.target_timestamps[static_cast<std::size_t>(h)]);
    for (Index f = 0; f < pred.cols(); ++f) {
      if (truth) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g\n", ts.c_str(),
                      names[static_cast<std::size_t>(f)].c_str(), pred(h, f), (*truth)(h, f));
      } else {
        std::snprintf(buf, sizeof buf, "%s,%s,%.17g,\n", ts.c_str(),
                      names[static_cast<std::size_t>(f)].c_str(), pred(h, f));
      }
      out << buf;
    }
  }
}

struct PredictOptions {
  std::string checkpoint;
  DataSource data;
  std::string windows = "final";
  Index horizon = 0;
  std::string out_dir;
  std::string output;
};

WindowDataset test_windows(const LoadedModel& lm) {
  const auto it = lm.ckpt.metadata.find("data.split");
  const SplitScheme scheme =
      SplitScheme::parse(it == lm.ckpt.metadata.end() ? "ratio(7,1,2)" : it->second);
  const ModelConfig& c = lm.ckpt.config;
  const SplitTables parts = split(lm.table, scheme, c.input_len + c.pred_len);
  return WindowDataset(parts.test, c.input_len, c.pred_len, lm.normalizer);
}

int cmd_predict(const PredictOptions& opt, std::ostream& out) {
  if (opt.windows != "final" && opt.windows != "test") {
    throw UsageError("--windows must be final or test");
  }
  const LoadedModel lm = load_for_inference(opt.checkpoint, opt.data);
  const ModelConfig& c = lm.ckpt.config;
  const Index horizon = opt.horizon == 0 ? c.pred_len : opt.horizon;
  if (horizon < 1 || horizon > c.pred_len) {
    throw ConfigMismatch("horizon " + std::to_string(horizon) + " outside 1.." +
                         std::to_string(c.pred_len) + " supported by the checkpoint");
  }
  const Preformer model = model_from_checkpoint(lm.ckpt);
  const fs::path path =
      opt.output.empty() ? fs::path(prepare_out_dir(opt.out_dir)) / "forecast.csv" : fs::path(opt.output);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream csv(path, std::ios::binary);
  if (!csv) throw ParseError("cannot write " + path.string());
  csv << "timestamp,feature,prediction,truth\n";
  Index windows = 0;
  if (opt.windows == "final") {
    const SeriesWindow w = final_window(lm.table, c, lm.normalizer);
    write_forecast_rows(csv, w, lm.normalizer.denormalize(model.predict(w)), nullptr,
                        lm.table.feature_names, horizon);
    windows = 1;
  } else {
    const WindowDataset ds = test_windows(lm);
    for (const SeriesWindow& w : ds) {
      const Matrix truth = lm.normalizer.denormalize(w.target);
      write_forecast_rows(csv, w, lm.normalizer.denormalize(model.predict(w)), &truth,
                          lm.table.feature_names, horizon);
    }
    windows = ds.size();
  }
  out << "wrote " << windows << " window(s) x " << horizon << " steps to " << path.string() << "\n";
  return 0;
}

EvalReport evaluate_forecast_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw EmptyFile(path + " has no header");
  std::vector<Matrix> preds, truths;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() < 3) throw ParseError(path + " line " + std::to_string(line_no) + ": too few fields");
    if (fields.size() < 4 || trim(fields[3]).empty()) continue;
    preds.push_back(Matrix::Constant(1, 1, parse_number<double>("prediction", trim(fields[2]))));
    truths.push_back(Matrix::Constant(1, 1, parse_number<double>("truth", trim(fields[3]))));
  }
  if (preds.empty()) throw EmptyDataset(path + " has no rows with a known truth");
  EvalReport r = evaluate_predictions(preds, truths);
  r.name = "forecast";
  r.horizon_mse.clear();
  r.horizon_mae.clear();
  return r;
}

struct EvalOptions {
  std::string checkpoint;
  std::string forecast;
  DataSource data;
  Index period = 24;
  std::string out_dir;
};

int cmd_eval(const EvalOptions& opt, std::ostream& out) {
  if (opt.checkpoint.empty() == opt.forecast.empty()) {
    throw UsageError("eval needs exactly one of --checkpoint or --forecast");
  }
  json report;
  if (!opt.forecast.empty()) {
    const EvalReport r = evaluate_forecast_csv(opt.forecast);
    print_report(out, r);
    char line[80];
    std::snprintf(line, sizeof line, "mse %.17g\n", r.mse);
    out << line;
    report["forecast"] = {{"path", opt.forecast}, {"mse", r.mse}, {"mae", r.mae},
                          {"rows", r.windows}};
  } else {
    const LoadedModel lm = load_for_inference(opt.checkpoint, opt.data);
    const Preformer model = model_from_checkpoint(lm.ckpt);
    const WindowDataset ds = test_windows(lm);
    const EvalReport r = evaluate(model, ds);
    print_report(out, r);
    report["test"] = report_json(r);
    report["baselines"] = json::array();
    std::vector<EvalReport> curves{r};
    for (const auto& b : baselines(ds, opt.period)) {
      print_report(out, b);
      report["baselines"].push_back(report_json(b));
      curves.push_back(b);
    }
    write_horizon_file(fs::path(prepare_out_dir(opt.out_dir)) / "horizon.csv", curves);
  }
  write_text(fs::path(prepare_out_dir(opt.out_dir)) / "eval.json", report.dump(2) + "\n");
  return 0;
}

struct AblateOptions {
  std::string modes = "ms+pred,only-pred,only-ms";
  std::vector<Index> l0_sweep;
};

int cmd_ablate(RunConfig cfg, const AblateOptions& opt, std::ostream& out) {
  std::vector<AblationMode> modes;
  for (const auto& m : split_list(opt.modes)) modes.push_back(parse_ablation_mode(m));
  check_run_config(cfg);
  const SeriesTable table = load_source(source_of(cfg));
  const ExperimentData data = resolve_experiment(cfg, table);
  for (Index l0 : opt.l0_sweep) {
    ModelConfig probe = cfg.model;
    probe.l0 = l0;
    probe.validate();
  }
  const std::string dir = prepare_out_dir(cfg.out_dir);
  cfg.out_dir = dir;
  write_text(fs::path(dir) / "config.ini", render_config(cfg));
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = cfg.seed;
  const AblationTable table_out = ablate(cfg.model, train_cfg, data, modes, opt.l0_sweep, cfg.seed);
  {
    std::ofstream csv(fs::path(dir) / "ablation.csv", std::ios::binary);
    write_ablation_csv(csv, table_out);
  }
  write_text(fs::path(dir) / "ablation.json", ablation_json(table_out) + "\n");
  for (const auto& row : table_out.rows) print_report(out, row.report);
  if (table_out.sweep_std_multiscale) {
    char line[160];
    std::snprintf(line, sizeof line, "l0 sweep mse std x1000: multiscale=%.6g single-scale=%.6g\n",
                  *table_out.sweep_std_multiscale * 1000.0,
                  *table_out.sweep_std_single_scale * 1000.0);
    out << line;
  }
  return 0;
}

struct BenchOptions {
  std::string mechanisms = "full,sc,mssc";
  std::vector<Index> lengths{96, 192, 336, 720};
  int reps = 1000;
  Index d_model = 64;
  Index n_heads = 8;
  Index l0 = 4;
  double workspace_cap_mb = 1024.0;
  std::uint64_t seed = 7;
  std::string out_dir;
};

int cmd_bench(const BenchOptions& opt, std::ostream& out) {
  BenchConfig cfg;
  cfg.mechanisms.clear();
  for (const auto& m : split_list(opt.mechanisms)) cfg.mechanisms.push_back(parse_mechanism(m));
  if (opt.lengths.empty()) throw UsageError("--lengths must not be empty");
  cfg.lengths = opt.lengths;
  cfg.reps = opt.reps;
  cfg.d_model = opt.d_model;
  cfg.n_heads = opt.n_heads;
  cfg.l0 = opt.l0;
  cfg.workspace_cap_bytes = static_cast<std::uint64_t>(opt.workspace_cap_mb * 1024.0 * 1024.0);
  cfg.seed = opt.seed;
  SegCorrConfig probe;
  probe.l0 = cfg.l0;
  probe.d_model = cfg.d_model;
  probe.n_heads = cfg.n_heads;
  probe.validate();
  if (cfg.reps < 1) throw UsageError("--reps must be >= 1");

  const auto records = bench_attention(cfg);
  const std::string dir = prepare_out_dir(opt.out_dir);
  {
    std::ofstream csv(fs::path(dir) / "bench.csv", std::ios::binary);
    write_bench_csv(csv, records);
  }
  write_text(fs::path(dir) / "bench.json", bench_json(records) + "\n");
  write_bench_csv(out, records);
  return 0;
}

struct SynthOptions {
  std::string kind = "multi-sine";
  Index length = 4000;
  std::uint64_t seed = 2021;
  std::string out_dir;
  std::string output;
};

int cmd_synth(const SynthOptions& opt, std::ostream& out) {
  const SeriesTable table = synth(opt.kind, opt.length, opt.seed);
  const fs::path path = opt.output.empty()
                            ? fs::path(prepare_out_dir(opt.out_dir)) / (opt.kind + ".csv")
                            : fs::path(opt.output);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_csv(path.string(), table);
  out << "wrote " << table.length() << " rows to " << path.string() << "\n";
  return 0;
}

// Reads --config before CLI11 parses, so that explicit flags win.
void preload_config(int argc, const char* const* argv, RunConfig& cfg) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    std::string path;
    if (arg == "--config") {
      if (i + 1 >= argc) throw UsageError("--config needs a path");
      path = argv[i + 1];
    } else if (arg.rfind("--config=", 0) == 0) {
      path = arg.substr(9);
    } else {
      continue;
    }
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path);
    std::stringstream text;
    text << in.rdbuf();
    try {
      apply_config(cfg, parse_config_text(text.str()));
    } catch (const Error& e) {
      throw UsageError(path + ": " + e.what());
    }
  }
}

void add_run_options(CLI::App* app, RunConfig& cfg, std::string& config_path) {
  ModelConfig& m = cfg.model;
  TrainConfig& t = cfg.train;
  app->add_option("--config", config_path, "INI file with [model] [train] [data] [run] sections");
  app->add_option("--data", cfg.data, "CSV path or synth:<multi-sine|trend-plus-season|noise-walk>")
      ->group("Data");
  app->add_option("--columns", cfg.columns, "Value columns (comma separated; default all)")
      ->delimiter(',')
      ->group("Data");
  app->add_option("--timestamp-column", cfg.timestamp_column, "Timestamp column name")
      ->capture_default_str()
      ->group("Data");
  app->add_option("--task", cfg.task, "multivariate or univariate")
      ->capture_default_str()
      ->check(CLI::IsMember({"multivariate", "univariate"}))
      ->group("Data");
  app->add_option("--target", cfg.target, "Univariate target column (default: last column)")
      ->group("Data");
  app->add_option("--split", cfg.split, "ratio(a,b,c) or months(a,b,c)")
      ->capture_default_str()
      ->group("Data");
  app->add_option("--synth-len", cfg.synth_len, "Length of synth: series")
      ->capture_default_str()
      ->group("Data");
  app->add_option("--period", cfg.period, "Seasonal-naive baseline period")
      ->capture_default_str()
      ->group("Data");

  app->add_option("--d-model", m.d_model, "Hidden width")->capture_default_str()->group("Model");
  app->add_option("--d-ff", m.d_ff, "Feed-forward width")->capture_default_str()->group("Model");
  app->add_option("--heads", m.n_heads, "Attention heads")->capture_default_str()->group("Model");
  app->add_option("--l0", m.l0, "Initial segment length")->capture_default_str()->group("Model");
  app->add_option("--e-layers", m.e_layers, "Encoder layers")->capture_default_str()->group("Model");
  app->add_option("--d-layers", m.d_layers, "Decoder layers")->capture_default_str()->group("Model");
  app->add_option("--input-len", m.input_len, "Input window t0 (even)")
      ->capture_default_str()
      ->group("Model");
  app->add_option("--pred-len", m.pred_len, "Horizon tau")->capture_default_str()->group("Model");
  app->add_option("--kernel", m.decomp_kernel, "Moving-average kernel (odd)")
      ->capture_default_str()
      ->group("Model");
  app->add_option("--dropout", m.dropout, "Embedding dropout")->capture_default_str()->group("Model");
  app->add_flag_callback("--no-predictive", [&m] { m.predictive = false; },
                         "Plain multi-scale cross attention (default: predictive)")
      ->group("Model");
  app->add_flag_callback("--no-multiscale", [&m] { m.multiscale = false; },
                         "Single segment length l0 (default: multi-scale)")
      ->group("Model");
  app->add_option_function<std::string>(
         "--alpha-order", [&m](const std::string& v) { m.alpha_order = parse_alpha_order(v); },
         "Scale weights over levels")
      ->check(CLI::IsMember({"increasing", "decreasing"}))
      ->default_str(to_string(m.alpha_order))
      ->group("Model");

  app->add_option("--lr", t.lr0, "Initial learning rate")->capture_default_str()->group("Training");
  app->add_option("--epochs", t.epochs, "Maximum epochs")->capture_default_str()->group("Training");
  app->add_option("--batch-size", t.batch_size, "Mini-batch size")
      ->capture_default_str()
      ->group("Training");
  app->add_option("--patience", t.patience, "Early-stopping patience")
      ->capture_default_str()
      ->group("Training");
  app->add_option("--lr-decay", t.lr_decay, "Per-epoch learning-rate factor")
      ->capture_default_str()
      ->group("Training");
  app->add_option("--clip-norm", t.clip_norm, "Global gradient-norm cap (<= 0 disables)")
      ->capture_default_str()
      ->group("Training");

  app->add_option("--out", cfg.out_dir, "Output directory (default: $PREFORMER_OUT_DIR or preformer-out)");
  app->add_option("--seed", cfg.seed, "Seed for initialization, shuffling and synth: data")
      ->capture_default_str();
}

void add_source_overrides(CLI::App* app, DataSource& d, std::string& out_dir) {
  app->add_option("--data", d.source, "Data source (default: the one recorded in the checkpoint)");
  app->add_option("--columns", d.columns, "Value columns (default: those recorded in the checkpoint)")
      ->delimiter(',');
  app->add_option("--timestamp-column", d.timestamp_column,
                  "Timestamp column (default: the one recorded in the checkpoint)");
  app->add_option("--out", out_dir, "Output directory (default: $PREFORMER_OUT_DIR or preformer-out)");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Preformer time-series forecasting toolkit", "preformer"};
  app.require_subcommand(1);

  RunConfig run;
  std::string config_path;
  PredictOptions predict_opt;
  EvalOptions eval_opt;
  AblateOptions ablate_opt;
  BenchOptions bench_opt;
  SynthOptions synth_opt;

  try {
    preload_config(argc, argv, run);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  auto* train_cmd = app.add_subcommand("train", "Train a model, then evaluate it on the test split");
  add_run_options(train_cmd, run, config_path);

  auto* predict_cmd = app.add_subcommand("predict", "Forecast with a trained checkpoint");
  predict_cmd->add_option("--checkpoint", predict_opt.checkpoint, "Checkpoint file")->required();
  add_source_overrides(predict_cmd, predict_opt.data, predict_opt.out_dir);
  predict_cmd->add_option("--windows", predict_opt.windows,
                          "final: the window after the series end; test: every test window")
      ->capture_default_str()
      ->check(CLI::IsMember({"final", "test"}));
  predict_cmd->add_option("--horizon", predict_opt.horizon, "Steps to emit (0: pred_len)")
      ->capture_default_str();
  predict_cmd->add_option("--output", predict_opt.output, "Forecast CSV (default: <out>/forecast.csv)");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or a forecast CSV");
  eval_cmd->add_option("--checkpoint", eval_opt.checkpoint, "Checkpoint to evaluate on the test split");
  eval_cmd->add_option("--forecast", eval_opt.forecast, "Forecast CSV with truth column to score");
  add_source_overrides(eval_cmd, eval_opt.data, eval_opt.out_dir);
  eval_cmd->add_option("--period", eval_opt.period, "Seasonal-naive baseline period")
      ->capture_default_str();

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare attention variants");
  add_run_options(ablate_cmd, run, config_path);
  ablate_cmd->add_option("--modes", ablate_opt.modes, "Comma list of ms+pred, only-pred, only-ms, none")
      ->capture_default_str();
  ablate_cmd->add_option("--l0-sweep", ablate_opt.l0_sweep,
                         "Initial segment lengths to sweep with and without multi-scale (default: none)")
      ->delimiter(',');

  auto* bench_cmd = app.add_subcommand("bench", "Attention cost and wall-time benchmark");
  bench_cmd->add_option("--mechanisms", bench_opt.mechanisms, "Comma list of full, sc, mssc")
      ->capture_default_str();
  bench_cmd->add_option("--lengths", bench_opt.lengths, "Sequence lengths")
      ->delimiter(',')
      ->default_str("96,192,336,720");
  bench_cmd->add_option("--reps", bench_opt.reps, "Forward passes per point")->capture_default_str();
  bench_cmd->add_option("--d-model", bench_opt.d_model, "Model width")->capture_default_str();
  bench_cmd->add_option("--heads", bench_opt.n_heads, "Attention heads")->capture_default_str();
  bench_cmd->add_option("--l0", bench_opt.l0, "Initial segment length")->capture_default_str();
  bench_cmd->add_option("--workspace-cap-mb", bench_opt.workspace_cap_mb,
                        "Workspace above which a point is reported out-of-memory")
      ->capture_default_str();
  bench_cmd->add_option("--seed", bench_opt.seed, "Seed for the random inputs")->capture_default_str();
  bench_cmd->add_option("--out", bench_opt.out_dir,
                        "Output directory (default: $PREFORMER_OUT_DIR or preformer-out)");

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic series as CSV");
  synth_cmd->add_option("--kind", synth_opt.kind, "multi-sine, trend-plus-season or noise-walk")
      ->capture_default_str()
      ->check(CLI::IsMember({"multi-sine", "trend-plus-season", "noise-walk"}));
  synth_cmd->add_option("--len", synth_opt.length, "Number of rows")->capture_default_str();
  synth_cmd->add_option("--seed", synth_opt.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--out", synth_opt.out_dir,
                        "Output directory (default: $PREFORMER_OUT_DIR or preformer-out)");
  synth_cmd->add_option("--output", synth_opt.output, "CSV path (default: <out>/<kind>.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(run, out);
    if (*predict_cmd) return cmd_predict(predict_opt, out);
    if (*eval_cmd) return cmd_eval(eval_opt, out);
    if (*ablate_cmd) return cmd_ablate(run, ablate_opt, out);
    if (*bench_cmd) return cmd_bench(bench_opt, out);
    if (*synth_cmd) return cmd_synth(synth_opt, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidConfig& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const OddInputLength& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace preformer
