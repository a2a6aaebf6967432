#include "preformer/data.hpp"

#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

namespace preformer {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '"' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && std::isfinite(out);
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

constexpr std::int64_t kSecondsPerDay = 86400;

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  const std::string_view s = trim(text);
  auto fail = [&]() -> Timestamp {
    throw ParseError("bad timestamp '" + std::string(s) + "'");
  };
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') return fail();
  int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
  if (!parse_int(s.substr(0, 4), y) || !parse_int(s.substr(5, 2), mo) ||
      !parse_int(s.substr(8, 2), d)) {
    return fail();
  }
  std::string_view rest = s.substr(10);
  if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
  if (!rest.empty()) {
    if (rest[0] != ' ' && rest[0] != 'T') return fail();
    rest.remove_prefix(1);
    if (rest.size() != 5 && rest.size() != 8) return fail();
    if (rest[2] != ':' || !parse_int(rest.substr(0, 2), hh) || !parse_int(rest.substr(3, 2), mm)) {
      return fail();
    }
    if (rest.size() == 8 && (rest[5] != ':' || !parse_int(rest.substr(6, 2), ss))) return fail();
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 59 || hh < 0 || mm < 0 || ss < 0) return fail();
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<Timestamp>(days) * kSecondsPerDay + hh * 3600 + mm * 60 + ss;
}

std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  std::int64_t days = ts / kSecondsPerDay;
  std::int64_t secs = ts % kSecondsPerDay;
  if (secs < 0) {
    secs += kSecondsPerDay;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02lld:%02lld:%02lld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(secs / 3600), static_cast<long long>(secs / 60 % 60),
                static_cast<long long>(secs % 60));
  return buf;
}

std::int64_t SeriesTable::interval() const {
  return timestamps.size() < 2 ? 0 : timestamps[1] - timestamps[0];
}

SeriesTable SeriesTable::rows(Index begin, Index count) const {
  SeriesTable out;
  out.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + begin + count);
  out.values = values.middleRows(begin, count);
  out.feature_names = feature_names;
  return out;
}

SeriesTable read_csv(std::istream& in, const std::vector<std::string>& value_columns,
                     const std::string& timestamp_column) {
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw EmptyFile("no header row");
  const auto header = split_fields(line);

  Index ts_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == timestamp_column) ts_col = static_cast<Index>(i);
  }
  if (ts_col < 0) throw ParseError("timestamp column '" + timestamp_column + "' not in header");

  std::vector<Index> cols;
  std::vector<std::string> names;
  if (value_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (static_cast<Index>(i) == ts_col) continue;
      cols.push_back(static_cast<Index>(i));
      names.emplace_back(header[i]);
    }
  } else {
    for (const auto& want : value_columns) {
      Index found = -1;
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == want) found = static_cast<Index>(i);
      }
      if (found < 0) throw ParseError("column '" + want + "' not in header");
      cols.push_back(found);
      names.push_back(want);
    }
  }
  if (cols.empty()) throw ParseError("no value columns");

  SeriesTable table;
  table.feature_names = names;
  std::vector<double> flat;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    try {
      table.timestamps.push_back(parse_timestamp(fields[static_cast<std::size_t>(ts_col)]));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    for (Index c : cols) {
      double v = 0.0;
      const auto field = fields[static_cast<std::size_t>(c)];
      if (!parse_double(field, v)) {
        throw ParseError("line " + std::to_string(line_no) + ": bad number '" +
                         std::string(field) + "'");
      }
      flat.push_back(v);
    }
  }
  if (table.timestamps.empty()) throw EmptyFile("no data rows");

  const auto n = static_cast<Index>(table.timestamps.size());
  table.values = Eigen::Map<const Matrix>(flat.data(), n, static_cast<Index>(cols.size()));
  for (Index i = 1; i < n; ++i) {
    const auto step = table.timestamps[static_cast<std::size_t>(i)] -
                      table.timestamps[static_cast<std::size_t>(i - 1)];
    if (step <= 0) {
      throw GapError("timestamps not strictly increasing at row " + std::to_string(i + 1));
    }
    if (step != table.interval()) {
      throw GapError("irregular sampling interval at row " + std::to_string(i + 1));
    }
  }
  return table;
}

SeriesTable load_csv(const std::string& path, const std::vector<std::string>& value_columns,
                     const std::string& timestamp_column) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read_csv(in, value_columns, timestamp_column);
}

void write_csv(std::ostream& out, const SeriesTable& table) {
  out << "date";
  for (const auto& n : table.feature_names) out << ',' << n;
  out << '\n';
  char buf[64];
  for (Index r = 0; r < table.length(); ++r) {
    out << format_timestamp(table.timestamps[static_cast<std::size_t>(r)]);
    for (Index c = 0; c < table.features(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", table.values(r, c));
      out << ',' << buf;
    }
    out << '\n';
  }
}

void save_csv(const std::string& path, const SeriesTable& table) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  write_csv(out, table);
}

SeriesTable select_columns(const SeriesTable& table, const std::vector<std::string>& names) {
  SeriesTable out;
  out.timestamps = table.timestamps;
  out.values.resize(table.length(), static_cast<Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    Index found = -1;
    for (std::size_t j = 0; j < table.feature_names.size(); ++j) {
      if (table.feature_names[j] == names[i]) found = static_cast<Index>(j);
    }
    if (found < 0) throw ParseError("unknown column '" + names[i] + "'");
    out.values.col(static_cast<Index>(i)) = table.values.col(found);
  }
  out.feature_names = names;
  return out;
}

Matrix covariates(const std::vector<Timestamp>& timestamps) {
  using namespace std::chrono;
  Matrix out(static_cast<Index>(timestamps.size()), kCovariateCount);
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    std::int64_t days = timestamps[i] / kSecondsPerDay;
    std::int64_t secs = timestamps[i] % kSecondsPerDay;
    if (secs < 0) {
      secs += kSecondsPerDay;
      --days;
    }
    const sys_days date{std::chrono::days{days}};
    const year_month_day ymd{date};
    const unsigned weekday_monday0 = weekday{date}.iso_encoding() - 1;
    const auto day_of_year = (date - sys_days{ymd.year() / January / 1}).count();
    const auto r = static_cast<Index>(i);
    out(r, 0) = static_cast<double>(secs / 3600) / 23.0 - 0.5;
    out(r, 1) = static_cast<double>(weekday_monday0) / 6.0 - 0.5;
    out(r, 2) = static_cast<double>(static_cast<unsigned>(ymd.day()) - 1) / 30.0 - 0.5;
    out(r, 3) = static_cast<double>(day_of_year) / 365.0 - 0.5;
  }
  return out;
}

SplitScheme SplitScheme::parse(std::string_view raw) {
  std::string compact;
  for (char c : raw) {
    if (!std::isspace(static_cast<unsigned char>(c))) compact.push_back(c);
  }
  const std::string_view text = compact;
  SplitScheme s;
  const auto open = text.find('(');
  const auto close = text.rfind(')');
  if (open == std::string_view::npos || close != text.size() - 1) {
    throw ParseError("bad split scheme '" + std::string(text) + "'");
  }
  const auto kind = text.substr(0, open);
  if (kind == "ratio") {
    s.kind = Kind::kRatio;
  } else if (kind == "months") {
    s.kind = Kind::kMonths;
  } else {
    throw ParseError("unknown split scheme '" + std::string(kind) + "'");
  }
  const auto fields = split_fields(text.substr(open + 1, close - open - 1));
  if (fields.size() != 3) throw ParseError("split scheme needs three parts");
  for (std::size_t i = 0; i < 3; ++i) {
    if (!parse_int(fields[i], s.parts[i]) || s.parts[i] < 0) {
      throw ParseError("bad split part '" + std::string(fields[i]) + "'");
    }
  }
  if (s.parts[0] == 0 || s.parts[1] == 0 || s.parts[2] == 0) {
    throw ParseError("split parts must be positive");
  }
  return s;
}

std::string SplitScheme::str() const {
  return std::string(kind == Kind::kRatio ? "ratio" : "months") + "(" + std::to_string(parts[0]) +
         "," + std::to_string(parts[1]) + "," + std::to_string(parts[2]) + ")";
}

SplitTables split(const SeriesTable& table, const SplitScheme& scheme, Index min_length) {
  const Index total = table.length();
  Index n_train = 0, n_val = 0, n_test = 0;
  if (scheme.kind == SplitScheme::Kind::kRatio) {
    const Index parts = scheme.parts[0] + scheme.parts[1] + scheme.parts[2];
    n_train = total * scheme.parts[0] / parts;
    n_test = total * scheme.parts[2] / parts;
    n_val = total - n_train - n_test;
  } else {
    const std::int64_t interval = table.interval();
    if (interval <= 0) throw TooShort("month split needs at least two rows");
    const Index per_month = static_cast<Index>(30 * kSecondsPerDay / interval);
    n_train = scheme.parts[0] * per_month;
    n_val = scheme.parts[1] * per_month;
    n_test = scheme.parts[2] * per_month;
    if (n_train + n_val + n_test > total) {
      throw TooShort("month split needs " + std::to_string(n_train + n_val + n_test) +
                     " rows, table has " + std::to_string(total));
    }
  }
  const Index shortest = std::min({n_train, n_val, n_test});
  if (shortest < std::max<Index>(min_length, 1)) {
    throw TooShort("split " + scheme.str() + " of " + std::to_string(total) +
                   " rows leaves a split of " + std::to_string(shortest) + " rows, need " +
                   std::to_string(std::max<Index>(min_length, 1)));
  }
  return {table.rows(0, n_train), table.rows(n_train, n_val), table.rows(n_train + n_val, n_test)};
}

Normalizer Normalizer::fit(const Matrix& train_values) {
  if (train_values.rows() == 0) throw EmptyDataset("cannot fit a normalizer on no rows");
  const RowVector mean = train_values.colwise().mean();
  const Matrix centered = train_values.rowwise() - mean;
  RowVector sd = (centered.array().square().colwise().sum() / static_cast<double>(train_values.rows()))
                     .sqrt()
                     .matrix();
  Normalizer n(mean, sd);
  for (Index c = 0; c < sd.size(); ++c) {
    if (!(sd(c) > 1e-12)) {
      n.std_(c) = 1.0;
      n.constant_.push_back(c);
    }
  }
  return n;
}

Normalizer Normalizer::identity(Index features) {
  return Normalizer(RowVector::Zero(features), RowVector::Ones(features));
}

Matrix Normalizer::normalize(const Matrix& values) const {
  return ((values.rowwise() - mean_).array().rowwise() / std_.array()).matrix();
}

Matrix Normalizer::denormalize(const Matrix& values) const {
  return ((values.array().rowwise() * std_.array()).matrix().rowwise() + mean_);
}

Normalizer Normalizer::select(const std::vector<Index>& features) const {
  RowVector m(static_cast<Index>(features.size())), s(static_cast<Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    m(static_cast<Index>(i)) = mean_(features[i]);
    s(static_cast<Index>(i)) = std_(features[i]);
  }
  return Normalizer(m, s);
}

Index window_count(Index length, Index input_len, Index pred_len) {
  return std::max<Index>(0, length - input_len - pred_len + 1);
}

WindowDataset::WindowDataset(SeriesTable split, Index input_len, Index pred_len,
                             Normalizer normalizer)
    : table_(std::move(split)),
      input_len_(input_len),
      pred_len_(pred_len),
      normalizer_(std::move(normalizer)) {
  if (input_len < 2 || input_len % 2 != 0) {
    throw OddInputLength("input length must be even and >= 2, got " + std::to_string(input_len));
  }
  if (pred_len < 1) throw InvalidConfig("prediction length must be >= 1");
  if (table_.length() < input_len + pred_len) {
    throw TooShort("split of " + std::to_string(table_.length()) + " rows cannot hold a window of " +
                   std::to_string(input_len + pred_len));
  }
  count_ = window_count(table_.length(), input_len, pred_len);
  normalized_ = normalizer_.normalize(table_.values);
  covariates_ = covariates(table_.timestamps);
}

SeriesWindow WindowDataset::at(Index i) const {
  if (i < 0 || i >= count_) throw std::out_of_range("window index out of range");
  const Index half = input_len_ / 2;
  SeriesWindow w;
  w.enc_values = normalized_.middleRows(i, input_len_);
  w.enc_cov = covariates_.middleRows(i, input_len_);
  w.dec_cov = covariates_.middleRows(i + input_len_ - half, half + pred_len_);
  w.target = normalized_.middleRows(i + input_len_, pred_len_);
  w.target_timestamps.assign(table_.timestamps.begin() + i + input_len_,
                             table_.timestamps.begin() + i + input_len_ + pred_len_);
  return w;
}

std::uint64_t WindowDataset::fingerprint() const {
  std::uint64_t h = fnv1a(normalized_.data(), sizeof(double) * static_cast<std::size_t>(normalized_.size()));
  const Index geometry[3] = {input_len_, pred_len_, normalized_.cols()};
  return fnv1a(geometry, sizeof geometry, h);
}

double synth_trend_slope(Index feature) { return 0.002 * static_cast<double>(feature + 1); }

SeriesTable synth(std::string_view kind, Index length, std::uint64_t seed) {
  if (length < 1) throw InvalidConfig("synthetic length must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> amp(0.5, 1.5);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  constexpr double two_pi = 2.0 * std::numbers::pi;

  SeriesTable table;
  if (kind == "multi-sine") {
    constexpr double periods[3] = {24.0, 17.0, 42.0};
    constexpr Index features = 3;
    double a[features][3], phi[features][3];
    for (Index c = 0; c < features; ++c) {
      for (int p = 0; p < 3; ++p) {
        a[c][p] = amp(rng);
        phi[c][p] = phase(rng);
      }
    }
    table.values.resize(length, features);
    for (Index t = 0; t < length; ++t) {
      for (Index c = 0; c < features; ++c) {
        double x = 0.0;
        for (int p = 0; p < 3; ++p) {
          x += a[c][p] * std::sin(two_pi * static_cast<double>(t) / periods[p] + phi[c][p]);
        }
        table.values(t, c) = x + 0.1 * noise(rng);
      }
    }
  } else if (kind == "trend-plus-season") {
    constexpr Index features = 2;
    double a[features], phi[features];
    for (Index c = 0; c < features; ++c) {
      a[c] = amp(rng);
      phi[c] = phase(rng);
    }
    table.values.resize(length, features);
    for (Index t = 0; t < length; ++t) {
      for (Index c = 0; c < features; ++c) {
        table.values(t, c) = synth_trend_slope(c) * static_cast<double>(t) +
                             a[c] * std::sin(two_pi * static_cast<double>(t) / 24.0 + phi[c]) +
                             0.1 * noise(rng);
      }
    }
  } else if (kind == "noise-walk") {
    constexpr Index features = 2;
    table.values.resize(length, features);
    for (Index c = 0; c < features; ++c) table.values(0, c) = noise(rng);
    for (Index t = 1; t < length; ++t) {
      for (Index c = 0; c < features; ++c) table.values(t, c) = table.values(t - 1, c) + noise(rng);
    }
  } else {
    throw UnknownKind("synthetic kind '" + std::string(kind) +
                      "' (expected multi-sine, trend-plus-season or noise-walk)");
  }
  const Timestamp start = parse_timestamp("2016-07-01 00:00:00");
  table.timestamps.resize(static_cast<std::size_t>(length));
  for (Index t = 0; t < length; ++t) table.timestamps[static_cast<std::size_t>(t)] = start + 3600 * t;
  for (Index c = 0; c < table.values.cols(); ++c) table.feature_names.push_back("x" + std::to_string(c));
  return table;
}

}  // namespace preformer
