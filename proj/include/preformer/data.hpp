#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "preformer/tensor.hpp"

namespace preformer {

/// Seconds since 1970-01-01 00:00:00, calendar fields taken as UTC.
using Timestamp = std::int64_t;

Timestamp parse_timestamp(std::string_view text);
/// "YYYY-MM-DD HH:MM:SS"
std::string format_timestamp(Timestamp ts);

/// A regularly sampled multivariate series.
struct SeriesTable {
  std::vector<Timestamp> timestamps;
  Matrix values;  // length x features
  std::vector<std::string> feature_names;

  Index length() const { return values.rows(); }
  Index features() const { return values.cols(); }
  /// Sampling interval in seconds (0 for tables shorter than two rows).
  std::int64_t interval() const;
  SeriesTable rows(Index begin, Index count) const;
};

/// Reads a header row followed by one row per instant. With no explicit
/// `value_columns`, every column other than `timestamp_column` is a value.
SeriesTable read_csv(std::istream& in, const std::vector<std::string>& value_columns = {},
                     const std::string& timestamp_column = "date");
SeriesTable load_csv(const std::string& path, const std::vector<std::string>& value_columns = {},
                     const std::string& timestamp_column = "date");
void write_csv(std::ostream& out, const SeriesTable& table);
void save_csv(const std::string& path, const SeriesTable& table);

SeriesTable select_columns(const SeriesTable& table, const std::vector<std::string>& names);

inline constexpr Index kCovariateCount = 4;

/// Calendar covariates per timestamp, each mapped affinely onto [-0.5, 0.5]:
/// hour/23, weekday/6 (Monday = 0), (day_of_month-1)/30, (day_of_year-1)/365.
Matrix covariates(const std::vector<Timestamp>& timestamps);

struct SplitScheme {
  enum class Kind { kRatio, kMonths };
  Kind kind = Kind::kRatio;
  std::array<int, 3> parts{7, 1, 2};

  /// Accepts "ratio(7,1,2)" or "months(12,4,4)".
  static SplitScheme parse(std::string_view text);
  std::string str() const;
};

struct SplitTables {
  SeriesTable train, val, test;
};

/// Chronological, non-overlapping train/val/test split. Ratio splits give
/// train and test floor(T*part/total) rows and val the remainder; month
/// splits use 30-day months at the table's sampling interval. Each split must
/// hold at least `min_length` rows.
SplitTables split(const SeriesTable& table, const SplitScheme& scheme, Index min_length = 1);

/// Per-feature z-score statistics of a training split.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(RowVector mean, RowVector stddev) : mean_(std::move(mean)), std_(std::move(stddev)) {}

  /// Constant features get std 1 and are listed in constant_features().
  static Normalizer fit(const Matrix& train_values);
  static Normalizer identity(Index features);

  Matrix normalize(const Matrix& values) const;
  Matrix denormalize(const Matrix& values) const;
  /// Restricts to a subset of features, e.g. the target columns.
  Normalizer select(const std::vector<Index>& features) const;

  const RowVector& mean() const { return mean_; }
  const RowVector& stddev() const { return std_; }
  const std::vector<Index>& constant_features() const { return constant_; }

 private:
  RowVector mean_;
  RowVector std_;
  std::vector<Index> constant_;
};

/// One training/evaluation sample, all values normalized.
struct SeriesWindow {
  Matrix enc_values;  // t0 x d_x
  Matrix enc_cov;     // t0 x d_cov
  Matrix dec_cov;     // (t0/2 + tau) x d_cov
  Matrix target;      // tau x d_y
  std::vector<Timestamp> target_timestamps;
};

/// Stride-1 sliding windows over one split; window i starts at row i.
class WindowDataset {
 public:
  WindowDataset(SeriesTable split, Index input_len, Index pred_len, Normalizer normalizer);

  Index size() const { return count_; }
  SeriesWindow at(Index i) const;
  Index input_len() const { return input_len_; }
  Index pred_len() const { return pred_len_; }
  const Normalizer& normalizer() const { return normalizer_; }
  const SeriesTable& table() const { return table_; }
  /// Hash of the normalized values and window geometry.
  std::uint64_t fingerprint() const;

  class iterator {
   public:
    iterator(const WindowDataset* ds, Index i) : ds_(ds), i_(i) {}
    SeriesWindow operator*() const { return ds_->at(i_); }
    iterator& operator++() {
      ++i_;
      return *this;
    }
    bool operator==(const iterator& o) const { return i_ == o.i_; }

   private:
    const WindowDataset* ds_;
    Index i_;
  };
  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, count_}; }

 private:
  SeriesTable table_;
  Matrix normalized_;
  Matrix covariates_;
  Index input_len_;
  Index pred_len_;
  Index count_;
  Normalizer normalizer_;
};

/// Window count for a split of `length` rows: length - t0 - tau + 1.
Index window_count(Index length, Index input_len, Index pred_len);

/// Deterministic synthetic series, hourly from 2016-07-01 00:00:00.
///
///   multi-sine        3 features, x_c(t) = sum over periods p in {24, 17, 42}
///                     of a_cp sin(2 pi t / p + phi_cp) + 0.1 e_t, with
///                     a_cp ~ U(0.5, 1.5), phi_cp ~ U(0, 2 pi).
///   trend-plus-season 2 features, x_c(t) = s_c t + A_c sin(2 pi t / 24 + phi_c)
///                     + 0.1 e_t, with s_c = 0.002 (c + 1), A_c ~ U(0.5, 1.5).
///   noise-walk        2 features, x_c(t) = x_c(t-1) + e_t, x_c(0) = e_0.
///
/// e_t is standard normal; all draws come from one mt19937_64 seeded by `seed`.
SeriesTable synth(std::string_view kind, Index length, std::uint64_t seed);

/// Slope of the trend-plus-season feature c.
double synth_trend_slope(Index feature);

}  // namespace preformer
