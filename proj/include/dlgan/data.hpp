#pragma once

// Loading, normalization, windowing and batching of multivariate series.

#include <cstdint>
#include <string>
#include <vector>

#include "dlgan/autodiff.hpp"

namespace dlgan {

struct RawSeries {
  Matrix values;  // L x M, rows in temporal order
  std::vector<std::string> feature_names;
  std::string source_path;
  std::size_t dropped_rows = 0;

  Eigen::Index length() const { return values.rows(); }
  Eigen::Index features() const { return values.cols(); }
};

// Per-feature min/max. A feature with min == max is constant.
struct NormStats {
  RowVector min;
  RowVector max;

  Eigen::Index features() const { return min.cols(); }
  bool is_constant(Eigen::Index j) const { return min(j) == max(j); }
};

struct TimeSeriesWindow {
  Matrix values;  // T x M, entries in [0, 1]
  Eigen::Index origin = 0;
};

struct CsvOptions {
  // Explicit selection; empty means every mostly-numeric column.
  std::vector<std::string> feature_columns;
  // Columns skipped during automatic selection (e.g. a datetime column).
  std::vector<std::string> ignore_columns;
  // Minimum usable rows after cleaning.
  Eigen::Index min_rows = 1;
};

RawSeries load_csv(const std::string& path, const CsvOptions& options = {});
void write_series_csv(const std::string& path, const RawSeries& series);

NormStats fit_normalizer(const RawSeries& raw);
// Maps into [0, 1]; constant features become 0.5. Values outside the fitted
// range are clamped.
Matrix normalize(const Matrix& values, const NormStats& stats);
RawSeries normalize(const RawSeries& raw, const NormStats& stats);
Matrix denormalize(const Matrix& values, const NormStats& stats);
std::vector<Matrix> denormalize(const std::vector<TimeSeriesWindow>& windows, const NormStats& stats);

// Origins 0, stride, 2*stride, ... while origin + length <= L.
std::vector<TimeSeriesWindow> make_windows(const RawSeries& series, Eigen::Index length,
                                           Eigen::Index stride = 1);

// Stacks windows[indices] into a time-major (T*B) x M matrix (row t*B + b).
Matrix to_time_major(const std::vector<TimeSeriesWindow>& windows,
                     const std::vector<std::size_t>& indices);
Matrix to_time_major(const std::vector<Matrix>& windows);
std::vector<Matrix> from_time_major(const Matrix& stacked, Eigen::Index steps, Eigen::Index batch);

// Deterministic shuffled mini-batches; each epoch reshuffles from (seed, epoch).
class BatchIterator {
 public:
  BatchIterator(std::size_t count, std::size_t batch_size, std::uint64_t seed);

  void start_epoch(std::uint64_t epoch);
  // Fills the next batch of window indices; false at the end of the epoch.
  bool next(std::vector<std::size_t>& indices);
  std::size_t batches_per_epoch() const;

 private:
  std::size_t count_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

// One row per timestep. With a window-id column the header is
// window_id,<features...>; otherwise windows are written back to back.
void write_windows_csv(const std::string& path, const std::vector<Matrix>& windows,
                       const std::vector<std::string>& feature_names, bool window_id_column = true);
std::vector<Matrix> read_windows_csv(const std::string& path, std::vector<std::string>* feature_names = nullptr);

// Multivariate sine fixture: feature j is sin(2*pi*f_j*t + phi_j) plus a
// small amount of noise, with f_j and phi_j drawn from the seed.
RawSeries make_sine(Eigen::Index length, Eigen::Index features, std::uint64_t seed, double noise = 0.0);

// Normalized windows ready for training, with the stats they were built from.
struct Dataset {
  RawSeries raw;
  NormStats stats;
  std::vector<TimeSeriesWindow> windows;
};

// Fits the normalizer on `raw` unless stats are given.
Dataset prepare_dataset(RawSeries raw, Eigen::Index length, Eigen::Index stride);
Dataset prepare_dataset(RawSeries raw, const NormStats& stats, Eigen::Index length, Eigen::Index stride);

std::vector<Matrix> window_values(const std::vector<TimeSeriesWindow>& windows);

}  // namespace dlgan
