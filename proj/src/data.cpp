#include "dlgan/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "dlgan/errors.hpp"
#include "dlgan/rng.hpp"

namespace dlgan {

using Eigen::Index;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(trim(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.push_back(trim(field));
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::ofstream open_for_write(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path);
  return os;
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

RawSeries load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::FileNotFound, path);
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::NoNumericColumns, path + " is empty");
  const std::vector<std::string> header = split_csv_line(line);

  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_csv_line(line));
  }

  std::vector<std::size_t> selected;
  if (!options.feature_columns.empty()) {
    for (const std::string& name : options.feature_columns) {
      auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) throw Error(ErrorKind::NoNumericColumns, "column '" + name + "' not in " + path);
      selected.push_back(static_cast<std::size_t>(it - header.begin()));
    }
  } else {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (std::find(options.ignore_columns.begin(), options.ignore_columns.end(), header[c]) !=
          options.ignore_columns.end()) {
        continue;
      }
      std::size_t numeric = 0;
      double v = 0;
      for (const auto& r : rows) {
        if (c < r.size() && parse_number(r[c], v)) ++numeric;
      }
      // Mostly-numeric columns are features; a stray bad cell drops its row.
      if (!rows.empty() && 2 * numeric > rows.size()) selected.push_back(c);
    }
  }
  if (selected.empty()) throw Error(ErrorKind::NoNumericColumns, path);

  RawSeries out;
  out.source_path = path;
  for (std::size_t c : selected) out.feature_names.push_back(header[c]);
  std::vector<double> flat;
  flat.reserve(rows.size() * selected.size());
  std::vector<double> row_values(selected.size());
  Index kept = 0;
  for (const auto& r : rows) {
    bool ok = true;
    for (std::size_t j = 0; j < selected.size() && ok; ++j) {
      ok = selected[j] < r.size() && parse_number(r[selected[j]], row_values[j]);
    }
    if (!ok) {
      ++out.dropped_rows;
      continue;
    }
    flat.insert(flat.end(), row_values.begin(), row_values.end());
    ++kept;
  }
  if (kept < std::max<Index>(1, options.min_rows)) {
    throw Error(ErrorKind::EmptyAfterCleaning, path + ": " + std::to_string(kept) + " usable rows, need " +
                                                   std::to_string(std::max<Index>(1, options.min_rows)));
  }
  out.values = Eigen::Map<Matrix>(flat.data(), kept, static_cast<Index>(selected.size()));
  return out;
}

void write_series_csv(const std::string& path, const RawSeries& series) {
  std::ofstream os = open_for_write(path);
  for (std::size_t j = 0; j < series.feature_names.size(); ++j) {
    os << (j ? "," : "") << series.feature_names[j];
  }
  os << '\n';
  for (Index i = 0; i < series.values.rows(); ++i) {
    for (Index j = 0; j < series.values.cols(); ++j) {
      os << (j ? "," : "") << format_double(series.values(i, j));
    }
    os << '\n';
  }
}

NormStats fit_normalizer(const RawSeries& raw) {
  if (raw.values.rows() < 1) throw Error(ErrorKind::EmptyAfterCleaning, "cannot fit on an empty series");
  return NormStats{raw.values.colwise().minCoeff(), raw.values.colwise().maxCoeff()};
}

Matrix normalize(const Matrix& values, const NormStats& stats) {
  if (values.cols() != stats.features()) {
    throw Error(ErrorKind::FeatureCountMismatch, std::to_string(values.cols()) + " features, stats have " +
                                                     std::to_string(stats.features()));
  }
  Matrix out(values.rows(), values.cols());
  for (Index j = 0; j < values.cols(); ++j) {
    if (stats.is_constant(j)) {
      out.col(j).setConstant(0.5);
      continue;
    }
    const double range = stats.max(j) - stats.min(j);
    for (Index i = 0; i < values.rows(); ++i) {
      out(i, j) = std::clamp((values(i, j) - stats.min(j)) / range, 0.0, 1.0);
    }
  }
  return out;
}

RawSeries normalize(const RawSeries& raw, const NormStats& stats) {
  RawSeries out = raw;
  out.values = normalize(raw.values, stats);
  return out;
}

Matrix denormalize(const Matrix& values, const NormStats& stats) {
  if (values.cols() != stats.features()) {
    throw Error(ErrorKind::FeatureCountMismatch, std::to_string(values.cols()) + " features, stats have " +
                                                     std::to_string(stats.features()));
  }
  Matrix out(values.rows(), values.cols());
  for (Index j = 0; j < values.cols(); ++j) {
    if (stats.is_constant(j)) {
      out.col(j).setConstant(stats.min(j));
    } else {
      out.col(j) = values.col(j) * (stats.max(j) - stats.min(j)) +
                   Eigen::VectorXd::Constant(values.rows(), stats.min(j));
    }
  }
  return out;
}

std::vector<Matrix> denormalize(const std::vector<TimeSeriesWindow>& windows, const NormStats& stats) {
  std::vector<Matrix> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(denormalize(w.values, stats));
  return out;
}

std::vector<TimeSeriesWindow> make_windows(const RawSeries& series, Index length, Index stride) {
  if (length < 2 || stride < 1) {
    throw Error(ErrorKind::ConfigInvalid, "window length must be >= 2 and stride >= 1");
  }
  if (series.length() < length) {
    throw Error(ErrorKind::SeriesTooShort, std::to_string(series.length()) + " rows < window " +
                                               std::to_string(length));
  }
  std::vector<TimeSeriesWindow> out;
  out.reserve(static_cast<std::size_t>((series.length() - length) / stride + 1));
  for (Index origin = 0; origin + length <= series.length(); origin += stride) {
    out.push_back({series.values.middleRows(origin, length), origin});
  }
  return out;
}

Matrix to_time_major(const std::vector<TimeSeriesWindow>& windows, const std::vector<std::size_t>& indices) {
  if (indices.empty()) return Matrix(0, 0);
  const Index steps = windows[indices.front()].values.rows();
  const Index feats = windows[indices.front()].values.cols();
  const Index batch = static_cast<Index>(indices.size());
  Matrix out(steps * batch, feats);
  for (Index b = 0; b < batch; ++b) {
    const Matrix& w = windows[indices[static_cast<std::size_t>(b)]].values;
    for (Index t = 0; t < steps; ++t) out.row(t * batch + b) = w.row(t);
  }
  return out;
}

Matrix to_time_major(const std::vector<Matrix>& windows) {
  if (windows.empty()) return Matrix(0, 0);
  const Index steps = windows.front().rows();
  const Index batch = static_cast<Index>(windows.size());
  Matrix out(steps * batch, windows.front().cols());
  for (Index b = 0; b < batch; ++b) {
    for (Index t = 0; t < steps; ++t) out.row(t * batch + b) = windows[static_cast<std::size_t>(b)].row(t);
  }
  return out;
}

std::vector<Matrix> from_time_major(const Matrix& stacked, Index steps, Index batch) {
  std::vector<Matrix> out(static_cast<std::size_t>(batch), Matrix(steps, stacked.cols()));
  for (Index b = 0; b < batch; ++b) {
    for (Index t = 0; t < steps; ++t) out[static_cast<std::size_t>(b)].row(t) = stacked.row(t * batch + b);
  }
  return out;
}

BatchIterator::BatchIterator(std::size_t count, std::size_t batch_size, std::uint64_t seed)
    : count_(count), batch_size_(std::max<std::size_t>(1, batch_size)), seed_(seed) {
  start_epoch(0);
}

void BatchIterator::start_epoch(std::uint64_t epoch) {
  order_.resize(count_);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  Rng rng = Rng::stream(seed_, epoch);
  rng.shuffle(order_.begin(), order_.end());
  cursor_ = 0;
}

bool BatchIterator::next(std::vector<std::size_t>& indices) {
  if (cursor_ >= count_) return false;
  const std::size_t end = std::min(count_, cursor_ + batch_size_);
  indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                 order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return true;
}

std::size_t BatchIterator::batches_per_epoch() const { return (count_ + batch_size_ - 1) / batch_size_; }

void write_windows_csv(const std::string& path, const std::vector<Matrix>& windows,
                       const std::vector<std::string>& feature_names, bool window_id_column) {
  std::ofstream os = open_for_write(path);
  if (window_id_column) os << "window_id";
  for (std::size_t j = 0; j < feature_names.size(); ++j) {
    os << ((j || window_id_column) ? "," : "") << feature_names[j];
  }
  os << '\n';
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const Matrix& m = windows[w];
    for (Index i = 0; i < m.rows(); ++i) {
      if (window_id_column) os << w;
      for (Index j = 0; j < m.cols(); ++j) {
        os << ((j || window_id_column) ? "," : "") << format_double(m(i, j));
      }
      os << '\n';
    }
  }
}

std::vector<Matrix> read_windows_csv(const std::string& path, std::vector<std::string>* feature_names) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::FileNotFound, path);
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::CorruptFile, path + " is empty");
  std::vector<std::string> header = split_csv_line(line);
  if (header.empty() || header.front() != "window_id") {
    throw Error(ErrorKind::CorruptFile, path + ": expected a window_id column");
  }
  if (feature_names) feature_names->assign(header.begin() + 1, header.end());
  const std::size_t m = header.size() - 1;
  std::map<long, std::vector<std::vector<double>>> grouped;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) throw Error(ErrorKind::CorruptFile, path + ": ragged row");
    double id = 0;
    if (!parse_number(fields[0], id)) throw Error(ErrorKind::CorruptFile, path + ": bad window id");
    std::vector<double> row(m);
    for (std::size_t j = 0; j < m; ++j) {
      if (!parse_number(fields[j + 1], row[j])) throw Error(ErrorKind::CorruptFile, path + ": bad value");
    }
    grouped[static_cast<long>(id)].push_back(std::move(row));
  }
  std::vector<Matrix> out;
  for (auto& [id, rows] : grouped) {
    Matrix w(static_cast<Index>(rows.size()), static_cast<Index>(m));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < m; ++j) w(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
    if (!out.empty() && w.rows() != out.front().rows()) {
      throw Error(ErrorKind::CorruptFile, path + ": windows of different lengths");
    }
    out.push_back(std::move(w));
  }
  return out;
}

RawSeries make_sine(Index length, Index features, std::uint64_t seed, double noise) {
  Rng rng(seed);
  RawSeries out;
  out.values.resize(length, features);
  for (Index j = 0; j < features; ++j) {
    const double freq = rng.uniform(0.02, 0.1);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (Index t = 0; t < length; ++t) {
      out.values(t, j) = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) + phase);
    }
    out.feature_names.push_back("s" + std::to_string(j));
  }
  if (noise > 0) out.values += noise * rng.normal_matrix(length, features);
  out.source_path = "sine(seed=" + std::to_string(seed) + ")";
  return out;
}

Dataset prepare_dataset(RawSeries raw, Eigen::Index length, Eigen::Index stride) {
  NormStats stats = fit_normalizer(raw);
  return prepare_dataset(std::move(raw), stats, length, stride);
}

Dataset prepare_dataset(RawSeries raw, const NormStats& stats, Eigen::Index length, Eigen::Index stride) {
  Dataset d;
  d.stats = stats;
  d.windows = make_windows(normalize(raw, stats), length, stride);
  d.raw = std::move(raw);
  return d;
}

std::vector<Matrix> window_values(const std::vector<TimeSeriesWindow>& windows) {
  std::vector<Matrix> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(w.values);
  return out;
}

}  // namespace dlgan
