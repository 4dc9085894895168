#pragma once

// Time-series collections: loading (UCR tsv, long csv), merging train/test
// splits, per-series z-normalization and flattening to row vectors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hcaecs/detail/text.hpp"
#include "hcaecs/error.hpp"

namespace hcaecs {

enum class DatasetFormat { ucr_tsv, csv_long };

inline DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "ucr_tsv" || name == "tsv") return DatasetFormat::ucr_tsv;
  if (name == "csv_long" || name == "csv") return DatasetFormat::csv_long;
  throw ConfigError("unknown dataset format '" + std::string(name) + "'");
}

// Class labels as 0-based contiguous ids plus the original numeric value of
// each id, so splits loaded from separate files can be merged consistently.
struct Labels {
  std::vector<int> ids;
  std::vector<double> class_values;

  std::size_t class_count() const { return class_values.size(); }

  // Remaps raw values to ids in first-appearance order.
  static Labels from_raw(const std::vector<double>& raw) {
    Labels out;
    out.ids.reserve(raw.size());
    for (double v : raw) {
      auto it = std::find(out.class_values.begin(), out.class_values.end(), v);
      if (it == out.class_values.end()) {
        out.ids.push_back(static_cast<int>(out.class_values.size()));
        out.class_values.push_back(v);
      } else {
        out.ids.push_back(static_cast<int>(it - out.class_values.begin()));
      }
    }
    return out;
  }

  std::vector<double> raw() const {
    std::vector<double> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(class_values[static_cast<std::size_t>(id)]);
    return out;
  }
};

// M series x n_max timesteps x d dimensions, zero-padded past each series'
// length. Immutable once constructed.
class TimeSeriesDataset {
public:
  TimeSeriesDataset(std::string name, std::size_t max_length, std::size_t dims,
                    std::vector<double> values, std::vector<std::size_t> lengths,
                    std::optional<Labels> labels = std::nullopt)
      : name_(std::move(name)),
        max_length_(max_length),
        dims_(dims),
        values_(std::move(values)),
        lengths_(std::move(lengths)),
        labels_(std::move(labels)) {
    validate();
  }

  // Univariate, equal-length convenience constructor.
  static TimeSeriesDataset from_rows(std::string name, const std::vector<std::vector<double>>& rows,
                                     std::optional<std::vector<double>> raw_labels = std::nullopt) {
    std::size_t n_max = 0;
    for (const auto& r : rows) n_max = std::max(n_max, r.size());
    std::vector<double> values(rows.size() * n_max, 0.0);
    std::vector<std::size_t> lengths;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy(rows[i].begin(), rows[i].end(), values.begin() + static_cast<std::ptrdiff_t>(i * n_max));
      lengths.push_back(rows[i].size());
    }
    std::optional<Labels> labels;
    if (raw_labels) labels = Labels::from_raw(*raw_labels);
    return TimeSeriesDataset(std::move(name), n_max, 1, std::move(values), std::move(lengths),
                             std::move(labels));
  }

  const std::string& name() const { return name_; }
  std::size_t size() const { return lengths_.size(); }
  std::size_t max_length() const { return max_length_; }
  std::size_t dims() const { return dims_; }
  const std::vector<std::size_t>& lengths() const { return lengths_; }
  std::size_t length(std::size_t i) const { return lengths_[i]; }
  const std::vector<double>& values() const { return values_; }
  bool has_labels() const { return labels_.has_value(); }
  const std::optional<Labels>& labels() const { return labels_; }

  double value(std::size_t series, std::size_t t, std::size_t dim) const {
    return values_[(series * max_length_ + t) * dims_ + dim];
  }
  bool observed(std::size_t series, std::size_t t) const { return t < lengths_[series]; }

  // Row-major M x n_max, 1 where observed.
  std::vector<unsigned char> mask() const {
    std::vector<unsigned char> m(size() * max_length_, 0);
    for (std::size_t i = 0; i < size(); ++i)
      std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(i * max_length_), lengths_[i], 1);
    return m;
  }

  std::size_t observed_count() const {
    std::size_t total = 0;
    for (auto l : lengths_) total += l;
    return total * dims_;
  }

  std::string fingerprint() const {
    detail::Fnv1a h;
    h.update_value(max_length_);
    h.update_value(dims_);
    h.update(values_.data(), values_.size() * sizeof(double));
    h.update(lengths_.data(), lengths_.size() * sizeof(std::size_t));
    if (labels_) h.update(labels_->ids.data(), labels_->ids.size() * sizeof(int));
    return h.hex();
  }

  bool operator==(const TimeSeriesDataset& other) const {
    auto same_labels = [&] {
      if (labels_.has_value() != other.labels_.has_value()) return false;
      if (!labels_) return true;
      return labels_->ids == other.labels_->ids && labels_->class_values == other.labels_->class_values;
    };
    return max_length_ == other.max_length_ && dims_ == other.dims_ && values_ == other.values_ &&
           lengths_ == other.lengths_ && same_labels();
  }

private:
  void validate() const {
    if (lengths_.size() < 2) throw ShapeError("dataset needs at least 2 series, got " + std::to_string(lengths_.size()));
    if (max_length_ < 2) throw ShapeError("series must have at least 2 timesteps");
    if (dims_ < 1) throw ShapeError("series must have at least 1 dimension");
    if (values_.size() != lengths_.size() * max_length_ * dims_)
      throw ShapeError("value tensor size does not match M x n_max x d");
    for (std::size_t i = 0; i < lengths_.size(); ++i) {
      if (lengths_[i] < 2 || lengths_[i] > max_length_)
        throw ShapeError("series " + std::to_string(i) + " has invalid length " + std::to_string(lengths_[i]));
    }
    if (labels_) {
      if (labels_->ids.size() != lengths_.size()) throw ShapeError("label count does not match series count");
      for (int id : labels_->ids)
        if (id < 0 || static_cast<std::size_t>(id) >= labels_->class_values.size())
          throw ShapeError("label id out of range");
    }
  }

  std::string name_;
  std::size_t max_length_;
  std::size_t dims_;
  std::vector<double> values_;
  std::vector<std::size_t> lengths_;
  std::optional<Labels> labels_;
};

// ---------------------------------------------------------------------------
// Parsing

// One series per line, tab separated, label first. Trailing NaN cells are the
// archive's padding for variable-length series and shorten that series.
inline TimeSeriesDataset parse_ucr_tsv(std::istream& in, std::string name = "dataset") {
  std::vector<std::vector<double>> rows;
  std::vector<double> raw_labels;
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split(line, '\t');
    if (columns == 0) {
      columns = cells.size();
      if (columns < 3) throw ParseError("expected a label and at least 2 values", line_no);
    } else if (cells.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) + " columns, got " + std::to_string(cells.size()),
                       line_no);
    }
    auto label = detail::parse_double(cells[0]);
    if (!label || !std::isfinite(*label)) throw ParseError("non-numeric label '" + std::string(cells[0]) + "'", line_no);
    std::vector<double> row;
    row.reserve(columns - 1);
    bool padding = false;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      auto v = detail::parse_double(cells[c]);
      if (!v || std::isinf(*v)) throw ParseError("non-numeric value '" + std::string(cells[c]) + "'", line_no);
      if (std::isnan(*v)) {
        padding = true;
        continue;
      }
      if (padding) throw ParseError("missing value inside a series", line_no);
      row.push_back(*v);
    }
    raw_labels.push_back(*label);
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw ShapeError("dataset needs at least 2 series, got " + std::to_string(rows.size()));
  return TimeSeriesDataset::from_rows(std::move(name), rows, raw_labels);
}

// Header `series_id,dim,t,value[,label]`; rows in any order. Series are
// ordered by ascending integer id.
inline TimeSeriesDataset parse_csv_long(std::istream& in, std::string name = "dataset") {
  std::string line;
  std::size_t line_no = 0;
  bool has_label = false;
  while (std::getline(in, line)) {
    ++line_no;
    auto header = detail::trim(line);
    if (header.empty()) continue;
    if (header == "series_id,dim,t,value") break;
    if (header == "series_id,dim,t,value,label") {
      has_label = true;
      break;
    }
    throw ParseError("expected header series_id,dim,t,value[,label]", line_no);
  }
  if (line_no == 0) throw ParseError("empty file", 1);

  struct Cells {
    std::map<std::pair<long long, long long>, double> values;  // (dim, t) -> value
    std::optional<double> label;
    std::size_t first_line = 0;
  };
  std::map<long long, Cells> series;
  const std::size_t columns = has_label ? 5 : 4;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split(line, ',');
    if (cells.size() != columns)
      throw ParseError("expected " + std::to_string(columns) + " columns, got " + std::to_string(cells.size()),
                       line_no);
    auto id = detail::parse_int(cells[0]);
    auto dim = detail::parse_int(cells[1]);
    auto t = detail::parse_int(cells[2]);
    if (!id || !dim || !t || *id < 0 || *dim < 0 || *t < 0)
      throw ParseError("series_id, dim and t must be non-negative integers", line_no);
    auto v = detail::parse_double(cells[3]);
    if (!v || !std::isfinite(*v)) throw ParseError("non-numeric value '" + std::string(cells[3]) + "'", line_no);
    auto& s = series[*id];
    if (s.first_line == 0) s.first_line = line_no;
    if (!s.values.emplace(std::make_pair(*dim, *t), *v).second)
      throw ParseError("duplicate (series_id, dim, t) entry", line_no);
    if (has_label) {
      auto l = detail::parse_double(cells[4]);
      if (!l || !std::isfinite(*l)) throw ParseError("non-numeric label '" + std::string(cells[4]) + "'", line_no);
      if (s.label && *s.label != *l) throw ParseError("series has conflicting labels", line_no);
      s.label = *l;
    }
  }
  if (series.size() < 2) throw ShapeError("dataset needs at least 2 series, got " + std::to_string(series.size()));

  long long max_dim = -1;
  for (const auto& [id, s] : series)
    for (const auto& [key, v] : s.values) max_dim = std::max(max_dim, key.first);
  const auto d = static_cast<std::size_t>(max_dim + 1);

  std::vector<std::size_t> lengths;
  for (const auto& [id, s] : series) {
    if (s.values.size() % d != 0)
      throw ParseError("series " + std::to_string(id) + " has unequal lengths across dimensions", s.first_line);
    const std::size_t len = s.values.size() / d;
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t t = 0; t < len; ++t)
        if (!s.values.count({static_cast<long long>(k), static_cast<long long>(t)}))
          throw ParseError("series " + std::to_string(id) + " is missing dim " + std::to_string(k) + " t " +
                               std::to_string(t),
                           s.first_line);
    lengths.push_back(len);
  }
  const std::size_t n_max = *std::max_element(lengths.begin(), lengths.end());
  std::vector<double> values(series.size() * n_max * d, 0.0);
  std::vector<double> raw_labels;
  std::size_t i = 0;
  for (const auto& [id, s] : series) {
    for (const auto& [key, v] : s.values)
      values[(i * n_max + static_cast<std::size_t>(key.second)) * d + static_cast<std::size_t>(key.first)] = v;
    if (has_label) raw_labels.push_back(*s.label);
    ++i;
  }
  std::optional<Labels> labels;
  if (has_label) labels = Labels::from_raw(raw_labels);
  return TimeSeriesDataset(std::move(name), n_max, d, std::move(values), std::move(lengths), std::move(labels));
}

inline TimeSeriesDataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  std::ifstream in(path);
  if (!in) throw ShapeError("cannot open dataset file " + path.string());
  auto name = path.stem().string();
  for (std::string_view suffix : {"_TRAIN", "_TEST"})
    if (name.size() > suffix.size() && name.ends_with(suffix)) name.resize(name.size() - suffix.size());
  return format == DatasetFormat::ucr_tsv ? parse_ucr_tsv(in, name) : parse_csv_long(in, name);
}

inline void write_csv_long(const TimeSeriesDataset& ds, std::ostream& out) {
  const bool labelled = ds.has_labels();
  out << (labelled ? "series_id,dim,t,value,label\n" : "series_id,dim,t,value\n");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::string label;
    if (labelled)
      label = "," + detail::format_double(ds.labels()->class_values[static_cast<std::size_t>(ds.labels()->ids[i])]);
    for (std::size_t k = 0; k < ds.dims(); ++k)
      for (std::size_t t = 0; t < ds.length(i); ++t)
        out << i << ',' << k << ',' << t << ',' << detail::format_double(ds.value(i, t, k)) << label << '\n';
  }
}

inline void save_csv_long(const TimeSeriesDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ShapeError("cannot write " + path.string());
  write_csv_long(ds, out);
}

// ---------------------------------------------------------------------------
// Transformations

// Train rows first. Labels are matched on their original values.
inline TimeSeriesDataset merge(const TimeSeriesDataset& train, const TimeSeriesDataset& test) {
  if (train.dims() != test.dims())
    throw ShapeError("cannot merge datasets with " + std::to_string(train.dims()) + " and " +
                     std::to_string(test.dims()) + " dimensions");
  if (train.has_labels() != test.has_labels()) throw ShapeError("cannot merge labelled with unlabelled data");
  const std::size_t n_max = std::max(train.max_length(), test.max_length());
  const std::size_t d = train.dims();
  const std::size_t m = train.size() + test.size();
  std::vector<double> values(m * n_max * d, 0.0);
  std::vector<std::size_t> lengths;
  lengths.reserve(m);
  std::size_t row = 0;
  for (const auto* part : {&train, &test}) {
    for (std::size_t i = 0; i < part->size(); ++i, ++row) {
      auto src = part->values().begin() + static_cast<std::ptrdiff_t>(i * part->max_length() * d);
      std::copy(src, src + static_cast<std::ptrdiff_t>(part->length(i) * d),
                values.begin() + static_cast<std::ptrdiff_t>(row * n_max * d));
      lengths.push_back(part->length(i));
    }
  }
  std::optional<Labels> labels;
  if (train.has_labels()) {
    auto raw = train.labels()->raw();
    auto tail = test.labels()->raw();
    raw.insert(raw.end(), tail.begin(), tail.end());
    labels = Labels::from_raw(raw);
  }
  return TimeSeriesDataset(train.name(), n_max, d, std::move(values), std::move(lengths), std::move(labels));
}

inline constexpr double kStdEpsilon = 1e-8;

// Per series and per dimension over observed timesteps, population std.
// Slices with std <= kStdEpsilon are only centred.
inline TimeSeriesDataset z_normalize(const TimeSeriesDataset& ds) {
  std::vector<double> values = ds.values();
  const std::size_t n_max = ds.max_length();
  const std::size_t d = ds.dims();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t len = ds.length(i);
    for (std::size_t k = 0; k < d; ++k) {
      auto at = [&](std::size_t t) -> double& { return values[(i * n_max + t) * d + k]; };
      double mean = 0.0;
      for (std::size_t t = 0; t < len; ++t) mean += at(t);
      mean /= static_cast<double>(len);
      double var = 0.0;
      for (std::size_t t = 0; t < len; ++t) var += (at(t) - mean) * (at(t) - mean);
      const double sd = std::sqrt(var / static_cast<double>(len));
      for (std::size_t t = 0; t < len; ++t) {
        at(t) -= mean;
        if (sd > kStdEpsilon) at(t) /= sd;
      }
    }
  }
  return TimeSeriesDataset(ds.name(), n_max, d, std::move(values), ds.lengths(), ds.labels());
}

// M x (n_max * d) row matrix, timestep-major within a row; padding stays 0.
inline Eigen::MatrixXd flatten(const TimeSeriesDataset& ds) {
  const std::size_t width = ds.max_length() * ds.dims();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t c = 0; c < width; ++c)
      rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = ds.values()[i * width + c];
  return rows;
}

}  // namespace hcaecs
