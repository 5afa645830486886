#pragma once

// Tabular datasets: schema and task inference, min-max normalization,
// seeded train/validation split, and the summary shown before training.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "nntrace/core/matrix.hpp"
#include "nntrace/core/network.hpp"
#include "nntrace/core/rng.hpp"
#include "nntrace/data/csv.hpp"
#include "nntrace/error.hpp"

namespace nntrace::data {

/// Integer-valued numeric targets with at most this many distinct values are
/// treated as class codes.
inline constexpr std::size_t kMaxIntegerClasses = 10;
inline constexpr std::size_t kMinRows = 10;

struct DatasetSchema {
  std::vector<std::string> feature_names;
  std::string target_name;
  TaskKind task = TaskKind::Classification;
  std::vector<std::string> class_labels;  // classification only

  std::size_t output_size() const noexcept {
    return task == TaskKind::Classification ? class_labels.size() : 1;
  }

  friend bool operator==(const DatasetSchema&, const DatasetSchema&) = default;
};

struct NormStats {
  double min = 0.0;
  double max = 0.0;

  /// Constant columns map to 0.
  double apply(double value) const noexcept {
    const double range = max - min;
    return range > 0.0 ? (value - min) / range : 0.0;
  }
  double invert(double scaled) const noexcept { return min + scaled * (max - min); }

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;

  friend bool operator==(const Split&, const Split&) = default;
};

struct Dataset {
  std::string name;
  DatasetSchema schema;
  Matrix raw;                          // n x d, as read
  Matrix features;                     // n x d, normalized with training-split stats
  Matrix targets;                      // one-hot (n x classes) or scaled (n x 1)
  std::vector<double> raw_targets;     // regression: original target values
  std::vector<std::size_t> class_index;  // classification: label index per row
  std::vector<NormStats> norm_stats;   // per feature
  std::optional<NormStats> target_stats;  // regression only
  Split split;

  std::size_t samples() const noexcept { return raw.rows(); }
  std::size_t feature_count() const noexcept { return raw.cols(); }

  Vector x(std::size_t row) const {
    const auto r = features.row(row);
    return {r.begin(), r.end()};
  }
  Vector y(std::size_t row) const {
    const auto r = targets.row(row);
    return {r.begin(), r.end()};
  }

  /// Scales a raw feature vector with the stored training statistics.
  Vector normalize_input(std::span<const double> raw_row) const {
    if (raw_row.size() != norm_stats.size())
      throw ShapeError("expected " + std::to_string(norm_stats.size()) + " inputs, got " +
                       std::to_string(raw_row.size()));
    Vector out(raw_row.size());
    for (std::size_t j = 0; j < raw_row.size(); ++j) {
      if (!std::isfinite(raw_row[j]))
        throw InputError("input '" + schema.feature_names[j] + "' is not a finite number");
      out[j] = norm_stats[j].apply(raw_row[j]);
    }
    return out;
  }
};

struct DatasetSummary {
  std::size_t samples = 0;
  std::vector<std::string> feature_names;
  std::string target_name;
  TaskKind task = TaskKind::Classification;
  std::vector<std::string> class_labels;
};

namespace detail {

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_number(std::string_view text) noexcept {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value))
    return std::nullopt;
  return value;
}

inline bool is_integer(double v) noexcept { return std::nearbyint(v) == v && std::abs(v) < 1e15; }

inline std::string integer_label(double v) { return std::to_string(static_cast<long long>(v)); }

inline std::size_t resolve_target(const std::vector<std::string>& header,
                                  const std::optional<std::string>& target) {
  if (!target) return header.size() - 1;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (trim(header[j]) == trim(*target)) return j;
  throw DataError("target column '" + *target + "' not found", 1, *target);
}

inline void check_missing(const CsvTable& table) {
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    for (std::size_t c = 0; c < table.header.size(); ++c)
      if (trim(table.rows[r][c]).empty())
        throw DataError("missing value in column '" + table.header[c] + "' on row " +
                            std::to_string(table.row_numbers[r]),
                        table.row_numbers[r], table.header[c]);
}

}  // namespace detail

/// Target is the last column unless `target` names another one. A
/// non-numeric target, or an integer target with few distinct values, makes
/// the task classification; anything else is regression. Every other column
/// must be numeric.
inline DatasetSchema infer_schema(const CsvTable& table,
                                  const std::optional<std::string>& target = std::nullopt) {
  const auto& header = table.header;
  if (header.size() < 2) throw DataError("need at least 2 columns (features and a target)", 1);
  if (table.rows.size() < kMinRows)
    throw DataError("need at least " + std::to_string(kMinRows) + " data rows, got " +
                    std::to_string(table.rows.size()));
  std::set<std::string_view> seen;
  for (const auto& h : header) {
    const auto name = detail::trim(h);
    if (name.empty()) throw DataError("empty column name in header", 1);
    if (!seen.insert(name).second)
      throw DataError("duplicate column name '" + std::string(name) + "'", 1, std::string(name));
  }
  detail::check_missing(table);

  const std::size_t target_col = detail::resolve_target(header, target);
  DatasetSchema schema;
  schema.target_name = std::string(detail::trim(header[target_col]));
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == target_col) continue;
    schema.feature_names.emplace_back(detail::trim(header[c]));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      if (!detail::parse_number(table.rows[r][c]))
        throw DataError("feature column '" + std::string(detail::trim(header[c])) +
                            "' is not numeric (row " + std::to_string(table.row_numbers[r]) +
                            ": '" + table.rows[r][c] + "')",
                        table.row_numbers[r], std::string(detail::trim(header[c])));
    }
  }

  bool numeric = true;
  bool integral = true;
  std::set<double> numeric_values;
  std::set<std::string> text_values;
  for (const auto& row : table.rows) {
    const auto cell = detail::trim(row[target_col]);
    text_values.emplace(cell);
    if (const auto v = detail::parse_number(cell)) {
      numeric_values.insert(*v);
      integral = integral && detail::is_integer(*v);
    } else {
      numeric = false;
    }
  }

  if (!numeric) {
    schema.task = TaskKind::Classification;
    schema.class_labels.assign(text_values.begin(), text_values.end());
  } else if (integral && numeric_values.size() <= kMaxIntegerClasses) {
    schema.task = TaskKind::Classification;
    for (double v : numeric_values) schema.class_labels.push_back(detail::integer_label(v));
  } else {
    schema.task = TaskKind::Regression;
  }
  if (schema.task == TaskKind::Classification && schema.class_labels.size() < 2)
    throw DataError("target column '" + schema.target_name + "' has fewer than 2 classes", 0,
                    schema.target_name);
  return schema;
}

inline std::vector<NormStats> compute_norm_stats(const Matrix& raw,
                                                 const std::vector<std::size_t>& rows) {
  std::vector<NormStats> stats(raw.cols());
  for (std::size_t j = 0; j < raw.cols(); ++j) {
    bool first = true;
    for (std::size_t r : rows) {
      const double v = raw(r, j);
      if (first) {
        stats[j] = {v, v};
        first = false;
      } else {
        stats[j].min = std::min(stats[j].min, v);
        stats[j].max = std::max(stats[j].max, v);
      }
    }
  }
  return stats;
}

inline Matrix apply_norm_stats(const Matrix& raw, const std::vector<NormStats>& stats) {
  if (stats.size() != raw.cols()) throw ShapeError("normalization stats do not match columns");
  Matrix out(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.rows(); ++i)
    for (std::size_t j = 0; j < raw.cols(); ++j) out(i, j) = stats[j].apply(raw(i, j));
  return out;
}

struct Normalized {
  Matrix values;
  std::vector<NormStats> stats;
};

/// Per-column min-max scaling to [0, 1] using every row.
inline Normalized normalize(const Matrix& raw) {
  std::vector<std::size_t> all(raw.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto stats = compute_norm_stats(raw, all);
  return {apply_norm_stats(raw, stats), std::move(stats)};
}

namespace detail {

/// Recomputes normalization (features and regression target) from the
/// current training split.
inline void refit_normalization(Dataset& ds) {
  ds.norm_stats = compute_norm_stats(ds.raw, ds.split.train);
  ds.features = apply_norm_stats(ds.raw, ds.norm_stats);
  if (ds.schema.task == TaskKind::Regression) {
    Matrix column(ds.samples(), 1);
    for (std::size_t i = 0; i < ds.samples(); ++i) column(i, 0) = ds.raw_targets[i];
    const auto stats = compute_norm_stats(column, ds.split.train);
    ds.target_stats = stats.front();
    ds.targets = apply_norm_stats(column, stats);
  }
}

}  // namespace detail

/// Builds a dataset from a parsed table and its schema. The split starts as
/// "every row is training".
inline Dataset build_dataset(std::string name, const CsvTable& table, const DatasetSchema& schema) {
  const std::size_t n = table.rows.size();
  const std::size_t d = schema.feature_names.size();
  std::vector<std::size_t> feature_cols;
  std::size_t target_col = 0;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (detail::trim(table.header[c]) == schema.target_name)
      target_col = c;
    else
      feature_cols.push_back(c);
  }
  if (feature_cols.size() != d) throw DataError("schema does not match table columns");

  Dataset ds;
  ds.name = std::move(name);
  ds.schema = schema;
  ds.raw = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      ds.raw(i, j) = *detail::parse_number(table.rows[i][feature_cols[j]]);

  if (schema.task == TaskKind::Classification) {
    std::map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < schema.class_labels.size(); ++k) index[schema.class_labels[k]] = k;
    const bool numeric_labels =
        std::all_of(schema.class_labels.begin(), schema.class_labels.end(),
                    [](const std::string& l) { return detail::parse_number(l).has_value(); });
    ds.targets = Matrix(n, schema.class_labels.size());
    ds.class_index.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::string key(detail::trim(table.rows[i][target_col]));
      if (numeric_labels) {
        if (const auto v = detail::parse_number(key)) key = detail::integer_label(*v);
      }
      const auto it = index.find(key);
      if (it == index.end())
        throw DataError("unknown class label '" + key + "'", table.row_numbers[i], schema.target_name);
      ds.class_index[i] = it->second;
      ds.targets(i, it->second) = 1.0;
    }
  } else {
    ds.raw_targets.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      ds.raw_targets[i] = *detail::parse_number(table.rows[i][target_col]);
  }

  ds.split.train.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.split.train[i] = i;
  detail::refit_normalization(ds);
  return ds;
}

/// parse_csv + infer_schema + build_dataset.
inline Dataset load_csv(std::string_view text, std::string name,
                        const std::optional<std::string>& target = std::nullopt) {
  const CsvTable table = parse_csv(text);
  const DatasetSchema schema = infer_schema(table, target);
  return build_dataset(std::move(name), table, schema);
}

/// Seeded shuffle, then the first floor(n * val_fraction) shuffled rows
/// become validation. Normalization is refit on the training rows only, so
/// validation rows may fall slightly outside [0, 1].
inline Dataset split(const Dataset& dataset, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ConfigError("validation fraction must be in [0, 1)", "val_fraction");
  const std::size_t n = dataset.samples();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  shuffle(order, rng);
  const auto val_count = static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_fraction));

  Dataset out = dataset;
  out.split.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val_count));
  out.split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(val_count), order.end());
  std::sort(out.split.val.begin(), out.split.val.end());
  std::sort(out.split.train.begin(), out.split.train.end());
  detail::refit_normalization(out);
  return out;
}

inline DatasetSummary summarize(const Dataset& dataset) {
  return {dataset.samples(), dataset.schema.feature_names, dataset.schema.target_name,
          dataset.schema.task, dataset.schema.class_labels};
}

}  // namespace nntrace::data
