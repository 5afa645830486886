#pragma once

// Built-in datasets. The CSV text is embedded at build time from
// resources/*.csv and goes through the same ingestion path as uploads.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nntrace/data/dataset.hpp"
#include "nntrace/data/embedded_resources.hpp"

namespace nntrace::data {

inline std::string_view iris_csv() noexcept { return resources::kIrisCsv; }
inline std::string_view diabetes_csv() noexcept { return resources::kDiabetesCsv; }

/// Fisher's Iris measurements: 150 rows, 4 features, 3 species.
inline Dataset builtin_iris() { return load_csv(iris_csv(), "iris"); }

/// Diabetes progression regression table: 442 rows, 6 features
/// (age, bmi, bp, s1, s5, s6), numeric target.
inline Dataset builtin_diabetes() { return load_csv(diabetes_csv(), "diabetes"); }

inline std::vector<std::string> builtin_names() { return {"iris", "diabetes"}; }

inline std::optional<Dataset> builtin(std::string_view name) {
  if (name == "iris") return builtin_iris();
  if (name == "diabetes") return builtin_diabetes();
  return std::nullopt;
}

}  // namespace nntrace::data
