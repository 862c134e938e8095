#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "faircdc/matrix.hpp"

namespace faircdc {

enum class ColumnKind { Numeric, Categorical };

struct FeatureSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
};

enum class MissingPolicy { Drop, Impute };

// Declarative description of a CSV dataset. JSON keys: "features" (list of
// {"name", "type": "numeric"|"categorical"}), "label", "sensitive",
// "positive_class" (optional label value), "missing_policy" ("drop" |
// "impute", default drop).
struct DatasetSchema {
  std::vector<FeatureSpec> features;
  std::string label;
  std::string sensitive;
  std::string positive_class;  // empty = second label category
  MissingPolicy missing = MissingPolicy::Drop;

  static DatasetSchema from_json(const std::string& text);
  static DatasetSchema from_json_file(const std::string& path);
};

struct RawColumn {
  ColumnKind kind = ColumnKind::Categorical;
  std::vector<double> numeric;     // filled for numeric columns
  std::vector<std::string> text;   // filled for categorical columns
};

// Typed columns in schema order: features, then label, then sensitive.
// Missing cells (empty or "?") are handled per the schema policy while
// loading; drop removes the row, impute fills the column mean or mode.
struct RawTable {
  std::vector<std::string> names;
  std::vector<RawColumn> columns;
  std::size_t n_rows = 0;
  std::size_t dropped_rows = 0;
  std::size_t imputed_cells = 0;
};

RawTable load_csv(const std::string& path, const DatasetSchema& schema);
RawTable load_csv_text(const std::string& text, const DatasetSchema& schema);

// Splits CSV text into rows of fields. Double-quoted fields may contain
// commas and doubled quotes; unquoted fields are trimmed. Blank lines are
// skipped.
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

// Encoded, model-ready split: standardized numerics and one-hot categoricals
// in x, integer class labels and group ids with their one-hot codings.
struct Dataset {
  Matrix x;
  std::vector<int> labels;
  std::vector<int> groups;
  Matrix label_onehot;
  Matrix group_onehot;
  std::size_t n_classes = 0;
  std::size_t n_groups = 0;
  std::size_t n() const { return labels.size(); }
};

// Encoding state fitted on training rows only: per-numeric mean and standard
// deviation, category vocabularies in first-appearance order.
struct Preprocessor {
  std::vector<double> mean;
  std::vector<double> stdev;
  std::vector<std::vector<std::string>> categories;  // per categorical feature
  std::vector<std::string> label_values;
  std::vector<std::string> group_values;
  int positive_class = 1;

  // Encodes the given rows. Unseen feature categories map to an all-zero
  // block and are tallied into *unseen when provided; unseen label or
  // sensitive values are an error.
  Dataset apply(const RawTable& t, const std::vector<std::size_t>& rows,
                std::size_t* unseen = nullptr) const;

  std::string to_json() const;
  static Preprocessor from_json(const std::string& text);
};

Preprocessor fit_preprocessor(const RawTable& t, const DatasetSchema& schema,
                              const std::vector<std::size_t>& rows);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Seeded shuffle, then contiguous slices of floor(f0 n) and floor(f1 n) rows
// with the remainder as test.
SplitIndices split_indices(std::size_t n, const std::array<double, 3>& fractions,
                           std::uint64_t seed);

struct DataSplits {
  Dataset train, val, test;
};

// Splits an already encoded dataset.
DataSplits split(const Dataset& d, const std::array<double, 3>& fractions, std::uint64_t seed);

// Full CSV pipeline: load, split row indices, fit the preprocessor on the
// training rows only, encode each split.
DataSplits prepare_csv(const std::string& path, const DatasetSchema& schema,
                       const std::array<double, 3>& fractions, std::uint64_t seed,
                       Preprocessor* fitted = nullptr);

// Synthetic binary task with a sensitive group. Class-informative features
// are group-independent; bias adds a group-dependent label prior shift and a
// spurious group-aligned feature block, so an unconstrained classifier grows
// unfair as bias rises while a fair accurate classifier still exists.
Dataset synth_biased(std::size_t n, double bias, double class_balance, std::uint64_t seed);

// Binary dataset container for caching encoded datasets across runs.
void save_dataset_cache(const Dataset& d, const std::string& path);
Dataset load_dataset_cache(const std::string& path);

// FNV-1a, used for cache keys and output file names.
std::uint64_t fnv1a(std::string_view bytes);

constexpr std::array<double, 3> kDefaultFractions{0.70, 0.15, 0.15};

}  // namespace faircdc
