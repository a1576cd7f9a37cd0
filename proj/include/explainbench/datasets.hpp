#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace explainbench {

enum class FeatureKind { kNumeric, kCategorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kNumeric;
  std::vector<std::string> categories;  // categorical only, ordered
  bool immutable = false;
  std::optional<double> lower;
  std::optional<double> upper;

  bool is_categorical() const { return kind == FeatureKind::kCategorical; }
  // Index of `label` in `categories`, or -1.
  int category_index(std::string_view label) const;
};

struct DatasetSpec {
  std::string id;
  std::string source_path;  // as written in the manifest
  std::string target;
  std::string positive_label;
  std::vector<FeatureSpec> features;
  std::vector<std::string> sensitive;

  // Directory the manifest was loaded from; relative source paths resolve
  // against it unless EXPLAINBENCH_DATA_DIR is set.
  std::filesystem::path manifest_dir;

  std::size_t num_features() const { return features.size(); }
  // Throws kInvariantViolation for unknown names.
  std::size_t feature_index(std::string_view name) const;
  std::optional<std::size_t> find_feature(std::string_view name) const;
  std::filesystem::path resolved_source() const;
};

// Checks every FeatureSpec and DatasetSpec invariant; throws
// kInvariantViolation with the offending field.
void validate_spec(const DatasetSpec& spec);

DatasetSpec load_manifest(const std::filesystem::path& path);
DatasetSpec parse_manifest(std::string_view text, const std::filesystem::path& manifest_dir = {});

// A raw instance: one value per raw feature. Numeric features hold their
// value, categorical features hold the index into FeatureSpec::categories.
using RawRow = std::vector<double>;

struct Dataset {
  DatasetSpec spec;
  std::vector<RawRow> rows;
  std::vector<int> labels;  // 1 = positive_label
  std::size_t drop_count = 0;

  std::size_t size() const { return rows.size(); }
  double positive_rate() const;
};

Dataset load_table(const DatasetSpec& spec);
Dataset load_table_from_text(const DatasetSpec& spec, std::string_view csv_text);

// Parses string cells (in spec feature order) into a RawRow. Throws
// kUnknownCategory / kCorruptNumber on bad cells.
RawRow parse_row(const DatasetSpec& spec, std::span<const std::string> cells);
std::string format_value(const FeatureSpec& feature, double value);
// Kinds, category indices and finiteness; throws kInvariantViolation or
// kUnknownCategory.
void check_row(const DatasetSpec& spec, const RawRow& row);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded shuffle; |test| = round(test_fraction * n). Both sides sorted.
SplitIndices split(const Dataset& dataset, double test_fraction, std::uint64_t seed);
SplitIndices split_indices(std::size_t n, double test_fraction, std::uint64_t seed);

// Encoded columns occupied by one raw feature.
struct FeatureBlock {
  std::size_t offset = 0;
  std::size_t width = 0;
};

struct Preprocessor {
  std::vector<FeatureSpec> features;
  // Per raw feature; only meaningful for numeric features. Population std.
  std::vector<double> mean;
  std::vector<double> stddev;
  // Observed training range, used by Gower distance and default constraints.
  std::vector<double> min;
  std::vector<double> max;
  // Training marginal frequency of each category (categorical features).
  std::vector<std::vector<double>> category_frequency;
  std::vector<FeatureBlock> blocks;
  std::size_t encoded_width = 0;

  std::size_t num_features() const { return features.size(); }
  // "age", "race=Caucasian", ... one per encoded column.
  std::vector<std::string> encoded_names() const;
  std::vector<std::string> feature_names() const;
  // Raw feature owning each encoded column.
  std::vector<int> column_owner() const;
  // (x - mean) / std with std == 0 mapped to 0.
  double standardize(std::size_t feature, double value) const;
  double destandardize(std::size_t feature, double z) const;
};

Preprocessor fit_preprocessor(const Dataset& dataset, std::span<const std::size_t> train_indices);

std::vector<double> encode(const Preprocessor& pre, const RawRow& instance);
void encode_into(const Preprocessor& pre, const RawRow& instance, std::span<double> out);
RawRow decode(const Preprocessor& pre, std::span<const double> encoded);

}  // namespace explainbench
