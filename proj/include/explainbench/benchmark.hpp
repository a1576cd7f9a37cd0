#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "explainbench/datasets.hpp"
#include "explainbench/explainers.hpp"
#include "explainbench/metrics.hpp"
#include "explainbench/models.hpp"

namespace explainbench {

inline constexpr std::string_view kSuiteVersion = "0.1.0";
inline constexpr int kConfigSchemaVersion = 1;

struct ModelEntry {
  std::string id;  // defaults to the family name
  TrainParams params;
};

struct MethodEntry {
  Method method = Method::kKernelShap;
  ExplainerConfig config;
};

struct BenchmarkConfig {
  std::vector<std::filesystem::path> manifest_paths;  // resolved
  std::vector<std::string> manifest_digests;          // content hash per manifest
  std::vector<DatasetSpec> datasets;
  std::vector<ModelEntry> models;
  std::vector<MethodEntry> methods;
  int n_instances = 10;
  std::uint64_t base_seed = 0;
  double test_fraction = 0.3;
  int background_size = 100;
  MetricSettings metrics;
  std::filesystem::path output_dir;
};

// {"family": "gbt", "id"?, "n_trees"?, ...} or a bare family name.
// kMalformedConfig on unknown keys or invalid values.
ModelEntry parse_model_entry(const nlohmann::json& entry, const std::string& where);

// Applies per-method overrides such as {"n_samples": 2000} on top of
// `config`. kMalformedConfig for keys the method does not take.
void apply_overrides(Method method, const nlohmann::json& overrides, ExplainerConfig& config);

// Manifest and output paths resolve against `base_dir`. Throws
// kMalformedConfig, kUnknownMethod or kMissingManifest.
BenchmarkConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir);
BenchmarkConfig parse_config(const std::filesystem::path& path);

// The config with every default filled in.
nlohmann::json config_to_json(const BenchmarkConfig& config);
// Hash of the settings that determine results: excludes output_dir and
// identifies datasets by id and manifest content rather than path.
std::string config_digest(const BenchmarkConfig& config);

struct RecordError {
  std::string code;
  std::string message;
};

struct RunRecord {
  MetricReport report;
  nlohmann::json payload;  // Explanation or CounterfactualSet document; null on error
  std::optional<RecordError> error;
  double wall_seconds = 0.0;  // not part of results.jsonl
};

struct AggregateStat {
  std::size_t count = 0;
  std::optional<double> mean;
  std::optional<double> median;
  std::optional<double> std;  // population
};

struct GroupAggregate {
  std::string dataset;
  std::string model;
  std::string method;
  std::size_t n_records = 0;
  std::size_t n_errors = 0;
  std::vector<std::pair<std::string, AggregateStat>> metrics;  // fixed metric order
};

struct BenchmarkResult {
  std::string config_digest;
  std::string suite_version{kSuiteVersion};
  std::vector<GroupAggregate> groups;  // one per dataset x model x method, config order
  std::vector<RunRecord> records;      // grouped the same way, instances ascending
};

// Metric names in the order used by aggregates and summary columns.
const std::vector<std::string>& aggregate_metric_names();

// Sum by recursive halving in index order.
double pairwise_sum(std::span<const double> values);
AggregateStat aggregate(std::vector<double> values);

// Rebuilds groups from records. Groups named by `order` come first, in that
// order, even when they hold no records.
std::vector<GroupAggregate> compute_aggregates(
    const std::vector<RunRecord>& records,
    const std::vector<std::tuple<std::string, std::string, std::string>>& order);

// Seeded sample of `size` training rows, returned in ascending order.
std::vector<std::size_t> background_indices(std::span<const std::size_t> train, std::size_t size,
                                            std::uint64_t seed);

// workers <= 0 uses the OpenMP default. Outputs do not depend on workers.
BenchmarkResult run_benchmark(const BenchmarkConfig& config, int workers = 1);

std::string results_jsonl(const BenchmarkResult& result);
// Recomputes aggregates from the records and compares them with the footer;
// kSchemaViolation on any mismatch.
BenchmarkResult parse_results(std::string_view text);
BenchmarkResult load_results(const std::filesystem::path& path);

struct SummaryTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

SummaryTable summarize(const BenchmarkResult& result);
std::string summary_csv(const SummaryTable& table);
std::string summary_text(const SummaryTable& table);

// results.jsonl, summary.csv, summary.txt and timings.csv. kIoFailure.
void write_results(const BenchmarkResult& result, const std::filesystem::path& output_dir);

}  // namespace explainbench
