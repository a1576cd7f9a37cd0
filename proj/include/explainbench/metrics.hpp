#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>

#include "json.hpp"

#include "explainbench/datasets.hpp"
#include "explainbench/explainers.hpp"
#include "explainbench/kernels.hpp"
#include "explainbench/models.hpp"

namespace explainbench {

// |f(x) - (base + sum(phi))| with f on the scale the explanation declares.
// kScaleMismatch when extras.scale is missing or disagrees with e.scale.
double local_accuracy_gap(const Explanation& e, const Model& model, const Preprocessor& pre,
                          const RawRow& instance);

// R^2 of the additive surrogate base + sum_{mask=1} phi against coalition
// values over n random masks (size uniform in 0..M, then a uniform subset).
// A constant response scores 1. n must be at least 30.
double neighborhood_fidelity(const Explanation& e, const Model& model, const Preprocessor& pre,
                             const RawRow& instance, std::span<const RawRow> background, int n,
                             std::uint64_t seed, Exec exec = Exec::kSerial);

// Count of |phi_i| > tau * max|phi|; all-zero phi gives 0. tau in [0, 1).
std::size_t sparsity(std::span<const double> phi, double tau = 0.01);

struct StabilityResult {
  // Empty when every perturbation left the instance unchanged.
  std::optional<double> lipschitz;
  double topk_jaccard = 1.0;
};

// Re-explains the instance under the given seed.
using Explainer = std::function<Explanation(const RawRow& instance, std::uint64_t seed)>;

// Numeric features move by U(-eps, eps) standard deviations (clamped to the
// feature bounds); categoricals stay. Explanation seeds come from (seed, p).
StabilityResult stability(const Explainer& explainer, const Preprocessor& pre, const RawRow& instance,
                          const Explanation& original, int perturbations, double epsilon, int top_k,
                          std::uint64_t seed);

struct MetricSettings {
  double sparsity_tau = 0.01;
  int fidelity_samples = 1000;
  int stability_perturbations = 20;
  double stability_epsilon = 0.1;
  int stability_topk = 5;
};

struct Provenance {
  std::string dataset;
  std::string model;
  std::string method;
  std::int64_t instance_id = 0;
  std::uint64_t seed = 0;
};

struct MetricReport {
  Provenance provenance;
  std::optional<double> local_accuracy_gap;
  std::optional<double> neighborhood_fidelity_r2;
  std::optional<std::size_t> sparsity_count;
  std::optional<double> stability_lipschitz;
  std::optional<double> stability_topk_jaccard;
  std::optional<CounterfactualScores> cf_metrics;
};

// Every attribution metric for one explanation. `explainer` drives the
// stability re-runs.
MetricReport score_explanation(const Explanation& e, const Explainer& explainer, const Model& model,
                               const Preprocessor& pre, const RawRow& instance,
                               std::span<const RawRow> background, const MetricSettings& settings,
                               std::uint64_t seed, Exec exec = Exec::kSerial);

nlohmann::json metric_report_to_json(const MetricReport& report);
MetricReport metric_report_from_json(const nlohmann::json& doc);

nlohmann::json cf_scores_to_json(const CounterfactualScores& s);
CounterfactualScores cf_scores_from_json(const nlohmann::json& doc);

}  // namespace explainbench
