#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "explainbench/datasets.hpp"
#include "explainbench/kernels.hpp"
#include "explainbench/matrix.hpp"
#include "explainbench/models.hpp"

namespace explainbench {

enum class Method { kLime, kKernelShap, kTreeShap, kCounterfactual };

std::string_view method_name(Method method);  // "lime", "kernel_shap", "tree_shap", "cf"
Method parse_method(std::string_view name);   // throws kUnknownMethod
std::string_view scale_name(OutputScale scale);
OutputScale parse_scale(std::string_view name);  // throws kScaleMismatch

// Per-raw-feature attribution. For SHAP methods base_value + sum(phi) is the
// model output on `scale`; categorical one-hot attributions are summed.
struct Explanation {
  Method method = Method::kKernelShap;
  std::vector<std::string> feature_names;
  std::vector<double> phi;
  double base_value = 0.0;
  OutputScale scale = OutputScale::kProbability;
  nlohmann::json extras = nlohmann::json::object();
};

struct LimeConfig {
  int n_samples = 5000;
  double kernel_width_multiplier = 0.75;
  int top_k = 0;  // 0 keeps every feature
  double ridge_penalty = 1.0;
  // Numeric draws are centred on the training mean unless set; see lime.cpp.
  bool sample_around_instance = false;
};

struct KernelShapConfig {
  int n_coalitions = 2048;
  int background_size = 100;
  int enumeration_cutoff = 11;
};

enum class DistanceKind { kGower, kEuclidean };

struct CounterfactualConfig {
  int k = 4;
  int population = 200;
  int generations = 100;
  double lambda_proximity = 0.5;
  double lambda_diversity = 1.0;
  int tournament_size = 4;
  double mutation_rate = 0.3;
  DistanceKind distance = DistanceKind::kGower;
};

struct ExplainerConfig {
  LimeConfig lime;
  KernelShapConfig kernel_shap;
  CounterfactualConfig counterfactual;
};

// Throws kMalformedConfig when a field is non-positive or out of range.
void validate_config(const ExplainerConfig& config);

// ---------------------------------------------------------------------------
// Shapley machinery

// (M-1) / (C(M,s) · s · (M-s)) for 0 < s < M; kOutOfRange otherwise.
double shapley_kernel_weight(int num_features, int coalition_size);

Matrix encode_rows(const Preprocessor& pre, std::span<const RawRow> rows);

// Mean model output over background rows of the composite that takes the
// instance's value where mask = 1 and the background row's value elsewhere.
double coalition_value(const Model& model, const Preprocessor& pre, const RawRow& instance,
                       std::span<const RawRow> background, const CoalitionMask& mask,
                       OutputScale scale = OutputScale::kProbability);

// Exact Shapley values by enumerating all 2^M coalitions (M <= 16). This is
// the verification oracle for every other Shapley engine.
Explanation brute_force_shapley(const Model& model, const Preprocessor& pre, const RawRow& instance,
                                std::span<const RawRow> background,
                                OutputScale scale = OutputScale::kProbability);

Explanation kernel_shap_explain(const Model& model, const Preprocessor& pre, const RawRow& instance,
                                std::span<const RawRow> background, const KernelShapConfig& config,
                                std::uint64_t seed, Exec exec = Exec::kParallel);

// Weighted coalitions used by the sampled KernelSHAP path (exposed for tests).
struct WeightedCoalitions {
  std::vector<CoalitionMask> masks;
  std::vector<double> weights;
  bool enumerated = false;
};
WeightedCoalitions select_coalitions(int num_features, const KernelShapConfig& config,
                                     std::uint64_t seed);

// Interventional TreeSHAP on the margin scale. kUnsupportedCombination for
// non-ensemble models.
Explanation tree_shap_explain(const Model& model, const Preprocessor& pre, const RawRow& instance,
                              std::span<const RawRow> background, Exec exec = Exec::kParallel);

// ---------------------------------------------------------------------------
// LIME

struct LimeNeighborhood {
  Matrix binary;                // n x M, 1 = sample agrees with the instance
  std::vector<RawRow> samples;  // raw draws, row 0 is the instance
  std::vector<double> weights;  // exp(-d^2 / sigma^2)
  std::vector<double> distances;  // standardized Euclidean distance to the instance
};

LimeNeighborhood lime_neighborhood(const RawRow& instance, const Preprocessor& pre,
                                   const LimeConfig& config, std::uint64_t seed);
double lime_kernel_weight(double distance, double kernel_width_multiplier, std::size_t num_features);

Explanation lime_explain(const Model& model, const Preprocessor& pre, const RawRow& instance,
                         const LimeConfig& config, std::uint64_t seed, Exec exec = Exec::kParallel);

// ---------------------------------------------------------------------------
// Unified entry point

Explanation explain(Method method, const Model& model, const Preprocessor& pre, const RawRow& instance,
                    std::span<const RawRow> background, const ExplainerConfig& config,
                    std::uint64_t seed, Exec exec = Exec::kParallel);

// ---------------------------------------------------------------------------
// Counterfactuals

struct NumericRange {
  double lower = 0.0;
  double upper = 0.0;
};

struct Constraints {
  std::vector<std::string> immutable;
  std::map<std::string, NumericRange> ranges;
  std::map<std::string, std::vector<std::string>> allowed_categories;
  int target_class = 1;
};

// Constraints resolved against a preprocessor and query, one entry per raw
// feature. Manifest-immutable features are immutable here as well.
struct ResolvedConstraints {
  std::vector<bool> mutable_feature;
  std::vector<NumericRange> range;                   // numeric features
  std::vector<std::vector<int>> allowed_categories;  // categorical features
  int target_class = 1;

  bool admits(const RawRow& row, const RawRow& query) const;
};

// kInvariantViolation for unknown feature names, inverted or out-of-bound
// ranges, and unknown or empty category lists.
ResolvedConstraints resolve_constraints(const Preprocessor& pre, const Constraints& constraints,
                                        const RawRow& query);

// Mixed-type distance in [0, 1]: range-normalized numeric gaps (training
// range, floor 1e-12, capped at 1) and categorical mismatches, averaged.
double gower_distance(const RawRow& a, const RawRow& b, const Preprocessor& pre);
double standardized_euclidean_distance(const RawRow& a, const RawRow& b, const Preprocessor& pre);

struct CounterfactualSet {
  RawRow original;
  std::vector<RawRow> candidates;
  std::vector<bool> valid;
  std::vector<double> proximity;
  double diversity = 0.0;
  std::uint64_t seed = 0;
  int target_class = 1;
  // All candidates invalid after search (NoValidCounterfactual).
  bool no_valid_counterfactual = false;
};

CounterfactualSet generate_counterfactuals(const Model& model, const Preprocessor& pre,
                                           const RawRow& instance, const Constraints& constraints,
                                           const CounterfactualConfig& config, std::uint64_t seed);

struct CounterfactualScores {
  double validity_rate = 0.0;
  double mean_proximity = 0.0;  // over valid candidates
  double diversity = 0.0;       // mean pairwise distance among valid candidates
  double mean_changed_features = 0.0;
};

CounterfactualScores score_counterfactual_set(const CounterfactualSet& cfset, const RawRow& instance,
                                              const Preprocessor& pre);

// Indices of the k largest |phi| (ties toward the lower index).
std::vector<std::size_t> top_k_features(std::span<const double> phi, std::size_t k);
double jaccard(std::span<const std::size_t> a, std::span<const std::size_t> b);

}  // namespace explainbench
