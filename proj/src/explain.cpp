#include <algorithm>
#include <cmath>
#include <numeric>

#include "explainbench/error.hpp"
#include "explainbench/explainers.hpp"

namespace explainbench {

std::string_view method_name(Method method) {
  switch (method) {
    case Method::kLime: return "lime";
    case Method::kKernelShap: return "kernel_shap";
    case Method::kTreeShap: return "tree_shap";
    case Method::kCounterfactual: return "cf";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kLime, Method::kKernelShap, Method::kTreeShap, Method::kCounterfactual}) {
    if (method_name(m) == name) return m;
  }
  throw Error(ErrorCode::kUnknownMethod, "unknown method '" + std::string(name) + "'");
}

std::string_view scale_name(OutputScale scale) {
  return scale == OutputScale::kMargin ? "margin" : "probability";
}

OutputScale parse_scale(std::string_view name) {
  if (name == "probability") return OutputScale::kProbability;
  if (name == "margin") return OutputScale::kMargin;
  throw Error(ErrorCode::kScaleMismatch, "unknown output scale '" + std::string(name) + "'");
}

void validate_config(const ExplainerConfig& config) {
  auto require = [](bool ok, const char* field) {
    if (!ok) throw Error(ErrorCode::kMalformedConfig, std::string(field) + " out of range");
  };
  require(config.lime.n_samples >= 10, "lime.n_samples");
  require(config.lime.kernel_width_multiplier > 0.0, "lime.kernel_width_multiplier");
  require(config.lime.top_k >= 0, "lime.top_k");
  require(config.lime.ridge_penalty > 0.0, "lime.ridge_penalty");
  require(config.kernel_shap.n_coalitions > 0, "kernel_shap.n_coalitions");
  require(config.kernel_shap.background_size > 0, "kernel_shap.background_size");
  require(config.kernel_shap.enumeration_cutoff > 0 && config.kernel_shap.enumeration_cutoff <= 20,
          "kernel_shap.enumeration_cutoff");
  const CounterfactualConfig& cf = config.counterfactual;
  require(cf.k > 0, "counterfactual.k");
  require(cf.population >= 2, "counterfactual.population");
  require(cf.generations > 0, "counterfactual.generations");
  require(cf.lambda_proximity > 0.0, "counterfactual.lambda_proximity");
  require(cf.lambda_diversity > 0.0, "counterfactual.lambda_diversity");
  require(cf.tournament_size > 0, "counterfactual.tournament_size");
  require(cf.mutation_rate > 0.0 && cf.mutation_rate <= 1.0, "counterfactual.mutation_rate");
}

Explanation explain(Method method, const Model& model, const Preprocessor& pre, const RawRow& instance,
                    std::span<const RawRow> background, const ExplainerConfig& config,
                    std::uint64_t seed, Exec exec) {
  if (instance.size() != pre.num_features()) {
    throw Error(ErrorCode::kDimensionMismatch, "instance width does not match the dataset");
  }
  switch (method) {
    case Method::kLime:
      return lime_explain(model, pre, instance, config.lime, seed, exec);
    case Method::kKernelShap:
      return kernel_shap_explain(model, pre, instance, background, config.kernel_shap, seed, exec);
    case Method::kTreeShap:
      return tree_shap_explain(model, pre, instance, background, exec);
    case Method::kCounterfactual:
      break;
  }
  throw Error(ErrorCode::kUnsupportedCombination, "cf produces counterfactual sets, not attributions");
}

std::vector<std::size_t> top_k_features(std::span<const double> phi, std::size_t k) {
  std::vector<std::size_t> order(phi.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(phi[a]) > std::abs(phi[b]); });
  order.resize(std::min(k, order.size()));
  return order;
}

double jaccard(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::vector<std::size_t> sa(a.begin(), a.end());
  std::vector<std::size_t> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  sa.erase(std::unique(sa.begin(), sa.end()), sa.end());
  sb.erase(std::unique(sb.begin(), sb.end()), sb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::vector<std::size_t> common;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
  const double uni = static_cast<double>(sa.size() + sb.size() - common.size());
  return static_cast<double>(common.size()) / uni;
}

}  // namespace explainbench
