#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "explainbench/matrix.hpp"

namespace explainbench {

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<std::string> feature_order;  // encoded column names
};

// Internal nodes send x[split_feature] <= threshold to `left`.
struct TreeNode {
  int split_feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double leaf_value = 0.0;
  std::int64_t cover = 0;

  bool is_leaf() const { return split_feature < 0; }
};

using Tree = std::vector<TreeNode>;  // node 0 is the root

struct TreeEnsembleModel {
  std::vector<Tree> trees;
  double base_margin = 0.0;
  std::vector<std::string> feature_order;
};

using Model = std::variant<LogisticModel, TreeEnsembleModel>;

enum class ModelFamily { kLogistic, kGbt };

std::string_view family_name(ModelFamily family);
ModelFamily parse_family(std::string_view name);  // throws kUnknownMethod
ModelFamily family_of(const Model& model);

struct TrainParams {
  ModelFamily family = ModelFamily::kGbt;
  double learning_rate = 0.1;
  int iterations = 500;       // logistic
  double l2_penalty = 1e-3;   // logistic
  int n_trees = 50;           // ensemble
  int max_depth = 3;          // ensemble
  int min_samples_leaf = 5;   // ensemble
  std::uint64_t seed = 0;
};

void validate_params(const TrainParams& params);

// Mean log-loss plus (l2/2)·|w|². The bias is not penalized.
double logistic_objective(const Matrix& x, std::span<const int> y, std::span<const double> weights,
                          double bias, double l2_penalty);
// Gradient of logistic_objective; the last entry is d/d(bias).
std::vector<double> logistic_objective_gradient(const Matrix& x, std::span<const int> y,
                                                std::span<const double> weights, double bias,
                                                double l2_penalty);

LogisticModel train_logistic(const Matrix& x, std::span<const int> y, const TrainParams& params,
                             std::vector<std::string> feature_order = {});

// Gradient boosting on log-loss. `loss_trace`, when given, receives the mean
// training log-loss before the first tree and after every tree.
TreeEnsembleModel train_gbt(const Matrix& x, std::span<const int> y, const TrainParams& params,
                            std::vector<std::string> feature_order = {},
                            std::vector<double>* loss_trace = nullptr);

Model train_model(const Matrix& x, std::span<const int> y, const TrainParams& params,
                  std::vector<std::string> feature_order = {});

double logistic(double margin);
double tree_value(const Tree& tree, std::span<const double> x);
std::size_t input_width(const Model& model);

// Log-odds output. Throws kDimensionMismatch on wrong-length x.
double predict_margin(const Model& model, std::span<const double> x);
double predict_proba(const Model& model, std::span<const double> x);
// 1 iff predict_proba >= threshold.
int predict_label(const Model& model, std::span<const double> x, double threshold = 0.5);

double mean_log_loss(const Model& model, const Matrix& x, std::span<const int> y);

// Structural checks: widths, finiteness, tree reachability/acyclicity and
// cover consistency. Throws kSchemaViolation.
void validate_model(const Model& model);

}  // namespace explainbench
