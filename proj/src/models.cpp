#include "explainbench/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "explainbench/error.hpp"

namespace explainbench {

namespace {

constexpr double kHessianFloor = 1e-6;
constexpr double kMinGain = 1e-12;

// log(1 + exp(m)) without overflow.
double softplus(double m) { return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); }

double sample_log_loss(double margin, int label) {
  return label == 1 ? softplus(-margin) : softplus(margin);
}

std::vector<std::string> default_names(std::vector<std::string> names, std::size_t width) {
  if (names.empty()) {
    for (std::size_t j = 0; j < width; ++j) names.push_back("x" + std::to_string(j));
  }
  if (names.size() != width) {
    throw Error(ErrorCode::kDimensionMismatch, "feature_order length does not match X");
  }
  return names;
}

void check_training_input(const Matrix& x, std::span<const int> y) {
  if (x.rows == 0 || x.rows != y.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "training needs |X| = |y| > 0");
  }
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = kMinGain;
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const double> targets, std::span<const double> hessians,
              const TrainParams& params)
      : x_(x), targets_(targets), hessians_(hessians), params_(params) {}

  Tree build(std::vector<std::size_t> samples) {
    tree_.clear();
    grow(std::move(samples), 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t> samples, int depth) {
    const int node_index = static_cast<int>(tree_.size());
    tree_.push_back({});
    tree_[node_index].cover = static_cast<std::int64_t>(samples.size());

    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
    SplitChoice split;
    if (depth < params_.max_depth && samples.size() >= 2 * min_leaf) split = find_split(samples);
    if (split.feature < 0) {
      double sum_target = 0.0;
      double sum_hessian = 0.0;
      for (std::size_t i : samples) {
        sum_target += targets_[i];
        sum_hessian += hessians_[i];
      }
      tree_[node_index].leaf_value =
          params_.learning_rate * sum_target / std::max(sum_hessian, kHessianFloor);
      return node_index;
    }

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t i : samples) {
      (x_(i, split.feature) <= split.threshold ? left : right).push_back(i);
    }
    samples.clear();
    samples.shrink_to_fit();
    tree_[node_index].split_feature = split.feature;
    tree_[node_index].threshold = split.threshold;
    const int left_index = grow(std::move(left), depth + 1);
    const int right_index = grow(std::move(right), depth + 1);
    tree_[node_index].left = left_index;
    tree_[node_index].right = right_index;
    return node_index;
  }

  // Exact greedy search. Gain is the reduction in squared error of the
  // targets; strict comparison in (feature, threshold) order breaks ties
  // toward the lowest feature index and then the lowest threshold.
  SplitChoice find_split(const std::vector<std::size_t>& samples) const {
    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
    const double n = static_cast<double>(samples.size());
    double total = 0.0;
    for (std::size_t i : samples) total += targets_[i];
    const double parent_score = total * total / n;

    SplitChoice best;
    std::vector<std::size_t> order = samples;
    for (std::size_t f = 0; f < x_.cols; ++f) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return x_(a, f) < x_(b, f); });
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        left_sum += targets_[order[k]];
        const double lo = x_(order[k], f);
        const double hi = x_(order[k + 1], f);
        if (lo == hi) continue;
        const std::size_t n_left = k + 1;
        const std::size_t n_right = order.size() - n_left;
        if (n_left < min_leaf || n_right < min_leaf) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                            right_sum * right_sum / static_cast<double>(n_right) - parent_score;
        if (gain > best.gain) {
          double threshold = lo + (hi - lo) / 2.0;
          if (!(threshold < hi)) threshold = lo;
          best = {static_cast<int>(f), threshold, gain};
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  std::span<const double> targets_;
  std::span<const double> hessians_;
  const TrainParams& params_;
  Tree tree_;
};

double logistic_margin(const LogisticModel& m, std::span<const double> x) {
  double s = m.bias;
  for (std::size_t j = 0; j < x.size(); ++j) s += m.weights[j] * x[j];
  return s;
}

double ensemble_margin(const TreeEnsembleModel& m, std::span<const double> x) {
  double s = m.base_margin;
  for (const Tree& t : m.trees) s += tree_value(t, x);
  return s;
}

[[noreturn]] void schema(const std::string& what) {
  throw Error(ErrorCode::kSchemaViolation, "invalid model: " + what);
}

void validate_tree(const Tree& tree, std::size_t width, std::size_t t) {
  const std::string where = "tree " + std::to_string(t);
  if (tree.empty()) schema(where + " has no nodes");
  std::vector<int> visits(tree.size(), 0);
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const TreeNode& node = tree[i];
    if (node.cover < 0) schema(where + ": negative cover");
    if (node.is_leaf()) {
      if (node.left != -1 || node.right != -1) schema(where + ": leaf with children");
      if (!std::isfinite(node.leaf_value)) schema(where + ": non-finite leaf value");
      continue;
    }
    if (static_cast<std::size_t>(node.split_feature) >= width) schema(where + ": split feature out of range");
    if (!std::isfinite(node.threshold)) schema(where + ": non-finite threshold");
    if (node.leaf_value != 0.0) schema(where + ": internal node carries a leaf value");
    for (int child : {node.left, node.right}) {
      // Children strictly after their parent rules out cycles.
      if (child <= static_cast<int>(i) || child >= static_cast<int>(tree.size())) {
        schema(where + ": bad child index");
      }
      ++visits[child];
    }
    if (node.cover != tree[node.left].cover + tree[node.right].cover) {
      schema(where + ": cover mismatch at node " + std::to_string(i));
    }
  }
  for (std::size_t i = 1; i < tree.size(); ++i) {
    if (visits[i] != 1) schema(where + ": node " + std::to_string(i) + " unreachable or shared");
  }
}

}  // namespace

std::string_view family_name(ModelFamily family) {
  return family == ModelFamily::kLogistic ? "logistic" : "gbt";
}

ModelFamily parse_family(std::string_view name) {
  if (name == "logistic") return ModelFamily::kLogistic;
  if (name == "gbt") return ModelFamily::kGbt;
  throw Error(ErrorCode::kUnknownMethod, "unknown model family '" + std::string(name) + "'");
}

ModelFamily family_of(const Model& model) {
  return std::holds_alternative<LogisticModel>(model) ? ModelFamily::kLogistic : ModelFamily::kGbt;
}

void validate_params(const TrainParams& p) {
  auto bad = [](const std::string& what) {
    throw Error(ErrorCode::kMalformedConfig, "invalid training parameter: " + what);
  };
  if (!(p.learning_rate > 0) || !std::isfinite(p.learning_rate)) bad("learning_rate must be positive");
  if (p.family == ModelFamily::kLogistic) {
    if (p.iterations < 0) bad("iterations must be non-negative");
    if (!(p.l2_penalty >= 0)) bad("l2_penalty must be non-negative");
  } else {
    if (p.n_trees < 0) bad("n_trees must be non-negative");
    if (p.max_depth < 1) bad("max_depth must be at least 1");
    if (p.min_samples_leaf < 1) bad("min_samples_leaf must be at least 1");
  }
}

double logistic(double margin) {
  if (margin >= 0) return 1.0 / (1.0 + std::exp(-margin));
  const double e = std::exp(margin);
  return e / (1.0 + e);
}

double logistic_objective(const Matrix& x, std::span<const int> y, std::span<const double> weights,
                          double bias, double l2_penalty) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    double m = bias;
    const auto row = x.row(i);
    for (std::size_t j = 0; j < x.cols; ++j) m += weights[j] * row[j];
    loss += sample_log_loss(m, y[i]);
  }
  double norm2 = 0.0;
  for (double w : weights) norm2 += w * w;
  return loss / static_cast<double>(x.rows) + 0.5 * l2_penalty * norm2;
}

std::vector<double> logistic_objective_gradient(const Matrix& x, std::span<const int> y,
                                                std::span<const double> weights, double bias,
                                                double l2_penalty) {
  std::vector<double> grad(x.cols + 1, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = x.row(i);
    double m = bias;
    for (std::size_t j = 0; j < x.cols; ++j) m += weights[j] * row[j];
    const double residual = logistic(m) - y[i];
    for (std::size_t j = 0; j < x.cols; ++j) grad[j] += residual * row[j];
    grad[x.cols] += residual;
  }
  const double inv_n = 1.0 / static_cast<double>(x.rows);
  for (std::size_t j = 0; j < x.cols; ++j) grad[j] = grad[j] * inv_n + l2_penalty * weights[j];
  grad[x.cols] *= inv_n;
  return grad;
}

LogisticModel train_logistic(const Matrix& x, std::span<const int> y, const TrainParams& params,
                             std::vector<std::string> feature_order) {
  check_training_input(x, y);
  validate_params(params);
  LogisticModel model;
  model.weights.assign(x.cols, 0.0);
  model.feature_order = default_names(std::move(feature_order), x.cols);
  for (int it = 0; it < params.iterations; ++it) {
    const auto grad = logistic_objective_gradient(x, y, model.weights, model.bias, params.l2_penalty);
    for (std::size_t j = 0; j < x.cols; ++j) model.weights[j] -= params.learning_rate * grad[j];
    model.bias -= params.learning_rate * grad[x.cols];
  }
  const double loss = logistic_objective(x, y, model.weights, model.bias, params.l2_penalty);
  if (!std::isfinite(loss) || !std::isfinite(model.bias) ||
      !std::all_of(model.weights.begin(), model.weights.end(), [](double w) { return std::isfinite(w); })) {
    throw Error(ErrorCode::kNonFiniteLoss, "logistic training diverged; lower the learning rate");
  }
  return model;
}

TreeEnsembleModel train_gbt(const Matrix& x, std::span<const int> y, const TrainParams& params,
                            std::vector<std::string> feature_order, std::vector<double>* loss_trace) {
  check_training_input(x, y);
  validate_params(params);
  const std::size_t n = x.rows;

  TreeEnsembleModel model;
  model.feature_order = default_names(std::move(feature_order), x.cols);
  const double positives = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double rate = std::clamp(positives / static_cast<double>(n), 1e-12, 1.0 - 1e-12);
  model.base_margin = std::log(rate / (1.0 - rate));

  std::vector<double> margins(n, model.base_margin);
  std::vector<double> targets(n);
  std::vector<double> hessians(n);
  auto record_loss = [&] {
    if (!loss_trace) return;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) loss += sample_log_loss(margins[i], y[i]);
    loss_trace->push_back(loss / static_cast<double>(n));
  };
  record_loss();

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  TreeBuilder builder(x, targets, hessians, params);
  for (int t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = logistic(margins[i]);
      targets[i] = y[i] - p;  // negative gradient of log-loss
      hessians[i] = p * (1.0 - p);
    }
    Tree tree = builder.build(all);
    for (std::size_t i = 0; i < n; ++i) margins[i] += tree_value(tree, x.row(i));
    model.trees.push_back(std::move(tree));
    record_loss();
  }
  return model;
}

Model train_model(const Matrix& x, std::span<const int> y, const TrainParams& params,
                  std::vector<std::string> feature_order) {
  if (params.family == ModelFamily::kLogistic) return train_logistic(x, y, params, std::move(feature_order));
  return train_gbt(x, y, params, std::move(feature_order));
}

double tree_value(const Tree& tree, std::span<const double> x) {
  int node = 0;
  while (!tree[node].is_leaf()) {
    const TreeNode& n = tree[node];
    node = x[n.split_feature] <= n.threshold ? n.left : n.right;
  }
  return tree[node].leaf_value;
}

std::size_t input_width(const Model& model) {
  return std::visit([](const auto& m) { return m.feature_order.size(); }, model);
}

double predict_margin(const Model& model, std::span<const double> x) {
  if (const auto* lm = std::get_if<LogisticModel>(&model)) {
    if (x.size() != lm->weights.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "input has " + std::to_string(x.size()) +
                                                     " columns, model expects " +
                                                     std::to_string(lm->weights.size()));
    }
    return logistic_margin(*lm, x);
  }
  const auto& em = std::get<TreeEnsembleModel>(model);
  if (x.size() != em.feature_order.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "input has " + std::to_string(x.size()) +
                                                   " columns, model expects " +
                                                   std::to_string(em.feature_order.size()));
  }
  return ensemble_margin(em, x);
}

double predict_proba(const Model& model, std::span<const double> x) {
  return logistic(predict_margin(model, x));
}

int predict_label(const Model& model, std::span<const double> x, double threshold) {
  return predict_proba(model, x) >= threshold ? 1 : 0;
}

double mean_log_loss(const Model& model, const Matrix& x, std::span<const int> y) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) loss += sample_log_loss(predict_margin(model, x.row(i)), y[i]);
  return loss / static_cast<double>(x.rows);
}

void validate_model(const Model& model) {
  if (const auto* lm = std::get_if<LogisticModel>(&model)) {
    if (lm->weights.size() != lm->feature_order.size()) schema("|weights| != |feature_order|");
    if (!std::isfinite(lm->bias)) schema("non-finite bias");
    for (double w : lm->weights) {
      if (!std::isfinite(w)) schema("non-finite weight");
    }
    return;
  }
  const auto& em = std::get<TreeEnsembleModel>(model);
  if (!std::isfinite(em.base_margin)) schema("non-finite base margin");
  for (std::size_t t = 0; t < em.trees.size(); ++t) validate_tree(em.trees[t], em.feature_order.size(), t);
}

}  // namespace explainbench
