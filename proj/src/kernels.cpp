#include "explainbench/kernels.hpp"

#include <algorithm>
#include <functional>
#include <utility>

#include "explainbench/error.hpp"

namespace explainbench {

namespace {

// Runs body(i) for i in [0, n). Serial and OpenMP drivers share the body.
template <typename Body>
void for_each_index(std::size_t n, Exec exec, Body&& body) {
  const auto count = static_cast<std::int64_t>(n);
  if (exec == Exec::kSerial) {
    for (std::int64_t i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
    return;
  }
  // Exceptions cannot cross the OpenMP region; capture the first one.
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(explainbench_kernel_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::size_t max_internal_depth(const Tree& tree, int node = 0) {
  if (tree[node].is_leaf()) return 0;
  return 1 + std::max(max_internal_depth(tree, tree[node].left),
                      max_internal_depth(tree, tree[node].right));
}

// weight[n][a] = a! (n-1-a)! / n!  for 0 <= a < n: the probability that a
// given player is preceded by exactly the `a` other members of one set and
// followed by the remaining n-1-a in a uniformly random order.
std::vector<std::vector<double>> shapley_path_weights(std::size_t max_players) {
  std::vector<std::vector<double>> w(max_players + 1);
  for (std::size_t n = 1; n <= max_players; ++n) {
    w[n].resize(n);
    for (std::size_t a = 0; a < n; ++a) {
      double v = 1.0 / static_cast<double>(n);
      // a!(n-1-a)!/(n-1)! = 1 / C(n-1, a)
      double binom = 1.0;
      for (std::size_t k = 1; k <= a; ++k) {
        binom = binom * static_cast<double>(n - 1 - a + k) / static_cast<double>(k);
      }
      w[n][a] = v / binom;
    }
  }
  return w;
}

// Two-point game for one tree: players routed by the query (set S_X) or by
// the background row (set S_Z) along each reachable path. A leaf contributes
// +v·w[n][|S_X|-1] to every member of S_X and -v·w[n][|S_X|] to every member
// of S_Z; sums are credited at the node where each player enters its set.
class TreeShapWalker {
 public:
  TreeShapWalker(const Tree& tree, std::span<const int> owner, std::span<const double> x,
                 std::span<const double> z, const std::vector<std::vector<double>>& weights,
                 std::vector<std::uint8_t>& in_x, std::vector<std::uint8_t>& in_z,
                 std::span<double> phi)
      : tree_(tree), owner_(owner), x_(x), z_(z), weights_(weights), in_x_(in_x), in_z_(in_z), phi_(phi) {}

  void run() { walk(0); }

 private:
  // Returns (positive share for S_X, negative share for S_Z).
  std::pair<double, double> walk(int node_index) {
    const TreeNode& node = tree_[node_index];
    if (node.is_leaf()) {
      const std::size_t n = count_x_ + count_z_;
      if (n == 0) return {0.0, 0.0};
      const double pos = count_x_ > 0 ? weights_[n][count_x_ - 1] * node.leaf_value : 0.0;
      const double neg = count_z_ > 0 ? weights_[n][count_x_] * node.leaf_value : 0.0;
      return {pos, neg};
    }
    const int x_child = x_[node.split_feature] <= node.threshold ? node.left : node.right;
    const int z_child = z_[node.split_feature] <= node.threshold ? node.left : node.right;
    if (x_child == z_child) return walk(x_child);

    const auto player = static_cast<std::size_t>(owner_[node.split_feature]);
    if (in_x_[player]) return walk(x_child);
    if (in_z_[player]) return walk(z_child);

    in_x_[player] = 1;
    ++count_x_;
    const auto via_x = walk(x_child);
    in_x_[player] = 0;
    --count_x_;

    in_z_[player] = 1;
    ++count_z_;
    const auto via_z = walk(z_child);
    in_z_[player] = 0;
    --count_z_;

    phi_[player] += via_x.first - via_z.second;
    return {via_x.first + via_z.first, via_x.second + via_z.second};
  }

  const Tree& tree_;
  std::span<const int> owner_;
  std::span<const double> x_;
  std::span<const double> z_;
  const std::vector<std::vector<double>>& weights_;
  std::vector<std::uint8_t>& in_x_;
  std::vector<std::uint8_t>& in_z_;
  std::span<double> phi_;
  std::size_t count_x_ = 0;
  std::size_t count_z_ = 0;
};

}  // namespace

double model_output(const Model& model, std::span<const double> encoded, OutputScale scale) {
  const double m = predict_margin(model, encoded);
  return scale == OutputScale::kMargin ? m : logistic(m);
}

double coalition_value(const CoalitionGame& game, std::span<const std::uint8_t> mask,
                       std::span<double> scratch) {
  const Matrix& bg = *game.background;
  if (bg.rows == 0) throw Error(ErrorCode::kInvariantViolation, "background must be non-empty");
  double sum = 0.0;
  for (std::size_t r = 0; r < bg.rows; ++r) {
    const auto row = bg.row(r);
    std::copy(row.begin(), row.end(), scratch.begin());
    for (std::size_t j = 0; j < game.blocks.size(); ++j) {
      if (!mask[j]) continue;
      const FeatureBlock& b = game.blocks[j];
      std::copy_n(game.instance.begin() + static_cast<std::ptrdiff_t>(b.offset), b.width,
                  scratch.begin() + static_cast<std::ptrdiff_t>(b.offset));
    }
    sum += model_output(*game.model, scratch, game.scale);
  }
  return sum / static_cast<double>(bg.rows);
}

std::vector<double> coalition_values(const CoalitionGame& game,
                                     std::span<const CoalitionMask> masks, Exec exec) {
  std::vector<double> values(masks.size());
  for_each_index(masks.size(), exec, [&](std::size_t i) {
    thread_local std::vector<double> scratch;
    scratch.resize(game.instance.size());
    values[i] = coalition_value(game, masks[i], scratch);
  });
  return values;
}

std::vector<double> all_coalition_values(const CoalitionGame& game, Exec exec) {
  const std::size_t m = game.num_players();
  if (m > 30) throw Error(ErrorCode::kTooManyFeatures, "too many players to enumerate");
  const std::size_t total = std::size_t{1} << m;
  std::vector<double> values(total);
  for_each_index(total, exec, [&](std::size_t s) {
    thread_local std::vector<double> scratch;
    thread_local CoalitionMask mask;
    scratch.resize(game.instance.size());
    mask.assign(m, 0);
    for (std::size_t j = 0; j < m; ++j) mask[j] = static_cast<std::uint8_t>((s >> j) & 1U);
    values[s] = coalition_value(game, mask, scratch);
  });
  return values;
}

TreeShapResult interventional_tree_shap(const TreeEnsembleModel& model,
                                        std::span<const int> column_owner, std::size_t num_players,
                                        std::span<const double> instance, const Matrix& background,
                                        Exec exec) {
  if (background.rows == 0) throw Error(ErrorCode::kInvariantViolation, "background must be non-empty");
  if (instance.size() != model.feature_order.size() || background.cols != instance.size() ||
      column_owner.size() != instance.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "tree_shap: encoded widths disagree");
  }
  std::size_t depth = 0;
  for (const Tree& t : model.trees) depth = std::max(depth, max_internal_depth(t));
  const auto weights = shapley_path_weights(std::max<std::size_t>(depth, 1));

  // Row r of `partials` holds phi for background row r; the last column holds
  // the background margin.
  Matrix partials(background.rows, num_players + 1);
  for_each_index(background.rows, exec, [&](std::size_t r) {
    thread_local std::vector<std::uint8_t> in_x;
    thread_local std::vector<std::uint8_t> in_z;
    in_x.assign(num_players, 0);
    in_z.assign(num_players, 0);
    const auto z = background.row(r);
    auto out = partials.row(r);
    const std::span<double> phi = out.first(num_players);
    double margin = model.base_margin;
    for (const Tree& tree : model.trees) {
      TreeShapWalker(tree, column_owner, instance, z, weights, in_x, in_z, phi).run();
      margin += tree_value(tree, z);
    }
    out[num_players] = margin;
  });

  TreeShapResult result;
  result.phi.assign(num_players, 0.0);
  double base = 0.0;
  for (std::size_t r = 0; r < background.rows; ++r) {
    const auto row = partials.row(r);
    for (std::size_t j = 0; j < num_players; ++j) result.phi[j] += row[j];
    base += row[num_players];
  }
  const double inv = 1.0 / static_cast<double>(background.rows);
  for (double& p : result.phi) p *= inv;
  result.base_value = base * inv;
  return result;
}

std::vector<double> predict_batch(const Model& model, const Matrix& rows, OutputScale scale, Exec exec) {
  std::vector<double> out(rows.rows);
  for_each_index(rows.rows, exec, [&](std::size_t i) { out[i] = model_output(model, rows.row(i), scale); });
  return out;
}

}  // namespace explainbench
