#pragma once

// Data-parallel kernels behind the explainers. Every kernel has a serial
// driver and an OpenMP driver over the same per-item body; both write into
// per-item slots and reduce in index order, so their outputs are bitwise
// identical for any thread count.

#include <cstdint>
#include <span>
#include <vector>

#include "explainbench/datasets.hpp"
#include "explainbench/matrix.hpp"
#include "explainbench/models.hpp"

namespace explainbench {

enum class Exec { kSerial, kParallel };

// Scale on which a model output is explained: probability, or log-odds.
enum class OutputScale { kProbability, kMargin };

double model_output(const Model& model, std::span<const double> encoded, OutputScale scale);

// One bit per raw feature: 1 takes the query value, 0 the background value.
using CoalitionMask = std::vector<std::uint8_t>;

// Interventional coalition game in encoded space. Categorical one-hot
// blocks are swapped atomically because each raw feature owns one block.
struct CoalitionGame {
  const Model* model = nullptr;
  std::span<const FeatureBlock> blocks;
  std::span<const double> instance;
  const Matrix* background = nullptr;
  OutputScale scale = OutputScale::kProbability;

  std::size_t num_players() const { return blocks.size(); }
};

// Mean model output over background rows of the composite rows. `scratch`
// must hold instance.size() doubles.
double coalition_value(const CoalitionGame& game, std::span<const std::uint8_t> mask,
                       std::span<double> scratch);

std::vector<double> coalition_values(const CoalitionGame& game,
                                     std::span<const CoalitionMask> masks, Exec exec);

// v(S) for every S encoded as the bit pattern of an integer (bit i = player
// i), so the result has 2^M entries.
std::vector<double> all_coalition_values(const CoalitionGame& game, Exec exec);

struct TreeShapResult {
  std::vector<double> phi;  // per raw feature, margin scale
  double base_value = 0.0;  // mean margin over background
};

// Exact interventional Shapley values of the ensemble margin, averaged over
// background rows. Each (tree, background row) pair is a path recursion over
// the leaves reachable when routing by either the query or the background
// value; cost is linear in leaves, not exponential in features.
TreeShapResult interventional_tree_shap(const TreeEnsembleModel& model,
                                        std::span<const int> column_owner, std::size_t num_players,
                                        std::span<const double> instance, const Matrix& background,
                                        Exec exec);

std::vector<double> predict_batch(const Model& model, const Matrix& rows, OutputScale scale,
                                  Exec exec);

}  // namespace explainbench
