#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <Eigen/Dense>

#include "explainbench/error.hpp"
#include "explainbench/explainers.hpp"
#include "explainbench/rng.hpp"

namespace explainbench {

namespace {

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(c);
}

CoalitionGame make_game(const Model& model, const Preprocessor& pre, std::span<const double> instance,
                        const Matrix& background, OutputScale scale) {
  CoalitionGame game;
  game.model = &model;
  game.blocks = pre.blocks;
  game.instance = instance;
  game.background = &background;
  game.scale = scale;
  return game;
}

void require_background(std::span<const RawRow> background) {
  if (background.empty()) throw Error(ErrorCode::kInvariantViolation, "background must be non-empty");
}

Explanation base_explanation(Method method, const Preprocessor& pre, OutputScale scale) {
  Explanation e;
  e.method = method;
  e.feature_names = pre.feature_names();
  e.scale = scale;
  e.extras["scale"] = std::string(scale_name(scale));
  return e;
}

// Uniform subset of `size` players out of m, as a bit pattern.
std::uint64_t random_subset(int m, int size, CounterRng& rng) {
  std::vector<int> players(static_cast<std::size_t>(m));
  std::iota(players.begin(), players.end(), 0);
  std::uint64_t bits = 0;
  for (int i = 0; i < size; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(m - i)));
    std::swap(players[i], players[j]);
    bits |= std::uint64_t{1} << players[i];
  }
  return bits;
}

CoalitionMask to_mask(std::uint64_t bits, int m) {
  CoalitionMask mask(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) mask[j] = static_cast<std::uint8_t>((bits >> j) & 1U);
  return mask;
}

// All size-s subsets of m players in lexicographic bit order.
void enumerate_size(int m, int s, std::vector<CoalitionMask>& masks, std::vector<double>& weights,
                    double weight) {
  std::vector<int> pick(static_cast<std::size_t>(s));
  std::iota(pick.begin(), pick.end(), 0);
  while (true) {
    std::uint64_t bits = 0;
    for (int p : pick) bits |= std::uint64_t{1} << p;
    masks.push_back(to_mask(bits, m));
    weights.push_back(weight);
    int i = s - 1;
    while (i >= 0 && pick[i] == m - s + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < s; ++j) pick[j] = pick[j - 1] + 1;
  }
}

// Weighted least squares for phi under sum(phi) = total, solved by
// eliminating the last player.
std::vector<double> constrained_wls(const WeightedCoalitions& coalitions, std::span<const double> gains,
                                    double total, int m) {
  std::vector<double> phi(static_cast<std::size_t>(m), 0.0);
  if (m == 1) {
    phi[0] = total;
    return phi;
  }
  const auto rows = static_cast<Eigen::Index>(coalitions.masks.size());
  Eigen::MatrixXd a(rows, m - 1);
  Eigen::VectorXd b(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const CoalitionMask& z = coalitions.masks[static_cast<std::size_t>(r)];
    const double sw = std::sqrt(coalitions.weights[static_cast<std::size_t>(r)]);
    const double last = z[static_cast<std::size_t>(m - 1)];
    for (int i = 0; i < m - 1; ++i) a(r, i) = sw * (z[static_cast<std::size_t>(i)] - last);
    b(r) = sw * (gains[static_cast<std::size_t>(r)] - last * total);
  }
  const Eigen::VectorXd head = a.colPivHouseholderQr().solve(b);
  double rest = total;
  for (int i = 0; i < m - 1; ++i) {
    phi[static_cast<std::size_t>(i)] = head(i);
    rest -= head(i);
  }
  phi[static_cast<std::size_t>(m - 1)] = rest;
  return phi;
}

}  // namespace

double shapley_kernel_weight(int num_features, int coalition_size) {
  if (coalition_size <= 0 || coalition_size >= num_features) {
    throw Error(ErrorCode::kOutOfRange, "kernel weight is defined only for 0 < s < M");
  }
  const double m = num_features;
  const double s = coalition_size;
  return (m - 1.0) / (binomial(num_features, coalition_size) * s * (m - s));
}

Matrix encode_rows(const Preprocessor& pre, std::span<const RawRow> rows) {
  Matrix out(rows.size(), pre.encoded_width);
  for (std::size_t i = 0; i < rows.size(); ++i) encode_into(pre, rows[i], out.row(i));
  return out;
}

double coalition_value(const Model& model, const Preprocessor& pre, const RawRow& instance,
                       std::span<const RawRow> background, const CoalitionMask& mask, OutputScale scale) {
  require_background(background);
  if (mask.size() != pre.num_features()) {
    throw Error(ErrorCode::kDimensionMismatch, "mask length must equal the number of raw features");
  }
  const auto x = encode(pre, instance);
  const Matrix bg = encode_rows(pre, background);
  std::vector<double> scratch(x.size());
  return coalition_value(make_game(model, pre, x, bg, scale), mask, scratch);
}

Explanation brute_force_shapley(const Model& model, const Preprocessor& pre, const RawRow& instance,
                                std::span<const RawRow> background, OutputScale scale) {
  require_background(background);
  const int m = static_cast<int>(pre.num_features());
  if (m > 16) throw Error(ErrorCode::kTooManyFeatures, "brute-force Shapley supports at most 16 features");
  const auto x = encode(pre, instance);
  const Matrix bg = encode_rows(pre, background);
  const auto v = all_coalition_values(make_game(model, pre, x, bg, scale), Exec::kParallel);

  // |S|! (M - |S| - 1)! / M!
  std::vector<double> factorial(static_cast<std::size_t>(m) + 1, 1.0);
  for (int i = 1; i <= m; ++i) factorial[i] = factorial[i - 1] * i;
  std::vector<double> weight(static_cast<std::size_t>(m));
  for (int s = 0; s < m; ++s) weight[s] = factorial[s] * factorial[m - s - 1] / factorial[m];

  Explanation e = base_explanation(Method::kKernelShap, pre, scale);
  e.phi.assign(static_cast<std::size_t>(m), 0.0);
  const std::size_t total = std::size_t{1} << m;
  for (int i = 0; i < m; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    double acc = 0.0;
    for (std::size_t s = 0; s < total; ++s) {
      if (s & bit) continue;
      acc += weight[static_cast<std::size_t>(std::popcount(s))] * (v[s | bit] - v[s]);
    }
    e.phi[i] = acc;
  }
  e.base_value = v[0];
  e.extras["oracle"] = "brute_force";
  e.extras["background_size"] = background.size();
  return e;
}

WeightedCoalitions select_coalitions(int m, const KernelShapConfig& config, std::uint64_t seed) {
  WeightedCoalitions out;
  if (m < 2) {
    out.enumerated = true;
    return out;
  }
  if (m <= config.enumeration_cutoff) {
    out.enumerated = true;
    for (int s = 1; s < m; ++s) enumerate_size(m, s, out.masks, out.weights, shapley_kernel_weight(m, s));
    return out;
  }
  if (m > 62) throw Error(ErrorCode::kTooManyFeatures, "kernel_shap supports at most 62 features");

  // Stratum mass: total kernel weight of all coalitions of one size.
  auto mass = [m](int s) { return (m - 1.0) / (static_cast<double>(s) * (m - s)); };
  std::vector<int> order;
  for (int s = 1; s <= m / 2; ++s) {
    order.push_back(s);
    if (s != m - s) order.push_back(m - s);
  }
  double remaining_mass = 0.0;
  for (int s : order) remaining_mass += mass(s);
  const double proper = std::ldexp(1.0, m) - 2.0;
  double budget = std::min<double>(config.n_coalitions, proper);

  // Strata visited largest-weight first; a stratum is enumerated when its
  // proportional share of the budget covers it entirely.
  std::size_t next = 0;
  for (; next < order.size(); ++next) {
    const int s = order[next];
    const double count = binomial(m, s);
    if (count > budget * mass(s) / remaining_mass) break;
    enumerate_size(m, s, out.masks, out.weights, mass(s) / count);
    budget -= count;
    remaining_mass -= mass(s);
  }
  double remaining_count = 0.0;
  for (std::size_t k = next; k < order.size(); ++k) remaining_count += binomial(m, order[k]);
  if (remaining_count <= budget) {
    for (std::size_t k = next; k < order.size(); ++k) {
      enumerate_size(m, order[k], out.masks, out.weights, mass(order[k]) / binomial(m, order[k]));
    }
    next = order.size();
  }
  if (next == order.size()) {
    out.enumerated = true;
    return out;
  }

  // Largest-remainder allocation of the leftover budget over the rest.
  const auto slots = static_cast<std::int64_t>(budget);
  std::vector<std::int64_t> alloc;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::int64_t assigned = 0;
  for (std::size_t k = next; k < order.size(); ++k) {
    const double share = static_cast<double>(slots) * mass(order[k]) / remaining_mass;
    const auto whole = std::min<std::int64_t>(static_cast<std::int64_t>(share),
                                              static_cast<std::int64_t>(binomial(m, order[k])));
    alloc.push_back(whole);
    assigned += whole;
    remainders.emplace_back(share - static_cast<double>(whole), k - next);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < slots && r < remainders.size(); ++r) {
    const std::size_t idx = remainders[r].second;
    if (alloc[idx] < static_cast<std::int64_t>(binomial(m, order[next + idx]))) {
      ++alloc[idx];
      ++assigned;
    }
  }

  CounterRng rng(seed);
  for (std::size_t k = next; k < order.size(); ++k) {
    const int s = order[k];
    const std::int64_t want = alloc[k - next];
    if (want <= 0) continue;
    CounterRng stratum_rng = rng.fork(static_cast<std::uint64_t>(s));
    std::unordered_set<std::uint64_t> seen;
    std::vector<std::uint64_t> drawn;
    while (static_cast<std::int64_t>(drawn.size()) < want) {
      const std::uint64_t bits = random_subset(m, s, stratum_rng);
      if (seen.insert(bits).second) drawn.push_back(bits);
    }
    const double w = mass(s) / static_cast<double>(want);
    for (std::uint64_t bits : drawn) {
      out.masks.push_back(to_mask(bits, m));
      out.weights.push_back(w);
    }
  }
  return out;
}

Explanation kernel_shap_explain(const Model& model, const Preprocessor& pre, const RawRow& instance,
                                std::span<const RawRow> background, const KernelShapConfig& config,
                                std::uint64_t seed, Exec exec) {
  require_background(background);
  const int m = static_cast<int>(pre.num_features());
  const auto x = encode(pre, instance);
  const Matrix bg = encode_rows(pre, background);
  const CoalitionGame game = make_game(model, pre, x, bg, OutputScale::kProbability);

  std::vector<double> scratch(x.size());
  const double empty_value = coalition_value(game, CoalitionMask(static_cast<std::size_t>(m), 0), scratch);
  const double full_value = coalition_value(game, CoalitionMask(static_cast<std::size_t>(m), 1), scratch);

  const WeightedCoalitions coalitions = select_coalitions(m, config, seed);
  std::vector<double> gains = coalition_values(game, coalitions.masks, exec);
  for (double& g : gains) g -= empty_value;

  Explanation e = base_explanation(Method::kKernelShap, pre, OutputScale::kProbability);
  e.phi = constrained_wls(coalitions, gains, full_value - empty_value, m);
  e.base_value = empty_value;
  e.extras["enumerated"] = coalitions.enumerated;
  e.extras["n_coalitions"] = coalitions.masks.size();
  e.extras["background_size"] = background.size();
  e.extras["seed"] = seed;
  return e;
}

Explanation tree_shap_explain(const Model& model, const Preprocessor& pre, const RawRow& instance,
                              std::span<const RawRow> background, Exec exec) {
  const auto* ensemble = std::get_if<TreeEnsembleModel>(&model);
  if (!ensemble) {
    throw Error(ErrorCode::kUnsupportedCombination, "tree_shap requires a tree ensemble model");
  }
  require_background(background);
  const auto x = encode(pre, instance);
  const Matrix bg = encode_rows(pre, background);
  const auto owner = pre.column_owner();
  const TreeShapResult r = interventional_tree_shap(*ensemble, owner, pre.num_features(), x, bg, exec);

  Explanation e = base_explanation(Method::kTreeShap, pre, OutputScale::kMargin);
  e.phi = r.phi;
  e.base_value = r.base_value;
  e.extras["background_size"] = background.size();
  e.extras["value_function"] = "interventional";
  return e;
}

}  // namespace explainbench
