#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "explainbench/error.hpp"
#include "explainbench/explainers.hpp"
#include "explainbench/rng.hpp"

namespace explainbench {

namespace {

constexpr int kRepairSteps = 25;

double numeric_span(const Preprocessor& pre, std::size_t j) {
  return std::max(pre.max[j] - pre.min[j], 1e-12);
}

// Target-class margin hinge: 0 once the candidate sits at least one logit
// unit inside the target region.
double hinge(double margin, int target_class) {
  const double signed_margin = target_class == 1 ? margin : -margin;
  return std::max(0.0, 1.0 - signed_margin);
}

struct Search {
  const Model& model;
  const Preprocessor& pre;
  const RawRow& query;
  const ResolvedConstraints& rc;
  const CounterfactualConfig& config;

  std::vector<double> encoded = std::vector<double>(pre.encoded_width);

  double distance(const RawRow& a, const RawRow& b) const {
    return config.distance == DistanceKind::kGower ? gower_distance(a, b, pre)
                                                   : standardized_euclidean_distance(a, b, pre);
  }

  double margin(const RawRow& row) {
    encode_into(pre, row, encoded);
    return predict_margin(model, encoded);
  }

  bool valid(const RawRow& row) {
    const int label = margin(row) >= 0.0 ? 1 : 0;  // proba >= 0.5
    return label == rc.target_class;
  }

  double step_scale(std::size_t j) const {
    if (pre.stddev[j] > 0.0) return pre.stddev[j];
    return (rc.range[j].upper - rc.range[j].lower) / 4.0;
  }

  // Immutables back to the query value, numerics clamped, categories
  // outside the allowed list replaced.
  void project(RawRow& row) const {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (!rc.mutable_feature[j]) {
        row[j] = query[j];
      } else if (pre.features[j].is_categorical()) {
        const auto& allowed = rc.allowed_categories[j];
        const int c = static_cast<int>(row[j]);
        if (std::find(allowed.begin(), allowed.end(), c) == allowed.end()) {
          const int q = static_cast<int>(query[j]);
          const bool query_ok = std::find(allowed.begin(), allowed.end(), q) != allowed.end();
          row[j] = static_cast<double>(query_ok ? q : allowed.front());
        }
      } else {
        row[j] = std::clamp(row[j], rc.range[j].lower, rc.range[j].upper);
      }
    }
  }

  void mutate_feature(RawRow& row, std::size_t j, CounterRng& rng) const {
    if (pre.features[j].is_categorical()) {
      const auto& allowed = rc.allowed_categories[j];
      row[j] = static_cast<double>(allowed[rng.below(allowed.size())]);
    } else {
      row[j] += rng.normal() * step_scale(j);
    }
  }

  RawRow initial(CounterRng& rng) const {
    RawRow row = query;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (rc.mutable_feature[j] && rng.bernoulli(0.5)) mutate_feature(row, j, rng);
    }
    project(row);
    return row;
  }

  double fitness(const RawRow& row, const std::vector<RawRow>& elite) {
    double f = -hinge(margin(row), rc.target_class) - config.lambda_proximity * distance(row, query);
    double spread = 0.0;
    std::size_t others = 0;
    for (const RawRow& e : elite) {
      if (e == row) continue;
      spread += distance(row, e);
      ++others;
    }
    if (others > 0) f += config.lambda_diversity * spread / static_cast<double>(others);
    return f;
  }

  // Pulls each changed feature back toward the query while the candidate
  // stays valid: categories revert outright, numerics by bisection.
  void repair(RawRow& row) {
    if (!valid(row)) return;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] == query[j] || !rc.mutable_feature[j]) continue;
      const double changed = row[j];
      row[j] = query[j];
      if (rc.admits(row, query) && valid(row)) continue;
      row[j] = changed;
      if (pre.features[j].is_categorical()) continue;
      double lo = 0.0;  // fraction of the way from query to `changed`
      double hi = 1.0;
      for (int step = 0; step < kRepairSteps; ++step) {
        const double mid = 0.5 * (lo + hi);
        row[j] = std::clamp(query[j] + mid * (changed - query[j]), rc.range[j].lower, rc.range[j].upper);
        if (valid(row)) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      row[j] = std::clamp(query[j] + hi * (changed - query[j]), rc.range[j].lower, rc.range[j].upper);
    }
  }
};

// Indices of the best `k` distinct rows by fitness (ties to the lower index).
std::vector<std::size_t> best_distinct(const std::vector<RawRow>& rows, const std::vector<double>& fit,
                                       std::size_t k) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit[a] > fit[b]; });
  std::vector<std::size_t> picked;
  std::set<RawRow> seen;
  for (std::size_t i : order) {
    if (picked.size() == k) break;
    if (seen.insert(rows[i]).second) picked.push_back(i);
  }
  return picked;
}

}  // namespace

bool ResolvedConstraints::admits(const RawRow& row, const RawRow& query) const {
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (!mutable_feature[j]) {
      if (row[j] != query[j]) return false;
    } else if (!allowed_categories[j].empty()) {
      const int c = static_cast<int>(row[j]);
      const auto& allowed = allowed_categories[j];
      if (std::find(allowed.begin(), allowed.end(), c) == allowed.end()) return false;
    } else if (row[j] < range[j].lower || row[j] > range[j].upper) {
      return false;
    }
  }
  return true;
}

ResolvedConstraints resolve_constraints(const Preprocessor& pre, const Constraints& constraints,
                                        const RawRow& query) {
  const std::size_t m = pre.num_features();
  if (query.size() != m) throw Error(ErrorCode::kDimensionMismatch, "query width does not match the dataset");
  if (constraints.target_class != 0 && constraints.target_class != 1) {
    throw Error(ErrorCode::kInvariantViolation, "target_class must be 0 or 1");
  }
  auto index_of = [&](const std::string& name) {
    for (std::size_t j = 0; j < m; ++j) {
      if (pre.features[j].name == name) return j;
    }
    throw Error(ErrorCode::kInvariantViolation, "unknown feature in constraints: " + name);
  };

  ResolvedConstraints rc;
  rc.target_class = constraints.target_class;
  rc.mutable_feature.assign(m, true);
  rc.range.assign(m, {});
  rc.allowed_categories.assign(m, {});
  for (std::size_t j = 0; j < m; ++j) {
    const FeatureSpec& f = pre.features[j];
    if (f.immutable) rc.mutable_feature[j] = false;
    if (f.is_categorical()) {
      rc.allowed_categories[j].resize(f.categories.size());
      std::iota(rc.allowed_categories[j].begin(), rc.allowed_categories[j].end(), 0);
    } else {
      const double lo = f.lower.value_or(pre.min[j]);
      const double hi = f.upper.value_or(pre.max[j]);
      rc.range[j] = {std::min(lo, query[j]), std::max(hi, query[j])};
    }
  }
  for (const std::string& name : constraints.immutable) rc.mutable_feature[index_of(name)] = false;

  for (const auto& [name, r] : constraints.ranges) {
    const std::size_t j = index_of(name);
    const FeatureSpec& f = pre.features[j];
    if (f.is_categorical()) throw Error(ErrorCode::kInvariantViolation, "numeric range on categorical feature " + name);
    if (!(r.lower <= r.upper)) throw Error(ErrorCode::kInvariantViolation, "inverted range for " + name);
    if ((f.lower && r.lower < *f.lower) || (f.upper && r.upper > *f.upper)) {
      throw Error(ErrorCode::kInvariantViolation, "range for " + name + " exceeds the feature bounds");
    }
    rc.range[j] = r;
  }
  for (const auto& [name, labels] : constraints.allowed_categories) {
    const std::size_t j = index_of(name);
    const FeatureSpec& f = pre.features[j];
    if (!f.is_categorical()) throw Error(ErrorCode::kInvariantViolation, "category list on numeric feature " + name);
    if (labels.empty()) throw Error(ErrorCode::kInvariantViolation, "empty category list for " + name);
    std::vector<int> allowed;
    for (const std::string& label : labels) {
      const int c = f.category_index(label);
      if (c < 0) throw Error(ErrorCode::kInvariantViolation, "unknown category '" + label + "' for " + name);
      if (std::find(allowed.begin(), allowed.end(), c) == allowed.end()) allowed.push_back(c);
    }
    std::sort(allowed.begin(), allowed.end());
    rc.allowed_categories[j] = std::move(allowed);
  }
  return rc;
}

double gower_distance(const RawRow& a, const RawRow& b, const Preprocessor& pre) {
  const std::size_t m = pre.num_features();
  if (m == 0) return 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    if (pre.features[j].is_categorical()) {
      total += a[j] == b[j] ? 0.0 : 1.0;
    } else {
      total += std::min(1.0, std::abs(a[j] - b[j]) / numeric_span(pre, j));
    }
  }
  return total / static_cast<double>(m);
}

double standardized_euclidean_distance(const RawRow& a, const RawRow& b, const Preprocessor& pre) {
  double total = 0.0;
  for (std::size_t j = 0; j < pre.num_features(); ++j) {
    if (pre.features[j].is_categorical()) {
      total += a[j] == b[j] ? 0.0 : 1.0;
    } else {
      const double dz = pre.standardize(j, a[j]) - pre.standardize(j, b[j]);
      total += dz * dz;
    }
  }
  return std::sqrt(total);
}

CounterfactualSet generate_counterfactuals(const Model& model, const Preprocessor& pre,
                                           const RawRow& instance, const Constraints& constraints,
                                           const CounterfactualConfig& config, std::uint64_t seed) {
  if (config.k < 1 || config.population < 2 || config.generations < 0 || config.tournament_size < 1 ||
      config.mutation_rate < 0.0 || config.mutation_rate > 1.0) {
    throw Error(ErrorCode::kMalformedConfig, "counterfactual search parameters out of range");
  }
  const ResolvedConstraints rc = resolve_constraints(pre, constraints, instance);
  Search search{model, pre, instance, rc, config};
  if (search.valid(instance)) {
    throw Error(ErrorCode::kInvariantViolation, "instance is already predicted as the target class");
  }

  const auto pop_size = static_cast<std::size_t>(config.population);
  const auto k = static_cast<std::size_t>(config.k);
  const CounterRng root(seed);

  std::vector<RawRow> population;
  population.reserve(pop_size);
  {
    CounterRng rng = root.fork(0);
    for (std::size_t i = 0; i < pop_size; ++i) population.push_back(search.initial(rng));
  }

  std::vector<RawRow> elite;
  std::vector<double> fit(pop_size);
  auto score_all = [&] {
    for (std::size_t i = 0; i < pop_size; ++i) fit[i] = search.fitness(population[i], elite);
  };
  score_all();

  const std::size_t m = pre.num_features();
  for (int g = 0; g < config.generations; ++g) {
    CounterRng rng = root.fork(static_cast<std::uint64_t>(g) + 1);
    const auto elite_idx = best_distinct(population, fit, k);
    std::vector<RawRow> next;
    next.reserve(pop_size);
    for (std::size_t i : elite_idx) next.push_back(population[i]);

    auto tournament = [&]() -> const RawRow& {
      std::size_t best = rng.below(pop_size);
      for (int t = 1; t < config.tournament_size; ++t) {
        const std::size_t c = rng.below(pop_size);
        if (fit[c] > fit[best] || (fit[c] == fit[best] && c < best)) best = c;
      }
      return population[best];
    };
    while (next.size() < pop_size) {
      const RawRow& a = tournament();
      const RawRow& b = tournament();
      RawRow child = a;
      for (std::size_t j = 0; j < m; ++j) {
        if (rng.bernoulli(0.5)) child[j] = b[j];
        if (rc.mutable_feature[j] && rng.bernoulli(config.mutation_rate)) search.mutate_feature(child, j, rng);
      }
      search.project(child);
      next.push_back(std::move(child));
    }

    elite.clear();
    for (std::size_t i = 0; i < elite_idx.size(); ++i) elite.push_back(next[i]);
    population = std::move(next);
    score_all();
  }

  CounterfactualSet out;
  out.original = instance;
  out.seed = seed;
  out.target_class = rc.target_class;
  for (std::size_t i : best_distinct(population, fit, k)) {
    RawRow candidate = population[i];
    search.repair(candidate);
    out.candidates.push_back(std::move(candidate));
  }
  for (const RawRow& c : out.candidates) {
    out.valid.push_back(search.valid(c));
    out.proximity.push_back(gower_distance(c, instance, pre));
  }
  out.diversity = score_counterfactual_set(out, instance, pre).diversity;
  out.no_valid_counterfactual = std::none_of(out.valid.begin(), out.valid.end(), [](bool v) { return v; });
  return out;
}

CounterfactualScores score_counterfactual_set(const CounterfactualSet& cfset, const RawRow& instance,
                                              const Preprocessor& pre) {
  CounterfactualScores s;
  const std::size_t n = cfset.candidates.size();
  if (n == 0) return s;
  std::vector<const RawRow*> valid;
  double changed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const RawRow& c = cfset.candidates[i];
    for (std::size_t j = 0; j < c.size(); ++j) changed += c[j] != instance[j] ? 1.0 : 0.0;
    if (cfset.valid[i]) valid.push_back(&c);
  }
  s.validity_rate = static_cast<double>(valid.size()) / static_cast<double>(n);
  s.mean_changed_features = changed / static_cast<double>(n);
  if (!valid.empty()) {
    double prox = 0.0;
    for (const RawRow* c : valid) prox += gower_distance(*c, instance, pre);
    s.mean_proximity = prox / static_cast<double>(valid.size());
  }
  if (valid.size() >= 2) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < valid.size(); ++a) {
      for (std::size_t b = a + 1; b < valid.size(); ++b) {
        total += gower_distance(*valid[a], *valid[b], pre);
        ++pairs;
      }
    }
    s.diversity = total / static_cast<double>(pairs);
  }
  return s;
}

}  // namespace explainbench
