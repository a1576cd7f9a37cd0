#pragma once

// Synthetic datasets, models and reference computations shared by the unit
// tests and the acceptance binary. Reference values here are computed
// without the library's Shapley or coalition code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "explainbench/datasets.hpp"
#include "explainbench/explainers.hpp"
#include "explainbench/models.hpp"

namespace fx {

namespace eb = explainbench;

// `numeric` numeric features x0.., then `categorical` three-level features c0..
inline eb::DatasetSpec mixed_spec(int numeric, int categorical, const std::string& id = "synthetic") {
  eb::DatasetSpec spec;
  spec.id = id;
  spec.source_path = id + ".csv";
  spec.target = "y";
  spec.positive_label = "1";
  for (int i = 0; i < numeric; ++i) {
    eb::FeatureSpec f;
    f.name = "x" + std::to_string(i);
    spec.features.push_back(f);
  }
  for (int i = 0; i < categorical; ++i) {
    eb::FeatureSpec f;
    f.name = "c" + std::to_string(i);
    f.kind = eb::FeatureKind::kCategorical;
    f.categories = {"a", "b", "c"};
    spec.features.push_back(f);
  }
  return spec;
}

// Rows from N(0, 1) / uniform categories; labels from a random linear score
// with an interaction so trees have something to split on.
inline eb::Dataset synth_dataset(const eb::DatasetSpec& spec, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> level(0, 2);
  std::vector<double> w(spec.features.size());
  for (double& v : w) v = normal(gen);
  eb::Dataset d;
  d.spec = spec;
  for (std::size_t i = 0; i < n; ++i) {
    eb::RawRow row(spec.features.size());
    double score = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = spec.features[j].is_categorical() ? level(gen) : std::round(normal(gen) * 1000.0) / 1000.0;
      score += w[j] * (spec.features[j].is_categorical() ? row[j] - 1.0 : row[j]);
    }
    if (row.size() >= 2 && !spec.features[0].is_categorical() && !spec.features[1].is_categorical()) {
      score += row[0] * row[1];
    }
    d.rows.push_back(row);
    d.labels.push_back(score + 0.5 * normal(gen) > 0 ? 1 : 0);
  }
  return d;
}

inline eb::Matrix encode_all(const eb::Preprocessor& pre, const std::vector<eb::RawRow>& rows) {
  eb::Matrix m(rows.size(), pre.encoded_width);
  for (std::size_t i = 0; i < rows.size(); ++i) eb::encode_into(pre, rows[i], m.row(i));
  return m;
}

struct Fixture {
  eb::Dataset data;
  eb::Preprocessor pre;
  eb::Model model;
  std::vector<eb::RawRow> background;
};

inline Fixture make_fixture(int numeric, int categorical, eb::ModelFamily family, std::uint64_t seed,
                            std::size_t n = 240, std::size_t background = 8, int n_trees = 20, int depth = 3) {
  Fixture f;
  f.data = synth_dataset(mixed_spec(numeric, categorical), n, seed);
  std::vector<std::size_t> all(f.data.size());
  std::iota(all.begin(), all.end(), 0);
  f.pre = eb::fit_preprocessor(f.data, all);
  const eb::Matrix x = encode_all(f.pre, f.data.rows);
  eb::TrainParams p;
  p.family = family;
  p.n_trees = n_trees;
  p.max_depth = depth;
  p.iterations = 200;
  p.seed = seed;
  f.model = eb::train_model(x, f.data.labels, p, f.pre.encoded_names());
  for (std::size_t i = 0; i < background && i < f.data.size(); ++i) f.background.push_back(f.data.rows[n - 1 - i]);
  return f;
}

inline double output(const eb::Model& model, const std::vector<double>& x, eb::OutputScale scale) {
  const double margin = eb::predict_margin(model, x);
  return scale == eb::OutputScale::kMargin ? margin : 1.0 / (1.0 + std::exp(-margin));
}

// v(S): splice raw rows, encode each composite and average the model output.
inline double raw_coalition_value(const eb::Model& model, const eb::Preprocessor& pre, const eb::RawRow& x,
                                  const std::vector<eb::RawRow>& background, std::uint64_t subset,
                                  eb::OutputScale scale) {
  double total = 0.0;
  for (const eb::RawRow& b : background) {
    eb::RawRow z = b;
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (subset >> j & 1U) z[j] = x[j];
    }
    total += output(model, eb::encode(pre, z), scale);
  }
  return total / static_cast<double>(background.size());
}

// Shapley values as the average marginal contribution over all M! player
// orders. Independent of the subset-weighted formula the library uses.
inline std::vector<double> permutation_shapley(const eb::Model& model, const eb::Preprocessor& pre,
                                               const eb::RawRow& x, const std::vector<eb::RawRow>& background,
                                               eb::OutputScale scale) {
  const std::size_t m = x.size();
  std::vector<double> v(std::size_t{1} << m);
  for (std::uint64_t s = 0; s < v.size(); ++s) v[s] = raw_coalition_value(model, pre, x, background, s, scale);
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(m, 0.0);
  double count = 0.0;
  do {
    std::uint64_t s = 0;
    for (int j : order) {
      phi[j] += v[s | (std::uint64_t{1} << j)] - v[s];
      s |= std::uint64_t{1} << j;
    }
    count += 1.0;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& p : phi) p /= count;
  return phi;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? d : INFINITY;
}

inline double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

// Hand-built single-split ensemble: margin = left if x[feature] <= t else right.
inline eb::TreeEnsembleModel stump(std::size_t width, int feature, double t, double left, double right,
                                   double base = 0.0) {
  eb::TreeEnsembleModel m;
  m.base_margin = base;
  eb::Tree tree(3);
  tree[0].split_feature = feature;
  tree[0].threshold = t;
  tree[0].left = 1;
  tree[0].right = 2;
  tree[0].cover = 10;
  tree[1].leaf_value = left;
  tree[1].cover = 5;
  tree[2].leaf_value = right;
  tree[2].cover = 5;
  m.trees.push_back(tree);
  for (std::size_t j = 0; j < width; ++j) m.feature_order.push_back("f" + std::to_string(j));
  return m;
}

}  // namespace fx
