#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "explainbench/error.hpp"
#include "explainbench/explainers.hpp"
#include "explainbench/rng.hpp"

namespace explainbench {

namespace {

constexpr double kMatchBand = 0.5;  // |Δz| below this counts as agreement

std::size_t draw_category(std::span<const double> frequency, CounterRng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last_seen = 0;
  for (std::size_t c = 0; c < frequency.size(); ++c) {
    if (frequency[c] <= 0.0) continue;
    acc += frequency[c];
    last_seen = c;
    if (u < acc) return c;
  }
  return last_seen;
}

}  // namespace

double lime_kernel_weight(double distance, double kernel_width_multiplier, std::size_t num_features) {
  const double sigma = kernel_width_multiplier * std::sqrt(static_cast<double>(num_features));
  return std::exp(-(distance * distance) / (sigma * sigma));
}

// Numeric features are drawn as N(0, 1) in standardized space around the
// training mean (or around the instance when sample_around_instance is set)
// and mapped back to raw units.
LimeNeighborhood lime_neighborhood(const RawRow& instance, const Preprocessor& pre,
                                   const LimeConfig& config, std::uint64_t seed) {
  if (config.n_samples < 10) throw Error(ErrorCode::kMalformedConfig, "lime needs at least 10 samples");
  const std::size_t m = pre.num_features();
  const auto n = static_cast<std::size_t>(config.n_samples);

  LimeNeighborhood hood;
  hood.binary = Matrix(n, m);
  hood.samples.assign(n, instance);
  hood.weights.assign(n, 1.0);
  hood.distances.assign(n, 0.0);
  for (std::size_t j = 0; j < m; ++j) hood.binary(0, j) = 1.0;

  std::vector<double> instance_z(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    if (!pre.features[j].is_categorical()) instance_z[j] = pre.standardize(j, instance[j]);
  }

  const CounterRng root(seed);
  for (std::size_t i = 1; i < n; ++i) {
    CounterRng rng = root.fork(i);
    RawRow& sample = hood.samples[i];
    double d2 = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const FeatureSpec& f = pre.features[j];
      bool match = false;
      if (f.is_categorical()) {
        const auto c = draw_category(pre.category_frequency[j], rng);
        sample[j] = static_cast<double>(c);
        match = sample[j] == instance[j];
        if (!match) d2 += 1.0;
      } else {
        const double noise = rng.normal();
        if (pre.stddev[j] > 0.0) {
          const double z = (config.sample_around_instance ? instance_z[j] : 0.0) + noise;
          sample[j] = pre.destandardize(j, z);
          const double dz = z - instance_z[j];
          match = std::abs(dz) < kMatchBand;
          d2 += dz * dz;
        } else {
          match = true;  // constant feature: nothing to perturb
        }
      }
      hood.binary(i, j) = match ? 1.0 : 0.0;
    }
    hood.distances[i] = std::sqrt(d2);
    hood.weights[i] = lime_kernel_weight(hood.distances[i], config.kernel_width_multiplier, m);
  }
  return hood;
}

Explanation lime_explain(const Model& model, const Preprocessor& pre, const RawRow& instance,
                         const LimeConfig& config, std::uint64_t seed, Exec exec) {
  const LimeNeighborhood hood = lime_neighborhood(instance, pre, config, seed);
  const std::size_t m = pre.num_features();
  const std::size_t n = hood.samples.size();
  const std::vector<double> y =
      predict_batch(model, encode_rows(pre, hood.samples), OutputScale::kProbability, exec);

  Explanation e;
  e.method = Method::kLime;
  e.feature_names = pre.feature_names();
  e.scale = OutputScale::kProbability;
  e.extras["scale"] = "probability";
  e.extras["n_samples"] = n;
  e.extras["seed"] = seed;
  e.extras["kernel_width"] = config.kernel_width_multiplier * std::sqrt(static_cast<double>(m));
  e.extras["numeric_match_rule"] = "abs(delta_z) < 0.5";
  e.extras["sampling"] = config.sample_around_instance ? "around_instance" : "around_training_mean";

  const bool constant = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
  if (constant) {
    // No variation to explain: zero slopes, intercept = the constant.
    e.phi.assign(m, 0.0);
    e.base_value = y[0];
    e.extras["surrogate_r2"] = 1.0;
    return e;
  }

  // Weighted ridge with an unpenalized intercept (last unknown).
  const auto dim = static_cast<Eigen::Index>(m + 1);
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd row(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) row(static_cast<Eigen::Index>(j)) = hood.binary(i, j);
    row(dim - 1) = 1.0;
    normal.noalias() += hood.weights[i] * row * row.transpose();
    rhs.noalias() += hood.weights[i] * y[i] * row;
  }
  for (Eigen::Index j = 0; j + 1 < dim; ++j) normal(j, j) += config.ridge_penalty;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  if (ldlt.info() != Eigen::Success) throw Error(ErrorCode::kSingularSystem, "lime ridge system is singular");
  const Eigen::VectorXd beta = ldlt.solve(rhs);
  if (!beta.allFinite()) throw Error(ErrorCode::kSingularSystem, "lime ridge solve produced non-finite values");

  std::vector<double> coef(m);
  for (std::size_t j = 0; j < m; ++j) coef[j] = beta(static_cast<Eigen::Index>(j));
  const double intercept = beta(dim - 1);

  // Weighted R² of the full surrogate on its own neighborhood.
  double wsum = 0.0;
  double wy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    wsum += hood.weights[i];
    wy += hood.weights[i] * y[i];
  }
  const double ybar = wy / wsum;
  double sse = 0.0;
  double sst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double fit = intercept;
    for (std::size_t j = 0; j < m; ++j) fit += coef[j] * hood.binary(i, j);
    sse += hood.weights[i] * (y[i] - fit) * (y[i] - fit);
    sst += hood.weights[i] * (y[i] - ybar) * (y[i] - ybar);
  }
  e.extras["surrogate_r2"] = sst > 0.0 ? 1.0 - sse / sst : 1.0;

  const std::size_t keep = config.top_k > 0 ? std::min<std::size_t>(config.top_k, m) : m;
  e.phi.assign(m, 0.0);
  for (std::size_t j : top_k_features(coef, keep)) e.phi[j] = coef[j];
  e.base_value = intercept;
  e.extras["top_k"] = keep;
  return e;
}

}  // namespace explainbench
