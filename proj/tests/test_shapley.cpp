#include <gtest/gtest.h>

#include <set>

#include "explainbench/error.hpp"
#include "explainbench/explainers.hpp"
#include "fixtures.hpp"

using namespace explainbench;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no Error thrown";
  return ErrorCode::kInternal;
}

double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

double efficiency_residual(const Explanation& e, const Model& model, const Preprocessor& pre, const RawRow& x) {
  return std::abs(e.base_value + fx::sum(e.phi) - fx::output(model, encode(pre, x), e.scale));
}

}  // namespace

TEST(KernelWeight, MatchesClosedForm) {
  for (int m = 2; m <= 12; ++m) {
    for (int s = 1; s < m; ++s) {
      EXPECT_NEAR(shapley_kernel_weight(m, s), (m - 1.0) / (binom(m, s) * s * (m - s)), 1e-15) << m << "," << s;
    }
  }
  EXPECT_EQ(code_of([] { shapley_kernel_weight(5, 0); }), ErrorCode::kOutOfRange);
  EXPECT_EQ(code_of([] { shapley_kernel_weight(5, 5); }), ErrorCode::kOutOfRange);
}

TEST(BruteForce, MatchesPermutationAverage) {
  for (ModelFamily fam : {ModelFamily::kLogistic, ModelFamily::kGbt}) {
    for (int numeric = 2; numeric <= 4; ++numeric) {
      const fx::Fixture f = fx::make_fixture(numeric, 2, fam, 100 + numeric);
      for (OutputScale scale : {OutputScale::kProbability, OutputScale::kMargin}) {
        const RawRow& x = f.data.rows[1];
        const Explanation e = brute_force_shapley(f.model, f.pre, x, f.background, scale);
        const auto oracle = fx::permutation_shapley(f.model, f.pre, x, f.background, scale);
        EXPECT_LE(fx::max_abs_diff(e.phi, oracle), 1e-12);
        EXPECT_NEAR(e.base_value, fx::raw_coalition_value(f.model, f.pre, x, f.background, 0, scale), 1e-15);
        EXPECT_LE(efficiency_residual(e, f.model, f.pre, x), 1e-12);
      }
    }
  }
}

TEST(BruteForce, LinearMarginClosedForm) {
  // Margin of a logistic model is additive: phi_j = w_j (z_j - mean_b z_bj).
  const fx::Fixture f = fx::make_fixture(5, 0, ModelFamily::kLogistic, 7);
  const auto& lm = std::get<LogisticModel>(f.model);
  const RawRow& x = f.data.rows[0];
  const Explanation e = brute_force_shapley(f.model, f.pre, x, f.background, OutputScale::kMargin);
  const std::vector<double> z = encode(f.pre, x);
  for (std::size_t j = 0; j < 5; ++j) {
    double mean_b = 0.0;
    for (const RawRow& b : f.background) mean_b += encode(f.pre, b)[j];
    mean_b /= static_cast<double>(f.background.size());
    EXPECT_NEAR(e.phi[j], lm.weights[j] * (z[j] - mean_b), 1e-12);
  }
}

TEST(BruteForce, UnusedFeatureGetsZero) {
  const fx::Fixture f = fx::make_fixture(3, 1, ModelFamily::kLogistic, 8);
  const Model m = fx::stump(f.pre.encoded_width, 1, 0.0, -1.0, 1.0);
  for (std::size_t i = 0; i < 10; ++i) {
    const Explanation e = brute_force_shapley(m, f.pre, f.data.rows[i], f.background);
    EXPECT_EQ(e.phi[0], 0.0);
    EXPECT_EQ(e.phi[2], 0.0);
    EXPECT_EQ(e.phi[3], 0.0);
  }
}

TEST(BruteForce, Errors) {
  const fx::Fixture f = fx::make_fixture(3, 0, ModelFamily::kLogistic, 9);
  EXPECT_EQ(code_of([&] { brute_force_shapley(f.model, f.pre, f.data.rows[0], {}); }), ErrorCode::kInvariantViolation);
  const fx::Fixture wide = fx::make_fixture(17, 0, ModelFamily::kLogistic, 9, 60, 2);
  EXPECT_EQ(code_of([&] { brute_force_shapley(wide.model, wide.pre, wide.data.rows[0], wide.background); }),
            ErrorCode::kTooManyFeatures);
}

TEST(KernelShap, EnumerationMatchesBruteForce) {
  for (int m = 4; m <= 8; ++m) {
    for (ModelFamily fam : {ModelFamily::kLogistic, ModelFamily::kGbt}) {
      const fx::Fixture f = fx::make_fixture(m - 1, 1, fam, 200 + m);
      const RawRow& x = f.data.rows[2];
      const Explanation ks = kernel_shap_explain(f.model, f.pre, x, f.background, KernelShapConfig{}, 1);
      EXPECT_TRUE(ks.extras["enumerated"].get<bool>());
      const Explanation bf = brute_force_shapley(f.model, f.pre, x, f.background);
      EXPECT_LE(fx::max_abs_diff(ks.phi, bf.phi), 1e-9) << "M=" << m;
      EXPECT_NEAR(ks.base_value, bf.base_value, 1e-12);
      EXPECT_LE(efficiency_residual(ks, f.model, f.pre, x), 1e-9);
    }
  }
}

TEST(KernelShap, SampledKeepsEfficiencyAndStaysClose) {
  const fx::Fixture f = fx::make_fixture(15, 0, ModelFamily::kGbt, 15, 300, 5, 30, 3);
  const RawRow& x = f.data.rows[0];
  KernelShapConfig cfg;
  cfg.n_coalitions = 4000;
  const Explanation ks = kernel_shap_explain(f.model, f.pre, x, f.background, cfg, 3);
  EXPECT_FALSE(ks.extras["enumerated"].get<bool>());
  EXPECT_LE(ks.extras["n_coalitions"].get<int>(), 4000);
  EXPECT_LE(efficiency_residual(ks, f.model, f.pre, x), 1e-9);
  const Explanation bf = brute_force_shapley(f.model, f.pre, x, f.background);
  EXPECT_LE(fx::max_abs_diff(ks.phi, bf.phi), 0.02);
}

TEST(KernelShap, SeedDeterminism) {
  const fx::Fixture f = fx::make_fixture(13, 0, ModelFamily::kLogistic, 16, 200, 4);
  KernelShapConfig cfg;
  cfg.n_coalitions = 500;
  const RawRow& x = f.data.rows[0];
  const Explanation a = kernel_shap_explain(f.model, f.pre, x, f.background, cfg, 11);
  const Explanation b = kernel_shap_explain(f.model, f.pre, x, f.background, cfg, 11, Exec::kSerial);
  const Explanation c = kernel_shap_explain(f.model, f.pre, x, f.background, cfg, 12);
  EXPECT_EQ(a.phi, b.phi);
  EXPECT_NE(a.phi, c.phi);
}

TEST(SelectCoalitions, EnumerationAndSampling) {
  const WeightedCoalitions small = select_coalitions(6, KernelShapConfig{}, 0);
  EXPECT_TRUE(small.enumerated);
  EXPECT_EQ(small.masks.size(), 62u);
  KernelShapConfig cfg;
  cfg.n_coalitions = 300;
  const WeightedCoalitions big = select_coalitions(14, cfg, 5);
  EXPECT_FALSE(big.enumerated);
  EXPECT_LE(big.masks.size(), 300u);
  EXPECT_EQ(big.masks.size(), big.weights.size());
  std::set<CoalitionMask> distinct(big.masks.begin(), big.masks.end());
  EXPECT_EQ(distinct.size(), big.masks.size());
  for (std::size_t i = 0; i < big.masks.size(); ++i) {
    const auto size = std::count(big.masks[i].begin(), big.masks[i].end(), 1);
    EXPECT_GT(size, 0);
    EXPECT_LT(size, 14);
    EXPECT_GT(big.weights[i], 0.0);
  }
  // each size class carries its full kernel mass
  std::vector<double> mass(14, 0.0);
  for (std::size_t i = 0; i < big.masks.size(); ++i) {
    mass[std::count(big.masks[i].begin(), big.masks[i].end(), 1)] += big.weights[i];
  }
  for (int s = 1; s < 14; ++s) {
    if (mass[s] > 0) EXPECT_NEAR(mass[s], binom(14, s) * shapley_kernel_weight(14, s), 1e-12) << s;
  }
}

TEST(TreeShap, MatchesBruteForceOnMargin) {
  for (int m = 4; m <= 8; ++m) {
    const fx::Fixture f = fx::make_fixture(m - 2, 2, ModelFamily::kGbt, 300 + m, 240, 10, 25, 4);
    for (std::size_t i = 0; i < 3; ++i) {
      const RawRow& x = f.data.rows[i];
      const Explanation ts = tree_shap_explain(f.model, f.pre, x, f.background);
      EXPECT_EQ(ts.scale, OutputScale::kMargin);
      const Explanation bf = brute_force_shapley(f.model, f.pre, x, f.background, OutputScale::kMargin);
      EXPECT_LE(fx::max_abs_diff(ts.phi, bf.phi), 1e-9) << "M=" << m;
      EXPECT_NEAR(ts.base_value, bf.base_value, 1e-9);
      EXPECT_LE(efficiency_residual(ts, f.model, f.pre, x), 1e-9);
    }
  }
}

TEST(TreeShap, RejectsLogistic) {
  const fx::Fixture f = fx::make_fixture(3, 0, ModelFamily::kLogistic, 10);
  EXPECT_EQ(code_of([&] { tree_shap_explain(f.model, f.pre, f.data.rows[0], f.background); }),
            ErrorCode::kUnsupportedCombination);
}

TEST(Explain, DispatchAndErrors) {
  const fx::Fixture f = fx::make_fixture(3, 1, ModelFamily::kGbt, 11);
  ExplainerConfig cfg;
  const RawRow& x = f.data.rows[0];
  EXPECT_EQ(explain(Method::kTreeShap, f.model, f.pre, x, f.background, cfg, 0).method, Method::kTreeShap);
  EXPECT_EQ(code_of([&] { explain(Method::kCounterfactual, f.model, f.pre, x, f.background, cfg, 0); }),
            ErrorCode::kUnsupportedCombination);
  EXPECT_EQ(code_of([&] { explain(Method::kKernelShap, f.model, f.pre, RawRow{1.0}, f.background, cfg, 0); }),
            ErrorCode::kDimensionMismatch);
  EXPECT_EQ(parse_method("kernel_shap"), Method::kKernelShap);
  EXPECT_EQ(code_of([] { parse_method("anchors"); }), ErrorCode::kUnknownMethod);
  EXPECT_EQ(code_of([] { parse_scale("logit"); }), ErrorCode::kScaleMismatch);
  cfg.kernel_shap.n_coalitions = 0;
  EXPECT_EQ(code_of([&] { validate_config(cfg); }), ErrorCode::kMalformedConfig);
}

TEST(TopK, TiesAndJaccard) {
  const std::vector<double> phi{0.1, -0.5, 0.5, 0.0, 0.2};
  EXPECT_EQ(top_k_features(phi, 3), (std::vector<std::size_t>{1, 2, 4}));
  EXPECT_EQ(top_k_features(phi, 10).size(), 5u);
  const std::vector<std::size_t> a{1, 2, 3}, b{2, 3, 4}, none;
  EXPECT_DOUBLE_EQ(jaccard(a, b), 0.5);
  EXPECT_DOUBLE_EQ(jaccard(a, a), 1.0);
  EXPECT_DOUBLE_EQ(jaccard(none, none), 1.0);
  EXPECT_DOUBLE_EQ(jaccard(a, none), 0.0);
}
