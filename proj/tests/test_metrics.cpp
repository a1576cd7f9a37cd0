#include <gtest/gtest.h>

#include <cmath>

#include "explainbench/error.hpp"
#include "explainbench/metrics.hpp"
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

Model constant_model(const Preprocessor& pre, double bias) {
  LogisticModel lm;
  lm.weights.assign(pre.encoded_width, 0.0);
  lm.bias = bias;
  lm.feature_order = pre.encoded_names();
  return lm;
}

}  // namespace

TEST(Sparsity, CountsAboveRelativeThreshold) {
  const std::vector<double> phi{5.0, 0.3, 0.0};
  EXPECT_EQ(sparsity(phi, 0.01), 2u);
  EXPECT_EQ(sparsity(phi, 0.0), 2u);
  EXPECT_EQ(sparsity(phi, 0.07), 1u);
  EXPECT_EQ(sparsity(std::vector<double>{0.0, 0.0}, 0.01), 0u);
  EXPECT_EQ(sparsity(std::vector<double>{-2.0, 2.0, 1.0}, 0.5), 2u);
  EXPECT_EQ(code_of([&] { sparsity(phi, 1.0); }), ErrorCode::kOutOfRange);
  EXPECT_EQ(code_of([&] { sparsity(phi, -0.1); }), ErrorCode::kOutOfRange);
}

TEST(Stability, ConstantModelIsPerfectlyStable) {
  const fx::Fixture f = fx::make_fixture(3, 1, ModelFamily::kLogistic, 1);
  const Model m = constant_model(f.pre, 0.3);
  const Explainer explainer = [&](const RawRow& x, std::uint64_t seed) {
    return kernel_shap_explain(m, f.pre, x, f.background, KernelShapConfig{}, seed);
  };
  const RawRow& x = f.data.rows[0];
  const Explanation e = explainer(x, 0);
  const StabilityResult s = stability(explainer, f.pre, x, e, 20, 0.1, 3, 5);
  ASSERT_TRUE(s.lipschitz.has_value());
  EXPECT_EQ(*s.lipschitz, 0.0);
  EXPECT_EQ(s.topk_jaccard, 1.0);
}

TEST(Stability, LipschitzOfLinearExplainer) {
  // phi = 3 * z on a single numeric feature: every ratio is exactly 3.
  const fx::Fixture f = fx::make_fixture(1, 0, ModelFamily::kLogistic, 2);
  const Explainer explainer = [&](const RawRow& x, std::uint64_t) {
    Explanation e;
    e.phi = {3.0 * f.pre.standardize(0, x[0])};
    return e;
  };
  const RawRow& x = f.data.rows[0];
  const StabilityResult s = stability(explainer, f.pre, x, explainer(x, 0), 10, 0.2, 1, 1);
  ASSERT_TRUE(s.lipschitz.has_value());
  EXPECT_NEAR(*s.lipschitz, 3.0, 1e-9);
  EXPECT_EQ(s.topk_jaccard, 1.0);
}

TEST(Stability, NoNumericFeaturesLeavesLipschitzEmpty) {
  const fx::Fixture f = fx::make_fixture(0, 2, ModelFamily::kLogistic, 3);
  const Explainer explainer = [&](const RawRow& x, std::uint64_t seed) {
    return kernel_shap_explain(f.model, f.pre, x, f.background, KernelShapConfig{}, seed);
  };
  const RawRow& x = f.data.rows[0];
  const StabilityResult s = stability(explainer, f.pre, x, explainer(x, 0), 5, 0.1, 1, 1);
  EXPECT_FALSE(s.lipschitz.has_value());
  EXPECT_EQ(code_of([&] { stability(explainer, f.pre, x, explainer(x, 0), 1, 0.1, 1, 1); }), ErrorCode::kOutOfRange);
}

TEST(Fidelity, ExactShapOnAdditiveModel) {
  // A logistic margin is additive in the raw features, so exact Shapley
  // values reproduce every coalition value.
  const fx::Fixture f = fx::make_fixture(4, 2, ModelFamily::kLogistic, 4);
  for (std::size_t i = 0; i < 5; ++i) {
    const RawRow& x = f.data.rows[i];
    const Explanation e = brute_force_shapley(f.model, f.pre, x, f.background, OutputScale::kMargin);
    EXPECT_GE(neighborhood_fidelity(e, f.model, f.pre, x, f.background, 200, i), 1.0 - 1e-6);
  }
  // depth-1 boosting is additive too
  const fx::Fixture g = fx::make_fixture(4, 1, ModelFamily::kGbt, 5, 240, 8, 30, 1);
  const Explanation e = tree_shap_explain(g.model, g.pre, g.data.rows[0], g.background);
  EXPECT_GE(neighborhood_fidelity(e, g.model, g.pre, g.data.rows[0], g.background, 200, 9), 1.0 - 1e-6);
}

TEST(Fidelity, WrongAttributionScoresBelowOne) {
  const fx::Fixture f = fx::make_fixture(4, 0, ModelFamily::kLogistic, 6);
  const RawRow& x = f.data.rows[0];
  Explanation e = brute_force_shapley(f.model, f.pre, x, f.background, OutputScale::kMargin);
  std::reverse(e.phi.begin(), e.phi.end());
  EXPECT_LT(neighborhood_fidelity(e, f.model, f.pre, x, f.background, 200, 1), 0.99);
  EXPECT_EQ(code_of([&] { neighborhood_fidelity(e, f.model, f.pre, x, f.background, 29, 1); }), ErrorCode::kOutOfRange);
}

TEST(Fidelity, ConstantResponseScoresOne) {
  const fx::Fixture f = fx::make_fixture(3, 0, ModelFamily::kLogistic, 7);
  const Model m = constant_model(f.pre, -1.0);
  const Explanation e = brute_force_shapley(m, f.pre, f.data.rows[0], f.background);
  EXPECT_EQ(neighborhood_fidelity(e, m, f.pre, f.data.rows[0], f.background, 50, 1), 1.0);
}

TEST(LocalAccuracy, GapAndScaleChecks) {
  const fx::Fixture f = fx::make_fixture(3, 1, ModelFamily::kGbt, 8);
  const RawRow& x = f.data.rows[0];
  const Explanation exact = tree_shap_explain(f.model, f.pre, x, f.background);
  EXPECT_LE(local_accuracy_gap(exact, f.model, f.pre, x), 1e-9);
  Explanation off = exact;
  off.base_value += 0.25;
  EXPECT_NEAR(local_accuracy_gap(off, f.model, f.pre, x), 0.25, 1e-9);
  Explanation no_scale = exact;
  no_scale.extras.erase("scale");
  EXPECT_EQ(code_of([&] { local_accuracy_gap(no_scale, f.model, f.pre, x); }), ErrorCode::kScaleMismatch);
  Explanation mismatch = exact;
  mismatch.extras["scale"] = "probability";
  EXPECT_EQ(code_of([&] { local_accuracy_gap(mismatch, f.model, f.pre, x); }), ErrorCode::kScaleMismatch);
}

TEST(Report, ScoreExplanationAndJsonRoundTrip) {
  const fx::Fixture f = fx::make_fixture(3, 1, ModelFamily::kGbt, 9);
  const RawRow& x = f.data.rows[0];
  const Explainer explainer = [&](const RawRow& r, std::uint64_t) {
    return tree_shap_explain(f.model, f.pre, r, f.background);
  };
  MetricSettings settings;
  settings.fidelity_samples = 100;
  settings.stability_perturbations = 5;
  MetricReport r = score_explanation(explainer(x, 0), explainer, f.model, f.pre, x, f.background, settings, 3);
  EXPECT_TRUE(r.local_accuracy_gap && r.neighborhood_fidelity_r2 && r.sparsity_count && r.stability_topk_jaccard);
  r.provenance = {"synthetic", "gbt", "tree_shap", 12, 99};
  r.cf_metrics = CounterfactualScores{0.5, 0.1, 0.2, 1.5};
  const MetricReport back = metric_report_from_json(metric_report_to_json(r));
  EXPECT_EQ(back.local_accuracy_gap, r.local_accuracy_gap);
  EXPECT_EQ(back.neighborhood_fidelity_r2, r.neighborhood_fidelity_r2);
  EXPECT_EQ(back.sparsity_count, r.sparsity_count);
  EXPECT_EQ(back.stability_lipschitz, r.stability_lipschitz);
  EXPECT_EQ(back.stability_topk_jaccard, r.stability_topk_jaccard);
  EXPECT_EQ(back.provenance.instance_id, 12);
  EXPECT_EQ(back.provenance.seed, 99u);
  ASSERT_TRUE(back.cf_metrics.has_value());
  EXPECT_EQ(back.cf_metrics->mean_changed_features, 1.5);

  // determinism of the whole report
  const MetricReport again = score_explanation(explainer(x, 0), explainer, f.model, f.pre, x, f.background, settings, 3);
  EXPECT_EQ(again.neighborhood_fidelity_r2, score_explanation(explainer(x, 0), explainer, f.model, f.pre, x,
                                                              f.background, settings, 3, Exec::kParallel)
                                                .neighborhood_fidelity_r2);
}
