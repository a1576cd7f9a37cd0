// One PASS/FAIL line per acceptance criterion. argv[1] is the explainbench
// executable used for the end-to-end benchmark runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <unistd.h>

#include "explainbench/benchmark.hpp"
#include "explainbench/error.hpp"
#include "explainbench/metrics.hpp"
#include "explainbench/serialization.hpp"
#include "fixtures.hpp"

using namespace explainbench;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

double residual(const Explanation& e, const Model& model, const Preprocessor& pre, const RawRow& x) {
  return std::abs(e.base_value + fx::sum(e.phi) - fx::output(model, encode(pre, x), e.scale));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Worst efficiency residual over every exact explanation produced below.
double g_exact_residual = 0.0;

Outcome shapley_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(77);
  double worst = 0.0, worst_perm = 0.0;
  int fixtures = 0;
  for (int t = 0; t < 24; ++t) {
    const int m = 4 + t % 5;
    const int categorical = static_cast<int>(gen() % 3);
    const ModelFamily fam = t % 2 ? ModelFamily::kGbt : ModelFamily::kLogistic;
    const std::size_t bg = 1 + gen() % 10;
    const fx::Fixture f = fx::make_fixture(m - categorical, categorical, fam, 1000 + t, 200, bg, 20, 3);
    for (int i = 0; i < 2; ++i) {
      const RawRow& x = f.data.rows[gen() % 150];
      const Explanation bf = brute_force_shapley(f.model, f.pre, x, f.background);
      const Explanation ks = kernel_shap_explain(f.model, f.pre, x, f.background, KernelShapConfig{}, t);
      if (!ks.extras.value("enumerated", false)) return {false, "kernel_shap did not enumerate at M=" + std::to_string(m)};
      worst = std::max(worst, fx::max_abs_diff(ks.phi, bf.phi));
      g_exact_residual = std::max({g_exact_residual, residual(bf, f.model, f.pre, x), residual(ks, f.model, f.pre, x)});
      if (m <= 6) {
        worst_perm = std::max(worst_perm, fx::max_abs_diff(bf.phi, fx::permutation_shapley(f.model, f.pre, x, f.background,
                                                                                           OutputScale::kProbability)));
      }
      if (fam == ModelFamily::kGbt) {
        const Explanation bm = brute_force_shapley(f.model, f.pre, x, f.background, OutputScale::kMargin);
        const Explanation ts = tree_shap_explain(f.model, f.pre, x, f.background);
        worst = std::max(worst, fx::max_abs_diff(ts.phi, bm.phi));
        g_exact_residual = std::max({g_exact_residual, residual(bm, f.model, f.pre, x), residual(ts, f.model, f.pre, x)});
      }
    }
    ++fixtures;
  }
  const double elapsed = seconds_since(t0);
  return {fixtures >= 20 && worst <= 1e-9 && worst_perm <= 1e-9 && elapsed < 60.0,
          std::to_string(fixtures) + " fixtures, max |diff| " + fmt(worst) + ", brute vs permutation " + fmt(worst_perm) +
              ", " + fmt(elapsed) + " s"};
}

Outcome efficiency() {
  const fx::Fixture f = fx::make_fixture(15, 0, ModelFamily::kGbt, 15, 300, 5, 30, 3);
  const RawRow& x = f.data.rows[0];
  KernelShapConfig cfg;
  cfg.n_coalitions = 4000;
  const Explanation ks = kernel_shap_explain(f.model, f.pre, x, f.background, cfg, 3);
  const Explanation bf = brute_force_shapley(f.model, f.pre, x, f.background);
  g_exact_residual = std::max(g_exact_residual, residual(bf, f.model, f.pre, x));
  const double sampled_residual = residual(ks, f.model, f.pre, x);
  const double err = fx::max_abs_diff(ks.phi, bf.phi);
  return {g_exact_residual <= 1e-9 && sampled_residual <= 1e-9 && err <= 0.02 && !ks.extras.value("enumerated", true),
          "exact residual " + fmt(g_exact_residual) + ", sampled M=15 residual " + fmt(sampled_residual) + ", oracle error " +
              fmt(err)};
}

Outcome tree_shap_speed() {
  const fx::Fixture f = fx::make_fixture(10, 2, ModelFamily::kGbt, 99, 1200, 100, 100, 3);
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    const RawRow& x = f.data.rows[i];
    const Explanation e = tree_shap_explain(f.model, f.pre, x, f.background);
    worst = std::max(worst, residual(e, f.model, f.pre, x));
  }
  const double elapsed = seconds_since(t0);
  const auto& ens = std::get<TreeEnsembleModel>(f.model);
  return {elapsed < 10.0 && ens.trees.size() == 100 && worst <= 1e-9,
          std::to_string(ens.trees.size()) + " trees, 100 background rows, 50 instances in " + fmt(elapsed) +
              " s, residual " + fmt(worst)};
}

bool feasible(const RawRow& c, const RawRow& q, const Preprocessor& pre, const Constraints& cons) {
  for (std::size_t j = 0; j < q.size(); ++j) {
    const FeatureSpec& f = pre.features[j];
    const bool immutable = f.immutable || std::count(cons.immutable.begin(), cons.immutable.end(), f.name);
    if (immutable && c[j] != q[j]) return false;
    if (f.is_categorical()) {
      if (c[j] < 0 || c[j] >= static_cast<double>(f.categories.size()) || c[j] != std::floor(c[j])) return false;
    } else {
      if (auto it = cons.ranges.find(f.name); it != cons.ranges.end() && !immutable) {
        if (c[j] < it->second.lower || c[j] > it->second.upper) return false;
      }
      if (f.lower && c[j] < std::min(*f.lower, q[j])) return false;
      if (f.upper && c[j] > std::max(*f.upper, q[j])) return false;
    }
  }
  return true;
}

double gower_reference(const RawRow& a, const RawRow& b, const Preprocessor& pre) {
  double total = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (pre.features[j].is_categorical()) {
      total += a[j] != b[j];
    } else {
      total += std::min(1.0, std::abs(a[j] - b[j]) / std::max(pre.max[j] - pre.min[j], 1e-12));
    }
  }
  return total / static_cast<double>(a.size());
}

Outcome counterfactual_contract() {
  std::mt19937_64 gen(4242);
  std::size_t candidates = 0, violations = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    fx::Fixture f = fx::make_fixture(3, 2, t % 2 ? ModelFamily::kGbt : ModelFamily::kLogistic, 3000 + t, 160, 4, 10, 3);
    f.pre.features[0].lower = f.pre.min[0] - 0.5;
    f.pre.features[0].upper = f.pre.max[0] + 0.5;
    if (gen() % 2) f.pre.features[1].immutable = true;
    const RawRow& q = f.data.rows[gen() % f.data.size()];
    Constraints cons;
    cons.target_class = 1 - predict_label(f.model, encode(f.pre, q));
    if (gen() % 2) cons.immutable.push_back("x2");
    if (gen() % 2) cons.immutable.push_back("c0");
    if (gen() % 2) {
      const double a = f.pre.min[2] + (f.pre.max[2] - f.pre.min[2]) * std::uniform_real_distribution<>(0, 0.5)(gen);
      cons.ranges["x2"] = {a, a + (f.pre.max[2] - f.pre.min[2]) * 0.4};
    }
    CounterfactualConfig cfg;
    cfg.population = 60;
    cfg.generations = 30;
    const CounterfactualSet set = generate_counterfactuals(f.model, f.pre, q, cons, cfg, t);
    for (const RawRow& c : set.candidates) {
      ++candidates;
      violations += !feasible(c, q, f.pre, cons);
    }
  }

  DatasetSpec spec = fx::mixed_spec(1, 0);
  spec.features[0].lower = 0.0;
  spec.features[0].upper = 10.0;
  Dataset d;
  d.spec = spec;
  for (int i = 0; i <= 100; ++i) {
    d.rows.push_back({i / 10.0});
    d.labels.push_back(i > 60);
  }
  std::vector<std::size_t> all(d.size());
  std::iota(all.begin(), all.end(), 0);
  const Preprocessor pre = fit_preprocessor(d, all);
  const Model model = fx::stump(1, 0, pre.standardize(0, 6.0), -2.0, 2.0);
  const RawRow q{2.0};
  double optimum = INFINITY;
  for (int i = 0; i <= 10000; ++i) {
    const RawRow c{10.0 * i / 10000.0};
    if (predict_label(model, encode(pre, c)) == 1) optimum = std::min(optimum, gower_reference(c, q, pre));
  }
  const CounterfactualSet set = generate_counterfactuals(model, pre, q, Constraints{}, CounterfactualConfig{}, 5);
  double best = INFINITY;
  for (std::size_t i = 0; i < set.candidates.size(); ++i) {
    if (set.valid[i]) best = std::min(best, gower_reference(set.candidates[i], q, pre));
  }
  return {violations == 0 && candidates > 0 && best <= 2.0 * optimum,
          std::to_string(candidates) + " candidates over 100 cases, " + std::to_string(violations) +
              " violations; threshold best " + fmt(best) + " vs grid optimum " + fmt(optimum)};
}

Outcome metric_sanity() {
  const std::size_t s = sparsity(std::vector<double>{5.0, 0.3, 0.0}, 0.01);

  const fx::Fixture f = fx::make_fixture(3, 1, ModelFamily::kLogistic, 1);
  LogisticModel flat;
  flat.weights.assign(f.pre.encoded_width, 0.0);
  flat.bias = 0.3;
  flat.feature_order = f.pre.encoded_names();
  const Model constant = flat;
  const Explainer explainer = [&](const RawRow& x, std::uint64_t seed) {
    return kernel_shap_explain(constant, f.pre, x, f.background, KernelShapConfig{}, seed);
  };
  const RawRow& x = f.data.rows[0];
  const StabilityResult st = stability(explainer, f.pre, x, explainer(x, 0), 20, 0.1, 3, 5);

  const fx::Fixture add = fx::make_fixture(4, 2, ModelFamily::kLogistic, 4);
  double worst_r2 = 1.0;
  for (std::size_t i = 0; i < 5; ++i) {
    const RawRow& xi = add.data.rows[i];
    const Explanation e = brute_force_shapley(add.model, add.pre, xi, add.background, OutputScale::kMargin);
    worst_r2 = std::min(worst_r2, neighborhood_fidelity(e, add.model, add.pre, xi, add.background, 200, i));
  }
  const bool lip_zero = st.lipschitz.has_value() && *st.lipschitz == 0.0;
  return {s == 2 && lip_zero && st.topk_jaccard == 1.0 && worst_r2 >= 1.0 - 1e-6,
          "sparsity " + std::to_string(s) + ", constant-model lipschitz " +
              (st.lipschitz ? fmt(*st.lipschitz) : std::string("none")) + " jaccard " + fmt(st.topk_jaccard) +
              ", additive fidelity R2 " + fmt(worst_r2)};
}

Outcome bench_determinism(const std::string& exe) {
  const fs::path config = fs::path(EXPLAINBENCH_SOURCE_DIR) / "configs/compas_bench.json";
  const fs::path root = fs::temp_directory_path() / ("eb_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  double slowest = 0.0;
  auto run = [&](const std::string& name, const std::string& extra) {
    const std::string cmd = "\"" + exe + "\" bench --config \"" + config.string() + "\" --out \"" + (root / name).string() +
                            "\" " + extra + " > \"" + (root / (name + ".log")).string() + "\" 2>&1";
    const auto t0 = Clock::now();
    const int rc = std::system(cmd.c_str());
    slowest = std::max(slowest, seconds_since(t0));
    return rc == 0;
  };
  if (!run("a", "") || !run("b", "") || !run("w4", "--workers 4")) {
    return {false, "bench run failed, see logs under " + root.string()};
  }
  bool same = true;
  for (const char* file : {"results.jsonl", "summary.csv"}) {
    const std::string a = slurp(root / "a" / file);
    same = same && !a.empty() && a == slurp(root / "b" / file) && a == slurp(root / "w4" / file);
  }
  const BenchmarkResult r = load_results(root / "a" / "results.jsonl");
  std::set<std::string> models, methods;
  for (const RunRecord& rec : r.records) {
    models.insert(rec.report.provenance.model);
    methods.insert(rec.report.provenance.method);
  }
  const bool shape = models.size() == 2 && methods.size() == 3 && r.records.size() == 2 * 3 * 50;
  const bool ok = same && shape && slowest < 300.0;
  if (ok) fs::remove_all(root);
  return {ok, std::to_string(r.records.size()) + " records, identical bytes across 2 runs and --workers 4: " +
                  (same ? "yes" : "no") + ", slowest run " + fmt(slowest) + " s"};
}

Outcome training() {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> normal;
  double worst_grad = 0.0;
  for (int t = 0; t < 5; ++t) {
    const fx::Fixture f = fx::make_fixture(3 + t, t % 3, ModelFamily::kLogistic, 40 + t, 120);
    const Matrix x = fx::encode_all(f.pre, f.data.rows);
    std::vector<double> w(x.cols);
    for (double& v : w) v = normal(gen);
    const double b = normal(gen);
    const double l2 = 0.1 * t;
    const std::vector<double> g = logistic_objective_gradient(x, f.data.labels, w, b, l2);
    const double h = 1e-6;
    for (std::size_t j = 0; j <= w.size(); ++j) {
      std::vector<double> wp = w, wm = w;
      double bp = b, bm = b;
      if (j < w.size()) {
        wp[j] += h;
        wm[j] -= h;
      } else {
        bp += h;
        bm -= h;
      }
      const double fd = (logistic_objective(x, f.data.labels, wp, bp, l2) - logistic_objective(x, f.data.labels, wm, bm, l2)) /
                        (2 * h);
      worst_grad = std::max(worst_grad, std::abs(fd - g[j]));
    }
  }

  std::size_t fixtures = 0, increases = 0;
  for (int t = 0; t < 8; ++t) {
    const fx::Fixture f = fx::make_fixture(2 + t % 4, t % 3, ModelFamily::kLogistic, 60 + t, 200);
    const Matrix x = fx::encode_all(f.pre, f.data.rows);
    TrainParams p;
    p.family = ModelFamily::kGbt;
    p.n_trees = 30;
    p.max_depth = 1 + t % 4;
    p.seed = t;
    std::vector<double> trace;
    train_gbt(x, f.data.labels, p, f.pre.encoded_names(), &trace);
    for (std::size_t i = 1; i < trace.size(); ++i) increases += trace[i] > trace[i - 1];
    ++fixtures;
  }
  return {worst_grad <= 1e-6 && increases == 0,
          "max gradient error " + fmt(worst_grad) + ", GBT loss increases " + std::to_string(increases) + " over " +
              std::to_string(fixtures) + " fixtures"};
}

Outcome round_trips() {
  std::vector<std::string> failures;
  for (ModelFamily fam : {ModelFamily::kLogistic, ModelFamily::kGbt}) {
    const fx::Fixture f = fx::make_fixture(4, 2, fam, 31);
    const Model back = deserialize_model(serialize_model(f.model));
    const Matrix x = fx::encode_all(f.pre, f.data.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
      if (predict_margin(back, x.row(i)) != predict_margin(f.model, x.row(i))) {
        failures.push_back(std::string(family_name(fam)) + " model");
        break;
      }
    }
  }

  const fx::Fixture f = fx::make_fixture(3, 2, ModelFamily::kGbt, 36);
  for (Method m : {Method::kLime, Method::kKernelShap, Method::kTreeShap}) {
    ExplainerConfig cfg;
    cfg.lime.n_samples = 200;
    const Explanation e = explain(m, f.model, f.pre, f.data.rows[0], f.background, cfg, 4);
    const Explanation back = explanation_from_json(parse_json(dump(explanation_to_json(e)), ErrorCode::kSchemaViolation));
    if (back.phi != e.phi || back.base_value != e.base_value || back.scale != e.scale) {
      failures.push_back(std::string(method_name(m)) + " explanation");
    }
  }

  const RawRow& q = f.data.rows[1];
  Constraints cons;
  cons.target_class = 1 - predict_label(f.model, encode(f.pre, q));
  CounterfactualConfig cc;
  cc.population = 50;
  cc.generations = 20;
  const CounterfactualSet set = generate_counterfactuals(f.model, f.pre, q, cons, cc, 6);
  const CounterfactualSet cback =
      counterfactuals_from_json(parse_json(dump(counterfactuals_to_json(set, f.pre)), ErrorCode::kSchemaViolation), f.pre);
  if (cback.candidates != set.candidates || cback.proximity != set.proximity || cback.valid != set.valid ||
      cback.diversity != set.diversity || cback.original != set.original) {
    failures.push_back("counterfactual set");
  }

  const fs::path manifest = fs::path(EXPLAINBENCH_SOURCE_DIR) / "data/manifests/compas_sample.json";
  const BenchmarkConfig bc = parse_config_text(
      R"({"schema_version": 1, "datasets": [")" + manifest.generic_string() +
          R"("], "models": ["logistic", {"family": "gbt", "n_trees": 10}], "methods": ["kernel_shap", "tree_shap", {"method": "cf", "population": 30, "generations": 5}],
          "n_instances": 3, "background_size": 10, "metrics": {"fidelity_samples": 40, "stability_perturbations": 3}})",
      fs::temp_directory_path());
  const std::string text = results_jsonl(run_benchmark(bc));
  if (results_jsonl(parse_results(text)) != text) failures.push_back("results document");

  std::string detail = "model, explanation, counterfactual set and results documents";
  if (!failures.empty()) {
    detail = "mismatch:";
    for (const std::string& s : failures) detail += " " + s;
  }
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <explainbench executable>\n";
    return 2;
  }
  const std::string exe = argv[1];
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"shapley_oracle_equivalence", shapley_oracle},
      {"efficiency_local_accuracy", efficiency},
      {"tree_shap_performance", tree_shap_speed},
      {"counterfactual_contract", counterfactual_contract},
      {"metric_sanity", metric_sanity},
      {"end_to_end_determinism", [&] { return bench_determinism(exe); }},
      {"model_training", training},
      {"serialization_round_trips", round_trips},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
