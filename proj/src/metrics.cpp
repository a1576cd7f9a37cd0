#include "explainbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "explainbench/error.hpp"
#include "explainbench/rng.hpp"
#include "explainbench/serialization.hpp"

namespace explainbench {

using nlohmann::json;

namespace {

constexpr double kSstFloor = 1e-12;

void check_scale(const Explanation& e) {
  auto it = e.extras.find("scale");
  if (it == e.extras.end() || !it->is_string()) {
    throw Error(ErrorCode::kScaleMismatch, "explanation carries no output scale");
  }
  if (parse_scale(it->get<std::string>()) != e.scale) {
    throw Error(ErrorCode::kScaleMismatch, "explanation scale metadata disagrees with its scale");
  }
}

double norm2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  return read_number(*it, key);
}

}  // namespace

double local_accuracy_gap(const Explanation& e, const Model& model, const Preprocessor& pre,
                          const RawRow& instance) {
  check_scale(e);
  const double fx = model_output(model, encode(pre, instance), e.scale);
  const double sum = std::accumulate(e.phi.begin(), e.phi.end(), e.base_value);
  return std::abs(fx - sum);
}

double neighborhood_fidelity(const Explanation& e, const Model& model, const Preprocessor& pre,
                             const RawRow& instance, std::span<const RawRow> background, int n,
                             std::uint64_t seed, Exec exec) {
  if (n < 30) throw Error(ErrorCode::kOutOfRange, "neighborhood_fidelity needs at least 30 samples");
  if (background.empty()) throw Error(ErrorCode::kInvariantViolation, "background must be non-empty");
  check_scale(e);
  const std::size_t m = pre.num_features();
  if (e.phi.size() != m) throw Error(ErrorCode::kDimensionMismatch, "phi length differs from feature count");

  const std::vector<double> x = encode(pre, instance);
  const Matrix bg = encode_rows(pre, background);
  CoalitionGame game;
  game.model = &model;
  game.blocks = pre.blocks;
  game.instance = x;
  game.background = &bg;
  game.scale = e.scale;

  const CounterRng root(seed);
  std::vector<CoalitionMask> masks(static_cast<std::size_t>(n));
  std::vector<std::size_t> players(m);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    CounterRng rng = root.fork(i);
    const auto size = static_cast<std::size_t>(rng.below(m + 1));
    std::iota(players.begin(), players.end(), 0);
    masks[i].assign(m, 0);
    for (std::size_t t = 0; t < size; ++t) {
      const std::size_t pick = t + static_cast<std::size_t>(rng.below(m - t));
      std::swap(players[t], players[pick]);
      masks[i][players[t]] = 1;
    }
  }
  const std::vector<double> target = coalition_values(game, masks, exec);

  double mean = 0.0;
  for (double t : target) mean += t;
  mean /= static_cast<double>(target.size());
  double sse = 0.0;
  double sst = 0.0;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    double fit = e.base_value;
    for (std::size_t j = 0; j < m; ++j) {
      if (masks[i][j]) fit += e.phi[j];
    }
    sse += (target[i] - fit) * (target[i] - fit);
    sst += (target[i] - mean) * (target[i] - mean);
  }
  if (sst < kSstFloor) return 1.0;  // constant response
  return 1.0 - sse / std::max(sst, kSstFloor);
}

std::size_t sparsity(std::span<const double> phi, double tau) {
  if (!(tau >= 0.0 && tau < 1.0)) throw Error(ErrorCode::kOutOfRange, "sparsity tau must lie in [0, 1)");
  double peak = 0.0;
  for (double p : phi) peak = std::max(peak, std::abs(p));
  if (peak == 0.0) return 0;
  return static_cast<std::size_t>(
      std::count_if(phi.begin(), phi.end(), [&](double p) { return std::abs(p) > tau * peak; }));
}

StabilityResult stability(const Explainer& explainer, const Preprocessor& pre, const RawRow& instance,
                          const Explanation& original, int perturbations, double epsilon, int top_k,
                          std::uint64_t seed) {
  if (perturbations < 2) throw Error(ErrorCode::kOutOfRange, "stability needs at least 2 perturbations");
  if (!(epsilon > 0.0) || top_k < 1) throw Error(ErrorCode::kOutOfRange, "stability epsilon and top_k must be positive");
  const auto k = static_cast<std::size_t>(top_k);
  const std::vector<double> x_enc = encode(pre, instance);
  const auto base_top = top_k_features(original.phi, k);

  StabilityResult result;
  double jaccard_sum = 0.0;
  double worst = 0.0;
  bool any_moved = false;
  const CounterRng root(seed);
  for (int p = 0; p < perturbations; ++p) {
    CounterRng rng = root.fork(static_cast<std::uint64_t>(p));
    RawRow moved = instance;
    for (std::size_t j = 0; j < moved.size(); ++j) {
      const FeatureSpec& f = pre.features[j];
      if (f.is_categorical()) continue;
      const double dz = rng.uniform(-epsilon, epsilon);
      double v = moved[j] + dz * pre.stddev[j];
      if (f.lower) v = std::max(v, *f.lower);
      if (f.upper) v = std::min(v, *f.upper);
      moved[j] = v;
    }
    const Explanation e = explainer(moved, absorb(seed, static_cast<std::uint64_t>(p)));
    jaccard_sum += jaccard(base_top, top_k_features(e.phi, k));
    const double dx = norm2(x_enc, encode(pre, moved));
    if (dx == 0.0) continue;
    any_moved = true;
    worst = std::max(worst, norm2(original.phi, e.phi) / dx);
  }
  if (any_moved) result.lipschitz = worst;
  result.topk_jaccard = jaccard_sum / static_cast<double>(perturbations);
  return result;
}

MetricReport score_explanation(const Explanation& e, const Explainer& explainer, const Model& model,
                               const Preprocessor& pre, const RawRow& instance,
                               std::span<const RawRow> background, const MetricSettings& settings,
                               std::uint64_t seed, Exec exec) {
  MetricReport r;
  r.local_accuracy_gap = local_accuracy_gap(e, model, pre, instance);
  r.neighborhood_fidelity_r2 =
      neighborhood_fidelity(e, model, pre, instance, background, settings.fidelity_samples, absorb(seed, "fidelity"), exec);
  r.sparsity_count = sparsity(e.phi, settings.sparsity_tau);
  const StabilityResult s = stability(explainer, pre, instance, e, settings.stability_perturbations,
                                      settings.stability_epsilon, settings.stability_topk,
                                      absorb(seed, "stability"));
  r.stability_lipschitz = s.lipschitz;
  r.stability_topk_jaccard = s.topk_jaccard;
  return r;
}

json cf_scores_to_json(const CounterfactualScores& s) {
  return {{"validity_rate", s.validity_rate},
          {"mean_proximity", s.mean_proximity},
          {"diversity", s.diversity},
          {"mean_changed_features", s.mean_changed_features}};
}

CounterfactualScores cf_scores_from_json(const json& doc) {
  CounterfactualScores s;
  s.validity_rate = read_number(doc.at("validity_rate"), "validity_rate");
  s.mean_proximity = read_number(doc.at("mean_proximity"), "mean_proximity");
  s.diversity = read_number(doc.at("diversity"), "diversity");
  s.mean_changed_features = read_number(doc.at("mean_changed_features"), "mean_changed_features");
  return s;
}

json metric_report_to_json(const MetricReport& r) {
  json doc = {{"local_accuracy_gap", optional_number(r.local_accuracy_gap)},
              {"neighborhood_fidelity_r2", optional_number(r.neighborhood_fidelity_r2)},
              {"sparsity_count", r.sparsity_count ? json(*r.sparsity_count) : json(nullptr)},
              {"stability_lipschitz", optional_number(r.stability_lipschitz)},
              {"stability_topk_jaccard", optional_number(r.stability_topk_jaccard)},
              {"cf_metrics", r.cf_metrics ? cf_scores_to_json(*r.cf_metrics) : json(nullptr)}};
  doc["provenance"] = {{"dataset", r.provenance.dataset},
                       {"model", r.provenance.model},
                       {"method", r.provenance.method},
                       {"instance_id", r.provenance.instance_id},
                       {"seed", r.provenance.seed}};
  return doc;
}

MetricReport metric_report_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kSchemaViolation, "metric report: expected object");
  MetricReport r;
  try {
    const json& p = doc.at("provenance");
    r.provenance.dataset = p.at("dataset").get<std::string>();
    r.provenance.model = p.at("model").get<std::string>();
    r.provenance.method = p.at("method").get<std::string>();
    r.provenance.instance_id = p.at("instance_id").get<std::int64_t>();
    r.provenance.seed = p.at("seed").get<std::uint64_t>();
    r.local_accuracy_gap = read_optional(doc, "local_accuracy_gap");
    r.neighborhood_fidelity_r2 = read_optional(doc, "neighborhood_fidelity_r2");
    if (auto it = doc.find("sparsity_count"); it != doc.end() && !it->is_null()) {
      r.sparsity_count = it->get<std::size_t>();
    }
    r.stability_lipschitz = read_optional(doc, "stability_lipschitz");
    r.stability_topk_jaccard = read_optional(doc, "stability_topk_jaccard");
    if (auto it = doc.find("cf_metrics"); it != doc.end() && !it->is_null()) r.cf_metrics = cf_scores_from_json(*it);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("metric report: ") + e.what());
  }
  return r;
}

}  // namespace explainbench
