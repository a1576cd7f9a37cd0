#include "explainbench/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "explainbench/csv.hpp"
#include "explainbench/error.hpp"
#include "explainbench/rng.hpp"
#include "explainbench/serialization.hpp"

namespace explainbench {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& what) {
  throw Error(ErrorCode::kMalformedConfig, "malformed config: " + what);
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      malformed(where + ": unknown key '" + it.key() + "'");
    }
  }
}

int get_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) malformed(where + ": expected integer");
  return v.get<int>();
}

double get_double(const json& v, const std::string& where) {
  if (!v.is_number()) malformed(where + ": expected number");
  return v.get<double>();
}

std::uint64_t get_u64(const json& v, const std::string& where) {
  if (!v.is_number_unsigned()) malformed(where + ": expected non-negative integer");
  return v.get<std::uint64_t>();
}

bool get_bool(const json& v, const std::string& where) {
  if (!v.is_boolean()) malformed(where + ": expected boolean");
  return v.get<bool>();
}

std::string read_text(const std::filesystem::path& path, ErrorCode missing) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(missing, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json params_to_json(const ModelEntry& e) {
  const TrainParams& p = e.params;
  json j = {{"id", e.id}, {"family", std::string(family_name(p.family))}, {"learning_rate", p.learning_rate},
            {"seed", p.seed}};
  if (p.family == ModelFamily::kLogistic) {
    j["iterations"] = p.iterations;
    j["l2_penalty"] = p.l2_penalty;
  } else {
    j["n_trees"] = p.n_trees;
    j["max_depth"] = p.max_depth;
    j["min_samples_leaf"] = p.min_samples_leaf;
  }
  return j;
}

json method_to_json(const MethodEntry& m) {
  json j = {{"method", std::string(method_name(m.method))}};
  const ExplainerConfig& c = m.config;
  switch (m.method) {
    case Method::kLime:
      j["n_samples"] = c.lime.n_samples;
      j["kernel_width_multiplier"] = c.lime.kernel_width_multiplier;
      j["top_k"] = c.lime.top_k;
      j["ridge_penalty"] = c.lime.ridge_penalty;
      j["sample_around_instance"] = c.lime.sample_around_instance;
      break;
    case Method::kKernelShap:
      j["n_coalitions"] = c.kernel_shap.n_coalitions;
      j["background_size"] = c.kernel_shap.background_size;
      j["enumeration_cutoff"] = c.kernel_shap.enumeration_cutoff;
      break;
    case Method::kTreeShap:
      break;
    case Method::kCounterfactual:
      j["k"] = c.counterfactual.k;
      j["population"] = c.counterfactual.population;
      j["generations"] = c.counterfactual.generations;
      j["lambda_proximity"] = c.counterfactual.lambda_proximity;
      j["lambda_diversity"] = c.counterfactual.lambda_diversity;
      j["tournament_size"] = c.counterfactual.tournament_size;
      j["mutation_rate"] = c.counterfactual.mutation_rate;
      j["distance"] = c.counterfactual.distance == DistanceKind::kGower ? "gower" : "euclidean";
      break;
  }
  return j;
}

json metrics_to_json(const MetricSettings& m) {
  return {{"sparsity_tau", m.sparsity_tau},
          {"fidelity_samples", m.fidelity_samples},
          {"stability_perturbations", m.stability_perturbations},
          {"stability_epsilon", m.stability_epsilon},
          {"stability_topk", m.stability_topk}};
}

std::optional<double> to_optional(std::optional<std::size_t> v) {
  if (!v) return std::nullopt;
  return static_cast<double>(*v);
}

// Metric values of one record in aggregate_metric_names() order.
std::vector<std::optional<double>> metric_values(const MetricReport& r) {
  std::vector<std::optional<double>> v = {r.local_accuracy_gap, r.neighborhood_fidelity_r2,
                                          to_optional(r.sparsity_count), r.stability_lipschitz,
                                          r.stability_topk_jaccard};
  if (r.cf_metrics) {
    v.insert(v.end(), {r.cf_metrics->validity_rate, r.cf_metrics->mean_proximity, r.cf_metrics->diversity,
                       r.cf_metrics->mean_changed_features});
  } else {
    v.resize(v.size() + 4);
  }
  return v;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json aggregates_to_json(const std::vector<GroupAggregate>& groups) {
  json out = json::array();
  for (const GroupAggregate& g : groups) {
    json metrics = json::object();
    for (const auto& [name, s] : g.metrics) {
      metrics[name] = {{"count", s.count},
                       {"mean", optional_json(s.mean)},
                       {"median", optional_json(s.median)},
                       {"std", optional_json(s.std)}};
    }
    out.push_back({{"dataset", g.dataset},
                   {"model", g.model},
                   {"method", g.method},
                   {"n_records", g.n_records},
                   {"n_errors", g.n_errors},
                   {"metrics", metrics}});
  }
  return out;
}

json record_to_json(const RunRecord& r) {
  json err = nullptr;
  if (r.error) err = {{"code", r.error->code}, {"message", r.error->message}};
  return {{"type", "record"}, {"metrics", metric_report_to_json(r.report)}, {"payload", r.payload}, {"error", err}};
}

std::string format_cell(const std::optional<double>& v) { return v ? json(*v).dump() : std::string(); }

std::string format_short(const std::string& cell) {
  if (cell.empty()) return "-";
  std::ostringstream ss;
  ss << std::setprecision(4) << std::stod(cell);
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw Error(ErrorCode::kIoFailure, "failed to write " + path.string());
}

struct Prepared {
  Dataset dataset;
  Preprocessor pre;
  std::vector<Model> models;
  std::vector<RawRow> background;
  std::vector<std::size_t> instances;
};

Prepared prepare_dataset(const BenchmarkConfig& config, const DatasetSpec& spec) {
  Prepared p;
  p.dataset = load_table(spec);
  const SplitIndices parts =
      split(p.dataset, config.test_fraction, derive_seed(config.base_seed, spec.id, 0, "split"));
  if (parts.train.empty()) throw Error(ErrorCode::kEmptyAfterCleaning, spec.id + ": empty training split");
  p.pre = fit_preprocessor(p.dataset, parts.train);

  Matrix x(parts.train.size(), p.pre.encoded_width);
  std::vector<int> y(parts.train.size());
  for (std::size_t i = 0; i < parts.train.size(); ++i) {
    encode_into(p.pre, p.dataset.rows[parts.train[i]], x.row(i));
    y[i] = p.dataset.labels[parts.train[i]];
  }
  for (const ModelEntry& m : config.models) p.models.push_back(train_model(x, y, m.params, p.pre.encoded_names()));

  for (std::size_t i : background_indices(parts.train, static_cast<std::size_t>(config.background_size),
                                          derive_seed(config.base_seed, spec.id, 0, "background"))) {
    p.background.push_back(p.dataset.rows[i]);
  }

  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(config.n_instances), parts.test.size());
  p.instances.assign(parts.test.begin(), parts.test.begin() + static_cast<std::ptrdiff_t>(n));
  return p;
}

RunRecord run_item(const BenchmarkConfig& config, const Prepared& p, std::size_t model_idx, const MethodEntry& m,
                   std::size_t row) {
  const auto start = std::chrono::steady_clock::now();
  const DatasetSpec& spec = p.dataset.spec;
  const Model& model = p.models[model_idx];
  const RawRow& instance = p.dataset.rows[row];
  const std::string method(method_name(m.method));
  const std::uint64_t seed = derive_seed(config.base_seed, spec.id, row, method);

  RunRecord rec;
  rec.report.provenance = {spec.id, config.models[model_idx].id, method, static_cast<std::int64_t>(row), seed};
  rec.payload = nullptr;
  try {
    if (m.method == Method::kCounterfactual) {
      Constraints constraints;
      constraints.target_class = 1 - predict_label(model, encode(p.pre, instance));
      const CounterfactualSet set =
          generate_counterfactuals(model, p.pre, instance, constraints, m.config.counterfactual, seed);
      rec.report.cf_metrics = score_counterfactual_set(set, instance, p.pre);
      rec.payload = counterfactuals_to_json(set, p.pre);
    } else {
      std::span<const RawRow> background = p.background;
      if (m.method == Method::kKernelShap) {
        background = background.first(
            std::min<std::size_t>(background.size(), static_cast<std::size_t>(m.config.kernel_shap.background_size)));
      }
      const Explainer explainer = [&](const RawRow& x, std::uint64_t s) {
        return explain(m.method, model, p.pre, x, background, m.config, s, Exec::kSerial);
      };
      const Explanation e = explainer(instance, seed);
      const Provenance provenance = rec.report.provenance;
      rec.report = score_explanation(e, explainer, model, p.pre, instance, p.background, config.metrics, seed);
      rec.report.provenance = provenance;
      rec.payload = explanation_to_json(e);
    }
  } catch (const Error& err) {
    if (err.code() == ErrorCode::kInternal) throw;
    const Provenance provenance = rec.report.provenance;
    rec.report = MetricReport{};
    rec.report.provenance = provenance;
    rec.payload = nullptr;
    rec.error = RecordError{std::string(error_code_name(err.code())), err.what()};
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

}  // namespace

ModelEntry parse_model_entry(const json& entry, const std::string& where) {
  const json m = entry.is_string() ? json{{"family", entry}} : entry;
  if (!m.is_object()) malformed(where + ": expected object or family name");
  reject_unknown(m, {"id", "family", "learning_rate", "iterations", "l2_penalty", "n_trees", "max_depth",
                     "min_samples_leaf", "seed"},
                 where);
  auto fam = m.find("family");
  if (fam == m.end() || !fam->is_string()) malformed(where + ": missing 'family'");
  ModelEntry e;
  try {
    e.params.family = parse_family(fam->get<std::string>());
  } catch (const Error& err) {
    malformed(where + ".family: " + err.what());
  }
  e.id = std::string(family_name(e.params.family));
  if (auto it = m.find("id"); it != m.end()) {
    if (!it->is_string() || it->get<std::string>().empty()) malformed(where + ".id: expected non-empty string");
    e.id = it->get<std::string>();
  }
  TrainParams& p = e.params;
  if (auto it = m.find("learning_rate"); it != m.end()) p.learning_rate = get_double(*it, where + ".learning_rate");
  if (auto it = m.find("iterations"); it != m.end()) p.iterations = get_int(*it, where + ".iterations");
  if (auto it = m.find("l2_penalty"); it != m.end()) p.l2_penalty = get_double(*it, where + ".l2_penalty");
  if (auto it = m.find("n_trees"); it != m.end()) p.n_trees = get_int(*it, where + ".n_trees");
  if (auto it = m.find("max_depth"); it != m.end()) p.max_depth = get_int(*it, where + ".max_depth");
  if (auto it = m.find("min_samples_leaf"); it != m.end()) {
    p.min_samples_leaf = get_int(*it, where + ".min_samples_leaf");
  }
  if (auto it = m.find("seed"); it != m.end()) p.seed = get_u64(*it, where + ".seed");
  try {
    validate_params(p);
  } catch (const Error& err) {
    malformed(where + ": " + err.what());
  }
  return e;
}

void apply_overrides(Method method, const json& overrides, ExplainerConfig& config) {
  if (overrides.is_null()) return;
  if (!overrides.is_object()) malformed("method overrides must be an object");
  const std::string where(method_name(method));
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    const std::string& key = it.key();
    const json& v = *it;
    const std::string at = where + "." + key;
    if (key == "method") continue;
    bool known = true;
    switch (method) {
      case Method::kLime:
        if (key == "n_samples") config.lime.n_samples = get_int(v, at);
        else if (key == "kernel_width_multiplier") config.lime.kernel_width_multiplier = get_double(v, at);
        else if (key == "top_k") config.lime.top_k = get_int(v, at);
        else if (key == "ridge_penalty") config.lime.ridge_penalty = get_double(v, at);
        else if (key == "sample_around_instance") config.lime.sample_around_instance = get_bool(v, at);
        else known = false;
        break;
      case Method::kKernelShap:
        if (key == "n_coalitions") config.kernel_shap.n_coalitions = get_int(v, at);
        else if (key == "background_size") config.kernel_shap.background_size = get_int(v, at);
        else if (key == "enumeration_cutoff") config.kernel_shap.enumeration_cutoff = get_int(v, at);
        else known = false;
        break;
      case Method::kTreeShap:
        known = false;
        break;
      case Method::kCounterfactual: {
        CounterfactualConfig& c = config.counterfactual;
        if (key == "k") c.k = get_int(v, at);
        else if (key == "population") c.population = get_int(v, at);
        else if (key == "generations") c.generations = get_int(v, at);
        else if (key == "lambda_proximity") c.lambda_proximity = get_double(v, at);
        else if (key == "lambda_diversity") c.lambda_diversity = get_double(v, at);
        else if (key == "tournament_size") c.tournament_size = get_int(v, at);
        else if (key == "mutation_rate") c.mutation_rate = get_double(v, at);
        else if (key == "distance") {
          if (v == "gower") c.distance = DistanceKind::kGower;
          else if (v == "euclidean") c.distance = DistanceKind::kEuclidean;
          else malformed(at + ": expected 'gower' or 'euclidean'");
        } else known = false;
        break;
      }
    }
    if (!known) malformed(where + ": unknown key '" + key + "'");
  }
  try {
    validate_config(config);
  } catch (const Error& err) {
    malformed(err.what());
  }
}

BenchmarkConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    malformed(e.what());
  }
  if (!doc.is_object()) malformed("top level must be an object");
  reject_unknown(doc, {"schema_version", "datasets", "models", "methods", "n_instances", "base_seed", "test_fraction",
                       "background_size", "metrics", "output_dir"},
                 "config");
  auto sv = doc.find("schema_version");
  if (sv == doc.end()) malformed("missing 'schema_version'");
  if (get_int(*sv, "schema_version") != kConfigSchemaVersion) malformed("unsupported schema_version");

  BenchmarkConfig cfg;
  const json datasets = doc.value("datasets", json());
  if (!datasets.is_array() || datasets.empty()) malformed("datasets: expected non-empty array of manifest paths");
  std::set<std::string> ids;
  for (const json& d : datasets) {
    if (!d.is_string()) malformed("datasets: expected manifest paths");
    std::filesystem::path path = d.get<std::string>();
    if (path.is_relative()) path = base_dir / path;
    if (!std::filesystem::exists(path)) {
      throw Error(ErrorCode::kMissingManifest, "manifest not found: " + path.string());
    }
    DatasetSpec spec = load_manifest(path);
    if (!ids.insert(spec.id).second) malformed("duplicate dataset id '" + spec.id + "'");
    cfg.manifest_digests.push_back(content_digest(read_text(path, ErrorCode::kMissingManifest)));
    cfg.manifest_paths.push_back(path);
    cfg.datasets.push_back(std::move(spec));
  }

  const json models = doc.value("models", json());
  if (!models.is_array() || models.empty()) malformed("models: expected non-empty array");
  std::set<std::string> model_ids;
  for (std::size_t i = 0; i < models.size(); ++i) {
    ModelEntry e = parse_model_entry(models[i], "models[" + std::to_string(i) + "]");
    if (!model_ids.insert(e.id).second) malformed("duplicate model id '" + e.id + "'");
    cfg.models.push_back(std::move(e));
  }

  const json methods = doc.value("methods", json());
  if (!methods.is_array() || methods.empty()) malformed("methods: expected non-empty array");
  std::set<Method> seen_methods;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const std::string where = "methods[" + std::to_string(i) + "]";
    json entry = methods[i].is_string() ? json{{"method", methods[i]}} : methods[i];
    if (!entry.is_object() || !entry.contains("method") || !entry["method"].is_string()) {
      malformed(where + ": expected method name or object with 'method'");
    }
    MethodEntry m;
    m.method = parse_method(entry["method"].get<std::string>());
    if (!seen_methods.insert(m.method).second) malformed(where + ": method listed twice");
    apply_overrides(m.method, entry, m.config);
    cfg.methods.push_back(std::move(m));
  }

  if (auto it = doc.find("n_instances"); it != doc.end()) cfg.n_instances = get_int(*it, "n_instances");
  if (cfg.n_instances < 1) malformed("n_instances must be at least 1");
  if (auto it = doc.find("base_seed"); it != doc.end()) cfg.base_seed = get_u64(*it, "base_seed");
  if (auto it = doc.find("test_fraction"); it != doc.end()) cfg.test_fraction = get_double(*it, "test_fraction");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) malformed("test_fraction must lie in (0, 1)");
  if (auto it = doc.find("background_size"); it != doc.end()) cfg.background_size = get_int(*it, "background_size");
  if (cfg.background_size < 1) malformed("background_size must be positive");

  if (auto it = doc.find("metrics"); it != doc.end()) {
    const json& m = *it;
    if (!m.is_object()) malformed("metrics: expected object");
    reject_unknown(m, {"sparsity_tau", "fidelity_samples", "stability_perturbations", "stability_epsilon",
                       "stability_topk"},
                   "metrics");
    MetricSettings& s = cfg.metrics;
    if (auto v = m.find("sparsity_tau"); v != m.end()) s.sparsity_tau = get_double(*v, "metrics.sparsity_tau");
    if (auto v = m.find("fidelity_samples"); v != m.end()) s.fidelity_samples = get_int(*v, "metrics.fidelity_samples");
    if (auto v = m.find("stability_perturbations"); v != m.end()) {
      s.stability_perturbations = get_int(*v, "metrics.stability_perturbations");
    }
    if (auto v = m.find("stability_epsilon"); v != m.end()) {
      s.stability_epsilon = get_double(*v, "metrics.stability_epsilon");
    }
    if (auto v = m.find("stability_topk"); v != m.end()) s.stability_topk = get_int(*v, "metrics.stability_topk");
  }
  const MetricSettings& s = cfg.metrics;
  if (!(s.sparsity_tau >= 0.0 && s.sparsity_tau < 1.0)) malformed("metrics.sparsity_tau must lie in [0, 1)");
  if (s.fidelity_samples < 30) malformed("metrics.fidelity_samples must be at least 30");
  if (s.stability_perturbations < 2) malformed("metrics.stability_perturbations must be at least 2");
  if (!(s.stability_epsilon > 0.0)) malformed("metrics.stability_epsilon must be positive");
  if (s.stability_topk < 1) malformed("metrics.stability_topk must be positive");

  cfg.output_dir = base_dir / "results";
  if (auto it = doc.find("output_dir"); it != doc.end()) {
    if (!it->is_string()) malformed("output_dir: expected string");
    std::filesystem::path out = it->get<std::string>();
    cfg.output_dir = out.is_relative() ? base_dir / out : out;
  }
  return cfg;
}

BenchmarkConfig parse_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::kMissingFile, "config not found: " + path.string());
  const std::filesystem::path dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return parse_config_text(read_text(path, ErrorCode::kMissingFile), dir);
}

json config_to_json(const BenchmarkConfig& c) {
  json datasets = json::array();
  for (const auto& p : c.manifest_paths) datasets.push_back(p.generic_string());
  json models = json::array();
  for (const ModelEntry& m : c.models) models.push_back(params_to_json(m));
  json methods = json::array();
  for (const MethodEntry& m : c.methods) methods.push_back(method_to_json(m));
  return {{"schema_version", kConfigSchemaVersion},
          {"datasets", datasets},
          {"models", models},
          {"methods", methods},
          {"n_instances", c.n_instances},
          {"base_seed", c.base_seed},
          {"test_fraction", c.test_fraction},
          {"background_size", c.background_size},
          {"metrics", metrics_to_json(c.metrics)},
          {"output_dir", c.output_dir.generic_string()}};
}

std::string config_digest(const BenchmarkConfig& c) {
  json doc = config_to_json(c);
  doc.erase("output_dir");
  json datasets = json::array();
  for (std::size_t i = 0; i < c.datasets.size(); ++i) {
    datasets.push_back({{"id", c.datasets[i].id}, {"manifest", c.manifest_digests[i]}});
  }
  doc["datasets"] = datasets;
  doc["suite_version"] = std::string(kSuiteVersion);
  return content_digest(doc.dump());
}

const std::vector<std::string>& aggregate_metric_names() {
  static const std::vector<std::string> names = {
      "local_accuracy_gap", "neighborhood_fidelity_r2", "sparsity_count",   "stability_lipschitz",
      "stability_topk_jaccard", "cf_validity_rate",     "cf_mean_proximity", "cf_diversity",
      "cf_mean_changed_features"};
  return names;
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

AggregateStat aggregate(std::vector<double> values) {
  AggregateStat s;
  s.count = values.size();
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  const double mean = pairwise_sum(values) / n;
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - mean) * (values[i] - mean);
  s.mean = mean;
  s.std = std::sqrt(pairwise_sum(sq) / n);
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  s.median = values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  return s;
}

std::vector<GroupAggregate> compute_aggregates(
    const std::vector<RunRecord>& records,
    const std::vector<std::tuple<std::string, std::string, std::string>>& order) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::vector<Key> keys = order;
  std::map<Key, std::vector<const RunRecord*>> by_group;
  for (const RunRecord& r : records) {
    const Provenance& p = r.report.provenance;
    Key key{p.dataset, p.model, p.method};
    if (!by_group.contains(key) && std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    by_group[key].push_back(&r);
  }
  const auto& names = aggregate_metric_names();
  std::vector<GroupAggregate> groups;
  for (const Key& key : keys) {
    GroupAggregate g;
    std::tie(g.dataset, g.model, g.method) = key;
    std::vector<std::vector<double>> columns(names.size());
    for (const RunRecord* r : by_group[key]) {
      ++g.n_records;
      if (r->error) ++g.n_errors;
      const auto values = metric_values(r->report);
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (values[i]) columns[i].push_back(*values[i]);
      }
    }
    for (std::size_t i = 0; i < names.size(); ++i) g.metrics.emplace_back(names[i], aggregate(std::move(columns[i])));
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<std::size_t> background_indices(std::span<const std::size_t> train, std::size_t size,
                                            std::uint64_t seed) {
  // Partial Fisher-Yates over the training rows.
  std::vector<std::size_t> pool(train.begin(), train.end());
  CounterRng rng(seed);
  const std::size_t n = std::min(size, pool.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& config, int workers) {
  BenchmarkResult result;
  result.config_digest = config_digest(config);
  std::vector<std::tuple<std::string, std::string, std::string>> order;

  for (const DatasetSpec& spec : config.datasets) {
    const Prepared p = prepare_dataset(config, spec);
    struct Item {
      std::size_t model;
      const MethodEntry* method;
      std::size_t row;
    };
    std::vector<Item> items;
    for (std::size_t mi = 0; mi < config.models.size(); ++mi) {
      for (const MethodEntry& m : config.methods) {
        order.emplace_back(spec.id, config.models[mi].id, std::string(method_name(m.method)));
        for (std::size_t row : p.instances) items.push_back({mi, &m, row});
      }
    }

    std::vector<RunRecord> records(items.size());
    std::exception_ptr failure;
    const auto count = static_cast<std::int64_t>(items.size());
    const int threads = workers > 0 ? workers : 0;
    if (threads == 1) {
      for (std::int64_t i = 0; i < count; ++i) {
        records[i] = run_item(config, p, items[i].model, *items[i].method, items[i].row);
      }
    } else {
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) if (threads != 0)
      for (std::int64_t i = 0; i < count; ++i) {
        try {
          records[i] = run_item(config, p, items[i].model, *items[i].method, items[i].row);
        } catch (...) {
#pragma omp critical(explainbench_bench_failure)
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);
    }
    for (RunRecord& r : records) result.records.push_back(std::move(r));
  }
  result.groups = compute_aggregates(result.records, order);
  return result;
}

std::string results_jsonl(const BenchmarkResult& result) {
  std::string out;
  for (const RunRecord& r : result.records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  const json footer = {{"type", "aggregates"},
                       {"config_digest", result.config_digest},
                       {"suite_version", result.suite_version},
                       {"aggregates", aggregates_to_json(result.groups)}};
  out += footer.dump();
  out += '\n';
  return out;
}

BenchmarkResult parse_results(std::string_view text) {
  BenchmarkResult result;
  std::optional<json> footer;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "results line " + std::to_string(line_no);
    if (footer) throw Error(ErrorCode::kSchemaViolation, where + ": content after the aggregate footer");
    json doc = parse_json(line, ErrorCode::kSchemaViolation);
    const std::string type = doc.value("type", "");
    if (type == "record") {
      RunRecord r;
      r.report = metric_report_from_json(doc.at("metrics"));
      r.payload = doc.value("payload", json());
      if (const json& e = doc.value("error", json()); !e.is_null()) {
        r.error = RecordError{e.at("code").get<std::string>(), e.at("message").get<std::string>()};
      }
      result.records.push_back(std::move(r));
    } else if (type == "aggregates") {
      footer = std::move(doc);
    } else {
      throw Error(ErrorCode::kSchemaViolation, where + ": unknown record type");
    }
  }
  if (!footer) throw Error(ErrorCode::kSchemaViolation, "results: missing aggregate footer");
  result.config_digest = footer->value("config_digest", "");
  result.suite_version = footer->value("suite_version", "");

  std::vector<std::tuple<std::string, std::string, std::string>> order;
  const json& stored = footer->at("aggregates");
  for (const json& g : stored) {
    order.emplace_back(g.at("dataset").get<std::string>(), g.at("model").get<std::string>(),
                       g.at("method").get<std::string>());
  }
  result.groups = compute_aggregates(result.records, order);
  if (aggregates_to_json(result.groups) != stored) {
    throw Error(ErrorCode::kSchemaViolation, "results: stored aggregates do not match the records");
  }
  return result;
}

BenchmarkResult load_results(const std::filesystem::path& path) {
  return parse_results(read_text(path, ErrorCode::kMissingFile));
}

SummaryTable summarize(const BenchmarkResult& result) {
  SummaryTable t;
  t.columns = {"dataset", "model", "method", "n_records", "n_errors"};
  for (const std::string& name : aggregate_metric_names()) {
    for (const char* stat : {"mean", "median", "std"}) t.columns.push_back(name + "_" + stat);
  }
  for (const GroupAggregate& g : result.groups) {
    std::vector<std::string> row = {g.dataset, g.model, g.method, std::to_string(g.n_records),
                                    std::to_string(g.n_errors)};
    for (const auto& [name, s] : g.metrics) {
      row.push_back(format_cell(s.mean));
      row.push_back(format_cell(s.median));
      row.push_back(format_cell(s.std));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string summary_csv(const SummaryTable& table) {
  std::ostringstream out;
  csv::write_record(out, table.columns);
  for (const auto& row : table.rows) csv::write_record(out, row);
  return out.str();
}

// Means only, rounded, in aligned columns.
std::string summary_text(const SummaryTable& table) {
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    const std::string& name = table.columns[c];
    if (c < 5 || name.ends_with("_mean")) keep.push_back(c);
  }
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header;
  for (std::size_t c : keep) {
    std::string name = table.columns[c];
    if (name.ends_with("_mean")) name.resize(name.size() - 5);
    header.push_back(name);
  }
  cells.push_back(header);
  for (const auto& row : table.rows) {
    std::vector<std::string> line;
    for (std::size_t c : keep) line.push_back(c < 5 ? row[c] : format_short(row[c]));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(keep.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) out << "  ";
      out << std::left << std::setw(static_cast<int>(width[c])) << line[c];
    }
    out << '\n';
  }
  return out.str();
}

void write_results(const BenchmarkResult& result, const std::filesystem::path& output_dir) {
  std::error_code ec;
  std::filesystem::create_directories(output_dir, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot create " + output_dir.string() + ": " + ec.message());
  const SummaryTable table = summarize(result);
  write_file(output_dir / "results.jsonl", results_jsonl(result));
  write_file(output_dir / "summary.csv", summary_csv(table));
  write_file(output_dir / "summary.txt", summary_text(table));

  std::ostringstream timings;
  csv::write_record(timings, {"dataset", "model", "method", "instance_id", "wall_seconds"});
  for (const RunRecord& r : result.records) {
    const Provenance& p = r.report.provenance;
    csv::write_record(timings, {p.dataset, p.model, p.method, std::to_string(p.instance_id),
                                json(r.wall_seconds).dump()});
  }
  write_file(output_dir / "timings.csv", timings.str());
}

}  // namespace explainbench
