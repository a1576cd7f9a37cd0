#include "explainbench/service.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <thread>

#include "httplib.h"

#include "explainbench/benchmark.hpp"
#include "explainbench/metrics.hpp"
#include "explainbench/rng.hpp"
#include "explainbench/serialization.hpp"

namespace explainbench {

using nlohmann::json;

namespace {

[[noreturn]] void bad_request(const std::string& what) { throw Error(ErrorCode::kBadRequest, what); }

const json& require(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end()) bad_request(std::string("missing field '") + key + "'");
  return *it;
}

std::string require_string(const json& body, const char* key) {
  const json& v = require(body, key);
  if (!v.is_string()) bad_request(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::uint64_t require_seed(const json& body) {
  const json& v = require(body, "seed");
  if (!v.is_number_unsigned()) bad_request("field 'seed' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

json with_version(json doc) {
  doc["schema_version"] = kSchemaVersion;
  return doc;
}

HttpResponse ok(json doc) { return {200, with_version(std::move(doc)).dump()}; }

std::size_t parse_count(const std::multimap<std::string, std::string>& query, const std::string& key,
                        std::size_t fallback) {
  auto it = query.find(key);
  if (it == query.end()) return fallback;
  const std::string& text = it->second;
  if (text.empty() || !std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; }) ||
      text.size() > 9) {
    bad_request("query parameter '" + key + "' must be a non-negative integer");
  }
  return static_cast<std::size_t>(std::stoul(text));
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    const std::size_t end = std::min(path.find('/', pos), path.size());
    if (end > pos) parts.emplace_back(path.substr(pos, end - pos));
    pos = end + 1;
  }
  return parts;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Constraints parse_constraints(const json& doc) {
  Constraints c;
  if (doc.is_null()) return c;
  if (!doc.is_object()) bad_request("constraints must be an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    if (key != "immutable" && key != "ranges" && key != "allowed_categories" && key != "target_class") {
      bad_request("constraints: unknown key '" + key + "'");
    }
  }
  if (auto it = doc.find("immutable"); it != doc.end()) {
    if (!it->is_array()) bad_request("constraints.immutable must be an array of names");
    for (const json& n : *it) {
      if (!n.is_string()) bad_request("constraints.immutable must be an array of names");
      c.immutable.push_back(n.get<std::string>());
    }
  }
  if (auto it = doc.find("ranges"); it != doc.end()) {
    if (!it->is_object()) bad_request("constraints.ranges must map feature names to ranges");
    for (auto r = it->begin(); r != it->end(); ++r) {
      NumericRange range;
      if (r->is_array() && r->size() == 2 && (*r)[0].is_number() && (*r)[1].is_number()) {
        range = {(*r)[0].get<double>(), (*r)[1].get<double>()};
      } else if (r->is_object() && r->contains("lower") && r->contains("upper") && (*r)["lower"].is_number() &&
                 (*r)["upper"].is_number()) {
        range = {(*r)["lower"].get<double>(), (*r)["upper"].get<double>()};
      } else {
        bad_request("constraints.ranges." + r.key() + " must be [lower, upper]");
      }
      c.ranges[r.key()] = range;
    }
  }
  if (auto it = doc.find("allowed_categories"); it != doc.end()) {
    if (!it->is_object()) bad_request("constraints.allowed_categories must map feature names to labels");
    for (auto a = it->begin(); a != it->end(); ++a) {
      if (!a->is_array()) bad_request("constraints.allowed_categories." + a.key() + " must be an array");
      std::vector<std::string> labels;
      for (const json& l : *a) {
        if (!l.is_string()) bad_request("constraints.allowed_categories." + a.key() + " must hold strings");
        labels.push_back(l.get<std::string>());
      }
      c.allowed_categories[a.key()] = std::move(labels);
    }
  }
  if (auto it = doc.find("target_class"); it != doc.end()) {
    if (!it->is_number_integer()) bad_request("constraints.target_class must be 0 or 1");
    c.target_class = it->get<int>();
  } else {
    c.target_class = -1;  // filled from the model's prediction
  }
  return c;
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownDataset:
    case ErrorCode::kUnknownModel:
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kBadRequest:
    case ErrorCode::kMalformedConfig:
    case ErrorCode::kCorruptNumber:
      return 400;
    case ErrorCode::kUnsupportedCombination:
    case ErrorCode::kInvariantViolation:
    case ErrorCode::kUnknownCategory:
    case ErrorCode::kDuplicateMethod:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kOutOfRange:
    case ErrorCode::kTooManyFeatures:
    case ErrorCode::kUnknownMethod:
    case ErrorCode::kScaleMismatch:
    case ErrorCode::kNonFiniteLoss:
      return 422;
    default:
      return 500;
  }
}

std::string error_body(ErrorCode code, std::string_view message, const json& detail) {
  json err = {{"code", std::string(error_code_name(code))}, {"message", std::string(message)}};
  if (!detail.is_null()) err["detail"] = detail;
  return json{{"error", err}, {"schema_version", kSchemaVersion}}.dump();
}

ServiceConfig parse_service_config_text(std::string_view text, const std::filesystem::path& base_dir) {
  const json doc = parse_json(text, ErrorCode::kMalformedConfig);
  auto malformed = [](const std::string& what) -> void {
    throw Error(ErrorCode::kMalformedConfig, "malformed service config: " + what);
  };
  if (!doc.is_object()) malformed("top level must be an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    static const std::set<std::string> known = {"schema_version", "datasets", "base_seed", "test_fraction",
                                                "background_size"};
    if (!known.contains(it.key())) malformed("unknown key '" + it.key() + "'");
  }
  if (!doc.contains("schema_version") || doc["schema_version"] != kSchemaVersion) {
    malformed("schema_version must be 1");
  }
  ServiceConfig cfg;
  const json datasets = doc.value("datasets", json());
  if (!datasets.is_array() || datasets.empty()) malformed("datasets: expected non-empty array of manifest paths");
  std::set<std::string> ids;
  for (const json& d : datasets) {
    if (!d.is_string()) malformed("datasets: expected manifest paths");
    std::filesystem::path path = d.get<std::string>();
    if (path.is_relative()) path = base_dir / path;
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::kMissingManifest, "manifest not found: " + path.string());
    DatasetSpec spec = load_manifest(path);
    if (!ids.insert(spec.id).second) malformed("duplicate dataset id '" + spec.id + "'");
    cfg.datasets.push_back(std::move(spec));
  }
  if (auto it = doc.find("base_seed"); it != doc.end()) {
    if (!it->is_number_unsigned()) malformed("base_seed must be a non-negative integer");
    cfg.base_seed = it->get<std::uint64_t>();
  }
  if (auto it = doc.find("test_fraction"); it != doc.end()) {
    if (!it->is_number()) malformed("test_fraction must be a number");
    cfg.test_fraction = it->get<double>();
  }
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) malformed("test_fraction must lie in (0, 1)");
  if (auto it = doc.find("background_size"); it != doc.end()) {
    if (!it->is_number_integer() || it->get<int>() < 1) malformed("background_size must be a positive integer");
    cfg.background_size = it->get<int>();
  }
  return cfg;
}

ServiceConfig parse_service_config(const std::filesystem::path& path) {
  const std::filesystem::path dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return parse_service_config_text(read_text(path), dir);
}

struct Service::State {
  struct DatasetEntry {
    Dataset dataset;
    SplitIndices parts;
    Preprocessor pre;
    std::vector<RawRow> background;
    json schema;  // cached /schema body
  };
  struct ModelRecord {
    std::string id;
    std::string dataset_id;
    std::shared_ptr<const Model> model;
    json info;
  };

  ServiceConfig config;
  std::vector<std::string> dataset_order;
  std::map<std::string, DatasetEntry> datasets;

  mutable std::shared_mutex models_mutex;
  std::vector<std::string> model_order;
  std::map<std::string, ModelRecord> models;

  const DatasetEntry& dataset(const std::string& id) const {
    auto it = datasets.find(id);
    if (it == datasets.end()) throw Error(ErrorCode::kUnknownDataset, "unknown dataset '" + id + "'");
    return it->second;
  }

  ModelRecord model(const std::string& id) const {
    std::shared_lock lock(models_mutex);
    auto it = models.find(id);
    if (it == models.end()) throw Error(ErrorCode::kUnknownModel, "unknown model '" + id + "'");
    return it->second;
  }

  // Model named by the body, checked against dataset_id when one is given.
  std::pair<ModelRecord, const DatasetEntry*> model_and_dataset(const json& body) const {
    ModelRecord m = model(require_string(body, "model_id"));
    if (auto it = body.find("dataset_id"); it != body.end()) {
      if (!it->is_string()) bad_request("field 'dataset_id' must be a string");
      const std::string id = it->get<std::string>();
      dataset(id);
      if (id != m.dataset_id) {
        throw Error(ErrorCode::kInvariantViolation, "model " + m.id + " was trained on " + m.dataset_id);
      }
    }
    return {m, &dataset(m.dataset_id)};
  }

  static RawRow instance_of(const json& body, const DatasetEntry& d, std::int64_t* row_out = nullptr) {
    if (auto it = body.find("row"); it != body.end()) {
      if (!it->is_number_integer()) bad_request("field 'row' must be an integer");
      const auto row = it->get<std::int64_t>();
      if (row < 0 || row >= static_cast<std::int64_t>(d.dataset.size())) {
        throw Error(ErrorCode::kOutOfRange, "row " + std::to_string(row) + " outside the dataset");
      }
      if (row_out) *row_out = row;
      return d.dataset.rows[static_cast<std::size_t>(row)];
    }
    if (auto it = body.find("instance"); it != body.end()) {
      if (row_out) *row_out = -1;
      RawRow row = row_from_json(d.pre.features, *it);
      check_row(d.dataset.spec, row);
      return row;
    }
    bad_request("request needs 'row' or 'instance'");
  }

  static ExplainerConfig explainer_config(Method method, const json& body) {
    ExplainerConfig cfg;
    if (auto it = body.find("config"); it != body.end()) apply_overrides(method, *it, cfg);
    return cfg;
  }

  std::span<const RawRow> background_for(Method method, const DatasetEntry& d, const ExplainerConfig& cfg) const {
    std::span<const RawRow> bg = d.background;
    if (method == Method::kKernelShap) {
      bg = bg.first(std::min<std::size_t>(bg.size(), static_cast<std::size_t>(cfg.kernel_shap.background_size)));
    }
    return bg;
  }

  // Routes ------------------------------------------------------------------

  HttpResponse list_datasets() const {
    json out = json::array();
    for (const std::string& id : dataset_order) {
      const DatasetEntry& d = datasets.at(id);
      out.push_back({{"id", id},
                     {"n_rows", d.dataset.size()},
                     {"n_features", d.dataset.spec.num_features()},
                     {"target", d.dataset.spec.target},
                     {"positive_rate", d.dataset.positive_rate()}});
    }
    return ok({{"datasets", out}});
  }

  HttpResponse instances(const std::string& id, const std::multimap<std::string, std::string>& query) const {
    const DatasetEntry& d = dataset(id);
    const std::size_t offset = parse_count(query, "offset", 0);
    const std::size_t limit = parse_count(query, "limit", 20);
    if (limit > 1000) bad_request("limit must not exceed 1000");
    json rows = json::array();
    for (std::size_t i = offset; i < std::min(d.dataset.size(), offset + limit); ++i) {
      rows.push_back({{"row", i},
                      {"values", row_to_json(d.pre.features, d.dataset.rows[i])},
                      {"label", d.dataset.labels[i]},
                      {"split", std::binary_search(d.parts.test.begin(), d.parts.test.end(), i) ? "test" : "train"}});
    }
    return ok({{"dataset_id", id}, {"offset", offset}, {"limit", limit}, {"total", d.dataset.size()}, {"instances", rows}});
  }

  HttpResponse train(const json& body) {
    const std::string dataset_id = require_string(body, "dataset_id");
    const DatasetEntry& d = dataset(dataset_id);
    json entry = body.value("params", json::object());
    if (!entry.is_object()) bad_request("field 'params' must be an object");
    entry["family"] = require_string(body, "family");
    parse_family(entry["family"].get<std::string>());
    const ModelEntry spec = parse_model_entry(entry, "params");

    Matrix x(d.parts.train.size(), d.pre.encoded_width);
    std::vector<int> y(d.parts.train.size());
    for (std::size_t i = 0; i < d.parts.train.size(); ++i) {
      encode_into(d.pre, d.dataset.rows[d.parts.train[i]], x.row(i));
      y[i] = d.dataset.labels[d.parts.train[i]];
    }
    auto model = std::make_shared<const Model>(train_model(x, y, spec.params, d.pre.encoded_names()));
    const std::string id = content_digest(dataset_id + "\n" + serialize_model(*model));

    std::size_t correct = 0;
    for (std::size_t i : d.parts.test) {
      correct += predict_label(*model, encode(d.pre, d.dataset.rows[i])) == d.dataset.labels[i] ? 1 : 0;
    }
    json info = {{"model_id", id},
                 {"dataset_id", dataset_id},
                 {"family", std::string(family_name(spec.params.family))},
                 {"params", entry},
                 {"train_log_loss", mean_log_loss(*model, x, y)},
                 {"test_accuracy", d.parts.test.empty() ? json(nullptr)
                                                        : json(static_cast<double>(correct) /
                                                               static_cast<double>(d.parts.test.size()))}};
    {
      std::unique_lock lock(models_mutex);
      if (!models.contains(id)) {
        models[id] = ModelRecord{id, dataset_id, model, info};
        model_order.push_back(id);
      }
    }
    return ok(info);
  }

  HttpResponse list_models() const {
    std::shared_lock lock(models_mutex);
    json out = json::array();
    for (const std::string& id : model_order) out.push_back(models.at(id).info);
    return ok({{"models", out}});
  }

  HttpResponse predict(const json& body) const {
    const auto [m, d] = model_and_dataset(body);
    const RawRow x = instance_of(body, *d);
    const std::vector<double> enc = encode(d->pre, x);
    const double margin = predict_margin(*m.model, enc);
    return ok({{"model_id", m.id},
               {"probability", logistic(margin)},
               {"margin", margin},
               {"label", predict_label(*m.model, enc)}});
  }

  HttpResponse explain_route(const json& body) const {
    const auto [m, d] = model_and_dataset(body);
    const Method method = parse_method(require_string(body, "method"));
    const std::uint64_t seed = require_seed(body);
    const RawRow x = instance_of(body, *d);
    const ExplainerConfig cfg = explainer_config(method, body);
    const Explanation e = explain(method, *m.model, d->pre, x, background_for(method, *d, cfg), cfg, seed, Exec::kSerial);
    return ok(explanation_to_json(e));
  }

  HttpResponse counterfactuals(const json& body) const {
    const auto [m, d] = model_and_dataset(body);
    const std::uint64_t seed = require_seed(body);
    const RawRow x = instance_of(body, *d);
    ExplainerConfig cfg = explainer_config(Method::kCounterfactual, body);
    if (auto it = body.find("k"); it != body.end()) {
      if (!it->is_number_integer() || it->get<int>() < 1) bad_request("field 'k' must be a positive integer");
      cfg.counterfactual.k = it->get<int>();
    }
    const bool capped = cfg.counterfactual.generations > kMaxGenerations;
    cfg.counterfactual.generations = std::min(cfg.counterfactual.generations, kMaxGenerations);
    Constraints constraints = parse_constraints(body.value("constraints", json()));
    if (constraints.target_class < 0) constraints.target_class = 1 - predict_label(*m.model, encode(d->pre, x));
    const CounterfactualSet set = generate_counterfactuals(*m.model, d->pre, x, constraints, cfg.counterfactual, seed);
    json doc = counterfactuals_to_json(set, d->pre);
    doc["scores"] = cf_scores_to_json(score_counterfactual_set(set, x, d->pre));
    doc["generations"] = cfg.counterfactual.generations;
    doc["generations_capped"] = capped;
    return ok(doc);
  }

  HttpResponse compare(const json& body) const {
    const auto [m, d] = model_and_dataset(body);
    const std::uint64_t seed = require_seed(body);
    const json& list = require(body, "methods");
    if (!list.is_array()) bad_request("field 'methods' must be an array");
    std::vector<Method> methods;
    for (const json& name : list) {
      if (!name.is_string()) bad_request("field 'methods' must hold method names");
      const Method method = parse_method(name.get<std::string>());
      if (std::find(methods.begin(), methods.end(), method) != methods.end()) {
        throw Error(ErrorCode::kDuplicateMethod, "method '" + name.get<std::string>() + "' listed twice");
      }
      methods.push_back(method);
    }
    if (methods.size() < 2) bad_request("compare needs at least two methods");
    std::size_t top_k = 5;
    if (auto it = body.find("top_k"); it != body.end()) {
      if (!it->is_number_integer() || it->get<int>() < 1) bad_request("field 'top_k' must be a positive integer");
      top_k = it->get<std::size_t>();
    }
    const RawRow x = instance_of(body, *d);
    const json overrides = body.value("config", json::object());
    if (!overrides.is_object()) bad_request("field 'config' must map method names to overrides");

    std::vector<Explanation> explanations;
    json docs = json::array();
    for (Method method : methods) {
      ExplainerConfig cfg;
      if (auto it = overrides.find(std::string(method_name(method))); it != overrides.end()) {
        apply_overrides(method, *it, cfg);
      }
      explanations.push_back(
          explain(method, *m.model, d->pre, x, background_for(method, *d, cfg), cfg, seed, Exec::kSerial));
      docs.push_back(explanation_to_json(explanations.back()));
    }
    json agreement = json::array();
    for (std::size_t a = 0; a < methods.size(); ++a) {
      for (std::size_t b = a + 1; b < methods.size(); ++b) {
        const double j = jaccard(top_k_features(explanations[a].phi, top_k), top_k_features(explanations[b].phi, top_k));
        agreement.push_back({{"methods", {std::string(method_name(methods[a])), std::string(method_name(methods[b]))}},
                             {"topk_jaccard", j}});
      }
    }
    return ok({{"explanations", docs}, {"agreement", agreement}, {"top_k", top_k}});
  }
};

namespace {

json schema_body(const Dataset& ds, const Preprocessor& pre) {
  const DatasetSpec& spec = ds.spec;
  json features = json::array();
  for (std::size_t j = 0; j < spec.features.size(); ++j) {
    const FeatureSpec& f = spec.features[j];
    json entry = {{"name", f.name},
                  {"kind", f.is_categorical() ? "categorical" : "numeric"},
                  {"immutable", f.immutable},
                  {"sensitive", std::find(spec.sensitive.begin(), spec.sensitive.end(), f.name) != spec.sensitive.end()}};
    if (f.lower) entry["lower"] = *f.lower;
    if (f.upper) entry["upper"] = *f.upper;
    if (f.is_categorical()) {
      entry["categories"] = f.categories;
      std::vector<std::size_t> counts(f.categories.size(), 0);
      for (const RawRow& r : ds.rows) ++counts[static_cast<std::size_t>(r[j])];
      const auto mode = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      entry["summary"] = {{"mode", f.categories[mode]}, {"counts", counts}};
    } else {
      double sum = 0.0;
      double lo = ds.rows.front()[j];
      double hi = lo;
      for (const RawRow& r : ds.rows) {
        sum += r[j];
        lo = std::min(lo, r[j]);
        hi = std::max(hi, r[j]);
      }
      entry["summary"] = {{"mean", sum / static_cast<double>(ds.size())}, {"min", lo}, {"max", hi}};
    }
    features.push_back(entry);
  }
  return {{"id", spec.id},
          {"target", spec.target},
          {"positive_label", spec.positive_label},
          {"sensitive", spec.sensitive},
          {"n_rows", ds.size()},
          {"drop_count", ds.drop_count},
          {"positive_rate", ds.positive_rate()},
          {"encoded_width", pre.encoded_width},
          {"features", features}};
}

}  // namespace

Service::Service(const ServiceConfig& config) : state_(std::make_unique<State>()) {
  state_->config = config;
  for (const DatasetSpec& spec : config.datasets) {
    State::DatasetEntry d;
    d.dataset = load_table(spec);
    d.parts = split(d.dataset, config.test_fraction, derive_seed(config.base_seed, spec.id, 0, "split"));
    d.pre = fit_preprocessor(d.dataset, d.parts.train);
    for (std::size_t i : background_indices(d.parts.train, static_cast<std::size_t>(config.background_size),
                                            derive_seed(config.base_seed, spec.id, 0, "background"))) {
      d.background.push_back(d.dataset.rows[i]);
    }
    d.schema = schema_body(d.dataset, d.pre);
    state_->dataset_order.push_back(spec.id);
    state_->datasets.emplace(spec.id, std::move(d));
  }
}

Service::~Service() = default;

HttpResponse Service::handle(std::string_view method, std::string_view path,
                             const std::multimap<std::string, std::string>& query, std::string_view body) {
  try {
    const std::vector<std::string> parts = split_path(path);
    State& s = *state_;
    if (method == "GET") {
      if (parts.size() == 1 && parts[0] == "health") return ok({{"status", "ok"}, {"suite_version", kSuiteVersion}});
      if (parts.size() == 1 && parts[0] == "datasets") return s.list_datasets();
      if (parts.size() == 3 && parts[0] == "datasets" && parts[2] == "schema") return ok(s.dataset(parts[1]).schema);
      if (parts.size() == 3 && parts[0] == "datasets" && parts[2] == "instances") return s.instances(parts[1], query);
      if (parts.size() == 1 && parts[0] == "models") return s.list_models();
    } else if (method == "POST") {
      static const std::set<std::string> routes = {"predict", "explain", "counterfactuals", "compare"};
      const bool is_train = parts.size() == 2 && parts[0] == "models" && parts[1] == "train";
      if (is_train || (parts.size() == 1 && routes.contains(parts[0]))) {
        json doc;
        try {
          doc = json::parse(body);
        } catch (const json::parse_error& e) {
          bad_request(std::string("body is not valid JSON: ") + e.what());
        }
        if (!doc.is_object()) bad_request("body must be a JSON object");
        if (is_train) return s.train(doc);
        if (parts[0] == "predict") return s.predict(doc);
        if (parts[0] == "explain") return s.explain_route(doc);
        if (parts[0] == "counterfactuals") return s.counterfactuals(doc);
        return s.compare(doc);
      }
    }
    throw Error(ErrorCode::kNotFound, "no route for " + std::string(method) + " " + std::string(path));
  } catch (const Error& e) {
    return {http_status(e.code()), error_body(e.code(), e.what())};
  } catch (const json::exception& e) {
    return {400, error_body(ErrorCode::kBadRequest, e.what())};
  } catch (const std::exception& e) {
    return {500, error_body(ErrorCode::kInternal, e.what())};
  }
}

namespace {

std::atomic<bool> g_stop_requested{false};

extern "C" void request_stop(int) { g_stop_requested.store(true); }

}  // namespace

void serve(Service& service, const std::string& host, int port, std::ostream& log) {
  httplib::Server server;
  std::mutex log_mutex;
  auto forward = [&](const httplib::Request& req, httplib::Response& res) {
    std::multimap<std::string, std::string> query(req.params.begin(), req.params.end());
    const HttpResponse r = service.handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.Get(".*", forward);
  server.Post(".*", forward);
  server.set_logger([&](const httplib::Request& req, const httplib::Response& res) {
    std::lock_guard lock(log_mutex);
    log << req.method << ' ' << req.path << ' ' << res.status << '\n' << std::flush;
  });
  // httplib's default SO_REUSEPORT would let a second server share the port
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  if (!server.bind_to_port(host, port)) {
    throw Error(ErrorCode::kPortInUse, "cannot bind " + host + ":" + std::to_string(port));
  }

  g_stop_requested.store(false);
  auto previous_int = std::signal(SIGINT, request_stop);
  auto previous_term = std::signal(SIGTERM, request_stop);
  std::thread watcher([&] {
    while (!g_stop_requested.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
  });
  {
    std::lock_guard lock(log_mutex);
    log << "listening on " << host << ':' << port << '\n' << std::flush;
  }
  server.listen_after_bind();
  g_stop_requested.store(true);
  watcher.join();
  std::signal(SIGINT, previous_int);
  std::signal(SIGTERM, previous_term);
}

}  // namespace explainbench
