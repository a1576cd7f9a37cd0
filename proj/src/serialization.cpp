#include "explainbench/serialization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "explainbench/error.hpp"

namespace explainbench {

using nlohmann::json;

namespace {

[[noreturn]] void schema(const std::string& what) {
  throw Error(ErrorCode::kSchemaViolation, what);
}

const json& field(const json& obj, const char* key, std::string_view where) {
  if (!obj.is_object()) schema(std::string(where) + ": expected object");
  auto it = obj.find(key);
  if (it == obj.end()) schema(std::string(where) + ": missing '" + key + "'");
  return *it;
}

std::vector<double> read_numbers(const json& arr, std::string_view where) {
  if (!arr.is_array()) schema(std::string(where) + ": expected array");
  std::vector<double> out;
  out.reserve(arr.size());
  for (const json& v : arr) out.push_back(read_number(v, where));
  return out;
}

std::vector<std::string> read_strings(const json& arr, std::string_view where) {
  if (!arr.is_array()) schema(std::string(where) + ": expected array");
  std::vector<std::string> out;
  for (const json& v : arr) {
    if (!v.is_string()) schema(std::string(where) + ": expected strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

int read_int(const json& v, std::string_view where) {
  if (!v.is_number_integer()) schema(std::string(where) + ": expected integer");
  return v.get<int>();
}

json tree_to_json(const Tree& tree) {
  json nodes = json::array();
  for (const TreeNode& n : tree) {
    if (n.is_leaf()) {
      nodes.push_back({{"leaf_value", n.leaf_value}, {"cover", n.cover}});
    } else {
      nodes.push_back({{"feature", n.split_feature},
                       {"threshold", n.threshold},
                       {"left", n.left},
                       {"right", n.right},
                       {"cover", n.cover}});
    }
  }
  return nodes;
}

Tree tree_from_json(const json& nodes, std::string_view where) {
  if (!nodes.is_array() || nodes.empty()) schema(std::string(where) + ": expected non-empty node array");
  Tree tree;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string at = std::string(where) + "[" + std::to_string(i) + "]";
    const json& n = nodes[i];
    if (!n.is_object()) schema(at + ": expected object");
    TreeNode node;
    const bool leaf = n.contains("leaf_value");
    const bool split = n.contains("feature") || n.contains("threshold") || n.contains("left") || n.contains("right");
    if (leaf == split) schema(at + ": a node is either a leaf or a split");
    for (auto it = n.begin(); it != n.end(); ++it) {
      static const char* const known[] = {"leaf_value", "feature", "threshold", "left", "right", "cover"};
      if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known)) {
        schema(at + ": unknown key '" + it.key() + "'");
      }
    }
    const json& cover = field(n, "cover", at);
    if (!cover.is_number_integer()) schema(at + ".cover: expected integer");
    node.cover = cover.get<std::int64_t>();
    if (leaf) {
      node.leaf_value = read_number(n["leaf_value"], at + ".leaf_value");
    } else {
      node.split_feature = read_int(field(n, "feature", at), at + ".feature");
      if (node.split_feature < 0) schema(at + ".feature: must be non-negative");
      node.threshold = read_number(field(n, "threshold", at), at + ".threshold");
      node.left = read_int(field(n, "left", at), at + ".left");
      node.right = read_int(field(n, "right", at), at + ".right");
    }
    tree.push_back(node);
  }
  return tree;
}

json feature_to_json(const FeatureSpec& f) {
  json j = {{"name", f.name}, {"kind", f.is_categorical() ? "categorical" : "numeric"}, {"immutable", f.immutable}};
  if (f.is_categorical()) j["categories"] = f.categories;
  if (f.lower) j["lower"] = *f.lower;
  if (f.upper) j["upper"] = *f.upper;
  return j;
}

FeatureSpec feature_from_json(const json& j, std::string_view where) {
  FeatureSpec f;
  const json& name = field(j, "name", where);
  if (!name.is_string()) schema(std::string(where) + ".name: expected string");
  f.name = name.get<std::string>();
  const json& kind = field(j, "kind", where);
  if (kind == "categorical") {
    f.kind = FeatureKind::kCategorical;
    f.categories = read_strings(field(j, "categories", where), std::string(where) + ".categories");
  } else if (kind != "numeric") {
    schema(std::string(where) + ".kind: expected numeric or categorical");
  }
  if (auto it = j.find("immutable"); it != j.end()) f.immutable = it->get<bool>();
  if (auto it = j.find("lower"); it != j.end()) f.lower = read_number(*it, std::string(where) + ".lower");
  if (auto it = j.find("upper"); it != j.end()) f.upper = read_number(*it, std::string(where) + ".upper");
  return f;
}

}  // namespace

double read_number(const json& value, std::string_view where) {
  double v = 0.0;
  if (value.is_number()) {
    v = value.get<double>();
  } else if (value.is_string()) {
    const std::string& s = value.get_ref<const std::string&>();
    char* end = nullptr;
    v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) {
      throw Error(ErrorCode::kCorruptNumber, std::string(where) + ": unparseable number '" + s + "'");
    }
  } else {
    throw Error(ErrorCode::kCorruptNumber, std::string(where) + ": expected a number");
  }
  if (!std::isfinite(v)) throw Error(ErrorCode::kCorruptNumber, std::string(where) + ": non-finite number");
  return v;
}

json model_to_json(const Model& model) {
  json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["family"] = std::string(family_name(family_of(model)));
  if (const auto* lr = std::get_if<LogisticModel>(&model)) {
    doc["feature_order"] = lr->feature_order;
    doc["payload"] = {{"weights", lr->weights}, {"bias", lr->bias}};
  } else {
    const auto& gbt = std::get<TreeEnsembleModel>(model);
    doc["feature_order"] = gbt.feature_order;
    json trees = json::array();
    for (const Tree& t : gbt.trees) trees.push_back(tree_to_json(t));
    doc["payload"] = {{"base_margin", gbt.base_margin}, {"trees", trees}};
  }
  return doc;
}

Model model_from_json(const json& doc) {
  const json& version = field(doc, "format_version", "model");
  if (!version.is_number_integer() || version.get<int>() != kModelFormatVersion) {
    schema("model: unsupported format_version");
  }
  const json& fam = field(doc, "family", "model");
  if (!fam.is_string()) schema("model.family: expected string");
  ModelFamily family = ModelFamily::kLogistic;
  try {
    family = parse_family(fam.get<std::string>());
  } catch (const Error&) {
    schema("model.family: unknown family '" + fam.get<std::string>() + "'");
  }
  auto order = read_strings(field(doc, "feature_order", "model"), "model.feature_order");
  const json& payload = field(doc, "payload", "model");

  Model model;
  if (family == ModelFamily::kLogistic) {
    LogisticModel lr;
    lr.weights = read_numbers(field(payload, "weights", "model.payload"), "model.payload.weights");
    lr.bias = read_number(field(payload, "bias", "model.payload"), "model.payload.bias");
    lr.feature_order = std::move(order);
    model = std::move(lr);
  } else {
    TreeEnsembleModel gbt;
    gbt.base_margin = read_number(field(payload, "base_margin", "model.payload"), "model.payload.base_margin");
    const json& trees = field(payload, "trees", "model.payload");
    if (!trees.is_array()) schema("model.payload.trees: expected array");
    for (std::size_t t = 0; t < trees.size(); ++t) {
      gbt.trees.push_back(tree_from_json(trees[t], "model.payload.trees[" + std::to_string(t) + "]"));
    }
    gbt.feature_order = std::move(order);
    model = std::move(gbt);
  }
  validate_model(model);
  return model;
}

std::string serialize_model(const Model& model) { return dump(model_to_json(model)); }

Model deserialize_model(std::string_view text) {
  return model_from_json(parse_json(text, ErrorCode::kSchemaViolation));
}

json preprocessor_to_json(const Preprocessor& pre) {
  json features = json::array();
  for (const FeatureSpec& f : pre.features) features.push_back(feature_to_json(f));
  return {{"features", features},
          {"mean", pre.mean},
          {"stddev", pre.stddev},
          {"min", pre.min},
          {"max", pre.max},
          {"category_frequency", pre.category_frequency}};
}

Preprocessor preprocessor_from_json(const json& doc) {
  Preprocessor pre;
  const json& features = field(doc, "features", "preprocessor");
  if (!features.is_array() || features.empty()) schema("preprocessor.features: expected non-empty array");
  for (std::size_t j = 0; j < features.size(); ++j) {
    pre.features.push_back(feature_from_json(features[j], "preprocessor.features[" + std::to_string(j) + "]"));
  }
  const std::size_t m = pre.features.size();
  pre.mean = read_numbers(field(doc, "mean", "preprocessor"), "preprocessor.mean");
  pre.stddev = read_numbers(field(doc, "stddev", "preprocessor"), "preprocessor.stddev");
  pre.min = read_numbers(field(doc, "min", "preprocessor"), "preprocessor.min");
  pre.max = read_numbers(field(doc, "max", "preprocessor"), "preprocessor.max");
  const json& freq = field(doc, "category_frequency", "preprocessor");
  if (!freq.is_array()) schema("preprocessor.category_frequency: expected array");
  for (const json& f : freq) pre.category_frequency.push_back(read_numbers(f, "preprocessor.category_frequency"));
  if (pre.mean.size() != m || pre.stddev.size() != m || pre.min.size() != m || pre.max.size() != m ||
      pre.category_frequency.size() != m) {
    schema("preprocessor: per-feature arrays must have one entry per feature");
  }
  std::size_t offset = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const FeatureSpec& f = pre.features[j];
    if (pre.stddev[j] < 0.0) schema("preprocessor.stddev: must be non-negative");
    const std::size_t width = f.is_categorical() ? f.categories.size() : 1;
    if (f.is_categorical() && pre.category_frequency[j].size() != width) {
      schema("preprocessor.category_frequency: width mismatch for " + f.name);
    }
    pre.blocks.push_back({offset, width});
    offset += width;
  }
  pre.encoded_width = offset;
  return pre;
}

json bundle_to_json(const ModelBundle& bundle) {
  json doc = model_to_json(bundle.model);
  if (bundle.preprocessor) doc["preprocessor"] = preprocessor_to_json(*bundle.preprocessor);
  if (!bundle.training.empty()) doc["training"] = bundle.training;
  return doc;
}

ModelBundle bundle_from_json(const json& doc) {
  ModelBundle bundle;
  json core = doc;
  if (auto it = doc.find("preprocessor"); it != doc.end()) {
    bundle.preprocessor = preprocessor_from_json(*it);
    core.erase("preprocessor");
  }
  if (auto it = doc.find("training"); it != doc.end()) {
    bundle.training = *it;
    core.erase("training");
  }
  bundle.model = model_from_json(core);
  if (bundle.preprocessor && bundle.preprocessor->encoded_width != input_width(bundle.model)) {
    schema("model and preprocessor disagree on the encoded width");
  }
  return bundle;
}

json explanation_to_json(const Explanation& e) {
  json extras = e.extras;
  extras["scale"] = std::string(scale_name(e.scale));
  return {{"schema_version", kSchemaVersion},
          {"method", std::string(method_name(e.method))},
          {"feature_names", e.feature_names},
          {"phi", e.phi},
          {"base_value", e.base_value},
          {"extras", extras}};
}

Explanation explanation_from_json(const json& doc) {
  Explanation e;
  const json& method = field(doc, "method", "explanation");
  if (!method.is_string()) schema("explanation.method: expected string");
  e.method = parse_method(method.get<std::string>());
  e.feature_names = read_strings(field(doc, "feature_names", "explanation"), "explanation.feature_names");
  e.phi = read_numbers(field(doc, "phi", "explanation"), "explanation.phi");
  e.base_value = read_number(field(doc, "base_value", "explanation"), "explanation.base_value");
  if (e.phi.size() != e.feature_names.size()) schema("explanation: phi and feature_names differ in length");
  e.extras = field(doc, "extras", "explanation");
  if (!e.extras.is_object()) schema("explanation.extras: expected object");
  const json& scale = field(e.extras, "scale", "explanation.extras");
  if (!scale.is_string()) throw Error(ErrorCode::kScaleMismatch, "explanation.extras.scale: expected string");
  e.scale = parse_scale(scale.get<std::string>());
  return e;
}

json row_to_json(std::span<const FeatureSpec> features, const RawRow& row) {
  json out = json::object();
  for (std::size_t j = 0; j < features.size(); ++j) {
    const FeatureSpec& f = features[j];
    if (f.is_categorical()) {
      out[f.name] = f.categories.at(static_cast<std::size_t>(row[j]));
    } else {
      out[f.name] = row[j];
    }
  }
  return out;
}

RawRow row_from_json(std::span<const FeatureSpec> features, const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kInvariantViolation, "instance: expected an object of feature values");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const bool known = std::any_of(features.begin(), features.end(),
                                   [&](const FeatureSpec& f) { return f.name == it.key(); });
    if (!known) throw Error(ErrorCode::kInvariantViolation, "instance: unknown feature '" + it.key() + "'");
  }
  RawRow row(features.size());
  for (std::size_t j = 0; j < features.size(); ++j) {
    const FeatureSpec& f = features[j];
    auto it = doc.find(f.name);
    if (it == doc.end()) throw Error(ErrorCode::kInvariantViolation, "instance: missing feature '" + f.name + "'");
    if (f.is_categorical()) {
      if (!it->is_string()) throw Error(ErrorCode::kUnknownCategory, "instance." + f.name + ": expected a category label");
      const int c = f.category_index(it->get<std::string>());
      if (c < 0) {
        throw Error(ErrorCode::kUnknownCategory,
                    "instance." + f.name + ": unknown category '" + it->get<std::string>() + "'");
      }
      row[j] = c;
    } else {
      row[j] = read_number(*it, "instance." + f.name);
    }
  }
  return row;
}

json counterfactuals_to_json(const CounterfactualSet& set, const Preprocessor& pre) {
  const CounterfactualScores scores = score_counterfactual_set(set, set.original, pre);
  json candidates = json::array();
  for (const RawRow& c : set.candidates) candidates.push_back(row_to_json(pre.features, c));
  json valid = json::array();
  for (bool v : set.valid) valid.push_back(v);
  return {{"schema_version", kSchemaVersion},
          {"feature_names", pre.feature_names()},
          {"originals", row_to_json(pre.features, set.original)},
          {"candidates", candidates},
          {"valid", valid},
          {"proximity", set.proximity},
          {"diversity", set.diversity},
          {"seed", set.seed},
          {"target_class", set.target_class},
          {"validity_rate", scores.validity_rate},
          {"no_valid_counterfactual", set.no_valid_counterfactual}};
}

CounterfactualSet counterfactuals_from_json(const json& doc, const Preprocessor& pre) {
  CounterfactualSet set;
  set.original = row_from_json(pre.features, field(doc, "originals", "counterfactuals"));
  const json& candidates = field(doc, "candidates", "counterfactuals");
  if (!candidates.is_array()) schema("counterfactuals.candidates: expected array");
  for (const json& c : candidates) set.candidates.push_back(row_from_json(pre.features, c));
  const json& valid = field(doc, "valid", "counterfactuals");
  if (!valid.is_array()) schema("counterfactuals.valid: expected array");
  for (const json& v : valid) {
    if (!v.is_boolean()) schema("counterfactuals.valid: expected booleans");
    set.valid.push_back(v.get<bool>());
  }
  set.proximity = read_numbers(field(doc, "proximity", "counterfactuals"), "counterfactuals.proximity");
  set.diversity = read_number(field(doc, "diversity", "counterfactuals"), "counterfactuals.diversity");
  const json& seed = field(doc, "seed", "counterfactuals");
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) schema("counterfactuals.seed: expected integer");
  set.seed = seed.get<std::uint64_t>();
  set.target_class = read_int(field(doc, "target_class", "counterfactuals"), "counterfactuals.target_class");
  const json& flag = field(doc, "no_valid_counterfactual", "counterfactuals");
  if (!flag.is_boolean()) schema("counterfactuals.no_valid_counterfactual: expected boolean");
  set.no_valid_counterfactual = flag.get<bool>();
  if (set.valid.size() != set.candidates.size() || set.proximity.size() != set.candidates.size()) {
    schema("counterfactuals: candidates, valid and proximity differ in length");
  }
  return set;
}

std::string dump(const json& doc) { return doc.dump(); }

json parse_json(std::string_view text, ErrorCode on_error) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(on_error, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace explainbench
