#pragma once

// JSON documents exchanged between the CLI, benchmark runner and service.
// Doubles are written with round-trip precision, so every document read
// back reproduces the exact values it was written from.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "explainbench/datasets.hpp"
#include "explainbench/error.hpp"
#include "explainbench/explainers.hpp"
#include "explainbench/models.hpp"

namespace explainbench {

inline constexpr int kSchemaVersion = 1;
inline constexpr int kModelFormatVersion = 1;

// Reads a finite double; hex-float strings ("0x1.8p+1") are accepted as
// well. kCorruptNumber on unparseable text or non-finite values.
double read_number(const nlohmann::json& value, std::string_view where);

nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& doc);  // validates; kSchemaViolation
std::string serialize_model(const Model& model);
Model deserialize_model(std::string_view text);

nlohmann::json preprocessor_to_json(const Preprocessor& pre);
Preprocessor preprocessor_from_json(const nlohmann::json& doc);

// Model plus what the CLI needs to explain with it later: the fitted
// preprocessor and how the training split was drawn.
struct ModelBundle {
  Model model;
  std::optional<Preprocessor> preprocessor;
  nlohmann::json training = nlohmann::json::object();
};

nlohmann::json bundle_to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const nlohmann::json& doc);

nlohmann::json explanation_to_json(const Explanation& e);
Explanation explanation_from_json(const nlohmann::json& doc);

// Raw rows as {feature name: value}; categorical values are labels.
nlohmann::json row_to_json(std::span<const FeatureSpec> features, const RawRow& row);
// kInvariantViolation for unknown or missing features, kUnknownCategory for
// labels outside the feature's list.
RawRow row_from_json(std::span<const FeatureSpec> features, const nlohmann::json& doc);

nlohmann::json counterfactuals_to_json(const CounterfactualSet& set, const Preprocessor& pre);
CounterfactualSet counterfactuals_from_json(const nlohmann::json& doc, const Preprocessor& pre);

// Canonical text form: compact, keys sorted.
std::string dump(const nlohmann::json& doc);
nlohmann::json parse_json(std::string_view text, ErrorCode on_error);

}  // namespace explainbench
