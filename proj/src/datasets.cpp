#include "explainbench/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "explainbench/csv.hpp"
#include "explainbench/error.hpp"
#include "explainbench/rng.hpp"

namespace explainbench {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

bool is_missing_token(std::string_view s) {
  return s.empty() || s == "?" || s == "NA" || s == "N/A" || s == "nan" || s == "NaN" ||
         s == "null" || s == "NULL";
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.starts_with('+')) s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

[[noreturn]] void malformed(const std::string& what) {
  throw Error(ErrorCode::kMalformedManifest, "malformed manifest: " + what);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(where + ": missing field '" + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) malformed(where + "." + key + ": expected string");
  return v.get<std::string>();
}

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      malformed(where + ": unknown key '" + it.key() + "'");
    }
  }
}

}  // namespace

int FeatureSpec::category_index(std::string_view label) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] == label) return static_cast<int>(i);
  }
  return -1;
}

std::optional<std::size_t> DatasetSpec::find_feature(std::string_view name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t DatasetSpec::feature_index(std::string_view name) const {
  if (auto idx = find_feature(name)) return *idx;
  throw Error(ErrorCode::kInvariantViolation, "unknown feature '" + std::string(name) + "'");
}

std::filesystem::path DatasetSpec::resolved_source() const {
  const std::filesystem::path source(source_path);
  if (source.is_absolute()) return source;
  if (const char* data_dir = std::getenv("EXPLAINBENCH_DATA_DIR"); data_dir && *data_dir) {
    return std::filesystem::path(data_dir) / source;
  }
  return manifest_dir / source;
}

void validate_spec(const DatasetSpec& spec) {
  auto violation = [](const std::string& what) {
    throw Error(ErrorCode::kInvariantViolation, "invalid dataset spec: " + what);
  };
  if (spec.features.empty()) violation("no features");
  std::set<std::string> names;
  for (const FeatureSpec& f : spec.features) {
    if (f.name.empty()) violation("empty feature name");
    if (!names.insert(f.name).second) violation("duplicate feature name '" + f.name + "'");
    if (f.is_categorical()) {
      if (f.categories.empty()) violation("categorical feature '" + f.name + "' has no categories");
      std::set<std::string> cats(f.categories.begin(), f.categories.end());
      if (cats.size() != f.categories.size()) {
        violation("categorical feature '" + f.name + "' has duplicate categories");
      }
      if (f.lower || f.upper) violation("categorical feature '" + f.name + "' has numeric bounds");
    } else if (!f.categories.empty()) {
      violation("numeric feature '" + f.name + "' lists categories");
    }
    if (f.lower && f.upper && *f.lower > *f.upper) {
      violation("feature '" + f.name + "' has lower > upper");
    }
  }
  if (names.contains(spec.target)) violation("target '" + spec.target + "' is also a feature");
  for (const std::string& s : spec.sensitive) {
    if (!names.contains(s)) violation("sensitive feature '" + s + "' is not a feature");
  }
}

DatasetSpec parse_manifest(std::string_view text, const std::filesystem::path& manifest_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t offset = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + offset, '\n');
    malformed("line " + std::to_string(line) + ": " + e.what());
  }
  if (!doc.is_object()) malformed("top level must be an object");
  reject_unknown_keys(doc, {"id", "source_path", "target", "positive_label", "features", "sensitive"},
                      "manifest");

  DatasetSpec spec;
  spec.manifest_dir = manifest_dir;
  spec.id = require_string(doc, "id", "manifest");
  spec.source_path = require_string(doc, "source_path", "manifest");
  spec.target = require_string(doc, "target", "manifest");
  spec.positive_label = require_string(doc, "positive_label", "manifest");

  const json& features = require(doc, "features", "manifest");
  if (!features.is_array()) malformed("features: expected array");
  if (features.empty()) malformed("features: at least one feature required");
  for (std::size_t i = 0; i < features.size(); ++i) {
    const std::string where = "features[" + std::to_string(i) + "]";
    const json& f = features[i];
    if (!f.is_object()) malformed(where + ": expected object");
    reject_unknown_keys(f, {"name", "kind", "categories", "immutable", "lower", "upper"}, where);
    FeatureSpec fs;
    fs.name = require_string(f, "name", where);
    const std::string kind = require_string(f, "kind", where);
    if (kind == "numeric") {
      fs.kind = FeatureKind::kNumeric;
    } else if (kind == "categorical") {
      fs.kind = FeatureKind::kCategorical;
    } else {
      malformed(where + ".kind: expected 'numeric' or 'categorical', got '" + kind + "'");
    }
    if (auto it = f.find("categories"); it != f.end()) {
      if (!it->is_array()) malformed(where + ".categories: expected array");
      for (const json& c : *it) {
        if (!c.is_string()) malformed(where + ".categories: expected strings");
        fs.categories.push_back(c.get<std::string>());
      }
    }
    if (auto it = f.find("immutable"); it != f.end()) {
      if (!it->is_boolean()) malformed(where + ".immutable: expected boolean");
      fs.immutable = it->get<bool>();
    }
    for (const char* key : {"lower", "upper"}) {
      if (auto it = f.find(key); it != f.end()) {
        if (!it->is_number()) malformed(where + "." + key + ": expected number");
        (std::string_view(key) == "lower" ? fs.lower : fs.upper) = it->get<double>();
      }
    }
    spec.features.push_back(std::move(fs));
  }

  const json& sensitive = require(doc, "sensitive", "manifest");
  if (!sensitive.is_array()) malformed("sensitive: expected array");
  for (const json& s : sensitive) {
    if (!s.is_string()) malformed("sensitive: expected strings");
    spec.sensitive.push_back(s.get<std::string>());
  }

  validate_spec(spec);
  return spec;
}

DatasetSpec load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "manifest not found: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest(buffer.str(), path.parent_path());
}

double Dataset::positive_rate() const {
  if (labels.empty()) return 0.0;
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  return static_cast<double>(positives) / static_cast<double>(labels.size());
}

Dataset load_table_from_text(const DatasetSpec& spec, std::string_view csv_text) {
  const std::vector<csv::Record> records = csv::parse(csv_text);
  if (records.empty()) throw Error(ErrorCode::kMissingColumn, "csv has no header row");

  const csv::Record& header = records.front();
  auto column_of = [&](const std::string& name) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (trim(header[c]) == name) return c;
    }
    throw Error(ErrorCode::kMissingColumn, "csv is missing column '" + name + "'");
  };
  std::vector<std::size_t> feature_cols;
  for (const FeatureSpec& f : spec.features) feature_cols.push_back(column_of(f.name));
  const std::size_t target_col = column_of(spec.target);

  Dataset dataset;
  dataset.spec = spec;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const csv::Record& rec = records[r];
    bool ok = target_col < rec.size();
    RawRow row(spec.features.size());
    for (std::size_t j = 0; ok && j < spec.features.size(); ++j) {
      const FeatureSpec& f = spec.features[j];
      if (feature_cols[j] >= rec.size()) {
        ok = false;
        break;
      }
      const std::string_view cell = trim(rec[feature_cols[j]]);
      if (is_missing_token(cell)) {
        ok = false;
      } else if (f.is_categorical()) {
        const int idx = f.category_index(cell);
        ok = idx >= 0;
        row[j] = idx;
      } else if (auto v = parse_number(cell)) {
        row[j] = *v;
      } else {
        ok = false;
      }
    }
    std::string_view label;
    if (ok) {
      label = trim(rec[target_col]);
      ok = !is_missing_token(label);
    }
    if (!ok) {
      ++dataset.drop_count;
      continue;
    }
    dataset.rows.push_back(std::move(row));
    dataset.labels.push_back(label == spec.positive_label ? 1 : 0);
  }
  if (dataset.rows.empty()) {
    throw Error(ErrorCode::kEmptyAfterCleaning,
                "dataset '" + spec.id + "' has no usable rows after cleaning");
  }
  return dataset;
}

Dataset load_table(const DatasetSpec& spec) {
  const std::filesystem::path source = spec.resolved_source();
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "data file not found: " + source.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return load_table_from_text(spec, buffer.str());
}

RawRow parse_row(const DatasetSpec& spec, std::span<const std::string> cells) {
  if (cells.size() != spec.features.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "instance has " + std::to_string(cells.size()) +
                                                   " values, expected " +
                                                   std::to_string(spec.features.size()));
  }
  RawRow row(cells.size());
  for (std::size_t j = 0; j < cells.size(); ++j) {
    const FeatureSpec& f = spec.features[j];
    const std::string_view cell = trim(cells[j]);
    if (f.is_categorical()) {
      const int idx = f.category_index(cell);
      if (idx < 0) {
        throw Error(ErrorCode::kUnknownCategory,
                    "unknown category '" + std::string(cell) + "' for feature '" + f.name + "'");
      }
      row[j] = idx;
    } else if (auto v = parse_number(cell)) {
      row[j] = *v;
    } else {
      throw Error(ErrorCode::kCorruptNumber,
                  "feature '" + f.name + "': cannot parse '" + std::string(cell) + "'");
    }
  }
  return row;
}

std::string format_value(const FeatureSpec& feature, double value) {
  if (feature.is_categorical()) {
    const auto idx = static_cast<std::size_t>(value);
    return idx < feature.categories.size() ? feature.categories[idx] : std::string("?");
  }
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << value;
  return out.str();
}

void check_row(const DatasetSpec& spec, const RawRow& row) {
  if (row.size() != spec.features.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "instance has " + std::to_string(row.size()) +
                                                   " values, expected " +
                                                   std::to_string(spec.features.size()));
  }
  for (std::size_t j = 0; j < row.size(); ++j) {
    const FeatureSpec& f = spec.features[j];
    if (!std::isfinite(row[j])) {
      throw Error(ErrorCode::kInvariantViolation, "feature '" + f.name + "' is not finite");
    }
    if (f.is_categorical()) {
      const double idx = row[j];
      if (idx < 0 || idx != std::floor(idx) || idx >= static_cast<double>(f.categories.size())) {
        throw Error(ErrorCode::kUnknownCategory, "feature '" + f.name + "' has no category index " +
                                                     std::to_string(idx));
      }
    }
  }
}

SplitIndices split_indices(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::kBadFraction, "test fraction must lie in (0, 1)");
  }
  if (n == 0) throw Error(ErrorCode::kEmptyAfterCleaning, "cannot split an empty dataset");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CounterRng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(perm[i], perm[j]);
  }
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  SplitIndices out;
  out.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::sort(out.test.begin(), out.test.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

SplitIndices split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
  return split_indices(dataset.size(), test_fraction, seed);
}

std::vector<std::string> Preprocessor::encoded_names() const {
  std::vector<std::string> names;
  names.reserve(encoded_width);
  for (const FeatureSpec& f : features) {
    if (f.is_categorical()) {
      for (const std::string& c : f.categories) names.push_back(f.name + "=" + c);
    } else {
      names.push_back(f.name);
    }
  }
  return names;
}

std::vector<std::string> Preprocessor::feature_names() const {
  std::vector<std::string> names;
  for (const FeatureSpec& f : features) names.push_back(f.name);
  return names;
}

std::vector<int> Preprocessor::column_owner() const {
  std::vector<int> owner(encoded_width);
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    for (std::size_t c = 0; c < blocks[j].width; ++c) owner[blocks[j].offset + c] = static_cast<int>(j);
  }
  return owner;
}

double Preprocessor::standardize(std::size_t feature, double value) const {
  return stddev[feature] > 0.0 ? (value - mean[feature]) / stddev[feature] : 0.0;
}

double Preprocessor::destandardize(std::size_t feature, double z) const {
  return z * stddev[feature] + mean[feature];
}

Preprocessor fit_preprocessor(const Dataset& dataset, std::span<const std::size_t> train_indices) {
  if (train_indices.empty()) {
    throw Error(ErrorCode::kInvariantViolation, "fit_preprocessor needs at least one training row");
  }
  const std::size_t m = dataset.spec.features.size();
  Preprocessor pre;
  pre.features = dataset.spec.features;
  pre.mean.assign(m, 0.0);
  pre.stddev.assign(m, 0.0);
  pre.min.assign(m, 0.0);
  pre.max.assign(m, 0.0);
  pre.category_frequency.assign(m, {});
  const double n = static_cast<double>(train_indices.size());

  std::size_t offset = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const FeatureSpec& f = pre.features[j];
    if (f.is_categorical()) {
      std::vector<double> counts(f.categories.size(), 0.0);
      for (std::size_t i : train_indices) counts[static_cast<std::size_t>(dataset.rows[i][j])] += 1.0;
      for (double& c : counts) c /= n;
      pre.category_frequency[j] = std::move(counts);
      pre.blocks.push_back({offset, f.categories.size()});
      offset += f.categories.size();
    } else {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      double sum = 0.0;
      for (std::size_t i : train_indices) {
        const double v = dataset.rows[i][j];
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      const double mean = sum / n;
      double ss = 0.0;
      for (std::size_t i : train_indices) {
        const double d = dataset.rows[i][j] - mean;
        ss += d * d;
      }
      pre.mean[j] = mean;
      pre.stddev[j] = std::sqrt(ss / n);
      pre.min[j] = lo;
      pre.max[j] = hi;
      pre.blocks.push_back({offset, 1});
      offset += 1;
    }
  }
  pre.encoded_width = offset;
  return pre;
}

void encode_into(const Preprocessor& pre, const RawRow& instance, std::span<double> out) {
  if (instance.size() != pre.num_features() || out.size() != pre.encoded_width) {
    throw Error(ErrorCode::kDimensionMismatch, "encode: instance width does not match preprocessor");
  }
  for (std::size_t j = 0; j < instance.size(); ++j) {
    const FeatureSpec& f = pre.features[j];
    const FeatureBlock& b = pre.blocks[j];
    if (f.is_categorical()) {
      const double idx = instance[j];
      if (!(idx >= 0 && idx < static_cast<double>(b.width)) || idx != std::floor(idx)) {
        throw Error(ErrorCode::kUnknownCategory,
                    "feature '" + f.name + "': category index out of range");
      }
      std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(b.offset), b.width, 0.0);
      out[b.offset + static_cast<std::size_t>(idx)] = 1.0;
    } else {
      out[b.offset] = pre.standardize(j, instance[j]);
    }
  }
}

std::vector<double> encode(const Preprocessor& pre, const RawRow& instance) {
  std::vector<double> out(pre.encoded_width);
  encode_into(pre, instance, out);
  return out;
}

RawRow decode(const Preprocessor& pre, std::span<const double> encoded) {
  if (encoded.size() != pre.encoded_width) {
    throw Error(ErrorCode::kDimensionMismatch, "decode: vector width does not match preprocessor");
  }
  RawRow row(pre.num_features());
  for (std::size_t j = 0; j < row.size(); ++j) {
    const FeatureBlock& b = pre.blocks[j];
    if (pre.features[j].is_categorical()) {
      int hot = -1;
      for (std::size_t c = 0; c < b.width; ++c) {
        const double v = encoded[b.offset + c];
        if (v == 1.0) {
          if (hot >= 0) hot = -2;
          if (hot == -1) hot = static_cast<int>(c);
        } else if (v != 0.0) {
          hot = -2;
        }
        if (hot == -2) break;
      }
      if (hot < 0) {
        throw Error(ErrorCode::kMalformedOneHot,
                    "feature '" + pre.features[j].name + "': one-hot block must hold exactly one 1");
      }
      row[j] = hot;
    } else {
      row[j] = pre.destandardize(j, encoded[b.offset]);
    }
  }
  return row;
}

}  // namespace explainbench
