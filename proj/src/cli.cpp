#include "explainbench/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "explainbench/benchmark.hpp"
#include "explainbench/error.hpp"
#include "explainbench/rng.hpp"
#include "explainbench/serialization.hpp"
#include "explainbench/service.hpp"

namespace explainbench {

using nlohmann::json;

namespace {

constexpr double kTestFraction = 0.3;
constexpr int kBackgroundSize = 100;

struct Options {
  std::string manifest;
  std::string model;
  std::int64_t row = -1;
  std::string method;
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  int workers = 1;
  int port = 8080;
  std::string bind = "127.0.0.1";
  bool json = false;
  bool debug = false;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw Error(ErrorCode::kIoFailure, "failed to write " + path);
}

json read_json_file(const std::string& path, ErrorCode on_error) { return parse_json(read_text(path), on_error); }

// Everything explain/counterfactual need to rebuild the training context of
// a saved model.
struct Context {
  ModelBundle bundle;
  Dataset dataset;
  std::vector<RawRow> background;
};

Context load_context(const Options& o) {
  Context c;
  c.bundle = bundle_from_json(read_json_file(o.model, ErrorCode::kSchemaViolation));
  if (!c.bundle.preprocessor || !c.bundle.training.contains("split_seed")) {
    throw Error(ErrorCode::kSchemaViolation, o.model + ": model file has no preprocessor/training block");
  }
  const DatasetSpec spec = load_manifest(o.manifest);
  const json& t = c.bundle.training;
  if (t.value("dataset_id", "") != spec.id) {
    throw Error(ErrorCode::kInvariantViolation,
                "model was trained on '" + t.value("dataset_id", "") + "', manifest describes '" + spec.id + "'");
  }
  c.dataset = load_table(spec);
  const SplitIndices parts = split(c.dataset, t.at("test_fraction").get<double>(), t.at("split_seed").get<std::uint64_t>());
  for (std::size_t i : background_indices(parts.train, t.at("background_size").get<std::size_t>(),
                                          t.at("background_seed").get<std::uint64_t>())) {
    c.background.push_back(c.dataset.rows[i]);
  }
  if (o.row < 0 || o.row >= static_cast<std::int64_t>(c.dataset.size())) {
    throw Error(ErrorCode::kOutOfRange, "--row " + std::to_string(o.row) + " outside the dataset (" +
                                            std::to_string(c.dataset.size()) + " rows)");
  }
  return c;
}

int run_train(const Options& o, std::ostream& out) {
  const DatasetSpec spec = load_manifest(o.manifest);
  json entry = o.config.empty() ? json::object() : read_json_file(o.config, ErrorCode::kMalformedConfig);
  entry["family"] = o.model;
  if (!entry.contains("seed")) entry["seed"] = o.seed;
  const ModelEntry params = parse_model_entry(entry, "train");

  const Dataset data = load_table(spec);
  const std::uint64_t split_seed = derive_seed(o.seed, spec.id, 0, "split");
  const SplitIndices parts = split(data, kTestFraction, split_seed);
  const Preprocessor pre = fit_preprocessor(data, parts.train);
  Matrix x(parts.train.size(), pre.encoded_width);
  std::vector<int> y(parts.train.size());
  for (std::size_t i = 0; i < parts.train.size(); ++i) {
    encode_into(pre, data.rows[parts.train[i]], x.row(i));
    y[i] = data.labels[parts.train[i]];
  }

  ModelBundle bundle;
  bundle.model = train_model(x, y, params.params, pre.encoded_names());
  bundle.preprocessor = pre;
  bundle.training = {{"dataset_id", spec.id},
                     {"split_seed", split_seed},
                     {"test_fraction", kTestFraction},
                     {"background_seed", derive_seed(o.seed, spec.id, 0, "background")},
                     {"background_size", kBackgroundSize}};
  write_text(o.out, dump(bundle_to_json(bundle)) + "\n");

  std::size_t correct = 0;
  for (std::size_t i : parts.test) correct += predict_label(bundle.model, encode(pre, data.rows[i])) == data.labels[i];
  const double accuracy = parts.test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(parts.test.size());
  const double loss = mean_log_loss(bundle.model, x, y);
  if (o.json) {
    out << json{{"model_path", o.out},
                {"family", std::string(family_name(params.params.family))},
                {"dataset_id", spec.id},
                {"train_log_loss", loss},
                {"test_accuracy", accuracy},
                {"dropped_rows", data.drop_count}}
               .dump()
        << '\n';
  } else {
    out << "trained " << family_name(params.params.family) << " on " << spec.id << " (" << parts.train.size()
        << " rows, " << data.drop_count << " dropped)\n"
        << "train log-loss " << loss << ", test accuracy " << accuracy << '\n'
        << "wrote " << o.out << '\n';
  }
  return kExitOk;
}

int run_counterfactual(const Options& o, const Context& c, std::ostream& out) {
  ExplainerConfig cfg;
  if (!o.config.empty()) apply_overrides(Method::kCounterfactual, read_json_file(o.config, ErrorCode::kMalformedConfig), cfg);
  const Preprocessor& pre = *c.bundle.preprocessor;
  const RawRow& x = c.dataset.rows[static_cast<std::size_t>(o.row)];
  Constraints constraints;
  constraints.target_class = 1 - predict_label(c.bundle.model, encode(pre, x));
  const CounterfactualSet set = generate_counterfactuals(c.bundle.model, pre, x, constraints, cfg.counterfactual, o.seed);
  json doc = counterfactuals_to_json(set, pre);
  doc["scores"] = cf_scores_to_json(score_counterfactual_set(set, x, pre));
  out << dump(doc) << '\n';
  return kExitOk;
}

int run_explain(const Options& o, std::ostream& out) {
  const Method method = parse_method(o.method);
  const Context c = load_context(o);
  if (method == Method::kCounterfactual) return run_counterfactual(o, c, out);
  ExplainerConfig cfg;
  if (!o.config.empty()) apply_overrides(method, read_json_file(o.config, ErrorCode::kMalformedConfig), cfg);
  std::span<const RawRow> background = c.background;
  if (method == Method::kKernelShap) {
    background = background.first(std::min<std::size_t>(background.size(), static_cast<std::size_t>(cfg.kernel_shap.background_size)));
  }
  const Explanation e = explain(method, c.bundle.model, *c.bundle.preprocessor,
                                c.dataset.rows[static_cast<std::size_t>(o.row)], background, cfg, o.seed);
  out << dump(explanation_to_json(e)) << '\n';
  return kExitOk;
}

int run_bench(const Options& o, std::ostream& out) {
  BenchmarkConfig cfg = parse_config(o.config);
  if (!o.out.empty()) cfg.output_dir = o.out;
  const BenchmarkResult result = run_benchmark(cfg, o.workers);
  write_results(result, cfg.output_dir);
  std::size_t errors = 0;
  for (const RunRecord& r : result.records) errors += r.error ? 1 : 0;
  if (o.json) {
    out << json{{"output_dir", cfg.output_dir.generic_string()},
                {"config_digest", result.config_digest},
                {"records", result.records.size()},
                {"error_records", errors}}
               .dump()
        << '\n';
  } else {
    out << summary_text(summarize(result)) << result.records.size() << " records (" << errors
        << " with error markers) written to " << cfg.output_dir.generic_string() << '\n';
  }
  return kExitOk;
}

int run_serve(const Options& o, std::ostream& err) {
  ServiceConfig cfg;
  if (!o.config.empty()) {
    cfg = parse_service_config(o.config);
  } else if (!o.manifest.empty()) {
    cfg.datasets.push_back(load_manifest(o.manifest));
  } else {
    throw Error(ErrorCode::kMalformedConfig, "serve needs --config or --manifest");
  }
  Service service(cfg);
  serve(service, o.bind, o.port, err);
  return kExitOk;
}

int run_datasets(const Options& o, std::ostream& out) {
  std::vector<DatasetSpec> specs;
  if (!o.manifest.empty()) specs.push_back(load_manifest(o.manifest));
  if (!o.config.empty()) {
    for (DatasetSpec& s : parse_service_config(o.config).datasets) specs.push_back(std::move(s));
  }
  if (specs.empty()) throw Error(ErrorCode::kMalformedConfig, "datasets needs --manifest or --config");
  json list = json::array();
  for (const DatasetSpec& spec : specs) {
    const Dataset d = load_table(spec);
    json features = json::array();
    for (const FeatureSpec& f : spec.features) {
      features.push_back({{"name", f.name}, {"kind", f.is_categorical() ? "categorical" : "numeric"}});
    }
    list.push_back({{"id", spec.id},
                    {"rows", d.size()},
                    {"dropped_rows", d.drop_count},
                    {"positive_rate", d.positive_rate()},
                    {"target", spec.target},
                    {"features", features}});
  }
  if (o.json) {
    out << list.dump() << '\n';
    return kExitOk;
  }
  for (const json& d : list) {
    out << d["id"].get<std::string>() << ": " << d["rows"] << " rows (" << d["dropped_rows"]
        << " dropped), positive rate " << d["positive_rate"].get<double>() << ", " << d["features"].size()
        << " features\n";
  }
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Explanation benchmarking suite", "explainbench"};
  app.require_subcommand(1);
  app.add_flag("--json", o.json, "Machine-readable output");
  app.add_flag("--debug", o.debug, "Verbose error reports");

  auto* train = app.add_subcommand("train", "Train a model and save it with its preprocessor");
  train->add_option("--dataset,--manifest", o.manifest, "Dataset manifest")->required();
  train->add_option("--model", o.model, "Model family: logistic or gbt")->required();
  train->add_option("--seed", o.seed, "Split seed")->required();
  train->add_option("--out", o.out, "Model file to write")->required();
  train->add_option("--config", o.config, "JSON file with training parameters");

  auto* explain_cmd = app.add_subcommand("explain", "Explain one dataset row");
  explain_cmd->add_option("--model", o.model, "Model file from `train`")->required();
  explain_cmd->add_option("--dataset,--manifest", o.manifest, "Dataset manifest")->required();
  explain_cmd->add_option("--row", o.row, "Row index in the dataset")->required();
  explain_cmd->add_option("--method", o.method, "lime, kernel_shap, tree_shap or cf")->required();
  explain_cmd->add_option("--seed", o.seed, "Explanation seed")->required();
  explain_cmd->add_option("--config", o.config, "JSON file with method overrides");

  auto* cf = app.add_subcommand("counterfactual", "Search counterfactuals for one dataset row");
  cf->add_option("--model", o.model, "Model file from `train`")->required();
  cf->add_option("--dataset,--manifest", o.manifest, "Dataset manifest")->required();
  cf->add_option("--row", o.row, "Row index in the dataset")->required();
  cf->add_option("--seed", o.seed, "Search seed")->required();
  cf->add_option("--config", o.config, "JSON file with search overrides");

  auto* bench = app.add_subcommand("bench", "Run a benchmark config");
  bench->add_option("--config", o.config, "Benchmark config")->required();
  bench->add_option("--out", o.out, "Output directory (overrides the config)");
  bench->add_option("--workers", o.workers, "Worker threads")->check(CLI::Range(1, 1024));

  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
  serve_cmd->add_option("--config", o.config, "Service config");
  serve_cmd->add_option("--dataset,--manifest", o.manifest, "Single dataset manifest");
  serve_cmd->add_option("--port", o.port, "Port")->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--bind", o.bind, "Address to bind");

  auto* datasets = app.add_subcommand("datasets", "Describe datasets");
  datasets->add_option("--dataset,--manifest", o.manifest, "Dataset manifest");
  datasets->add_option("--config", o.config, "Service config listing manifests");

  for (CLI::App* sub : {train, explain_cmd, cf, bench, serve_cmd, datasets}) {
    sub->add_flag("--json", o.json, "Machine-readable output");
    sub->add_flag("--debug", o.debug, "Verbose error reports");
  }

  std::vector<std::string> rest(args.rbegin(), args.rend());
  if (!rest.empty()) rest.pop_back();  // program name
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kExitUsage;
  }

  try {
    if (*train) return run_train(o, out);
    if (*explain_cmd) return run_explain(o, out);
    if (*cf) {
      const Context c = load_context(o);
      return run_counterfactual(o, c, out);
    }
    if (*bench) return run_bench(o, out);
    if (*serve_cmd) return run_serve(o, err);
    if (*datasets) return run_datasets(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    if (o.debug) err << "  code: " << error_code_name(e.code()) << '\n';
    return is_data_error(e.code()) ? kExitData : kExitInternal;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    if (o.debug) err << "  exception type: " << typeid(e).name() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace explainbench
