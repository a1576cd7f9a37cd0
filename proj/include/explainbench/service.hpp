#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "explainbench/datasets.hpp"
#include "explainbench/error.hpp"
#include "explainbench/explainers.hpp"
#include "explainbench/models.hpp"

namespace explainbench {

struct ServiceConfig {
  std::vector<DatasetSpec> datasets;
  std::uint64_t base_seed = 0;
  double test_fraction = 0.3;
  int background_size = 100;
};

// {"schema_version": 1, "datasets": [manifest paths], "base_seed"?,
//  "test_fraction"?, "background_size"?}; paths relative to the file.
ServiceConfig parse_service_config(const std::filesystem::path& path);
ServiceConfig parse_service_config_text(std::string_view text, const std::filesystem::path& base_dir);

struct HttpResponse {
  int status = 200;
  std::string body;
};

int http_status(ErrorCode code);
std::string error_body(ErrorCode code, std::string_view message, const nlohmann::json& detail = nullptr);

// Request handling without the transport, so tests can drive every endpoint
// directly. Datasets are loaded once at construction; the model registry is
// the only mutable state and sits behind a shared mutex.
class Service {
 public:
  explicit Service(const ServiceConfig& config);
  ~Service();

  HttpResponse handle(std::string_view method, std::string_view path,
                      const std::multimap<std::string, std::string>& query, std::string_view body);

  // Largest generations value honoured by /counterfactuals.
  static constexpr int kMaxGenerations = 500;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

// Serves `service` until SIGINT or SIGTERM. kPortInUse when the port cannot
// be bound. Each request is logged to `log`.
void serve(Service& service, const std::string& host, int port, std::ostream& log);

}  // namespace explainbench
