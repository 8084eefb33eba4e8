#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "q2c/artifact.hpp"
#include "q2c/featurize.hpp"
#include "q2c/llm.hpp"
#include "q2c/router.hpp"

namespace httplib {
class Server;
}

namespace q2c {

// Bounded LRU for characterization vectors, safe for concurrent access.
class FeatureLru {
public:
  explicit FeatureLru(std::size_t capacity) : capacity_(capacity) {}

  std::optional<std::vector<double>> get(const std::string& key);
  void put(const std::string& key, std::vector<double> value);
  std::size_t size() const;

private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<std::pair<std::string, std::vector<double>>> order_;
  std::unordered_map<
      std::string,
      std::list<std::pair<std::string, std::vector<double>>>::iterator>
      map_;
};

// HTTP routing service.
//   POST /v1/route          {features: [...]} or {query_text: "..."}
//   POST /v1/policy/target  {accuracy_floor | cost_budget | lambda}
//   GET  /v1/policy         introspection snapshot
//   GET  /v1/frontier       calibration table
//   GET  /healthz           liveness (never touches the policy)
// In-flight requests each observe exactly one policy: the active policy is an
// immutable snapshot swapped atomically by retarget.
class RoutingService {
public:
  RoutingService(std::size_t characterization_cache_capacity = 100000);
  ~RoutingService();

  RoutingService(const RoutingService&) = delete;
  RoutingService& operator=(const RoutingService&) = delete;

  void load_artifact(const std::string& path);
  void set_artifact(PolicyArtifact artifact, std::string digest);
  void set_characterizer(LlmClient* client, std::string model,
                         CharacteristicSchema schema);

  // Binds (port 0 picks a free port) and serves on a background thread.
  // Returns the bound port.
  int start(const std::string& host, int port);
  void stop();

  // Snapshot accessors used by handlers and tests.
  std::shared_ptr<const RoutingPolicy> policy_snapshot() const;
  std::uint64_t requests_served() const { return requests_served_.load(); }

private:
  void install_handlers();
  std::shared_ptr<const RoutingPolicy> swap_lambda(double new_lambda);

  std::unique_ptr<httplib::Server> server_;
  std::thread listen_thread_;
  int port_ = 0;

  mutable std::shared_mutex state_mu_;
  std::shared_ptr<const RoutingPolicy> policy_;
  CalibrationTable calibration_;
  bool has_calibration_ = false;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> knobs_;
  std::string artifact_digest_;

  LlmClient* characterizer_ = nullptr;
  std::string characterizer_model_;
  CharacteristicSchema schema_;
  bool has_schema_ = false;

  FeatureLru feature_cache_;
  std::atomic<std::uint64_t> requests_served_{0};
};

}  // namespace q2c
