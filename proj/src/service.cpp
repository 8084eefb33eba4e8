#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "q2c/service.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include "q2c/digest.hpp"
#include "q2c/errors.hpp"

namespace q2c {

std::optional<std::vector<double>> FeatureLru::get(const std::string& key) {
  std::lock_guard lock(mu_);
  auto it = map_.find(key);
  if (it == map_.end()) return std::nullopt;
  order_.splice(order_.begin(), order_, it->second);
  return it->second->second;
}

void FeatureLru::put(const std::string& key, std::vector<double> value) {
  std::lock_guard lock(mu_);
  auto it = map_.find(key);
  if (it != map_.end()) {
    it->second->second = std::move(value);
    order_.splice(order_.begin(), order_, it->second);
    return;
  }
  order_.emplace_front(key, std::move(value));
  map_[key] = order_.begin();
  while (map_.size() > capacity_) {
    map_.erase(order_.back().first);
    order_.pop_back();
  }
}

std::size_t FeatureLru::size() const {
  std::lock_guard lock(mu_);
  return map_.size();
}

namespace {

void reply_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& error,
                 nlohmann::json extra = nlohmann::json::object()) {
  extra["error"] = error;
  reply_json(res, status, extra);
}

}  // namespace

RoutingService::RoutingService(std::size_t characterization_cache_capacity)
    : server_(std::make_unique<httplib::Server>()),
      feature_cache_(characterization_cache_capacity) {
  install_handlers();
}

RoutingService::~RoutingService() { stop(); }

void RoutingService::load_artifact(const std::string& path) {
  PolicyArtifact artifact = load_policy(path);
  set_artifact(std::move(artifact), sha256_file(path));
}

void RoutingService::set_artifact(PolicyArtifact artifact, std::string digest) {
  std::unique_lock lock(state_mu_);
  policy_ = std::make_shared<const RoutingPolicy>(artifact.policy);
  calibration_ = std::move(artifact.calibration);
  has_calibration_ = artifact.has_calibration;
  knobs_ = std::move(artifact.knobs);
  artifact_digest_ = std::move(digest);
}

void RoutingService::set_characterizer(LlmClient* client, std::string model,
                                       CharacteristicSchema schema) {
  std::unique_lock lock(state_mu_);
  characterizer_ = client;
  characterizer_model_ = std::move(model);
  schema_ = std::move(schema);
  has_schema_ = true;
}

std::shared_ptr<const RoutingPolicy> RoutingService::policy_snapshot() const {
  std::shared_lock lock(state_mu_);
  return policy_;
}

std::shared_ptr<const RoutingPolicy> RoutingService::swap_lambda(
    double new_lambda) {
  std::unique_lock lock(state_mu_);
  if (!policy_) throw IntegrityError("no policy loaded");
  auto next = std::make_shared<const RoutingPolicy>(retarget(*policy_, new_lambda));
  policy_ = next;
  return next;
}

int RoutingService::start(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    if (port_ <= 0) throw Error("io", "failed to bind " + host);
  } else {
    if (!server_->bind_to_port(host, port))
      throw Error("io", "failed to bind " + host + ":" + std::to_string(port));
    port_ = port;
  }
  listen_thread_ = std::thread([this]() { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void RoutingService::stop() {
  if (server_) server_->stop();
  if (listen_thread_.joinable()) listen_thread_.join();
}

void RoutingService::install_handlers() {
  server_->Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("ok", "text/plain");
  });

  server_->Get("/v1/policy", [this](const httplib::Request&,
                                    httplib::Response& res) {
    std::shared_lock lock(state_mu_);
    if (!policy_) {
      reply_json(res, 200, {{"status", "no policy"}, {"health", "ok"}});
      return;
    }
    nlohmann::json frontier = nlohmann::json::array();
    if (has_calibration_) {
      for (std::size_t i : calibration_.pareto_indices) {
        const auto& p = calibration_.points[i];
        frontier.push_back({{"lambda", p.lambda},
                            {"accuracy", p.mean_accuracy},
                            {"cost", p.mean_cost}});
      }
    }
    reply_json(res, 200,
               {{"policy_digest", artifact_digest_},
                {"lambda", policy_->lambda},
                {"retained_config_count", policy_->bank->predictors.size()},
                {"frontier_points", frontier},
                {"requests_served", requests_served_.load()},
                {"health", "ok"}});
  });

  server_->Get("/v1/frontier", [this](const httplib::Request&,
                                      httplib::Response& res) {
    std::shared_lock lock(state_mu_);
    if (!has_calibration_) {
      reply_error(res, 503, "no calibration table loaded");
      return;
    }
    reply_json(res, 200, calibration_to_json(calibration_));
  });

  server_->Post("/v1/route", [this](const httplib::Request& req,
                                    httplib::Response& res) {
    // Snapshot once: this request is served by exactly one policy even if a
    // retarget lands mid-flight.
    std::shared_ptr<const RoutingPolicy> policy = policy_snapshot();
    if (!policy) {
      reply_error(res, 503, "no policy loaded");
      return;
    }

    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      reply_error(res, 400, std::string("malformed JSON body: ") + e.what());
      return;
    }

    FeatureVector fv;
    bool characterized = false;
    if (body.contains("features")) {
      if (!body["features"].is_array()) {
        reply_error(res, 400, "\"features\" must be an array");
        return;
      }
      for (const auto& v : body["features"]) {
        if (!v.is_number()) {
          reply_error(res, 400, "\"features\" must be numeric");
          return;
        }
        fv.values.push_back(v.get<double>());
      }
    } else if (body.contains("query_text") && body["query_text"].is_string()) {
      LlmClient* client = nullptr;
      std::string model;
      CharacteristicSchema schema;
      {
        std::shared_lock lock(state_mu_);
        if (!characterizer_ || !has_schema_) {
          reply_error(res, 503, "no characterizer configured");
          return;
        }
        client = characterizer_;
        model = characterizer_model_;
        schema = schema_;
      }
      const std::string text = body["query_text"].get<std::string>();
      const std::string cache_key =
          model + '\x1f' + schema.digest() + '\x1f' + sha256_hex(text);
      if (auto hit = feature_cache_.get(cache_key)) {
        fv.values = *hit;
      } else {
        try {
          QueryRecord query{sha256_hex(text).substr(0, 16), text};
          fv = label_query(query, schema, LlmEndpoint{client, model});
        } catch (const std::exception& e) {
          reply_error(res, 502,
                      std::string("characterizer failure: ") + e.what());
          return;
        }
        feature_cache_.put(cache_key, fv.values);
      }
      characterized = true;
    } else {
      reply_error(res, 400, "body must contain \"features\" or \"query_text\"");
      return;
    }

    RouteDecision decision;
    try {
      decision = route(*policy, fv);
    } catch (const std::exception& e) {
      reply_error(res, 400, e.what());
      return;
    }
    requests_served_.fetch_add(1);

    nlohmann::json knob_obj = nlohmann::json::object();
    {
      std::shared_lock lock(state_mu_);
      auto it = knobs_.find(decision.config_id);
      if (it != knobs_.end())
        for (const auto& [k, v] : it->second) knob_obj[k] = v;
    }
    reply_json(res, 200,
               {{"config_id", decision.config_id},
                {"knobs", knob_obj},
                {"p_hat", decision.p_hat},
                {"score", decision.score},
                {"mean_cost", decision.mean_cost},
                {"lambda_used", policy->lambda},
                {"characterized", characterized}});
  });

  server_->Post("/v1/policy/target", [this](const httplib::Request& req,
                                            httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      reply_error(res, 400, std::string("malformed JSON body: ") + e.what());
      return;
    }

    Target target;
    int n_set = 0;
    if (body.contains("accuracy_floor")) {
      target = Target::accuracy_floor(body["accuracy_floor"].get<double>());
      ++n_set;
    }
    if (body.contains("cost_budget")) {
      target = Target::cost_budget(body["cost_budget"].get<double>());
      ++n_set;
    }
    if (body.contains("lambda")) {
      target = Target::lambda(body["lambda"].get<double>());
      ++n_set;
    }
    if (n_set != 1) {
      reply_error(res, 400,
                  "body must set exactly one of accuracy_floor, cost_budget, "
                  "lambda");
      return;
    }

    CalibrationChoice choice;
    try {
      if (target.kind == Target::Kind::kLambda) {
        if (target.value < 0.0) {
          reply_error(res, 400, "lambda must be non-negative");
          return;
        }
        choice.lambda = target.value;
        std::shared_lock lock(state_mu_);
        if (has_calibration_) choice = calibrate(calibration_, target);
      } else {
        std::shared_lock lock(state_mu_);
        if (!has_calibration_) {
          reply_error(res, 503, "no calibration table loaded");
          return;
        }
        choice = calibrate(calibration_, target);
      }
    } catch (const InfeasibleTargetError& e) {
      reply_error(res, 422, e.what(),
                  {{"nearest",
                    {{"lambda", e.nearest_lambda},
                     {"accuracy", e.nearest_accuracy},
                     {"cost", e.nearest_cost}}}});
      return;
    }

    try {
      swap_lambda(choice.lambda);
    } catch (const std::exception& e) {
      reply_error(res, 503, e.what());
      return;
    }
    reply_json(res, 200,
               {{"lambda", choice.lambda},
                {"operating_point",
                 {{"lambda", choice.point.lambda},
                  {"accuracy", choice.point.mean_accuracy},
                  {"cost", choice.point.mean_cost}}}});
  });
}

}  // namespace q2c
