// Run configuration: one JSON document that drives the CLI, the experiment
// pipeline, and the service. Parsing is strict — any key the schema does not
// know is an error naming the full dotted path — so typos fail loudly instead
// of silently running with defaults. The file can be passed explicitly or via
// the CANARY_AUDIT_CONFIG environment variable; an explicit path wins.
#pragma once

#include <cstdlib>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "canary/audit.hpp"
#include "canary/guards.hpp"

namespace canary {

struct ServiceSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string upstream_url;  // empty: serve the builtin model
  std::string api_key;       // empty: no authentication required
  int timeout_ms = 10000;
  size_t max_request_bytes = 1 << 20;
};

struct RunConfig {
  // model
  int order = 5;
  double smoothing_k = 0.1;
  // canaries
  int canary_count = 20;
  uint64_t canary_seed = 42;
  bool showcase_canaries = false;
  // finetune (weight * repeat_factor is the effective planting count; the
  // defaults sit past the memorization knee measured for this model family)
  int repeat_factor = 30;
  double finetune_weight = 32.0;
  // audit + guards
  AuditConfig audit;
  GuardConfig guards;
  std::string pattern_file;  // optional extra rules, resolved by the caller
  // dedup
  bool dedup_enabled = false;
  double dedup_threshold = 0.85;
  int dedup_jobs = 1;
  // service
  ServiceSettings service;
  // report
  std::string report_format = "markdown";
  bool include_timing = false;
};

namespace detail {

class StrictSection {
 public:
  StrictSection(const nlohmann::json& j, std::string prefix)
      : j_(j), prefix_(std::move(prefix)) {
    if (!j.is_object()) {
      throw std::invalid_argument("config section '" + prefix_ +
                                  "' must be a JSON object");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    known_.push_back(key);
    if (j_.contains(key)) out = j_.at(key).get<T>();
  }

  bool has(const char* key) {
    known_.push_back(key);
    return j_.contains(key);
  }

  const nlohmann::json& raw(const char* key) const { return j_.at(key); }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (std::find(known_.begin(), known_.end(), key) == known_.end()) {
        throw std::invalid_argument(
            "unknown config key: " +
            (prefix_.empty() ? key : prefix_ + "." + key));
      }
    }
  }

 private:
  const nlohmann::json& j_;
  std::string prefix_;
  std::vector<std::string> known_;
};

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  detail::StrictSection root(j, "");

  if (root.has("model")) {
    detail::StrictSection s(root.raw("model"), "model");
    s.get("order", cfg.order);
    s.get("smoothing_k", cfg.smoothing_k);
    s.finish();
  }
  if (root.has("canaries")) {
    detail::StrictSection s(root.raw("canaries"), "canaries");
    s.get("count", cfg.canary_count);
    s.get("seed", cfg.canary_seed);
    s.get("showcase", cfg.showcase_canaries);
    s.finish();
  }
  if (root.has("finetune")) {
    detail::StrictSection s(root.raw("finetune"), "finetune");
    s.get("repeat_factor", cfg.repeat_factor);
    s.get("weight", cfg.finetune_weight);
    s.finish();
  }
  if (root.has("audit")) {
    detail::StrictSection s(root.raw("audit"), "audit");
    s.get("num_samples", cfg.audit.num_samples);
    s.get("temperatures", cfg.audit.temperatures);
    s.get("max_tokens", cfg.audit.max_tokens);
    s.get("min_leak_len", cfg.audit.min_leak_len);
    if (s.has("variations")) {
      cfg.audit.variation_ids =
          s.raw("variations").get<std::vector<std::string>>();
    }
    s.get("bootstrap_samples", cfg.audit.bootstrap_samples);
    s.get("confidence", cfg.audit.confidence);
    s.get("seed", cfg.audit.seed);
    s.finish();
  }
  if (root.has("guards")) {
    detail::StrictSection g(root.raw("guards"), "guards");
    if (g.has("dp")) {
      detail::StrictSection s(g.raw("dp"), "guards.dp");
      s.get("enabled", cfg.guards.dp.enabled);
      s.get("epsilon", cfg.guards.dp.epsilon);
      s.get("delta_f", cfg.guards.dp.delta_f);
      s.finish();
    }
    if (g.has("entropy")) {
      detail::StrictSection s(g.raw("entropy"), "guards.entropy");
      s.get("enabled", cfg.guards.entropy.enabled);
      s.get("min_entropy_bits", cfg.guards.entropy.min_entropy_bits);
      if (s.has("aggregate")) {
        cfg.guards.entropy.aggregate = entropy_aggregate_from_name(
            s.raw("aggregate").get<std::string>());
      }
      s.finish();
    }
    if (g.has("pattern")) {
      detail::StrictSection s(g.raw("pattern"), "guards.pattern");
      s.get("enabled", cfg.guards.pattern.enabled);
      if (s.has("action")) {
        cfg.guards.pattern.action =
            pattern_action_from_name(s.raw("action").get<std::string>());
      }
      s.get("max_regenerations", cfg.guards.pattern.max_regenerations);
      s.get("pattern_file", cfg.pattern_file);
      s.finish();
    }
    g.finish();
  }
  if (root.has("dedup")) {
    detail::StrictSection s(root.raw("dedup"), "dedup");
    s.get("enabled", cfg.dedup_enabled);
    s.get("threshold", cfg.dedup_threshold);
    s.get("jobs", cfg.dedup_jobs);
    s.finish();
  }
  if (root.has("service")) {
    detail::StrictSection s(root.raw("service"), "service");
    s.get("host", cfg.service.host);
    s.get("port", cfg.service.port);
    s.get("upstream_url", cfg.service.upstream_url);
    s.get("api_key", cfg.service.api_key);
    s.get("timeout_ms", cfg.service.timeout_ms);
    s.get("max_request_bytes", cfg.service.max_request_bytes);
    s.finish();
  }
  if (root.has("report")) {
    detail::StrictSection s(root.raw("report"), "report");
    s.get("format", cfg.report_format);
    s.get("include_timing", cfg.include_timing);
    s.finish();
  }
  root.finish();

  // Range checks beyond structure.
  if (cfg.order < 1 || cfg.order > NGramModel::kMaxOrder) {
    throw std::invalid_argument("model.order must be in [1, 8]");
  }
  if (!(cfg.smoothing_k > 0.0)) {
    throw std::invalid_argument("model.smoothing_k must be positive");
  }
  if (cfg.canary_count < 1) {
    throw std::invalid_argument("canaries.count must be >= 1");
  }
  if (cfg.repeat_factor < 1) {
    throw std::invalid_argument("finetune.repeat_factor must be >= 1");
  }
  if (!(cfg.finetune_weight > 0.0)) {
    throw std::invalid_argument("finetune.weight must be positive");
  }
  validate_audit_config(cfg.audit);
  dp_noise_scale(cfg.guards.dp);  // validates epsilon and delta_f
  if (cfg.guards.entropy.min_entropy_bits < 0.0) {
    throw std::invalid_argument(
        "guards.entropy.min_entropy_bits must be >= 0");
  }
  if (cfg.guards.pattern.max_regenerations < 0) {
    throw std::invalid_argument(
        "guards.pattern.max_regenerations must be >= 0");
  }
  if (!(cfg.dedup_threshold >= 0.0 && cfg.dedup_threshold <= 1.0)) {
    throw std::invalid_argument("dedup.threshold must be in [0, 1]");
  }
  if (cfg.dedup_jobs < 1) {
    throw std::invalid_argument("dedup.jobs must be >= 1");
  }
  if (cfg.service.port < 0 || cfg.service.port > 65535) {
    throw std::invalid_argument("service.port must be in [0, 65535]");
  }
  if (cfg.service.timeout_ms < 1) {
    throw std::invalid_argument("service.timeout_ms must be >= 1");
  }
  if (cfg.report_format != "markdown" && cfg.report_format != "json" &&
      cfg.report_format != "csv") {
    throw std::invalid_argument(
        "report.format must be markdown, json, or csv");
  }
  return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  return nlohmann::json{
      {"model", {{"order", cfg.order}, {"smoothing_k", cfg.smoothing_k}}},
      {"canaries",
       {{"count", cfg.canary_count},
        {"seed", cfg.canary_seed},
        {"showcase", cfg.showcase_canaries}}},
      {"finetune",
       {{"repeat_factor", cfg.repeat_factor},
        {"weight", cfg.finetune_weight}}},
      {"audit",
       {{"num_samples", cfg.audit.num_samples},
        {"temperatures", cfg.audit.temperatures},
        {"max_tokens", cfg.audit.max_tokens},
        {"min_leak_len", cfg.audit.min_leak_len},
        {"variations", cfg.audit.variation_ids},
        {"bootstrap_samples", cfg.audit.bootstrap_samples},
        {"confidence", cfg.audit.confidence},
        {"seed", cfg.audit.seed}}},
      {"guards",
       {{"dp",
         {{"enabled", cfg.guards.dp.enabled},
          {"epsilon", cfg.guards.dp.epsilon},
          {"delta_f", cfg.guards.dp.delta_f}}},
        {"entropy",
         {{"enabled", cfg.guards.entropy.enabled},
          {"min_entropy_bits", cfg.guards.entropy.min_entropy_bits},
          {"aggregate",
           entropy_aggregate_name(cfg.guards.entropy.aggregate)}}},
        {"pattern",
         {{"enabled", cfg.guards.pattern.enabled},
          {"action", pattern_action_name(cfg.guards.pattern.action)},
          {"max_regenerations", cfg.guards.pattern.max_regenerations},
          {"pattern_file", cfg.pattern_file}}}}},
      {"dedup",
       {{"enabled", cfg.dedup_enabled},
        {"threshold", cfg.dedup_threshold},
        {"jobs", cfg.dedup_jobs}}},
      {"service",
       {{"host", cfg.service.host},
        {"port", cfg.service.port},
        {"upstream_url", cfg.service.upstream_url},
        {"api_key", cfg.service.api_key},
        {"timeout_ms", cfg.service.timeout_ms},
        {"max_request_bytes", cfg.service.max_request_bytes}}},
      {"report",
       {{"format", cfg.report_format},
        {"include_timing", cfg.include_timing}}}};
}

inline RunConfig load_run_config(const std::optional<std::string>& path) {
  std::string resolved;
  if (path) {
    resolved = *path;
  } else if (const char* env = std::getenv("CANARY_AUDIT_CONFIG")) {
    resolved = env;
  } else {
    return RunConfig{};
  }
  std::ifstream in(resolved);
  if (!in) {
    throw std::runtime_error("cannot read config file: " + resolved);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config file is not valid JSON: " +
                                std::string(e.what()));
  }
  return run_config_from_json(j);
}

}  // namespace canary
