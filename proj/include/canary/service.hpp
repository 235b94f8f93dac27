// HTTP facade over the guard stack. Two modes share one wire contract:
//
//   builtin  - upstream_url empty: generate from the in-process model with
//              the full stack (DP noise, entropy gate, pattern filter).
//   proxy    - upstream_url set: forward the prompt to an external generator
//              speaking the same POST /v1/generate contract, then apply the
//              text-level guards to its reply. Logit-level layers (DP,
//              entropy) cannot act on opaque text, so the response carries
//              "logit_guards_active": false instead of silently pretending.
//
// Endpoints:
//   GET  /health       - liveness, mode, whether a model is loaded (no auth)
//   POST /v1/generate  - {prompt, max_tokens?, temperature?, seed?}
//   POST /v1/scan      - {text, action?} one-shot pattern scan / redaction
//
// Every handler fails closed: any internal error produces a JSON body with
// an "error" member and no "text" member, so a broken guard can never leak a
// raw completion.
#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "canary/config.hpp"
#include "canary/guards.hpp"
#include "canary/ngram.hpp"

namespace canary {

namespace detail {

// Carries the HTTP status an error should surface as (e.g. 502 / 504 for
// upstream trouble) through the generic fail-closed handler.
class HttpError : public std::runtime_error {
 public:
  HttpError(int status, const std::string& message)
      : std::runtime_error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

}  // namespace detail

class GuardProxyService {
 public:
  // Test seam: replaces verdict computation for one request so failure
  // handling can be exercised without a broken model.
  using GenerateOverride = std::function<GuardVerdict(
      const std::string& prompt, int max_tokens, double temperature,
      uint64_t seed)>;

  GuardProxyService(ServiceSettings settings, GuardConfig guards)
      : settings_(std::move(settings)), guards_(std::move(guards)) {
    server_.set_payload_max_length(settings_.max_request_bytes);
    server_.Get("/health", [this](const httplib::Request& req,
                                  httplib::Response& res) {
      handle_health(req, res);
    });
    server_.Post("/v1/generate", [this](const httplib::Request& req,
                                        httplib::Response& res) {
      handle_generate(req, res);
    });
    server_.Post("/v1/scan", [this](const httplib::Request& req,
                                    httplib::Response& res) {
      handle_scan(req, res);
    });
  }

  ~GuardProxyService() { stop(); }

  GuardProxyService(const GuardProxyService&) = delete;
  GuardProxyService& operator=(const GuardProxyService&) = delete;

  void set_model(NGramModel model) {
    std::lock_guard<std::mutex> lock(model_mutex_);
    model_ = std::make_shared<const NGramModel>(std::move(model));
  }

  void set_generate_override(GenerateOverride fn) {
    override_ = std::move(fn);
  }

  // Binds (an ephemeral port when settings.port == 0), starts serving on a
  // background thread, and returns the bound port once the listener is ready.
  int start() {
    if (thread_.joinable()) {
      throw std::logic_error("service is already running");
    }
    if (settings_.port == 0) {
      bound_port_ = server_.bind_to_any_port(settings_.host);
    } else {
      bound_port_ = server_.bind_to_port(settings_.host, settings_.port)
                        ? settings_.port
                        : -1;
    }
    if (bound_port_ <= 0) {
      throw std::runtime_error("failed to bind " + settings_.host + ":" +
                               std::to_string(settings_.port));
    }
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound_port_;
  }

  void stop() {
    if (server_.is_running()) server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return bound_port_; }

 private:
  std::shared_ptr<const NGramModel> model_snapshot() const {
    std::lock_guard<std::mutex> lock(model_mutex_);
    return model_;
  }

  bool proxy_mode() const { return !settings_.upstream_url.empty(); }

  bool authorized(const httplib::Request& req) const {
    if (settings_.api_key.empty()) return true;
    return req.get_header_value("Authorization") ==
           "Bearer " + settings_.api_key;
  }

  static void reply_json(httplib::Response& res, int status,
                         const nlohmann::json& body) {
    res.status = status;
    // The byte-level model can emit sequences that are not valid UTF-8;
    // substitute U+FFFD rather than refusing to serialize the reply.
    res.set_content(
        body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
        "application/json");
  }

  static void reply_error(httplib::Response& res, int status,
                          const std::string& message) {
    reply_json(res, status, nlohmann::json{{"error", message}});
  }

  void handle_health(const httplib::Request&, httplib::Response& res) const {
    reply_json(res, 200,
               nlohmann::json{{"status", "ok"},
                              {"mode", proxy_mode() ? "proxy" : "builtin"},
                              {"model_loaded", model_snapshot() != nullptr}});
  }

  static nlohmann::json matches_to_json(
      const std::vector<PatternMatch>& matches) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& m : matches) {
      out.push_back({{"rule_id", m.rule_id},
                     {"start", m.start},
                     {"length", m.length}});
    }
    return out;
  }

  static nlohmann::json verdict_to_json(const GuardVerdict& v,
                                        bool logit_guards_active,
                                        int latency_ms) {
    return nlohmann::json{{"text", v.final_text},
                          {"blocked", v.blocked},
                          {"action", v.action_taken},
                          {"reason", v.reason},
                          {"dp_applied", v.dp_applied},
                          {"entropy_flagged", v.entropy_flagged},
                          {"mean_entropy_bits", v.mean_entropy_bits},
                          {"logit_guards_active", logit_guards_active},
                          {"pattern_matches", matches_to_json(v.pattern_matches)},
                          {"regenerations", v.regenerations},
                          {"latency_ms", latency_ms}};
  }

  // Shannon entropy (bits) of the empirical byte distribution of `text`;
  // informational context for scan results.
  static double byte_entropy_bits(const std::string& text) {
    if (text.empty()) return 0.0;
    std::array<size_t, 256> counts{};
    for (unsigned char c : text) ++counts[c];
    double bits = 0.0;
    const double n = static_cast<double>(text.size());
    for (size_t c : counts) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / n;
      bits -= p * std::log2(p);
    }
    return bits;
  }

  // Fetches one completion from the upstream generator, translating
  // transport failures into gateway statuses: timeouts become 504,
  // everything else (refused connection, bad status, unparsable reply)
  // becomes 502.
  std::string fetch_upstream(const std::string& prompt, int max_tokens,
                             double temperature, uint64_t attempt_seed) const {
    httplib::Client cli(settings_.upstream_url);
    const time_t sec = settings_.timeout_ms / 1000;
    const time_t usec = (settings_.timeout_ms % 1000) * 1000;
    cli.set_connection_timeout(sec, usec);
    cli.set_read_timeout(sec, usec);
    cli.set_write_timeout(sec, usec);
    const nlohmann::json body{{"prompt", prompt},
                              {"max_tokens", max_tokens},
                              {"temperature", temperature},
                              {"seed", attempt_seed}};
    auto res = cli.Post("/v1/generate", body.dump(), "application/json");
    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             err == httplib::Error::Read ||
                             err == httplib::Error::Write;
      throw detail::HttpError(timed_out ? 504 : 502,
                              "upstream request failed: " +
                                  httplib::to_string(err));
    }
    if (res->status != 200) {
      throw detail::HttpError(
          502, "upstream returned status " + std::to_string(res->status));
    }
    try {
      return nlohmann::json::parse(res->body).at("text").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw detail::HttpError(
          502, "upstream reply is not a JSON object with a text field");
    }
  }

  GuardVerdict proxied_verdict(const std::string& prompt, int max_tokens,
                               double temperature, uint64_t seed) const {
    // Logit-level layers need per-step distributions the upstream does not
    // expose; force them off rather than evaluating them on garbage.
    GuardConfig effective = guards_;
    effective.dp.enabled = false;
    effective.entropy.enabled = false;
    const GenerateFn gen = [&](const StepTransform&,
                               uint64_t attempt_seed) -> Completion {
      return Completion{
          fetch_upstream(prompt, max_tokens, temperature, attempt_seed),
          {},
          true};
    };
    return run_guard_stack(effective, gen, seed);
  }

  void handle_generate(const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req)) return reply_error(res, 401, "unauthorized");

    std::string prompt;
    int max_tokens = 128;
    double temperature = 0.0;
    uint64_t seed = 42;
    try {
      const nlohmann::json body = nlohmann::json::parse(req.body);
      prompt = body.at("prompt").get<std::string>();
      if (body.contains("max_tokens")) {
        max_tokens = body.at("max_tokens").get<int>();
      }
      if (body.contains("temperature")) {
        temperature = body.at("temperature").get<double>();
      }
      if (body.contains("seed")) seed = body.at("seed").get<uint64_t>();
      if (max_tokens < 1 || max_tokens > 4096) {
        throw std::invalid_argument("max_tokens must be in [1, 4096]");
      }
      if (temperature < 0.0) {
        throw std::invalid_argument("temperature must be >= 0");
      }
    } catch (const std::exception& e) {
      return reply_error(res, 400, std::string("bad request: ") + e.what());
    }

    try {
      const auto started = std::chrono::steady_clock::now();
      GuardVerdict verdict;
      bool logit_guards_active = !proxy_mode();
      if (override_) {
        verdict = override_(prompt, max_tokens, temperature, seed);
      } else if (proxy_mode()) {
        verdict = proxied_verdict(prompt, max_tokens, temperature, seed);
      } else {
        const auto model = model_snapshot();
        if (!model) return reply_error(res, 503, "no model loaded");
        const SamplerSpec spec = temperature == 0.0
                                     ? SamplerSpec::Greedy()
                                     : SamplerSpec::Temp(temperature);
        verdict = guarded_generate(*model, prompt, max_tokens, spec, guards_,
                                   seed);
      }
      const int latency_ms = static_cast<int>(
          std::chrono::duration_cast<std::chrono::milliseconds>(
              std::chrono::steady_clock::now() - started)
              .count());
      reply_json(res, 200,
                 verdict_to_json(verdict, logit_guards_active, latency_ms));
    } catch (const detail::HttpError& e) {
      reply_error(res, e.status(), e.what());
    } catch (const std::exception& e) {
      // Fail closed: an error body only, never partial text.
      reply_error(res, 500, std::string("internal error: ") + e.what());
    }
  }

  void handle_scan(const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req)) return reply_error(res, 401, "unauthorized");

    std::string text;
    PatternAction action = PatternAction::redact;
    try {
      const nlohmann::json body = nlohmann::json::parse(req.body);
      text = body.at("text").get<std::string>();
      if (body.contains("action")) {
        action = pattern_action_from_name(body.at("action").get<std::string>());
      }
    } catch (const std::exception& e) {
      return reply_error(res, 400, std::string("bad request: ") + e.what());
    }

    try {
      const auto matches = pattern_scan(text, guards_.pattern.rules);
      const bool block = action == PatternAction::block && !matches.empty();
      // A one-shot scan has nothing to regenerate; anything that is not a
      // block degrades to redaction, mirroring the stack's fallback.
      const std::string out =
          block ? "" : (matches.empty() ? text : redact(text, matches));
      reply_json(res, 200,
                 nlohmann::json{{"text", out},
                                {"blocked", block},
                                {"matches", matches_to_json(matches)},
                                {"byte_entropy_bits", byte_entropy_bits(text)}});
    } catch (const std::exception& e) {
      reply_error(res, 500, std::string("internal error: ") + e.what());
    }
  }

  ServiceSettings settings_;
  GuardConfig guards_;
  httplib::Server server_;
  std::thread thread_;
  int bound_port_ = 0;
  mutable std::mutex model_mutex_;
  std::shared_ptr<const NGramModel> model_;
  GenerateOverride override_;
};

}  // namespace canary
