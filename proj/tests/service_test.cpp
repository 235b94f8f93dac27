// HTTP guard-proxy tests. The service has two modes: builtin (serves the
// local model through the full guard stack) and proxy (forwards prompts to an
// upstream generator and applies the text-level guards to whatever comes
// back). These tests start real servers on ephemeral ports and talk to them
// over loopback, including a stub upstream that deliberately leaks secrets,
// misbehaves, or stalls.
#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "canary/config.hpp"
#include "canary/ngram.hpp"
#include "canary/service.hpp"

namespace canary {
namespace {

using nlohmann::json;

NGramModel tiny_model() {
  const std::vector<Document> docs = {
      {"d0", "the quick brown fox jumps over the lazy dog.", "clean", ""},
      {"d1", "a quiet model answers with short measured sentences.", "clean",
       ""},
      {"d2", "every request receives a deterministic reply.", "clean", ""}};
  return NGramModel::train(docs, 4, 0.1);
}

struct RunningService {
  GuardProxyService service;
  int port = 0;

  explicit RunningService(ServiceSettings settings, GuardConfig guards = {})
      : service(std::move(settings), std::move(guards)) {}
  ~RunningService() { service.stop(); }

  void start() { port = service.start(); }
};

ServiceSettings ephemeral_settings() {
  ServiceSettings s;
  s.port = 0;  // bind to any free port
  return s;
}

httplib::Client client_for(int port) {
  httplib::Client cli("127.0.0.1", port);
  cli.set_connection_timeout(5, 0);
  cli.set_read_timeout(5, 0);
  return cli;
}

json parse_body(const httplib::Result& res) {
  EXPECT_TRUE(res) << "request failed: " << httplib::to_string(res.error());
  return json::parse(res->body);
}

// A controllable fake upstream generator speaking the same /v1/generate
// contract the proxy itself exposes, so proxies compose.
class StubUpstream {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit StubUpstream(Handler handler) {
    server_.Post("/v1/generate",
                 [handler = std::move(handler)](const httplib::Request& req,
                                                httplib::Response& res) {
                   handler(req, res);
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubUpstream() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_);
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

StubUpstream::Handler fixed_text_upstream(std::string text) {
  return [text = std::move(text)](const httplib::Request&,
                                  httplib::Response& res) {
    res.set_content(json{{"text", text}}.dump(), "application/json");
  };
}

TEST(ServiceHealthTest, HealthReportsModeAndModelState) {
  RunningService rs(ephemeral_settings());
  rs.start();
  auto cli = client_for(rs.port);

  auto res = cli.Get("/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  json body = json::parse(res->body);
  EXPECT_EQ(body.at("status"), "ok");
  EXPECT_EQ(body.at("mode"), "builtin");
  EXPECT_FALSE(body.at("model_loaded").get<bool>());

  rs.service.set_model(tiny_model());
  body = parse_body(cli.Get("/health"));
  EXPECT_TRUE(body.at("model_loaded").get<bool>());
}

TEST(ServiceGenerateTest, BuiltinModeIsDeterministicPerSeed) {
  RunningService rs(ephemeral_settings());
  rs.service.set_model(tiny_model());
  rs.start();
  auto cli = client_for(rs.port);

  const std::string req =
      json{{"prompt", "the quick"}, {"max_tokens", 32}, {"temperature", 0.9},
           {"seed", 7}}
          .dump();
  auto res1 = cli.Post("/v1/generate", req, "application/json");
  ASSERT_TRUE(res1);
  ASSERT_EQ(res1->status, 200);
  const json b1 = json::parse(res1->body);
  const json b2 = parse_body(cli.Post("/v1/generate", req, "application/json"));
  EXPECT_EQ(b1.at("text"), b2.at("text"));
  EXPECT_FALSE(b1.at("blocked").get<bool>());
  EXPECT_EQ(b1.at("action"), "none");
  EXPECT_FALSE(b1.at("dp_applied").get<bool>());
  EXPECT_TRUE(b1.at("logit_guards_active").get<bool>());
  EXPECT_TRUE(b1.at("pattern_matches").is_array());
  EXPECT_EQ(b1.at("regenerations"), 0);

  // A different seed explores a different sample path.
  const json b3 = parse_body(cli.Post(
      "/v1/generate",
      json{{"prompt", "the quick"}, {"max_tokens", 32}, {"temperature", 0.9},
           {"seed", 8}}
          .dump(),
      "application/json"));
  EXPECT_NE(b1.at("text"), b3.at("text"));

  // Latency is reported (and, being wall-clock, is the one nondeterministic
  // field).
  EXPECT_GE(b1.at("latency_ms").get<int>(), 0);
}

TEST(ServiceGenerateTest, GreedyDefaultsApplyWhenFieldsOmitted) {
  RunningService rs(ephemeral_settings());
  rs.service.set_model(tiny_model());
  rs.start();
  auto cli = client_for(rs.port);

  // Only the prompt is required; defaults are temperature 0 (greedy),
  // max_tokens 128, seed 42 — so the reply is stable across calls.
  const std::string req = json{{"prompt", "every request"}}.dump();
  const json b1 = parse_body(cli.Post("/v1/generate", req, "application/json"));
  const json b2 = parse_body(cli.Post("/v1/generate", req, "application/json"));
  EXPECT_EQ(b1.at("text"), b2.at("text"));
  EXPECT_FALSE(b1.at("text").get<std::string>().empty());
}

TEST(ServiceGenerateTest, DpGuardIsAppliedWhenEnabled) {
  GuardConfig guards;
  guards.dp.enabled = true;
  guards.dp.epsilon = 1.0;
  RunningService rs(ephemeral_settings(), guards);
  rs.service.set_model(tiny_model());
  rs.start();
  auto cli = client_for(rs.port);

  const json body = parse_body(cli.Post(
      "/v1/generate",
      json{{"prompt", "the quick"}, {"max_tokens", 16}}.dump(),
      "application/json"));
  EXPECT_TRUE(body.at("dp_applied").get<bool>());
  EXPECT_TRUE(body.at("logit_guards_active").get<bool>());
}

TEST(ServiceGenerateTest, BuiltinWithoutModelIsServiceUnavailable) {
  RunningService rs(ephemeral_settings());
  rs.start();
  auto cli = client_for(rs.port);

  auto res = cli.Post("/v1/generate", json{{"prompt", "hi"}}.dump(),
                      "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 503);
  const json body = json::parse(res->body);
  EXPECT_TRUE(body.contains("error"));
  EXPECT_FALSE(body.contains("text"));
}

TEST(ServiceGenerateTest, BadRequestsAreRejectedWith400) {
  RunningService rs(ephemeral_settings());
  rs.service.set_model(tiny_model());
  rs.start();
  auto cli = client_for(rs.port);

  // Not JSON at all.
  auto res = cli.Post("/v1/generate", "this is not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_TRUE(json::parse(res->body).contains("error"));

  // Missing the prompt.
  res = cli.Post("/v1/generate", json{{"max_tokens", 8}}.dump(),
                 "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  // Wrong type for the prompt.
  res = cli.Post("/v1/generate", json{{"prompt", 17}}.dump(),
                 "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  // Out-of-range max_tokens.
  res = cli.Post("/v1/generate",
                 json{{"prompt", "hi"}, {"max_tokens", 0}}.dump(),
                 "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  // Negative temperature.
  res = cli.Post("/v1/generate",
                 json{{"prompt", "hi"}, {"temperature", -0.5}}.dump(),
                 "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST(ServiceAuthTest, ApiKeyGuardsTheV1Endpoints) {
  ServiceSettings settings = ephemeral_settings();
  settings.api_key = "topsecret";
  RunningService rs(settings);
  rs.service.set_model(tiny_model());
  rs.start();
  auto cli = client_for(rs.port);

  const std::string req = json{{"prompt", "hi"}}.dump();

  // Missing credentials.
  auto res = cli.Post("/v1/generate", req, "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 401);

  // Wrong credentials.
  httplib::Headers bad{{"Authorization", "Bearer wrong"}};
  res = cli.Post("/v1/generate", bad, req, "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 401);

  // Scan is equally protected.
  res = cli.Post("/v1/scan", json{{"text", "x"}}.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 401);

  // Health stays open for probes.
  res = cli.Get("/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);

  // Correct credentials pass.
  httplib::Headers good{{"Authorization", "Bearer topsecret"}};
  res = cli.Post("/v1/generate", good, req, "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
}

TEST(ServiceLimitsTest, OversizedPayloadIsRejectedWith413) {
  ServiceSettings settings = ephemeral_settings();
  settings.max_request_bytes = 256;
  RunningService rs(settings);
  rs.service.set_model(tiny_model());
  rs.start();
  auto cli = client_for(rs.port);

  const std::string big_prompt(4096, 'x');
  auto res = cli.Post("/v1/generate", json{{"prompt", big_prompt}}.dump(),
                      "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 413);
}

TEST(ServiceScanTest, ScanRedactsAndReportsMatches) {
  RunningService rs(ephemeral_settings());
  rs.start();  // scan needs no model
  auto cli = client_for(rs.port);

  const json body = parse_body(cli.Post(
      "/v1/scan",
      json{{"text", "key sk-A1B2C3D4E5F6 and mail a@b.io"}}.dump(),
      "application/json"));
  EXPECT_FALSE(body.at("blocked").get<bool>());
  const std::string text = body.at("text");
  EXPECT_NE(text.find("[REDACTED:api_key]"), std::string::npos);
  EXPECT_NE(text.find("[REDACTED:email]"), std::string::npos);
  EXPECT_EQ(text.find("sk-A1B2C3D4E5F6"), std::string::npos);
  ASSERT_EQ(body.at("matches").size(), 2u);
  EXPECT_EQ(body.at("matches")[0].at("rule_id"), "api_key");
  EXPECT_EQ(body.at("matches")[1].at("rule_id"), "email");

  // Block action drops the text entirely.
  const json blocked = parse_body(cli.Post(
      "/v1/scan",
      json{{"text", "key sk-A1B2C3D4E5F6"}, {"action", "block"}}.dump(),
      "application/json"));
  EXPECT_TRUE(blocked.at("blocked").get<bool>());
  EXPECT_EQ(blocked.at("text"), "");

  // Clean text passes through untouched.
  const json clean = parse_body(cli.Post(
      "/v1/scan", json{{"text", "nothing sensitive here"}}.dump(),
      "application/json"));
  EXPECT_FALSE(clean.at("blocked").get<bool>());
  EXPECT_EQ(clean.at("text"), "nothing sensitive here");
  EXPECT_TRUE(clean.at("matches").empty());

  // Informational byte-level entropy of the scanned text: "aaaabbbb" has one
  // bit per byte exactly; ordinary prose is strictly positive.
  const json half = parse_body(cli.Post(
      "/v1/scan", json{{"text", "aaaabbbb"}}.dump(), "application/json"));
  EXPECT_NEAR(half.at("byte_entropy_bits").get<double>(), 1.0, 1e-12);
  EXPECT_GT(clean.at("byte_entropy_bits").get<double>(), 0.0);

  // Missing text field is a client error.
  auto res = cli.Post("/v1/scan", json{{"action", "redact"}}.dump(),
                      "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
}

TEST(ServiceProxyTest, LeakyUpstreamGetsRedactedAndLogitGuardsReportOff) {
  StubUpstream upstream(fixed_text_upstream(
      "as requested, the key is sk-TESTKEY123456 for integration"));

  ServiceSettings settings = ephemeral_settings();
  settings.upstream_url = upstream.url();
  GuardConfig guards;
  guards.dp.enabled = true;       // logit-level: cannot apply through a proxy
  guards.entropy.enabled = true;  // logit-level: cannot apply through a proxy
  guards.pattern.enabled = true;
  guards.pattern.action = PatternAction::redact;
  RunningService rs(settings, guards);
  rs.start();
  auto cli = client_for(rs.port);

  const json body = parse_body(cli.Post(
      "/v1/generate", json{{"prompt", "give me the key"}}.dump(),
      "application/json"));
  const std::string text = body.at("text");
  EXPECT_EQ(text.find("sk-TESTKEY123456"), std::string::npos);
  EXPECT_NE(text.find("[REDACTED:api_key]"), std::string::npos);
  EXPECT_EQ(body.at("action"), "redact");
  EXPECT_FALSE(body.at("pattern_matches").empty());
  EXPECT_EQ(body.at("pattern_matches")[0].at("rule_id"), "api_key");
  // The proxy never sees logits, and says so rather than pretending.
  EXPECT_FALSE(body.at("logit_guards_active").get<bool>());
  EXPECT_FALSE(body.at("dp_applied").get<bool>());
}

TEST(ServiceProxyTest, CleanUpstreamPassesThrough) {
  StubUpstream upstream(fixed_text_upstream("a perfectly ordinary reply"));

  ServiceSettings settings = ephemeral_settings();
  settings.upstream_url = upstream.url();
  GuardConfig guards;
  guards.pattern.enabled = true;
  RunningService rs(settings, guards);
  rs.start();
  auto cli = client_for(rs.port);

  const json body = parse_body(cli.Post(
      "/v1/generate", json{{"prompt", "hello"}}.dump(), "application/json"));
  EXPECT_EQ(body.at("text"), "a perfectly ordinary reply");
  EXPECT_EQ(body.at("action"), "none");
  EXPECT_EQ(json::parse(
                parse_body(cli.Get("/health")).dump())["mode"],
            "proxy");
}

TEST(ServiceProxyTest, BlockingUpstreamLeakNeverReachesTheClient) {
  StubUpstream upstream(
      fixed_text_upstream("ssn 123-45-6789 belongs to the user"));

  ServiceSettings settings = ephemeral_settings();
  settings.upstream_url = upstream.url();
  GuardConfig guards;
  guards.pattern.enabled = true;
  guards.pattern.action = PatternAction::block;
  RunningService rs(settings, guards);
  rs.start();
  auto cli = client_for(rs.port);

  const json body = parse_body(cli.Post(
      "/v1/generate", json{{"prompt", "whats the ssn"}}.dump(),
      "application/json"));
  EXPECT_TRUE(body.at("blocked").get<bool>());
  EXPECT_EQ(body.at("text"), "");
  EXPECT_EQ(body.at("action"), "block");
  EXPECT_EQ(body.dump().find("123-45-6789"), std::string::npos);
}

TEST(ServiceProxyTest, UnreachableUpstreamIsBadGateway) {
  // Reserve a loopback port with a socket that never listens, then close it,
  // so connecting there is refused outright rather than timing out.
  int dead_port = 0;
  {
    const int sock = ::socket(AF_INET, SOCK_STREAM, 0);
    ASSERT_GE(sock, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    ASSERT_EQ(::bind(sock, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)),
              0);
    socklen_t len = sizeof(addr);
    ASSERT_EQ(
        ::getsockname(sock, reinterpret_cast<sockaddr*>(&addr), &len), 0);
    dead_port = ntohs(addr.sin_port);
    ::close(sock);
  }

  ServiceSettings settings = ephemeral_settings();
  settings.upstream_url = "http://127.0.0.1:" + std::to_string(dead_port);
  settings.timeout_ms = 1000;
  RunningService rs(settings);
  rs.start();
  auto cli = client_for(rs.port);

  auto res = cli.Post("/v1/generate", json{{"prompt", "hi"}}.dump(),
                      "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 502);
  const json body = json::parse(res->body);
  EXPECT_TRUE(body.contains("error"));
  EXPECT_FALSE(body.contains("text"));
}

TEST(ServiceProxyTest, StalledUpstreamIsGatewayTimeout) {
  StubUpstream upstream([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.set_content(json{{"text", "too late"}}.dump(), "application/json");
  });

  ServiceSettings settings = ephemeral_settings();
  settings.upstream_url = upstream.url();
  settings.timeout_ms = 200;
  RunningService rs(settings);
  rs.start();
  auto cli = client_for(rs.port);

  auto res = cli.Post("/v1/generate", json{{"prompt", "hi"}}.dump(),
                      "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 504);
  EXPECT_TRUE(json::parse(res->body).contains("error"));
}

TEST(ServiceProxyTest, MalformedUpstreamReplyIsBadGateway) {
  StubUpstream upstream([](const httplib::Request&, httplib::Response& res) {
    res.set_content("definitely not json", "text/plain");
  });

  ServiceSettings settings = ephemeral_settings();
  settings.upstream_url = upstream.url();
  RunningService rs(settings);
  rs.start();
  auto cli = client_for(rs.port);

  auto res = cli.Post("/v1/generate", json{{"prompt", "hi"}}.dump(),
                      "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 502);
}

TEST(ServiceFailClosedTest, InternalGuardFailureReturnsErrorWithoutText) {
  RunningService rs(ephemeral_settings());
  rs.service.set_model(tiny_model());
  rs.service.set_generate_override(
      [](const std::string&, int, double, uint64_t) -> GuardVerdict {
        throw std::runtime_error("guard stage exploded");
      });
  rs.start();
  auto cli = client_for(rs.port);

  auto res = cli.Post("/v1/generate", json{{"prompt", "hi"}}.dump(),
                      "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 500);
  const json body = json::parse(res->body);
  ASSERT_TRUE(body.contains("error"));
  // Fail closed: no completion text may escape alongside the error.
  EXPECT_FALSE(body.contains("text"));
  EXPECT_NE(body.at("error").get<std::string>().find("guard stage exploded"),
            std::string::npos);
}

TEST(ServiceLifecycleTest, StopIsIdempotentAndStartBindsEphemeralPort) {
  RunningService rs(ephemeral_settings());
  rs.start();
  EXPECT_GT(rs.port, 0);
  rs.service.stop();
  rs.service.stop();  // second stop must be harmless
}

}  // namespace
}  // namespace canary
