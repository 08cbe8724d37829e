#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <doctest.h>

#include <atomic>
#include <mutex>
#include <thread>

#include "aot/generation.hpp"
#include "test_util.hpp"

using namespace aot;
using namespace aot::generation;
using nlohmann::json;

namespace {

// Local chat-completions server whose first `failures` requests answer with
// `fail_status`.
class FakeApi {
 public:
  FakeApi(int failures, int fail_status) : failures_(failures), fail_status_(fail_status) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      ++requests;
      last_auth = req.get_header_value("Authorization");
      last_body = json::parse(req.body);
      if (requests <= failures_) {
        res.status = fail_status_;
        res.set_content("{\"error\":\"nope\"}", "application/json");
        return;
      }
      json reply = {{"choices", {{{"message", {{"role", "assistant"},
                                               {"content", "echo: " + last_body["messages"].back()["content"].get<std::string>()}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeApi() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  std::mutex mu_;
  int requests = 0;
  std::string last_auth;
  json last_body;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  int failures_;
  int fail_status_;
};

HttpBackendConfig config_for(const std::string& url) {
  HttpBackendConfig c;
  c.base_url = url;
  c.model = "test-model";
  c.api_key = "sk-test";
  c.request_timeout = std::chrono::seconds(5);
  c.retry.max_attempts = 4;
  c.retry.initial_backoff = std::chrono::milliseconds(100);
  c.retry.multiplier = 2.0;
  c.retry.max_backoff = std::chrono::milliseconds(250);
  return c;
}

struct SleepLog {
  std::vector<long long> ms;
  HttpBackend::Sleeper sleeper() {
    return [this](std::chrono::milliseconds d) { ms.push_back(d.count()); };
  }
};

}  // namespace

TEST_CASE("successful completion sends the documented request") {
  FakeApi api(0, 500);
  SleepLog sleeps;
  HttpBackend backend(config_for(api.base_url()), sleeps.sleeper());
  PromptSpec p{"sys", {{"d-in", "d-out"}}, "hello"};
  CHECK(backend.complete(p, {0.7, 123}) == "echo: hello");
  CHECK(api.requests == 1);
  CHECK(api.last_auth == "Bearer sk-test");
  CHECK(api.last_body["model"] == "test-model");
  CHECK(api.last_body["temperature"] == 0.7);
  CHECK(api.last_body["max_tokens"] == 123);
  CHECK(api.last_body["messages"] == to_messages(p));
  CHECK(sleeps.ms.empty());
  CHECK(backend.identity() == "test-model@" + api.base_url());
}

TEST_CASE("rate limits and server errors are retried with capped backoff") {
  for (int status : {429, 500, 503}) {
    CAPTURE(status);
    FakeApi api(3, status);
    SleepLog sleeps;
    HttpBackend backend(config_for(api.base_url()), sleeps.sleeper());
    CHECK(backend.complete(PromptSpec{"", {}, "x"}, {}) == "echo: x");
    CHECK(api.requests == 4);
    CHECK(sleeps.ms == std::vector<long long>{100, 200, 250});
  }
}

TEST_CASE("retry budget exhaustion is BackendUnavailable") {
  FakeApi api(100, 502);
  SleepLog sleeps;
  HttpBackend backend(config_for(api.base_url()), sleeps.sleeper());
  CHECK_ERROR(backend.complete(PromptSpec{"", {}, "x"}, {}), ErrorCode::kBackendUnavailable);
  CHECK(api.requests == 4);
  CHECK(sleeps.ms.size() == 3);
}

TEST_CASE("client errors fail without retry") {
  FakeApi api(100, 400);
  SleepLog sleeps;
  HttpBackend backend(config_for(api.base_url()), sleeps.sleeper());
  CHECK_ERROR(backend.complete(PromptSpec{"", {}, "x"}, {}), ErrorCode::kBackendUnavailable);
  CHECK(api.requests == 1);
  CHECK(sleeps.ms.empty());
}

TEST_CASE("connection failures are retried") {
  int port;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  SleepLog sleeps;
  auto cfg = config_for("http://127.0.0.1:" + std::to_string(port) + "/v1");
  cfg.request_timeout = std::chrono::seconds(1);
  HttpBackend backend(cfg, sleeps.sleeper());
  CHECK_ERROR(backend.complete(PromptSpec{"", {}, "x"}, {}), ErrorCode::kBackendUnavailable);
  CHECK(sleeps.ms.size() == 3);
}

TEST_CASE("configuration errors") {
  auto cfg = config_for("http://127.0.0.1:1/v1");
  cfg.api_key = "";
  CHECK_ERROR(HttpBackend(cfg), ErrorCode::kBackendUnavailable);
  cfg.api_key = "k";
  cfg.base_url = "127.0.0.1/v1";
  CHECK_ERROR(HttpBackend(cfg), ErrorCode::kInvalidArgument);
  cfg.base_url = "http://x";
  cfg.retry.max_attempts = 0;
  CHECK_ERROR(HttpBackend(cfg), ErrorCode::kInvalidArgument);
}
