#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <algorithm>
#include <thread>

#include "aot/error.hpp"
#include "aot/generation.hpp"

namespace aot::generation {

using nlohmann::json;

namespace {

bool retriable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleep_(std::move(sleeper)) {
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (config_.api_key.empty()) throw Error(ErrorCode::kBackendUnavailable, "no API key configured");
  if (config_.retry.max_attempts < 1) {
    throw Error(ErrorCode::kInvalidArgument, "transport retry needs at least one attempt");
  }

  // "https://host:port/v1" -> ("https://host:port", "/v1")
  const std::string& url = config_.base_url;
  std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "backend base URL needs a scheme: " + url);
  }
  std::size_t path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpBackend::identity() const { return config_.model + "@" + config_.base_url; }

std::string HttpBackend::complete(const PromptSpec& prompt, const DecodingParams& params) {
  const json body = {{"model", config_.model},
                     {"messages", to_messages(prompt)},
                     {"temperature", params.temperature},
                     {"max_tokens", params.max_length}};
  const std::string payload = body.dump();
  const httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};

  std::string last_error;
  auto backoff = config_.retry.initial_backoff;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    httplib::Client client(scheme_host_port_);
    const auto timeout = config_.request_timeout;
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    auto res = client.Post(path_prefix_ + "/chat/completions", headers, payload, "application/json");
    if (!res) {
      last_error = "transport: " + httplib::to_string(res.error());
    } else if (res->status == 200) {
      try {
        json j = json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const json::exception& e) {
        throw Error(ErrorCode::kBackendUnavailable, std::string("malformed completion: ") + e.what());
      }
    } else if (retriable_status(res->status)) {
      last_error = "HTTP " + std::to_string(res->status);
    } else {
      throw Error(ErrorCode::kBackendUnavailable,
                  "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }

    if (attempt < config_.retry.max_attempts) {
      sleep_(backoff);
      auto grown = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * config_.retry.multiplier));
      backoff = std::min(grown, config_.retry.max_backoff);
    }
  }
  throw Error(ErrorCode::kBackendUnavailable,
              last_error + " after " + std::to_string(config_.retry.max_attempts) + " attempts");
}

}  // namespace aot::generation
