#pragma once

// Prompt construction, LLM backends and the regeneration policy used to
// collect responses.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "aot/corpus.hpp"
#include "aot/filtering.hpp"

namespace aot::generation {

inline constexpr std::string_view kZeroShotInstruction =
    "Answer the question and put the final answer in \\boxed{}.";

struct Demonstration {
  std::string input;
  std::string output;

  bool operator==(const Demonstration&) const = default;
};

struct PromptSpec {
  std::string system;
  std::vector<Demonstration> demonstrations;
  std::string user;

  bool operator==(const PromptSpec&) const = default;
};

// Hex SHA-256 of a canonical encoding of every field.
std::string prompt_digest(const PromptSpec& prompt);
std::string sha256_hex(std::string_view data);

// Chat-completions style message list: system, demo user/assistant pairs, user.
nlohmann::json to_messages(const PromptSpec& prompt);

struct DecodingParams {
  double temperature = 0.0;
  int max_length = 2048;
};

// Prompt file: {"name", "modality"?, "system", "demonstrations": [{"input",
// "output"}], "user_template"}. The user template may reference {question},
// {gold_answer} and {reasoning}.
struct PromptTemplate {
  std::string name;
  std::optional<corpus::Modality> modality;
  std::string system;
  std::vector<Demonstration> demonstrations;
  std::string user_template;

  static PromptTemplate load(const std::filesystem::path& path);
  static PromptTemplate from_json(const nlohmann::json& j);

  bool uses(std::string_view placeholder) const;
  std::string render(const std::map<std::string, std::string>& values) const;
};

// Requires a 3-demonstration template of the instance's modality whose user
// template embeds both {question} and {gold_answer}.
PromptSpec build_collection_prompt(const corpus::Instance& inst, const PromptTemplate& tmpl);

PromptSpec build_zeroshot_prompt(std::string_view question, bool instructed);

// Throws kWrongDemoCount unless exactly three demonstrations are given.
PromptSpec build_fewshot_prompt(std::string_view question, std::span<const Demonstration> demos);

// {"task", "style": "text"|"code", "demonstrations": [{"input", "output"}]}
struct FewShotPromptFile {
  std::string task;
  corpus::Modality style = corpus::Modality::kText;
  std::vector<Demonstration> demonstrations;

  static FewShotPromptFile load(const std::filesystem::path& path);
};

class Backend {
 public:
  virtual ~Backend() = default;
  // Throws Error(kBackendUnavailable) when no response can be obtained.
  virtual std::string complete(const PromptSpec& prompt, const DecodingParams& params) = 0;
  virtual std::string identity() const = 0;
};

// Deterministic offline backend. Each response is a function of the prompt
// digest and how many times that digest has been requested before.
class MockBackend final : public Backend {
 public:
  using Responder = std::function<std::string(const PromptSpec&, int attempt)>;

  explicit MockBackend(Responder fallback = {});

  // Responses for attempts 1..k of `prompt`; the last one repeats.
  void script(const PromptSpec& prompt, std::vector<std::string> responses);

  std::string complete(const PromptSpec& prompt, const DecodingParams& params) override;
  std::string identity() const override { return "mock"; }

  int calls_for(const PromptSpec& prompt) const;

 private:
  Responder fallback_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::vector<std::string>> scripts_;
  std::unordered_map<std::string, int> counters_;
};

struct TransportRetry {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30000};
};

struct HttpBackendConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-3.5-turbo";
  std::string api_key;
  std::chrono::seconds request_timeout{120};
  TransportRetry retry;
};

// OpenAI-compatible chat-completions client. Connection failures, 429 and
// 5xx responses are retried with exponential backoff; this is independent of
// the regeneration budget in RetryPolicy.
class HttpBackend final : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpBackend(HttpBackendConfig config, Sleeper sleeper = {});

  std::string complete(const PromptSpec& prompt, const DecodingParams& params) override;
  std::string identity() const override;

 private:
  HttpBackendConfig config_;
  Sleeper sleep_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

// Reads AOT_API_KEY; throws kBackendUnavailable when it is unset or empty.
std::string api_key_from_env();

struct RetryPolicy {
  int regenerations = 10;
  double greedy_temperature = 0.0;
  double sampling_temperature = 0.7;
  int max_length = 2048;

  int max_attempts() const { return regenerations + 1; }
  DecodingParams params_for(int attempt) const;
};

struct GenerationAttempt {
  int attempt_index = 0;  // 1-based
  DecodingParams params;
  std::string response;
  std::optional<filtering::FilterVerdict> verdict;
};

struct GenerationOutcome {
  std::optional<std::string> response;  // first passing response; unset means discarded
  std::vector<GenerationAttempt> attempts;
};

using Validator = std::function<filtering::FilterVerdict(std::string_view response)>;

// Attempt 1 is greedy; attempts 2..regenerations+1 sample. Stops at the first
// response the validator accepts.
GenerationOutcome generate_with_retry(const PromptSpec& prompt, Backend& backend,
                                      const Validator& validator, const RetryPolicy& policy = {});

// {"id", "attempt", "temperature", "passed", "response_digest"}
nlohmann::json attempt_to_json(std::string_view id, const GenerationAttempt& attempt);

struct GenerationJob {
  corpus::Instance instance;
  PromptSpec prompt;
};

// Runs jobs with at most `concurrency` in flight. `emit` is called from one
// thread at a time and in job order.
void run_generation(const std::vector<GenerationJob>& jobs, Backend& backend,
                    const std::function<Validator(const corpus::Instance&)>& make_validator,
                    const RetryPolicy& policy, int concurrency,
                    const std::function<void(const GenerationJob&, const GenerationOutcome&)>& emit);

// The template must reference {reasoning} and neither {question} nor
// {gold_answer}. Decodes greedily.
PromptSpec build_conversion_prompt(std::string_view aot_reasoning, const PromptTemplate& tmpl);
std::string convert_aot_to_cot(std::string_view aot_reasoning, Backend& backend,
                               const PromptTemplate& tmpl, int max_length = 2048);

}  // namespace aot::generation
