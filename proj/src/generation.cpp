#include "aot/generation.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <thread>

#include "aot/error.hpp"
#include "aot/text_util.hpp"

namespace aot::generation {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kInvalidArgument, "SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string prompt_digest(const PromptSpec& prompt) {
  json demos = json::array();
  for (const auto& d : prompt.demonstrations) demos.push_back({d.input, d.output});
  return sha256_hex(json{{"system", prompt.system}, {"demonstrations", demos}, {"user", prompt.user}}
                        .dump());
}

json to_messages(const PromptSpec& prompt) {
  json messages = json::array();
  if (!prompt.system.empty()) messages.push_back({{"role", "system"}, {"content", prompt.system}});
  for (const auto& d : prompt.demonstrations) {
    messages.push_back({{"role", "user"}, {"content", d.input}});
    messages.push_back({{"role", "assistant"}, {"content", d.output}});
  }
  messages.push_back({{"role", "user"}, {"content", prompt.user}});
  return messages;
}

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
  }
}

std::vector<Demonstration> demos_from_json(const json& j) {
  std::vector<Demonstration> out;
  if (!j.is_array()) throw Error(ErrorCode::kMalformedRecord, "\"demonstrations\" must be an array");
  for (const auto& d : j) {
    if (!d.is_object() || !d.contains("input") || !d.contains("output")) {
      throw Error(ErrorCode::kMalformedRecord, "demonstration needs \"input\" and \"output\"");
    }
    out.push_back({d.at("input").get<std::string>(), d.at("output").get<std::string>()});
  }
  return out;
}

void require_three(std::size_t n) {
  if (n != 3) {
    throw Error(ErrorCode::kWrongDemoCount, "expected 3 demonstrations, got " + std::to_string(n));
  }
}

}  // namespace

PromptTemplate PromptTemplate::from_json(const json& j) {
  PromptTemplate t;
  try {
    t.name = j.value("name", std::string{});
    if (j.contains("modality") && !j.at("modality").is_null()) {
      t.modality = corpus::modality_from_string(j.at("modality").get<std::string>());
    }
    t.system = j.at("system").get<std::string>();
    t.demonstrations = demos_from_json(j.at("demonstrations"));
    t.user_template = j.at("user_template").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("prompt template: ") + e.what());
  }
  return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  return from_json(read_json_file(path));
}

bool PromptTemplate::uses(std::string_view placeholder) const {
  return user_template.find("{" + std::string(placeholder) + "}") != std::string::npos;
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  // Single left-to-right pass so substituted text is never re-scanned.
  std::string out;
  std::size_t i = 0;
  while (i < user_template.size()) {
    if (user_template[i] == '{') {
      std::size_t close = user_template.find('}', i + 1);
      if (close != std::string::npos) {
        auto it = values.find(user_template.substr(i + 1, close - i - 1));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(user_template[i++]);
  }
  return out;
}

PromptSpec build_collection_prompt(const corpus::Instance& inst, const PromptTemplate& tmpl) {
  if (!tmpl.modality || *tmpl.modality != inst.modality) {
    throw Error(ErrorCode::kTemplateModalityMismatch,
                "template \"" + tmpl.name + "\" is for " +
                    (tmpl.modality ? std::string(corpus::to_string(*tmpl.modality)) : "no modality") +
                    ", instance " + inst.id + " is " + std::string(corpus::to_string(inst.modality)));
  }
  require_three(tmpl.demonstrations.size());
  if (!tmpl.uses("question") || !tmpl.uses("gold_answer")) {
    throw Error(ErrorCode::kInvalidArgument,
                "collection template must reference {question} and {gold_answer}");
  }
  return PromptSpec{tmpl.system, tmpl.demonstrations,
                    tmpl.render({{"question", inst.question}, {"gold_answer", inst.gold_answer}})};
}

PromptSpec build_zeroshot_prompt(std::string_view question, bool instructed) {
  PromptSpec p;
  p.user = instructed ? std::string(kZeroShotInstruction) + "\n" + std::string(question)
                      : std::string(question);
  return p;
}

PromptSpec build_fewshot_prompt(std::string_view question, std::span<const Demonstration> demos) {
  require_three(demos.size());
  PromptSpec p;
  p.demonstrations.assign(demos.begin(), demos.end());
  p.user = std::string(question);
  return p;
}

FewShotPromptFile FewShotPromptFile::load(const std::filesystem::path& path) {
  json j = read_json_file(path);
  FewShotPromptFile f;
  try {
    f.task = j.at("task").get<std::string>();
    f.style = corpus::modality_from_string(j.value("style", std::string("text")));
    f.demonstrations = demos_from_json(j.at("demonstrations"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
  }
  require_three(f.demonstrations.size());
  return f;
}

// ---------------------------------------------------------------------------

MockBackend::MockBackend(Responder fallback) : fallback_(std::move(fallback)) {}

void MockBackend::script(const PromptSpec& prompt, std::vector<std::string> responses) {
  if (responses.empty()) throw Error(ErrorCode::kInvalidArgument, "empty mock script");
  std::lock_guard lock(mu_);
  scripts_[prompt_digest(prompt)] = std::move(responses);
}

std::string MockBackend::complete(const PromptSpec& prompt, const DecodingParams&) {
  const std::string digest = prompt_digest(prompt);
  int attempt;
  {
    std::lock_guard lock(mu_);
    attempt = ++counters_[digest];
    if (auto it = scripts_.find(digest); it != scripts_.end()) {
      const auto& script = it->second;
      return script[std::min<std::size_t>(static_cast<std::size_t>(attempt) - 1, script.size() - 1)];
    }
  }
  if (fallback_) return fallback_(prompt, attempt);
  return {};
}

int MockBackend::calls_for(const PromptSpec& prompt) const {
  std::lock_guard lock(mu_);
  auto it = counters_.find(prompt_digest(prompt));
  return it == counters_.end() ? 0 : it->second;
}

std::string api_key_from_env() {
  const char* key = std::getenv("AOT_API_KEY");
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::kBackendUnavailable, "AOT_API_KEY is not set");
  }
  return key;
}

// ---------------------------------------------------------------------------

DecodingParams RetryPolicy::params_for(int attempt) const {
  return DecodingParams{attempt <= 1 ? greedy_temperature : sampling_temperature, max_length};
}

GenerationOutcome generate_with_retry(const PromptSpec& prompt, Backend& backend,
                                      const Validator& validator, const RetryPolicy& policy) {
  GenerationOutcome outcome;
  for (int attempt = 1; attempt <= policy.max_attempts(); ++attempt) {
    GenerationAttempt record;
    record.attempt_index = attempt;
    record.params = policy.params_for(attempt);
    record.response = backend.complete(prompt, record.params);
    record.verdict = validator(record.response);
    const bool passed = record.verdict->passed;
    outcome.attempts.push_back(std::move(record));
    if (passed) {
      outcome.response = outcome.attempts.back().response;
      break;
    }
  }
  return outcome;
}

json attempt_to_json(std::string_view id, const GenerationAttempt& attempt) {
  return {{"id", std::string(id)},
          {"attempt", attempt.attempt_index},
          {"temperature", attempt.params.temperature},
          {"passed", attempt.verdict ? attempt.verdict->passed : false},
          {"response_digest", sha256_hex(attempt.response)}};
}

void run_generation(const std::vector<GenerationJob>& jobs, Backend& backend,
                    const std::function<Validator(const corpus::Instance&)>& make_validator,
                    const RetryPolicy& policy, int concurrency,
                    const std::function<void(const GenerationJob&, const GenerationOutcome&)>& emit) {
  if (concurrency < 1) throw Error(ErrorCode::kInvalidArgument, "concurrency must be >= 1");
  const std::size_t n = jobs.size();
  std::vector<std::optional<GenerationOutcome>> done(n);
  std::size_t next_emit = 0;
  std::mutex mu;
  std::atomic<std::size_t> next_job{0};
  std::exception_ptr failure;
  std::atomic<bool> stop{false};

  auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      std::size_t i = next_job.fetch_add(1);
      if (i >= n) return;
      try {
        GenerationOutcome outcome =
            generate_with_retry(jobs[i].prompt, backend, make_validator(jobs[i].instance), policy);
        std::lock_guard lock(mu);
        done[i] = std::move(outcome);
        // Emit the completed prefix so output order never depends on timing.
        while (next_emit < n && done[next_emit]) {
          emit(jobs[next_emit], *done[next_emit]);
          done[next_emit].reset();
          ++next_emit;
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        stop.store(true);
        return;
      }
    }
  };

  const int threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(concurrency), n));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

PromptSpec build_conversion_prompt(std::string_view aot_reasoning, const PromptTemplate& tmpl) {
  if (text::trim(aot_reasoning).empty()) {
    throw Error(ErrorCode::kInvalidArgument, "reasoning to convert is empty");
  }
  if (!tmpl.uses("reasoning")) {
    throw Error(ErrorCode::kInvalidArgument, "conversion template must reference {reasoning}");
  }
  if (tmpl.uses("question") || tmpl.uses("gold_answer")) {
    throw Error(ErrorCode::kInvalidArgument,
                "conversion template must not reference {question} or {gold_answer}");
  }
  return PromptSpec{tmpl.system, tmpl.demonstrations, tmpl.render({{"reasoning", std::string(aot_reasoning)}})};
}

std::string convert_aot_to_cot(std::string_view aot_reasoning, Backend& backend,
                               const PromptTemplate& tmpl, int max_length) {
  return backend.complete(build_conversion_prompt(aot_reasoning, tmpl), DecodingParams{0.0, max_length});
}

}  // namespace aot::generation
