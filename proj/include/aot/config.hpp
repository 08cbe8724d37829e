#pragma once

// Pipeline settings shared by the CLI subcommands. Defaults mirror the
// collection setup: greedy first attempt, 10 regenerations at 0.7, 2048
// tokens, 10 s sandbox limit.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "aot/corpus.hpp"
#include "aot/filtering.hpp"
#include "aot/generation.hpp"

namespace aot::config {

enum class BackendKind { kReal, kMock };

std::string_view to_string(BackendKind k);
BackendKind backend_kind_from_string(std::string_view s);

struct BackendSettings {
  BackendKind kind = BackendKind::kMock;
  std::string model = "gpt-3.5-turbo";
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key = "${AOT_API_KEY}";
  double request_timeout = 120.0;
  int transport_attempts = 5;
  std::string mock_script;  // JSON {"<id>": ["response", ...]}
};

struct SandboxSettings {
  double timeout = 10.0;
  std::vector<std::string> shim;  // argv of the sandbox shim
  std::string stub;               // stub rule file; replaces the shim when set
};

struct PipelineConfig {
  std::string corpus;
  std::string split_lists;
  std::optional<corpus::Modality> unknown_dataset_modality;
  std::size_t n_text = 200000;
  std::size_t n_code = 200000;
  std::uint64_t seed = 0;
  BackendSettings backend;
  generation::RetryPolicy retry;
  int concurrency = 8;
  SandboxSettings sandbox;
  filtering::DegenerationOptions degeneration;
  std::string prompt_text;
  std::string prompt_code;
  std::string prompt_aot2cot;
  std::string out = "out";
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

// Replaces ${NAME} with the variable's value (empty when unset). "$${" yields
// a literal "${".
std::string interpolate(std::string_view s, const EnvLookup& env);

// Defaults with resource paths (split lists, prompts, shim) under `resource_dir`.
PipelineConfig defaults(const std::filesystem::path& resource_dir);

// Overlay a JSON config document. Unknown keys are rejected so typos do not
// silently fall back to defaults. Relative paths resolve against `base_dir`.
void apply_json(PipelineConfig& cfg, const nlohmann::json& j, const std::filesystem::path& base_dir,
                const EnvLookup& env);

PipelineConfig load(const std::filesystem::path& path, const std::filesystem::path& resource_dir,
                    const EnvLookup& env);

// Throws kInvalidArgument on out-of-range values.
void validate(const PipelineConfig& cfg);

// Process environment lookup.
std::optional<std::string> process_env(const std::string& name);

}  // namespace aot::config
