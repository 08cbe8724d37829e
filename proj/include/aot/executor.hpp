#pragma once

// Program execution capability used by the code-track checks and by
// evaluation of code responses.
//
// ShimExecutor talks to the external sandbox shim:
//   stdin  <- {"source": str, "timeout": float}
//   fd 3   -> {"status": "success"|"exception"|"timeout", "stdout": str,
//              "returned": str|null, "elapsed": float, "detail": str}
//   (fallback: last stderr line prefixed "RESULT:")
//   exit code 0 whatever the program did; nonzero means the shim failed.

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace aot::exec {

enum class ExecStatus { kSuccess, kException, kTimeout };

std::string_view to_string(ExecStatus s);

struct ExecutionResult {
  ExecStatus status = ExecStatus::kException;
  std::string stdout_text;
  std::optional<std::string> returned;
  double elapsed = 0.0;
  std::string detail;
};

ExecutionResult result_from_json(const nlohmann::json& j);
nlohmann::json result_to_json(const ExecutionResult& r);

// Last non-empty line of the captured stdout, trimmed.
std::optional<std::string> last_printed_line(const ExecutionResult& r);

class Executor {
 public:
  virtual ~Executor() = default;
  // Must return within a bounded time of `timeout_seconds`.
  virtual ExecutionResult run(std::string_view source, double timeout_seconds) = 0;
};

class ShimExecutor final : public Executor {
 public:
  // `command` is argv for the shim, e.g. {"python3", "sandbox/run_program.py"}.
  explicit ShimExecutor(std::vector<std::string> command,
                        std::chrono::milliseconds grace = std::chrono::seconds(5));

  ExecutionResult run(std::string_view source, double timeout_seconds) override;

 private:
  std::vector<std::string> command_;
  std::chrono::milliseconds grace_;
};

// Table-driven executor for offline runs: the first rule whose `contains`
// substring occurs in the source decides the result.
class StubExecutor final : public Executor {
 public:
  struct Rule {
    std::string contains;
    ExecutionResult result;
  };

  explicit StubExecutor(std::vector<Rule> rules);

  // JSON array of {"contains": str, "status", "stdout", "returned", "detail"}.
  static StubExecutor load(const std::filesystem::path& path);

  ExecutionResult run(std::string_view source, double timeout_seconds) override;

 private:
  std::vector<Rule> rules_;
};

}  // namespace aot::exec
