#pragma once

// Validation stack that decides whether a generated response is kept:
// format gate, answer consistency and step degeneration for text responses;
// format gate and program execution for code responses.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "aot/corpus.hpp"
#include "aot/executor.hpp"
#include "aot/format.hpp"

namespace aot::filtering {

struct MatchOptions {
  bool case_fold = true;
  bool collapse_whitespace = true;
  // Applied when both sides parse as finite numbers.
  double numeric_tolerance = 1e-6;
  // Gold "(X)" also accepts predictions containing "(X)" or equal to "X".
  bool multiple_choice = false;
};

std::string normalize_answer(std::string_view s, const MatchOptions& options = {});
std::optional<double> parse_number(std::string_view s);
bool answers_match(std::string_view predicted, std::string_view gold,
                   const MatchOptions& options = {});

// |W(a) ∩ W(b)| / |W(a) ∪ W(b)| over case-folded whitespace-separated word
// sets; 0 when both are empty.
double jaccard_words(std::string_view a, std::string_view b);

enum class CheckId { kFormat, kAnswer, kDegeneration, kExecution };

std::string_view to_string(CheckId id);

struct CheckResult {
  CheckId check = CheckId::kFormat;
  bool passed = false;
  std::string detail;
};

struct FilterVerdict {
  bool passed = false;
  std::vector<CheckResult> checks;

  const CheckResult* find(CheckId id) const;
};

struct DegenerationOptions {
  double threshold = 0.5;  // a pair at or above this similarity fails
  bool include_purposes = false;
};

CheckResult check_step_degeneration(const format::AotTextDoc& doc,
                                    const DegenerationOptions& options = {});

CheckResult check_answer_consistency(const format::AotTextDoc& doc, std::string_view gold,
                                     const MatchOptions& options = {});

// Passes when the run succeeds and either the last printed line or the
// returned value matches gold. Throws kExecutorUnavailable when `executor`
// is null.
CheckResult check_code_execution(const format::AotCodeDoc& doc, std::string_view gold,
                                 exec::Executor* executor, double timeout_seconds,
                                 const MatchOptions& options = {});

struct FilterOptions {
  MatchOptions match;
  DegenerationOptions degeneration;
  double sandbox_timeout = 10.0;
};

// Gates run in order and stop at the first failure.
FilterVerdict filter_instance(const corpus::Instance& inst, std::string_view response,
                              exec::Executor* executor, const FilterOptions& options = {});

// {"id", "passed", "checks": [{"check", "passed", "detail"}]}
nlohmann::json verdict_to_json(std::string_view id, const FilterVerdict& verdict);

}  // namespace aot::filtering
