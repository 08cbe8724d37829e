#pragma once

// Benchmark evaluation: prediction extraction by response modality, task
// scoring, NLP/Alg/All macro averages, usage/format/answer-correctness
// analysis and error-category distributions.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "aot/corpus.hpp"
#include "aot/executor.hpp"
#include "aot/filtering.hpp"

namespace aot::eval {

using corpus::Modality;

enum class TaskGroup { kNlp, kAlg };

std::string_view to_string(TaskGroup g);
TaskGroup task_group_from_string(std::string_view s);

struct BbhEntry {
  std::string_view name;
  TaskGroup group;
  int questions;           // 0 for tasks that are only a container of sub-tasks
  std::string_view parent;  // non-empty for sub-tasks
  bool program_style;      // few-shot rationale written as a program
};

// Every BBH task and sub-task.
std::span<const BbhEntry> bbh_table();
const BbhEntry* find_bbh(std::string_view name);
// The 23 top-level tasks that enter the group averages.
std::vector<std::string> bbh_scored_tasks();

struct TaskItem {
  std::string question;
  std::string gold_answer;
};

struct TaskSpec {
  std::string name;
  TaskGroup group = TaskGroup::kNlp;
  std::vector<TaskItem> items;

  // {"name", "group": "NLP"|"Alg", "items": [{"question", "gold_answer"}]}
  static TaskSpec load(const std::filesystem::path& path);
  static TaskSpec from_json(const nlohmann::json& j);
};

enum class ErrorLabel {
  kReasoningError,
  kKnowledgeLacking,
  kTaskMisunderstanding,
  kConditionRepetition,
  kHallucination,
  kRuntimeError,
  kFalseNegative,
};

inline constexpr std::size_t kErrorLabelCount = 7;

std::string_view to_string(ErrorLabel label);
// Case-insensitive; spaces, '-' and '_' are interchangeable. Throws kUnknownLabel.
ErrorLabel error_label_from_string(std::string_view s);
std::span<const ErrorLabel> all_error_labels();

struct EvalRecord {
  std::string task;
  std::size_t index = 0;
  std::string response;
  Modality modality = Modality::kText;
  std::optional<std::string> prediction;
  bool correct = false;
  bool format_ok = false;
  std::optional<ErrorLabel> error_label;
};

nlohmann::json record_to_json(const EvalRecord& r);
EvalRecord record_from_json(const nlohmann::json& j);

// Code when a fenced block is present, or without fences when the text has a
// top-level def/class; otherwise text.
Modality classify_modality(std::string_view response);

struct EvalOptions {
  filtering::MatchOptions match{.multiple_choice = true};
  double sandbox_timeout = 10.0;
};

// Text: content of the last \boxed{}. Code: last printed line of the program,
// else its returned value. nullopt when nothing can be extracted; a code
// response without an executor yields nullopt.
std::optional<std::string> extract_prediction(std::string_view response, exec::Executor* executor,
                                              const EvalOptions& options = {});

EvalRecord evaluate_response(std::string_view task, std::size_t index, std::string_view response,
                             std::string_view gold, exec::Executor* executor,
                             const EvalOptions& options = {});

// 100 * correct / items. Records are those whose task equals task.name and
// must cover each item index exactly once (kCoverageMismatch otherwise).
double score_task(const TaskSpec& task, std::span<const EvalRecord> records,
                  const filtering::MatchOptions& match = {.multiple_choice = true});

struct GroupReport {
  std::map<std::string, double> per_task;
  std::optional<double> nlp;
  std::optional<double> alg;
  std::optional<double> all;
};

// Sub-task accuracies are averaged into their parent first. Throws
// kUnknownTask for names outside the BBH table.
GroupReport aggregate_groups(const std::map<std::string, double>& per_task);

nlohmann::json report_to_json(const GroupReport& report);

struct ModalityAnalysis {
  std::size_t responses = 0;
  double usage_rate = 0.0;
  std::optional<double> format_correctness;
  std::optional<double> answer_correctness;
};

struct ResponseAnalysis {
  ModalityAnalysis text;
  ModalityAnalysis code;
};

ResponseAnalysis response_analysis(std::span<const EvalRecord> records);
nlohmann::json analysis_to_json(const ResponseAnalysis& analysis);

struct ErrorDistribution {
  std::map<ErrorLabel, double> percent;  // over labeled records
  std::size_t labeled = 0;
  std::size_t unannotated = 0;           // incorrect records without a label
  double unannotated_percent = 0.0;      // over incorrect records
};

ErrorDistribution error_distribution(std::span<const EvalRecord> records);
nlohmann::json distribution_to_json(const ErrorDistribution& d);

// CSV with header task,index,label. Labels may only land on incorrect records.
void apply_error_labels(std::vector<EvalRecord>& records, std::string_view csv);

// One response per (task item). Implementations may call a backend.
using ResponseSource =
    std::function<std::string(const TaskSpec& task, std::size_t index)>;

using ItemFilter = std::function<bool(const TaskSpec& task, std::size_t index)>;

// Records come back in task order, then item order. Items for which `skip`
// returns true are neither requested nor returned.
std::vector<EvalRecord> run_eval(std::span<const TaskSpec> tasks, const ResponseSource& source,
                                 exec::Executor* executor, const EvalOptions& options = {},
                                 int concurrency = 1, const ItemFilter& skip = {});

}  // namespace aot::eval
