#include "aot/eval.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "aot/error.hpp"
#include "aot/format.hpp"
#include "aot/text_util.hpp"

namespace aot::eval {

using nlohmann::json;

namespace {

constexpr TaskGroup kN = TaskGroup::kNlp;
constexpr TaskGroup kA = TaskGroup::kAlg;

constexpr std::array<BbhEntry, 29> kBbh = {{
    {"boolean_expressions", kA, 250, "", true},
    {"causal_judgement", kN, 187, "", false},
    {"date_understanding", kN, 250, "", false},
    {"disambiguation_qa", kN, 250, "", false},
    {"dyck_languages", kA, 250, "", true},
    {"formal_fallacies", kN, 250, "", false},
    {"geometric_shapes", kA, 250, "", true},
    {"hyperbaton", kN, 250, "", false},
    {"logical_deduction", kA, 0, "", true},
    {"logical_deduction_five_objects", kA, 250, "logical_deduction", true},
    {"logical_deduction_seven_objects", kA, 250, "logical_deduction", true},
    {"logical_deduction_three_objects", kA, 250, "logical_deduction", true},
    {"movie_recommendation", kN, 250, "", false},
    {"multistep_arithmetic_two", kA, 250, "", true},
    {"navigate", kA, 250, "", true},
    {"object_counting", kA, 250, "", true},
    {"penguins_in_a_table", kN, 146, "", true},
    {"reasoning_about_colored_objects", kN, 250, "", false},
    {"ruin_names", kN, 250, "", false},
    {"salient_translation_error_detection", kN, 250, "", false},
    {"snarks", kN, 178, "", false},
    {"sports_understanding", kN, 250, "", false},
    {"temporal_sequences", kA, 250, "", true},
    {"tracking_shuffled_objects", kA, 0, "", true},
    {"tracking_shuffled_objects_five_objects", kA, 250, "tracking_shuffled_objects", true},
    {"tracking_shuffled_objects_seven_objects", kA, 250, "tracking_shuffled_objects", true},
    {"tracking_shuffled_objects_three_objects", kA, 250, "tracking_shuffled_objects", true},
    {"web_of_lies", kA, 250, "", true},
    {"word_sorting", kA, 250, "", true},
}};

constexpr std::array<ErrorLabel, kErrorLabelCount> kLabels = {
    ErrorLabel::kReasoningError,    ErrorLabel::kKnowledgeLacking, ErrorLabel::kTaskMisunderstanding,
    ErrorLabel::kConditionRepetition, ErrorLabel::kHallucination, ErrorLabel::kRuntimeError,
    ErrorLabel::kFalseNegative};

double percent(std::size_t part, std::size_t whole) {
  return 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string_view to_string(TaskGroup g) { return g == TaskGroup::kNlp ? "NLP" : "Alg"; }

TaskGroup task_group_from_string(std::string_view s) {
  std::string l = text::to_lower(s);
  if (l == "nlp") return TaskGroup::kNlp;
  if (l == "alg") return TaskGroup::kAlg;
  throw Error(ErrorCode::kMalformedRecord, "unknown task group \"" + std::string(s) + "\"");
}

std::span<const BbhEntry> bbh_table() { return kBbh; }

const BbhEntry* find_bbh(std::string_view name) {
  for (const auto& e : kBbh) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::vector<std::string> bbh_scored_tasks() {
  std::vector<std::string> out;
  for (const auto& e : kBbh) {
    if (e.parent.empty()) out.emplace_back(e.name);
  }
  return out;
}

TaskSpec TaskSpec::from_json(const json& j) {
  TaskSpec t;
  try {
    t.name = j.at("name").get<std::string>();
    t.group = task_group_from_string(j.at("group").get<std::string>());
    for (const auto& item : j.at("items")) {
      t.items.push_back({item.at("question").get<std::string>(), item.at("gold_answer").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("task file: ") + e.what());
  }
  if (t.items.empty()) throw Error(ErrorCode::kMalformedRecord, "task " + t.name + " has no items");
  if (const BbhEntry* e = find_bbh(t.name); e != nullptr && e->group != t.group) {
    throw Error(ErrorCode::kMalformedRecord, "task " + t.name + " belongs to group " +
                                                 std::string(to_string(e->group)));
  }
  return t;
}

TaskSpec TaskSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open task file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string_view to_string(ErrorLabel label) {
  switch (label) {
    case ErrorLabel::kReasoningError: return "Reasoning Error";
    case ErrorLabel::kKnowledgeLacking: return "Knowledge Lacking";
    case ErrorLabel::kTaskMisunderstanding: return "Task Misunderstanding";
    case ErrorLabel::kConditionRepetition: return "Condition Repetition";
    case ErrorLabel::kHallucination: return "Hallucination";
    case ErrorLabel::kRuntimeError: return "Runtime Error";
    case ErrorLabel::kFalseNegative: return "False Negative";
  }
  return "Reasoning Error";
}

ErrorLabel error_label_from_string(std::string_view s) {
  auto canon = [](std::string_view v) {
    std::string out;
    for (char c : text::trim(v)) {
      if (c == '_' || c == '-' || c == ' ') {
        if (!out.empty() && out.back() != ' ') out.push_back(' ');
      } else {
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      }
    }
    return out;
  };
  const std::string want = canon(s);
  for (ErrorLabel l : kLabels) {
    if (canon(to_string(l)) == want) return l;
  }
  throw Error(ErrorCode::kUnknownLabel, std::string(s));
}

std::span<const ErrorLabel> all_error_labels() { return kLabels; }

json record_to_json(const EvalRecord& r) {
  return {{"task", r.task},
          {"index", r.index},
          {"response", r.response},
          {"modality", corpus::to_string(r.modality)},
          {"prediction", r.prediction ? json(*r.prediction) : json(nullptr)},
          {"correct", r.correct},
          {"format_ok", r.format_ok},
          {"error_label", r.error_label ? json(to_string(*r.error_label)) : json(nullptr)}};
}

EvalRecord record_from_json(const json& j) {
  EvalRecord r;
  try {
    r.task = j.at("task").get<std::string>();
    r.index = j.at("index").get<std::size_t>();
    r.response = j.value("response", std::string{});
    r.modality = corpus::modality_from_string(j.at("modality").get<std::string>());
    if (j.contains("prediction") && !j.at("prediction").is_null()) {
      r.prediction = j.at("prediction").get<std::string>();
    }
    r.correct = j.at("correct").get<bool>();
    r.format_ok = j.at("format_ok").get<bool>();
    if (j.contains("error_label") && !j.at("error_label").is_null()) {
      r.error_label = error_label_from_string(j.at("error_label").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("eval record: ") + e.what());
  }
  if (r.correct && !r.prediction) {
    throw Error(ErrorCode::kMalformedRecord, "record marked correct without a prediction");
  }
  return r;
}

Modality classify_modality(std::string_view response) {
  if (format::has_fenced_block(response)) return Modality::kCode;
  if (format::has_top_level_definition(response)) return Modality::kCode;
  return Modality::kText;
}

namespace {

struct CodeRun {
  std::optional<exec::ExecutionResult> result;
  std::optional<std::string> prediction;
};

CodeRun run_code(std::string_view response, exec::Executor* executor, const EvalOptions& options) {
  CodeRun out;
  if (executor == nullptr) return out;
  auto region = format::extract_code_region(response);
  if (text::trim(region.code).empty()) return out;
  out.result = executor->run(region.code, options.sandbox_timeout);
  if (out.result->status == exec::ExecStatus::kSuccess) {
    out.prediction = exec::last_printed_line(*out.result);
    if (!out.prediction && out.result->returned) {
      out.prediction = std::string(text::trim(*out.result->returned));
    }
  }
  return out;
}

std::optional<std::string> text_prediction(std::string_view response) {
  auto span = format::find_last_boxed(response);
  if (!span) return std::nullopt;
  return std::string(response.substr(span->content_begin, span->content_end - span->content_begin));
}

}  // namespace

std::optional<std::string> extract_prediction(std::string_view response, exec::Executor* executor,
                                              const EvalOptions& options) {
  if (classify_modality(response) == Modality::kText) return text_prediction(response);
  return run_code(response, executor, options).prediction;
}

EvalRecord evaluate_response(std::string_view task, std::size_t index, std::string_view response,
                             std::string_view gold, exec::Executor* executor,
                             const EvalOptions& options) {
  EvalRecord r;
  r.task = std::string(task);
  r.index = index;
  r.response = std::string(response);
  r.modality = classify_modality(response);

  if (r.modality == Modality::kText) {
    r.prediction = text_prediction(response);
    try {
      r.format_ok = format::validate_text_aot(format::parse_text_aot(response)).ok();
    } catch (const Error&) {
      r.format_ok = false;
    }
  } else {
    CodeRun run = run_code(response, executor, options);
    r.prediction = run.prediction;
    bool structure_ok = false;
    try {
      structure_ok =
          format::validate_code_aot(format::parse_code_aot(response, {.require_annotations = false})).ok();
    } catch (const Error&) {
      structure_ok = false;
    }
    r.format_ok = structure_ok && run.result && run.result->status == exec::ExecStatus::kSuccess;
  }
  r.correct = r.prediction && filtering::answers_match(*r.prediction, gold, options.match);
  return r;
}

double score_task(const TaskSpec& task, std::span<const EvalRecord> records,
                  const filtering::MatchOptions& match) {
  std::vector<int> seen(task.items.size(), 0);
  std::size_t correct = 0;
  for (const auto& r : records) {
    if (r.task != task.name) continue;
    if (r.index >= task.items.size()) {
      throw Error(ErrorCode::kCoverageMismatch,
                  task.name + ": record index " + std::to_string(r.index) + " out of range");
    }
    if (++seen[r.index] > 1) {
      throw Error(ErrorCode::kCoverageMismatch,
                  task.name + ": item " + std::to_string(r.index) + " scored twice");
    }
    if (r.prediction && filtering::answers_match(*r.prediction, task.items[r.index].gold_answer, match)) {
      ++correct;
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i] == 0) {
      throw Error(ErrorCode::kCoverageMismatch, task.name + ": item " + std::to_string(i) + " missing");
    }
  }
  return percent(correct, task.items.size());
}

GroupReport aggregate_groups(const std::map<std::string, double>& per_task) {
  std::map<std::string, std::vector<double>> sub;
  GroupReport report;
  for (const auto& [name, acc] : per_task) {
    const BbhEntry* e = find_bbh(name);
    if (e == nullptr) throw Error(ErrorCode::kUnknownTask, name);
    if (!e->parent.empty()) {
      sub[std::string(e->parent)].push_back(acc);
    } else {
      report.per_task[name] = acc;
    }
  }
  for (const auto& [parent, accs] : sub) {
    if (report.per_task.contains(parent)) {
      throw Error(ErrorCode::kInvalidArgument,
                  parent + " given both directly and through its sub-tasks");
    }
    double sum = 0.0;
    for (double a : accs) sum += a;
    report.per_task[parent] = sum / static_cast<double>(accs.size());
  }

  double nlp_sum = 0.0, alg_sum = 0.0;
  std::size_t nlp_n = 0, alg_n = 0;
  for (const auto& [name, acc] : report.per_task) {
    if (find_bbh(name)->group == TaskGroup::kNlp) {
      nlp_sum += acc;
      ++nlp_n;
    } else {
      alg_sum += acc;
      ++alg_n;
    }
  }
  if (nlp_n > 0) report.nlp = nlp_sum / static_cast<double>(nlp_n);
  if (alg_n > 0) report.alg = alg_sum / static_cast<double>(alg_n);
  if (nlp_n + alg_n > 0) report.all = (nlp_sum + alg_sum) / static_cast<double>(nlp_n + alg_n);
  return report;
}

json report_to_json(const GroupReport& report) {
  return {{"per_task", report.per_task},
          {"NLP", optional_number(report.nlp)},
          {"Alg", optional_number(report.alg)},
          {"All", optional_number(report.all)}};
}

ResponseAnalysis response_analysis(std::span<const EvalRecord> records) {
  if (records.empty()) throw Error(ErrorCode::kInvalidArgument, "no records to analyze");
  struct Counts {
    std::size_t n = 0, fc = 0, ac = 0;
  } text_c, code_c;
  for (const auto& r : records) {
    Counts& c = r.modality == Modality::kText ? text_c : code_c;
    ++c.n;
    if (r.format_ok && r.prediction) ++c.fc;
    if (r.correct) ++c.ac;
  }
  auto finish = [&](const Counts& c) {
    ModalityAnalysis m;
    m.responses = c.n;
    m.usage_rate = percent(c.n, records.size());
    if (c.n > 0) {
      m.format_correctness = percent(c.fc, c.n);
      m.answer_correctness = percent(c.ac, c.n);
    }
    return m;
  };
  return ResponseAnalysis{finish(text_c), finish(code_c)};
}

json analysis_to_json(const ResponseAnalysis& analysis) {
  auto one = [](const ModalityAnalysis& m) {
    return json{{"responses", m.responses},
                {"UR", m.usage_rate},
                {"FC", optional_number(m.format_correctness)},
                {"AC", optional_number(m.answer_correctness)}};
  };
  return {{"text", one(analysis.text)}, {"code", one(analysis.code)}};
}

ErrorDistribution error_distribution(std::span<const EvalRecord> records) {
  ErrorDistribution d;
  std::map<ErrorLabel, std::size_t> counts;
  std::size_t incorrect = 0;
  for (const auto& r : records) {
    if (r.error_label) {
      if (r.correct) {
        throw Error(ErrorCode::kInvalidArgument,
                    r.task + "#" + std::to_string(r.index) + " is correct but carries an error label");
      }
      ++counts[*r.error_label];
      ++d.labeled;
    }
    if (!r.correct) {
      ++incorrect;
      if (!r.error_label) ++d.unannotated;
    }
  }
  for (ErrorLabel l : kLabels) {
    d.percent[l] = d.labeled == 0 ? 0.0 : percent(counts[l], d.labeled);
  }
  d.unannotated_percent = incorrect == 0 ? 0.0 : percent(d.unannotated, incorrect);
  return d;
}

json distribution_to_json(const ErrorDistribution& d) {
  json pct = json::object();
  for (const auto& [label, p] : d.percent) pct[std::string(to_string(label))] = p;
  return {{"percent", pct},
          {"labeled", d.labeled},
          {"unannotated", d.unannotated},
          {"unannotated_percent", d.unannotated_percent}};
}

namespace {

// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF.
std::vector<std::vector<std::string>> parse_csv(std::string_view csv) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < csv.size(); ++i) {
    char c = csv[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < csv.size() && csv[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < csv.size() && csv[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw Error(ErrorCode::kMalformedRecord, "unterminated quote in CSV");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void apply_error_labels(std::vector<EvalRecord>& records, std::string_view csv) {
  auto rows = parse_csv(csv);
  if (rows.empty()) return;
  int col_task = -1, col_index = -1, col_label = -1;
  for (int c = 0; c < static_cast<int>(rows[0].size()); ++c) {
    std::string h = text::to_lower(text::trim(rows[0][c]));
    if (h == "task") col_task = c;
    if (h == "index") col_index = c;
    if (h == "label") col_label = c;
  }
  if (col_task < 0 || col_index < 0 || col_label < 0) {
    throw Error(ErrorCode::kMalformedRecord, "label CSV needs task,index,label columns");
  }
  std::map<std::pair<std::string, std::size_t>, EvalRecord*> by_key;
  for (auto& r : records) by_key[{r.task, r.index}] = &r;

  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    std::string where = "CSV row " + std::to_string(i + 1);
    int needed = std::max({col_task, col_index, col_label});
    if (static_cast<int>(row.size()) <= needed) throw Error(ErrorCode::kMalformedRecord, where + ": too few fields");
    std::size_t index;
    try {
      std::size_t used = 0;
      std::string idx(text::trim(row[col_index]));
      index = std::stoul(idx, &used);
      if (used != idx.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::kMalformedRecord, where + ": bad index");
    }
    ErrorLabel label = error_label_from_string(row[col_label]);
    auto it = by_key.find({std::string(text::trim(row[col_task])), index});
    if (it == by_key.end()) throw Error(ErrorCode::kMalformedRecord, where + ": no such record");
    if (it->second->correct) {
      throw Error(ErrorCode::kInvalidArgument, where + ": labels apply only to incorrect records");
    }
    it->second->error_label = label;
  }
}

std::vector<EvalRecord> run_eval(std::span<const TaskSpec> tasks, const ResponseSource& source,
                                 exec::Executor* executor, const EvalOptions& options,
                                 int concurrency, const ItemFilter& skip) {
  struct Item {
    const TaskSpec* task;
    std::size_t index;
  };
  std::vector<Item> items;
  for (const auto& t : tasks) {
    for (std::size_t i = 0; i < t.items.size(); ++i) {
      if (!skip || !skip(t, i)) items.push_back({&t, i});
    }
  }
  std::vector<EvalRecord> records(items.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;

  auto worker = [&] {
    for (;;) {
      std::size_t k = next.fetch_add(1);
      if (k >= items.size()) return;
      try {
        const auto& [task, index] = items[k];
        std::string response = source(*task, index);
        records[k] = evaluate_response(task->name, index, response, task->items[index].gold_answer,
                                       executor, options);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next.store(items.size());
        return;
      }
    }
  };
  if (concurrency <= 1 || items.size() <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    int threads = std::min<int>(concurrency, static_cast<int>(items.size()));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return records;
}

}  // namespace aot::eval
