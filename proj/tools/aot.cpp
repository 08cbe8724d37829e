// aot: command-line driver for the collection pipeline and the evaluation
// harness.
//
//   aot sample    corpus  -> sample.jsonl
//   aot generate  sample  -> retained.jsonl, discarded.jsonl, attempts.jsonl,
//                            attempt_verdicts.jsonl
//   aot filter    responses -> verdicts.jsonl
//   aot stats     records -> stats.json
//   aot eval      task files + responses (or a backend) -> eval_records.jsonl,
//                 report.json, analysis.json
//   aot analyze   eval records [+ label CSV] -> analysis.json
//   aot convert   retained AoT responses -> aot2cot.jsonl
//
// Exit status: 0 success, 2 input error, 3 backend or executor unavailable.
// JSONL outputs are append-only; a rerun skips ids already present.
// Timestamps only appear in the <command>.meta.json sidecar.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aot/config.hpp"
#include "aot/corpus.hpp"
#include "aot/error.hpp"
#include "aot/eval.hpp"
#include "aot/executor.hpp"
#include "aot/filtering.hpp"
#include "aot/generation.hpp"
#include "aot/jsonl.hpp"

#ifndef AOT_RESOURCE_DIR
#define AOT_RESOURCE_DIR "."
#endif

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using aot::Error;
using aot::ErrorCode;
using aot::corpus::Instance;
using aot::corpus::Modality;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitUnavailable = 3;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kBackendUnavailable:
    case ErrorCode::kExecutorUnavailable:
      return kExitUnavailable;
    default:
      return kExitInput;
  }
}

std::string utc_now() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path resource_dir() {
  if (auto env = aot::config::process_env("AOT_RESOURCE_DIR"); env && !env->empty()) return *env;
  return AOT_RESOURCE_DIR;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& value) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << value.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string where(const fs::path& file, std::size_t line) {
  return file.string() + " line " + std::to_string(line);
}

const std::string& string_field(const json& j, const char* key, const std::string& at) {
  if (!j.is_object() || !j.contains(key) || !j.at(key).is_string()) {
    throw Error(ErrorCode::kMalformedRecord, at + ": missing string field \"" + key + "\"");
  }
  return j.at(key).get_ref<const std::string&>();
}

// ---------------------------------------------------------------------------

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string backend;
  std::string mock_script;
  std::string executor_stub;
  std::optional<int> concurrency;
};

aot::config::PipelineConfig resolve_config(const Globals& g) {
  auto cfg = g.config_path.empty()
                 ? aot::config::defaults(resource_dir())
                 : aot::config::load(g.config_path, resource_dir(), aot::config::process_env);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out = g.out;
  if (!g.backend.empty()) cfg.backend.kind = aot::config::backend_kind_from_string(g.backend);
  if (!g.mock_script.empty()) cfg.backend.mock_script = g.mock_script;
  if (!g.executor_stub.empty()) cfg.sandbox.stub = g.executor_stub;
  if (g.concurrency) cfg.concurrency = *g.concurrency;
  aot::config::validate(cfg);
  return cfg;
}

json describe_config(const aot::config::PipelineConfig& c) {
  return {{"corpus", c.corpus},
          {"split_lists", c.split_lists},
          {"n_text", c.n_text},
          {"n_code", c.n_code},
          {"seed", c.seed},
          {"backend",
           {{"kind", aot::config::to_string(c.backend.kind)},
            {"model", c.backend.model},
            {"base_url", c.backend.base_url},
            {"mock_script", c.backend.mock_script}}},
          {"retry",
           {{"regenerations", c.retry.regenerations},
            {"greedy_temperature", c.retry.greedy_temperature},
            {"sampling_temperature", c.retry.sampling_temperature},
            {"max_length", c.retry.max_length}}},
          {"concurrency", c.concurrency},
          {"sandbox", {{"timeout", c.sandbox.timeout}, {"shim", c.sandbox.shim}, {"stub", c.sandbox.stub}}},
          {"degeneration",
           {{"threshold", c.degeneration.threshold},
            {"include_purposes", c.degeneration.include_purposes}}},
          {"prompts", {{"text", c.prompt_text}, {"code", c.prompt_code}, {"aot2cot", c.prompt_aot2cot}}},
          {"out", c.out}};
}

class RunMeta {
 public:
  RunMeta(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)), started_(utc_now()) {}

  void finish(const aot::config::PipelineConfig& cfg, const std::string& backend_identity,
              json summary) const {
    json meta = {{"command", command_},
                 {"argv", argv_},
                 {"started_at", started_},
                 {"finished_at", utc_now()},
                 {"seed", cfg.seed},
                 {"backend", backend_identity},
                 {"config", describe_config(cfg)},
                 {"summary", std::move(summary)}};
    write_json_file(fs::path(cfg.out) / (command_ + ".meta.json"), meta);
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::string started_;
};

using MockScript = std::map<std::string, std::vector<std::string>>;

MockScript load_mock_script(const std::string& path) {
  MockScript script;
  if (path.empty()) return script;
  json j = read_json_file(path);
  if (!j.is_object()) throw Error(ErrorCode::kMalformedRecord, path + ": expected {\"<id>\": [responses]}");
  for (const auto& [key, value] : j.items()) {
    std::vector<std::string> responses;
    if (value.is_string()) {
      responses.push_back(value.get<std::string>());
    } else if (value.is_array() && !value.empty()) {
      for (const auto& r : value) {
        if (!r.is_string()) throw Error(ErrorCode::kMalformedRecord, path + ": responses must be strings");
        responses.push_back(r.get<std::string>());
      }
    } else {
      throw Error(ErrorCode::kMalformedRecord, path + ": \"" + key + "\" needs a response list");
    }
    script[key] = std::move(responses);
  }
  return script;
}

// The backend plus, for the mock, the per-key script used to seed it.
struct BackendHandle {
  std::unique_ptr<aot::generation::Backend> backend;
  aot::generation::MockBackend* mock = nullptr;
  MockScript script;

  void script_prompt(const std::string& key, const aot::generation::PromptSpec& prompt) {
    if (mock == nullptr) return;
    if (auto it = script.find(key); it != script.end()) mock->script(prompt, it->second);
  }
};

BackendHandle make_backend(const aot::config::PipelineConfig& cfg) {
  BackendHandle h;
  if (cfg.backend.kind == aot::config::BackendKind::kReal) {
    aot::generation::HttpBackendConfig hc;
    hc.base_url = cfg.backend.base_url;
    hc.model = cfg.backend.model;
    hc.api_key = aot::config::interpolate(cfg.backend.api_key, aot::config::process_env);
    if (hc.api_key.empty()) {
      throw Error(ErrorCode::kBackendUnavailable, "no API key (set AOT_API_KEY or backend.api_key)");
    }
    hc.request_timeout = std::chrono::seconds(static_cast<long long>(cfg.backend.request_timeout));
    hc.retry.max_attempts = cfg.backend.transport_attempts;
    h.backend = std::make_unique<aot::generation::HttpBackend>(std::move(hc));
  } else {
    auto mock = std::make_unique<aot::generation::MockBackend>();
    h.mock = mock.get();
    h.backend = std::move(mock);
    h.script = load_mock_script(cfg.backend.mock_script);
  }
  return h;
}

std::unique_ptr<aot::exec::Executor> make_executor(const aot::config::PipelineConfig& cfg) {
  if (!cfg.sandbox.stub.empty()) {
    return std::make_unique<aot::exec::StubExecutor>(aot::exec::StubExecutor::load(cfg.sandbox.stub));
  }
  return std::make_unique<aot::exec::ShimExecutor>(cfg.sandbox.shim);
}

aot::corpus::LoadOptions load_options(const aot::config::PipelineConfig& cfg) {
  return {cfg.unknown_dataset_modality};
}

struct ResponseRecord {
  Instance instance;
  std::string response;
};

// Records carrying the corpus fields plus "response" (the retained format).
std::vector<ResponseRecord> read_response_records(const fs::path& path, const aot::corpus::SplitLists& split,
                                                  const aot::corpus::LoadOptions& options,
                                                  bool require_response) {
  std::vector<ResponseRecord> out;
  std::set<std::string> ids;
  for (const auto& line : aot::jsonl::read(path)) {
    const std::string at = where(path, line.number);
    ResponseRecord r;
    try {
      r.instance = aot::corpus::instance_from_json(line.value, split, options);
    } catch (const Error& e) {
      throw Error(e.code(), at + ": " + e.detail());
    }
    if (require_response) r.response = string_field(line.value, "response", at);
    if (!ids.insert(r.instance.id).second) throw Error(ErrorCode::kDuplicateId, r.instance.id + " (" + at + ")");
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SampleArgs {
  std::string corpus;
  std::optional<std::size_t> n, n_text, n_code;
};

int cmd_sample(const aot::config::PipelineConfig& cfg_in, const SampleArgs& a, const RunMeta& meta) {
  auto cfg = cfg_in;
  if (!a.corpus.empty()) cfg.corpus = a.corpus;
  if (a.n_text) cfg.n_text = *a.n_text;
  if (a.n_code) cfg.n_code = *a.n_code;
  if (cfg.corpus.empty()) throw Error(ErrorCode::kInvalidArgument, "no corpus given (--corpus or config)");

  const auto split = aot::corpus::SplitLists::load(cfg.split_lists);
  const auto instances = aot::corpus::load_corpus(cfg.corpus, split, load_options(cfg));

  std::vector<Instance> sample;
  if (a.n) {
    sample = aot::corpus::stratified_sample(instances, *a.n, cfg.seed);
  } else {
    for (Modality m : {Modality::kText, Modality::kCode}) {
      const std::size_t n = m == Modality::kText ? cfg.n_text : cfg.n_code;
      if (n == 0) continue;
      std::vector<Instance> part;
      for (const auto& inst : instances) {
        if (inst.modality == m) part.push_back(inst);
      }
      if (part.empty()) {
        throw Error(ErrorCode::kEmptyCorpus,
                    "no " + std::string(aot::corpus::to_string(m)) + " instances for n_" +
                        std::string(aot::corpus::to_string(m)) + "=" + std::to_string(n));
      }
      auto drawn = aot::corpus::stratified_sample(part, n, cfg.seed);
      sample.insert(sample.end(), drawn.begin(), drawn.end());
    }
  }

  const fs::path out_path = fs::path(cfg.out) / "sample.jsonl";
  const auto done = aot::jsonl::collect_ids(out_path);
  aot::jsonl::Writer writer(out_path);
  std::size_t text = 0, code = 0;
  for (const auto& inst : sample) {
    (inst.modality == Modality::kText ? text : code)++;
    if (done.contains(inst.id)) continue;
    json rec = aot::corpus::instance_to_json(inst);
    rec["seed"] = cfg.seed;
    writer.write(rec);
  }
  std::cout << "sample: " << sample.size() << " of " << instances.size() << " instances (text " << text
            << ", code " << code << "), seed " << cfg.seed << ", " << writer.written() << " new -> "
            << out_path.string() << "\n";
  meta.finish(cfg, "none",
              {{"population", instances.size()}, {"sampled", sample.size()}, {"text", text}, {"code", code},
               {"written", writer.written()}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string sample;
};

aot::filtering::FilterOptions filter_options(const aot::config::PipelineConfig& cfg) {
  aot::filtering::FilterOptions o;
  o.degeneration = cfg.degeneration;
  o.sandbox_timeout = cfg.sandbox.timeout;
  return o;
}

int cmd_generate(const aot::config::PipelineConfig& cfg, const GenerateArgs& a, const RunMeta& meta) {
  // The backend comes first so an unusable one fails before any input work.
  BackendHandle backend = make_backend(cfg);
  const fs::path out_dir(cfg.out);
  const fs::path sample_path = a.sample.empty() ? out_dir / "sample.jsonl" : fs::path(a.sample);

  const auto split = aot::corpus::SplitLists::load(cfg.split_lists);
  const auto records = read_response_records(sample_path, split, load_options(cfg), false);

  std::set<std::string> done = aot::jsonl::collect_ids(out_dir / "retained.jsonl");
  for (const auto& id : aot::jsonl::collect_ids(out_dir / "discarded.jsonl")) done.insert(id);

  std::optional<aot::generation::PromptTemplate> text_tmpl, code_tmpl;
  std::vector<aot::generation::GenerationJob> jobs;
  for (const auto& r : records) {
    if (done.contains(r.instance.id)) continue;
    auto& tmpl = r.instance.modality == Modality::kText ? text_tmpl : code_tmpl;
    if (!tmpl) {
      tmpl = aot::generation::PromptTemplate::load(r.instance.modality == Modality::kText ? cfg.prompt_text
                                                                                          : cfg.prompt_code);
    }
    aot::generation::GenerationJob job{r.instance, aot::generation::build_collection_prompt(r.instance, *tmpl)};
    backend.script_prompt(r.instance.id, job.prompt);
    jobs.push_back(std::move(job));
  }

  auto executor = make_executor(cfg);
  const auto fopts = filter_options(cfg);
  auto make_validator = [&](const Instance& inst) -> aot::generation::Validator {
    return [&, inst](std::string_view response) {
      return aot::filtering::filter_instance(inst, response, executor.get(), fopts);
    };
  };

  aot::jsonl::Writer retained(out_dir / "retained.jsonl");
  aot::jsonl::Writer discarded(out_dir / "discarded.jsonl");
  aot::jsonl::Writer attempts(out_dir / "attempts.jsonl");
  aot::jsonl::Writer verdicts(out_dir / "attempt_verdicts.jsonl");
  std::size_t n_attempts = 0;

  aot::generation::run_generation(
      jobs, *backend.backend, make_validator, cfg.retry, cfg.concurrency,
      [&](const aot::generation::GenerationJob& job, const aot::generation::GenerationOutcome& outcome) {
        const auto& id = job.instance.id;
        for (const auto& att : outcome.attempts) {
          attempts.write(aot::generation::attempt_to_json(id, att));
          if (att.verdict) verdicts.write(aot::filtering::verdict_to_json(id, *att.verdict));
          ++n_attempts;
        }
        json rec = aot::corpus::instance_to_json(job.instance);
        rec["attempts"] = outcome.attempts.size();
        if (outcome.response) {
          rec["response"] = *outcome.response;
          retained.write(rec);
        } else {
          discarded.write(rec);
        }
      });

  std::cout << "generate: " << jobs.size() << " instances (" << records.size() - jobs.size()
            << " already done), " << retained.written() << " retained, " << discarded.written()
            << " discarded, " << n_attempts << " attempts\n";
  meta.finish(cfg, backend.backend->identity(),
              {{"instances", jobs.size()},
               {"skipped", records.size() - jobs.size()},
               {"retained", retained.written()},
               {"discarded", discarded.written()},
               {"attempts", n_attempts}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct FilterArgs {
  std::string responses;
};

int cmd_filter(const aot::config::PipelineConfig& cfg, const FilterArgs& a, const RunMeta& meta) {
  const fs::path out_dir(cfg.out);
  const fs::path in_path = a.responses.empty() ? out_dir / "retained.jsonl" : fs::path(a.responses);
  const auto split = aot::corpus::SplitLists::load(cfg.split_lists);
  const auto records = read_response_records(in_path, split, load_options(cfg), true);

  const fs::path out_path = out_dir / "verdicts.jsonl";
  const auto done = aot::jsonl::collect_ids(out_path);
  auto executor = make_executor(cfg);
  const auto fopts = filter_options(cfg);
  aot::jsonl::Writer writer(out_path);

  std::size_t passed = 0, failed = 0;
  std::map<std::string, std::size_t> failed_at;
  for (const auto& r : records) {
    if (done.contains(r.instance.id)) continue;
    auto verdict = aot::filtering::filter_instance(r.instance, r.response, executor.get(), fopts);
    writer.write(aot::filtering::verdict_to_json(r.instance.id, verdict));
    if (verdict.passed) {
      ++passed;
    } else {
      ++failed;
      for (const auto& c : verdict.checks) {
        if (!c.passed) ++failed_at[std::string(aot::filtering::to_string(c.check))];
      }
    }
  }
  std::cout << "filter: " << passed + failed << " responses, " << passed << " passed, " << failed << " failed";
  for (const auto& [check, n] : failed_at) std::cout << ", " << check << " " << n;
  std::cout << " -> " << out_path.string() << "\n";
  meta.finish(cfg, "none", {{"checked", passed + failed}, {"passed", passed}, {"failed", failed},
                            {"failed_at", failed_at}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct StatsArgs {
  std::string input;
};

json stats_to_json(const aot::corpus::CorpusStats& s) {
  auto one = [](const aot::corpus::ModalityStats& m) {
    json j = {{"count", m.count}};
    if (m.mean_question_length) j["mean_question_length"] = *m.mean_question_length;
    if (m.mean_response_length) j["mean_response_length"] = *m.mean_response_length;
    return j;
  };
  return {{"text", one(s.text)}, {"code", one(s.code)}, {"total", one(s.total)}, {"length_unit", "words"}};
}

int cmd_stats(const aot::config::PipelineConfig& cfg, const StatsArgs& a, const RunMeta& meta) {
  const fs::path out_dir(cfg.out);
  const fs::path in_path = a.input.empty() ? out_dir / "retained.jsonl" : fs::path(a.input);
  const auto split = aot::corpus::SplitLists::load(cfg.split_lists);

  std::vector<Instance> instances;
  std::vector<std::string> responses;
  std::optional<bool> with_responses;
  for (const auto& line : aot::jsonl::read(in_path)) {
    const std::string at = where(in_path, line.number);
    try {
      instances.push_back(aot::corpus::instance_from_json(line.value, split, load_options(cfg)));
    } catch (const Error& e) {
      throw Error(e.code(), at + ": " + e.detail());
    }
    const bool has = line.value.contains("response");
    if (with_responses && *with_responses != has) {
      throw Error(ErrorCode::kLengthMismatch, at + ": either every record carries \"response\" or none does");
    }
    with_responses = has;
    if (has) responses.push_back(string_field(line.value, "response", at));
  }
  auto stats = aot::corpus::corpus_stats(
      instances, with_responses.value_or(false) ? std::optional(responses) : std::nullopt);

  const json report = stats_to_json(stats);
  const fs::path out_path = out_dir / "stats.json";
  write_json_file(out_path, report);
  auto mean = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v) s << *v; else s << "-";
    return s.str();
  };
  std::cout << "stats (lengths in words):\n";
  for (auto [name, m] : {std::pair{"text", &stats.text}, std::pair{"code", &stats.code},
                         std::pair{"total", &stats.total}}) {
    std::cout << "  " << name << ": " << m->count << " instances, question " << mean(m->mean_question_length)
              << ", response " << mean(m->mean_response_length) << "\n";
  }
  meta.finish(cfg, "none", report);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> tasks;
  std::string responses;
  std::string accuracies;
  std::string prompt = "zeroshot";
  std::string fewshot_dir;
};

std::string item_key(const std::string& task, std::size_t index) { return task + ":" + std::to_string(index); }

void print_report(const aot::eval::GroupReport& report) {
  auto show = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v) s << std::fixed << std::setprecision(1) << *v; else s << "-";
    return s.str();
  };
  std::cout << "eval: " << report.per_task.size() << " tasks, NLP " << show(report.nlp) << ", Alg "
            << show(report.alg) << ", All " << show(report.all) << "\n";
}

int cmd_eval(const aot::config::PipelineConfig& cfg, const EvalArgs& a, const RunMeta& meta) {
  const fs::path out_dir(cfg.out);

  if (!a.accuracies.empty()) {
    json j = read_json_file(a.accuracies);
    std::map<std::string, double> per_task;
    try {
      per_task = j.get<std::map<std::string, double>>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedRecord, a.accuracies + ": expected {\"task\": accuracy}");
    }
    auto report = aot::eval::aggregate_groups(per_task);
    json out = aot::eval::report_to_json(report);
    write_json_file(out_dir / "report.json", out);
    print_report(report);
    meta.finish(cfg, "none", out);
    return kExitOk;
  }

  if (a.tasks.empty()) throw Error(ErrorCode::kInvalidArgument, "eval needs --task files or --accuracies");
  std::vector<aot::eval::TaskSpec> tasks;
  std::set<std::string> names;
  for (const auto& path : a.tasks) {
    tasks.push_back(aot::eval::TaskSpec::load(path));
    if (!names.insert(tasks.back().name).second) {
      throw Error(ErrorCode::kInvalidArgument, "task " + tasks.back().name + " given twice");
    }
  }

  // Records from an earlier, possibly interrupted, run.
  const fs::path records_path = out_dir / "eval_records.jsonl";
  std::map<std::string, aot::eval::EvalRecord> existing;
  for (const auto& line : aot::jsonl::read_if_exists(records_path)) {
    auto r = aot::eval::record_from_json(line.value);
    if (names.contains(r.task)) existing[item_key(r.task, r.index)] = std::move(r);
  }

  std::optional<BackendHandle> backend;
  std::map<std::string, std::string> given;
  std::map<std::string, aot::generation::FewShotPromptFile> fewshot;
  if (!a.responses.empty()) {
    for (const auto& line : aot::jsonl::read(a.responses)) {
      const std::string at = where(a.responses, line.number);
      const std::string& task = string_field(line.value, "task", at);
      if (!line.value.contains("index") || !line.value.at("index").is_number_unsigned()) {
        throw Error(ErrorCode::kMalformedRecord, at + ": missing non-negative integer \"index\"");
      }
      given[item_key(task, line.value.at("index").get<std::size_t>())] = string_field(line.value, "response", at);
    }
  } else {
    backend = make_backend(cfg);
    if (a.prompt == "fewshot") {
      if (a.fewshot_dir.empty()) throw Error(ErrorCode::kInvalidArgument, "--prompt fewshot needs --fewshot-dir");
      for (const auto& t : tasks) {
        fewshot.emplace(t.name, aot::generation::FewShotPromptFile::load(fs::path(a.fewshot_dir) / (t.name + ".json")));
      }
    }
  }

  auto build_prompt = [&](const aot::eval::TaskSpec& t, std::size_t i) {
    const std::string& q = t.items[i].question;
    if (a.prompt == "fewshot") return aot::generation::build_fewshot_prompt(q, fewshot.at(t.name).demonstrations);
    return aot::generation::build_zeroshot_prompt(q, a.prompt == "instructed");
  };
  if (backend) {
    for (const auto& t : tasks) {
      for (std::size_t i = 0; i < t.items.size(); ++i) backend->script_prompt(item_key(t.name, i), build_prompt(t, i));
    }
  }

  aot::eval::ResponseSource source = [&](const aot::eval::TaskSpec& t, std::size_t i) -> std::string {
    if (!backend) {
      auto it = given.find(item_key(t.name, i));
      if (it == given.end()) {
        throw Error(ErrorCode::kCoverageMismatch, "no response for " + item_key(t.name, i));
      }
      return it->second;
    }
    return backend->backend->complete(build_prompt(t, i), {cfg.retry.greedy_temperature, cfg.retry.max_length});
  };

  auto executor = make_executor(cfg);
  aot::eval::EvalOptions options;
  options.sandbox_timeout = cfg.sandbox.timeout;
  auto fresh = aot::eval::run_eval(tasks, source, executor.get(), options, cfg.concurrency,
                                   [&](const aot::eval::TaskSpec& t, std::size_t i) {
                                     return existing.contains(item_key(t.name, i));
                                   });
  aot::jsonl::Writer writer(records_path);
  for (const auto& r : fresh) {
    writer.write(aot::eval::record_to_json(r));
    existing[item_key(r.task, r.index)] = r;
  }

  std::vector<aot::eval::EvalRecord> all;
  for (const auto& [_, r] : existing) all.push_back(r);
  std::map<std::string, double> per_task;
  for (const auto& t : tasks) per_task[t.name] = aot::eval::score_task(t, all, options.match);
  auto report = aot::eval::aggregate_groups(per_task);
  json report_json = aot::eval::report_to_json(report);
  report_json["task_accuracy"] = per_task;
  write_json_file(out_dir / "report.json", report_json);
  json analysis = aot::eval::analysis_to_json(aot::eval::response_analysis(all));
  write_json_file(out_dir / "analysis.json", analysis);

  print_report(report);
  meta.finish(cfg, backend ? backend->backend->identity() : "responses file",
              {{"records", all.size()}, {"new_records", fresh.size()}, {"report", report_json}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string records;
  std::string labels;
};

int cmd_analyze(const aot::config::PipelineConfig& cfg, const AnalyzeArgs& a, const RunMeta& meta) {
  const fs::path out_dir(cfg.out);
  const fs::path in_path = a.records.empty() ? out_dir / "eval_records.jsonl" : fs::path(a.records);
  std::vector<aot::eval::EvalRecord> records;
  for (const auto& line : aot::jsonl::read(in_path)) {
    try {
      records.push_back(aot::eval::record_from_json(line.value));
    } catch (const Error& e) {
      throw Error(e.code(), where(in_path, line.number) + ": " + e.detail());
    }
  }
  if (!a.labels.empty()) aot::eval::apply_error_labels(records, read_text_file(a.labels));

  auto analysis = aot::eval::response_analysis(records);
  auto dist = aot::eval::error_distribution(records);
  json out = {{"response_analysis", aot::eval::analysis_to_json(analysis)},
              {"error_distribution", aot::eval::distribution_to_json(dist)}};
  write_json_file(out_dir / "analysis.json", out);

  auto pct = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v) s << std::fixed << std::setprecision(1) << *v; else s << "-";
    return s.str();
  };
  std::cout << "analyze: " << records.size() << " records\n";
  for (auto [name, m] : {std::pair{"text", &analysis.text}, std::pair{"code", &analysis.code}}) {
    std::cout << "  " << name << ": UR " << pct(m->usage_rate) << "  FC " << pct(m->format_correctness) << "  AC "
              << pct(m->answer_correctness) << "\n";
  }
  if (dist.labeled > 0) {
    std::cout << "  errors (" << dist.labeled << " labeled):";
    for (const auto& [label, p] : dist.percent) std::cout << " " << aot::eval::to_string(label) << " " << pct(p) << ";";
    std::cout << "\n";
  }
  meta.finish(cfg, "none", out);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ConvertArgs {
  std::string input;
};

int cmd_convert(const aot::config::PipelineConfig& cfg, const ConvertArgs& a, const RunMeta& meta) {
  BackendHandle backend = make_backend(cfg);
  const fs::path out_dir(cfg.out);
  const fs::path in_path = a.input.empty() ? out_dir / "retained.jsonl" : fs::path(a.input);
  const fs::path out_path = out_dir / "aot2cot.jsonl";
  const auto done = aot::jsonl::collect_ids(out_path);
  const auto tmpl = aot::generation::PromptTemplate::load(cfg.prompt_aot2cot);

  // Conversion reuses the generation runner: one greedy attempt, always kept.
  std::vector<aot::generation::GenerationJob> jobs;
  std::set<std::string> ids;
  for (const auto& line : aot::jsonl::read(in_path)) {
    const std::string at = where(in_path, line.number);
    Instance inst;
    inst.id = string_field(line.value, "id", at);
    if (!ids.insert(inst.id).second) throw Error(ErrorCode::kDuplicateId, inst.id + " (" + at + ")");
    if (done.contains(inst.id)) continue;
    aot::generation::GenerationJob job{inst, aot::generation::build_conversion_prompt(
                                                 string_field(line.value, "response", at), tmpl)};
    backend.script_prompt(inst.id, job.prompt);
    jobs.push_back(std::move(job));
  }

  aot::generation::RetryPolicy once = cfg.retry;
  once.regenerations = 0;
  aot::jsonl::Writer writer(out_path);
  auto accept = [](const Instance&) -> aot::generation::Validator {
    return [](std::string_view) { return aot::filtering::FilterVerdict{true, {}}; };
  };
  aot::generation::run_generation(jobs, *backend.backend, accept, once, cfg.concurrency,
                                  [&](const aot::generation::GenerationJob& job,
                                      const aot::generation::GenerationOutcome& outcome) {
                                    writer.write({{"id", job.instance.id}, {"response", *outcome.response}});
                                  });
  std::cout << "convert: " << writer.written() << " responses rewritten (" << ids.size() - jobs.size()
            << " already done) -> " << out_path.string() << "\n";
  meta.finish(cfg, backend.backend->identity(), {{"converted", writer.written()}});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Abstraction-of-Thought data collection and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "JSON pipeline config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "sampling seed (overrides config)");
  app.add_option("--out", g.out, "output directory (overrides config)");
  app.add_option("--backend", g.backend, "LLM backend")->check(CLI::IsMember({"real", "mock"}));
  app.add_option("--mock-script", g.mock_script, "mock responses: {\"<id>\": [response, ...]}");
  app.add_option("--executor-stub", g.executor_stub, "stub execution rules instead of the sandbox shim");
  app.add_option("--concurrency", g.concurrency, "in-flight backend requests")->check(CLI::PositiveNumber);

  SampleArgs sample;
  auto* sub_sample = app.add_subcommand("sample", "proportional stratified sample of a corpus");
  sub_sample->add_option("--corpus", sample.corpus, "corpus JSONL");
  sub_sample->add_option("--n", sample.n, "sample size over the whole corpus");
  sub_sample->add_option("--n-text", sample.n_text, "sample size for the text track");
  sub_sample->add_option("--n-code", sample.n_code, "sample size for the code track");

  GenerateArgs generate;
  auto* sub_generate = app.add_subcommand("generate", "collect AoT responses with validation and retries");
  sub_generate->add_option("--sample", generate.sample, "sample JSONL (default <out>/sample.jsonl)");

  FilterArgs filter;
  auto* sub_filter = app.add_subcommand("filter", "run the validation stack over responses");
  sub_filter->add_option("--responses", filter.responses, "response JSONL (default <out>/retained.jsonl)");

  StatsArgs stats;
  auto* sub_stats = app.add_subcommand("stats", "count and mean lengths per track");
  sub_stats->add_option("--input", stats.input, "instance or response JSONL (default <out>/retained.jsonl)");

  EvalArgs ev;
  auto* sub_eval = app.add_subcommand("eval", "score task files and aggregate NLP/Alg/All");
  sub_eval->add_option("--task", ev.tasks, "task JSON file (repeatable)");
  sub_eval->add_option("--responses", ev.responses, "precomputed responses JSONL {task, index, response}");
  sub_eval->add_option("--accuracies", ev.accuracies, "aggregate a {task: accuracy} JSON file only");
  sub_eval->add_option("--prompt", ev.prompt, "prompting when a backend answers")
      ->check(CLI::IsMember({"zeroshot", "instructed", "fewshot"}));
  sub_eval->add_option("--fewshot-dir", ev.fewshot_dir, "directory of <task>.json few-shot prompt files");

  AnalyzeArgs analyze;
  auto* sub_analyze = app.add_subcommand("analyze", "UR/FC/AC and error-label distribution");
  sub_analyze->add_option("--records", analyze.records, "eval records JSONL (default <out>/eval_records.jsonl)");
  sub_analyze->add_option("--labels", analyze.labels, "error labels CSV: task,index,label");

  ConvertArgs convert;
  auto* sub_convert = app.add_subcommand("convert", "rewrite AoT reasoning as CoT");
  sub_convert->add_option("--input", convert.input, "response JSONL (default <out>/retained.jsonl)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  std::vector<std::string> args(argv, argv + argc);
  try {
    const auto cfg = resolve_config(g);
    if (sub_sample->parsed()) return cmd_sample(cfg, sample, RunMeta("sample", args));
    if (sub_generate->parsed()) return cmd_generate(cfg, generate, RunMeta("generate", args));
    if (sub_filter->parsed()) return cmd_filter(cfg, filter, RunMeta("filter", args));
    if (sub_stats->parsed()) return cmd_stats(cfg, stats, RunMeta("stats", args));
    if (sub_eval->parsed()) return cmd_eval(cfg, ev, RunMeta("eval", args));
    if (sub_analyze->parsed()) return cmd_analyze(cfg, analyze, RunMeta("analyze", args));
    if (sub_convert->parsed()) return cmd_convert(cfg, convert, RunMeta("convert", args));
  } catch (const Error& e) {
    std::cerr << "aot: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "aot: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
