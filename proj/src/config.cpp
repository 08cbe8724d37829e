#include "aot/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "aot/error.hpp"

namespace aot::config {

using nlohmann::json;

std::string_view to_string(BackendKind k) { return k == BackendKind::kReal ? "real" : "mock"; }

BackendKind backend_kind_from_string(std::string_view s) {
  if (s == "real") return BackendKind::kReal;
  if (s == "mock") return BackendKind::kMock;
  throw Error(ErrorCode::kInvalidArgument, "backend must be real or mock, got \"" + std::string(s) + "\"");
}

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr) return std::nullopt;
  return std::string(v);
}

std::string interpolate(std::string_view s, const EnvLookup& env) {
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    if (s.compare(i, 3, "$${") == 0) {
      out += "${";
      i += 3;
      continue;
    }
    if (s.compare(i, 2, "${") == 0) {
      std::size_t close = s.find('}', i + 2);
      if (close == std::string_view::npos) {
        throw Error(ErrorCode::kInvalidArgument, "unterminated ${ in config value");
      }
      if (auto v = env(std::string(s.substr(i + 2, close - i - 2)))) out += *v;
      i = close + 1;
      continue;
    }
    out.push_back(s[i++]);
  }
  return out;
}

PipelineConfig defaults(const std::filesystem::path& resource_dir) {
  PipelineConfig c;
  c.split_lists = (resource_dir / "data" / "aot_split.json").string();
  c.prompt_text = (resource_dir / "prompts" / "collect_text.json").string();
  c.prompt_code = (resource_dir / "prompts" / "collect_code.json").string();
  c.prompt_aot2cot = (resource_dir / "prompts" / "aot2cot.json").string();
  c.sandbox.shim = {"python3", (resource_dir / "sandbox" / "run_program.py").string()};
  return c;
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) {
      throw Error(ErrorCode::kInvalidArgument, "unknown config key " + where + "." + key);
    }
  }
}

struct Reader {
  const std::filesystem::path& base;
  const EnvLookup& env;

  std::string str(const json& v) const { return interpolate(v.get<std::string>(), env); }
  std::string path(const json& v) const {
    std::string s = str(v);
    if (s.empty()) return s;
    std::filesystem::path p(s);
    return p.is_absolute() ? s : (base / p).lexically_normal().string();
  }
};

}  // namespace

void apply_json(PipelineConfig& c, const json& j, const std::filesystem::path& base_dir,
                const EnvLookup& env) {
  const Reader r{base_dir, env};
  try {
    reject_unknown(j, {"corpus", "split_lists", "unknown_dataset_modality", "n_text", "n_code", "seed",
                       "backend", "retry", "concurrency", "sandbox", "degeneration", "prompts", "out"},
                   "config");
    if (j.contains("corpus")) c.corpus = r.path(j["corpus"]);
    if (j.contains("split_lists")) c.split_lists = r.path(j["split_lists"]);
    if (j.contains("unknown_dataset_modality")) {
      const auto& v = j["unknown_dataset_modality"];
      c.unknown_dataset_modality =
          v.is_null() ? std::nullopt : std::optional(corpus::modality_from_string(v.get<std::string>()));
    }
    if (j.contains("n_text")) c.n_text = j["n_text"].get<std::size_t>();
    if (j.contains("n_code")) c.n_code = j["n_code"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("concurrency")) c.concurrency = j["concurrency"].get<int>();
    if (j.contains("out")) c.out = r.path(j["out"]);

    if (j.contains("backend")) {
      const json& b = j["backend"];
      reject_unknown(b, {"kind", "model", "base_url", "api_key", "request_timeout", "transport_attempts",
                         "mock_script"},
                     "backend");
      if (b.contains("kind")) c.backend.kind = backend_kind_from_string(r.str(b["kind"]));
      if (b.contains("model")) c.backend.model = r.str(b["model"]);
      if (b.contains("base_url")) c.backend.base_url = r.str(b["base_url"]);
      if (b.contains("api_key")) c.backend.api_key = b["api_key"].get<std::string>();
      if (b.contains("request_timeout")) c.backend.request_timeout = b["request_timeout"].get<double>();
      if (b.contains("transport_attempts")) c.backend.transport_attempts = b["transport_attempts"].get<int>();
      if (b.contains("mock_script")) c.backend.mock_script = r.path(b["mock_script"]);
    }
    if (j.contains("retry")) {
      const json& t = j["retry"];
      reject_unknown(t, {"regenerations", "greedy_temperature", "sampling_temperature", "max_length"}, "retry");
      if (t.contains("regenerations")) c.retry.regenerations = t["regenerations"].get<int>();
      if (t.contains("greedy_temperature")) c.retry.greedy_temperature = t["greedy_temperature"].get<double>();
      if (t.contains("sampling_temperature")) {
        c.retry.sampling_temperature = t["sampling_temperature"].get<double>();
      }
      if (t.contains("max_length")) c.retry.max_length = t["max_length"].get<int>();
    }
    if (j.contains("sandbox")) {
      const json& s = j["sandbox"];
      reject_unknown(s, {"timeout", "shim", "stub"}, "sandbox");
      if (s.contains("timeout")) c.sandbox.timeout = s["timeout"].get<double>();
      if (s.contains("shim")) {
        c.sandbox.shim.clear();
        for (const auto& a : s["shim"]) c.sandbox.shim.push_back(r.str(a));
      }
      if (s.contains("stub")) c.sandbox.stub = r.path(s["stub"]);
    }
    if (j.contains("degeneration")) {
      const json& d = j["degeneration"];
      reject_unknown(d, {"threshold", "include_purposes"}, "degeneration");
      if (d.contains("threshold")) c.degeneration.threshold = d["threshold"].get<double>();
      if (d.contains("include_purposes")) c.degeneration.include_purposes = d["include_purposes"].get<bool>();
    }
    if (j.contains("prompts")) {
      const json& p = j["prompts"];
      reject_unknown(p, {"text", "code", "aot2cot"}, "prompts");
      if (p.contains("text")) c.prompt_text = r.path(p["text"]);
      if (p.contains("code")) c.prompt_code = r.path(p["code"]);
      if (p.contains("aot2cot")) c.prompt_aot2cot = r.path(p["aot2cot"]);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
  }
}

PipelineConfig load(const std::filesystem::path& path, const std::filesystem::path& resource_dir,
                    const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
  }
  PipelineConfig c = defaults(resource_dir);
  apply_json(c, j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path(), env);
  return c;
}

void validate(const PipelineConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, m); };
  if (c.retry.regenerations < 0) fail("retry.regenerations must be >= 0");
  if (c.retry.greedy_temperature < 0 || c.retry.sampling_temperature < 0) fail("temperatures must be >= 0");
  if (c.retry.max_length <= 0) fail("retry.max_length must be positive");
  if (c.concurrency < 1) fail("concurrency must be >= 1");
  if (!(c.sandbox.timeout > 0)) fail("sandbox.timeout must be positive");
  if (c.sandbox.stub.empty() && c.sandbox.shim.empty()) fail("sandbox needs a shim command or a stub file");
  if (!(c.degeneration.threshold > 0 && c.degeneration.threshold <= 1)) {
    fail("degeneration.threshold must be in (0, 1]");
  }
  if (c.backend.transport_attempts < 1) fail("backend.transport_attempts must be >= 1");
  if (!(c.backend.request_timeout > 0)) fail("backend.request_timeout must be positive");
}

}  // namespace aot::config
