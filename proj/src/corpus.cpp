#include "aot/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "aot/error.hpp"
#include "aot/text_util.hpp"

namespace aot::corpus {

using nlohmann::json;

std::string_view to_string(Modality m) { return m == Modality::kText ? "text" : "code"; }

Modality modality_from_string(std::string_view s) {
  if (s == "text") return Modality::kText;
  if (s == "code") return Modality::kCode;
  throw Error(ErrorCode::kInvalidArgument, "unknown modality \"" + std::string(s) + "\"");
}

SplitLists::SplitLists(std::set<std::string> text, std::set<std::string> code)
    : text_(std::move(text)), code_(std::move(code)) {
  for (const auto& name : text_) {
    if (code_.contains(name)) {
      throw Error(ErrorCode::kInvalidArgument, "dataset in both split lists: " + name);
    }
  }
}

SplitLists SplitLists::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open split list " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("text") || !j.contains("code")) {
    throw Error(ErrorCode::kMalformedRecord, path.string() + ": expected {\"text\", \"code\"}");
  }
  SplitLists lists(j.at("text").get<std::set<std::string>>(),
                   j.at("code").get<std::set<std::string>>());
  lists.version_ = j.value("version", 0);
  return lists;
}

std::optional<Modality> SplitLists::lookup(std::string_view dataset) const {
  std::string key(dataset);
  if (text_.contains(key)) return Modality::kText;
  if (code_.contains(key)) return Modality::kCode;
  return std::nullopt;
}

Instance instance_from_json(const json& j, const SplitLists& split, const LoadOptions& options) {
  Instance inst;
  for (const char* key : {"id", "dataset", "question", "gold_answer"}) {
    if (!j.is_object() || !j.contains(key) || !j.at(key).is_string()) {
      throw Error(ErrorCode::kMalformedRecord, std::string("missing string field \"") + key + "\"");
    }
  }
  inst.id = j.at("id").get<std::string>();
  inst.dataset = j.at("dataset").get<std::string>();
  inst.question = j.at("question").get<std::string>();
  inst.gold_answer = j.at("gold_answer").get<std::string>();
  if (inst.id.empty() || text::trim(inst.question).empty() ||
      text::trim(inst.gold_answer).empty()) {
    throw Error(ErrorCode::kMalformedRecord, "empty id, question or gold_answer");
  }
  auto modality = split.lookup(inst.dataset);
  if (!modality) modality = options.unknown_dataset_modality;
  if (!modality) throw Error(ErrorCode::kUnknownDataset, inst.dataset);
  inst.modality = *modality;
  return inst;
}

json instance_to_json(const Instance& inst) {
  return {{"id", inst.id},
          {"dataset", inst.dataset},
          {"modality", to_string(inst.modality)},
          {"question", inst.question},
          {"gold_answer", inst.gold_answer}};
}

std::vector<Instance> parse_corpus(std::string_view jsonl, const SplitLists& split,
                                   const LoadOptions& options) {
  std::vector<Instance> out;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  for (auto line : text::split_lines(jsonl)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    std::string where = "line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      throw Error(ErrorCode::kMalformedRecord, where + ": invalid JSON");
    }
    Instance inst;
    try {
      inst = instance_from_json(j, split, options);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kMalformedRecord && e.code() != ErrorCode::kUnknownDataset) throw;
      throw Error(e.code(), where + ": " + e.detail());
    }
    if (!ids.insert(inst.id).second) throw Error(ErrorCode::kDuplicateId, inst.id);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instance> load_corpus(const std::filesystem::path& path, const SplitLists& split,
                                  const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open corpus " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_corpus(buf.str(), split, options);
}

std::vector<Stratum> compute_quotas(const std::map<std::string, std::size_t>& populations,
                                    std::size_t n) {
  const std::size_t total = std::accumulate(
      populations.begin(), populations.end(), std::size_t{0},
      [](std::size_t acc, const auto& kv) { return acc + kv.second; });
  if (total == 0) throw Error(ErrorCode::kEmptyCorpus, "no instances to sample from");
  if (n > total) {
    throw Error(ErrorCode::kSampleTooLarge,
                "requested " + std::to_string(n) + " of " + std::to_string(total));
  }

  std::vector<Stratum> strata;
  std::vector<unsigned __int128> remainders;
  std::size_t assigned = 0;
  for (const auto& [dataset, population] : populations) {
    unsigned __int128 scaled = static_cast<unsigned __int128>(n) * population;
    std::size_t floor_quota = static_cast<std::size_t>(scaled / total);
    strata.push_back({dataset, population, floor_quota});
    remainders.push_back(scaled % total);
    assigned += floor_quota;
  }

  std::vector<std::size_t> order(strata.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < n; ++k) {
    ++strata[order[k]].quota;
    ++assigned;
  }
  return strata;
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == 0) throw Error(ErrorCode::kInvalidArgument, "uniform_below(0)");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

std::vector<Instance> stratified_sample(const std::vector<Instance>& instances, std::size_t n,
                                        std::uint64_t seed) {
  if (instances.empty()) throw Error(ErrorCode::kEmptyCorpus, "no instances to sample from");
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "sample size must be positive");

  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    members[instances[i].dataset].push_back(i);
  }
  std::map<std::string, std::size_t> populations;
  for (const auto& [dataset, idx] : members) populations[dataset] = idx.size();

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  for (const auto& stratum : compute_quotas(populations, n)) {
    // Partial Fisher-Yates: the first `quota` slots become a uniform subset.
    auto pool = members.at(stratum.dataset);
    for (std::size_t k = 0; k < stratum.quota; ++k) {
      std::size_t j = k + static_cast<std::size_t>(uniform_below(rng, pool.size() - k));
      std::swap(pool[k], pool[j]);
      chosen.push_back(pool[k]);
    }
  }
  std::sort(chosen.begin(), chosen.end());

  std::vector<Instance> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) out.push_back(instances[i]);
  return out;
}

std::size_t word_count(std::string_view s) { return text::split_whitespace(s).size(); }

namespace {

struct Accumulator {
  std::size_t count = 0;
  std::size_t question_words = 0;
  std::size_t response_words = 0;

  ModalityStats finish(bool with_responses) const {
    ModalityStats s;
    s.count = count;
    if (count > 0) {
      s.mean_question_length = static_cast<double>(question_words) / static_cast<double>(count);
      if (with_responses) {
        s.mean_response_length = static_cast<double>(response_words) / static_cast<double>(count);
      }
    }
    return s;
  }
};

}  // namespace

CorpusStats corpus_stats(const std::vector<Instance>& instances,
                         const std::optional<std::vector<std::string>>& responses) {
  if (responses && responses->size() != instances.size()) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(responses->size()) + " responses for " +
                                                std::to_string(instances.size()) + " instances");
  }
  Accumulator text_acc, code_acc, total_acc;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    std::size_t q = word_count(inst.question);
    std::size_t r = responses ? word_count((*responses)[i]) : 0;
    for (Accumulator* acc : {inst.modality == Modality::kText ? &text_acc : &code_acc, &total_acc}) {
      ++acc->count;
      acc->question_words += q;
      acc->response_words += r;
    }
  }
  const bool with_responses = responses.has_value();
  return CorpusStats{text_acc.finish(with_responses), code_acc.finish(with_responses),
                     total_acc.finish(with_responses)};
}

}  // namespace aot::corpus
