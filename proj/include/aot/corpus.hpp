#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace aot::corpus {

enum class Modality { kText, kCode };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

struct Instance {
  std::string id;
  std::string dataset;
  Modality modality = Modality::kText;
  std::string question;
  std::string gold_answer;
};

// Dataset-name membership for the text/code tracks.
class SplitLists {
 public:
  SplitLists() = default;
  SplitLists(std::set<std::string> text, std::set<std::string> code);

  // JSON file: {"version": int, "text": [names], "code": [names]}.
  static SplitLists load(const std::filesystem::path& path);

  std::optional<Modality> lookup(std::string_view dataset) const;
  const std::set<std::string>& text() const { return text_; }
  const std::set<std::string>& code() const { return code_; }
  int version() const { return version_; }

 private:
  std::set<std::string> text_;
  std::set<std::string> code_;
  int version_ = 0;
};

struct LoadOptions {
  // Modality for datasets present in neither list; unset means reject.
  std::optional<Modality> unknown_dataset_modality;
};

// Validates one corpus object; modality comes from the split lists (any
// "modality" field in the object is ignored).
Instance instance_from_json(const nlohmann::json& j, const SplitLists& split,
                            const LoadOptions& options = {});
// {"id", "dataset", "modality", "question", "gold_answer"}
nlohmann::json instance_to_json(const Instance& inst);

// JSONL with one {"id", "dataset", "question", "gold_answer"} object per line.
// Blank lines are skipped.
std::vector<Instance> load_corpus(const std::filesystem::path& path, const SplitLists& split,
                                  const LoadOptions& options = {});
std::vector<Instance> parse_corpus(std::string_view jsonl, const SplitLists& split,
                                   const LoadOptions& options = {});

struct Stratum {
  std::string dataset;
  std::size_t population = 0;
  std::size_t quota = 0;
};

// Largest-remainder apportionment of n over strata, ordered by dataset name.
// Remainder ties go to the lexicographically smaller dataset.
std::vector<Stratum> compute_quotas(const std::map<std::string, std::size_t>& populations,
                                    std::size_t n);

// Proportional stratified sample keyed on Instance::dataset. Selection within
// a stratum is uniform under `seed`; the result keeps corpus order.
std::vector<Instance> stratified_sample(const std::vector<Instance>& instances, std::size_t n,
                                        std::uint64_t seed);

// Uniform integer in [0, bound) from a 64-bit Mersenne Twister, by rejection.
// std::uniform_int_distribution is implementation-defined, so it is not used
// where outputs must be reproducible across standard libraries.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

// Lengths are whitespace-separated word counts.
std::size_t word_count(std::string_view s);

struct ModalityStats {
  std::size_t count = 0;
  std::optional<double> mean_question_length;
  std::optional<double> mean_response_length;
};

struct CorpusStats {
  ModalityStats text;
  ModalityStats code;
  ModalityStats total;
};

CorpusStats corpus_stats(const std::vector<Instance>& instances,
                         const std::optional<std::vector<std::string>>& responses = std::nullopt);

}  // namespace aot::corpus
