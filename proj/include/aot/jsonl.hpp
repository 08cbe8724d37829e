#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace aot::jsonl {

struct Line {
  std::size_t number = 0;  // 1-based
  nlohmann::json value;
};

// Blank lines are skipped. Throws kIo when the file cannot be opened and
// kMalformedRecord("path line N") on invalid JSON.
std::vector<Line> read(const std::filesystem::path& path);
// An absent file reads as empty.
std::vector<Line> read_if_exists(const std::filesystem::path& path);

// String values of `key` across the records of an existing output file; used
// to resume an interrupted stage.
std::set<std::string> collect_ids(const std::filesystem::path& path, const std::string& key = "id");

// Append-only writer; each record is written and flushed as one line.
class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);
  void write(const nlohmann::json& record);
  std::size_t written() const { return written_; }

 private:
  std::mutex mu_;
  std::ofstream out_;
  std::filesystem::path path_;
  std::size_t written_ = 0;
};

// Deterministic serialisation used for every output file: sorted keys,
// compact separators, UTF-8.
std::string dump(const nlohmann::json& value);

}  // namespace aot::jsonl
