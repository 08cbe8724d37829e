#include "aot/jsonl.hpp"

#include <sstream>

#include "aot/error.hpp"
#include "aot/text_util.hpp"

namespace aot::jsonl {

using nlohmann::json;

std::vector<Line> read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string data = buf.str();

  std::vector<Line> out;
  std::size_t n = 0;
  for (auto line : text::split_lines(data)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back({n, json::parse(line)});
    } catch (const json::exception&) {
      throw Error(ErrorCode::kMalformedRecord, path.string() + " line " + std::to_string(n) + ": invalid JSON");
    }
  }
  return out;
}

std::vector<Line> read_if_exists(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  return read(path);
}

std::set<std::string> collect_ids(const std::filesystem::path& path, const std::string& key) {
  std::set<std::string> ids;
  for (const auto& line : read_if_exists(path)) {
    if (line.value.is_object() && line.value.contains(key) && line.value.at(key).is_string()) {
      ids.insert(line.value.at(key).get<std::string>());
    }
  }
  return ids;
}

Writer::Writer(const std::filesystem::path& path) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
}

void Writer::write(const json& record) {
  std::lock_guard lock(mu_);
  out_ << dump(record) << '\n';
  out_.flush();
  if (!out_) throw Error(ErrorCode::kIo, "write failed: " + path_.string());
  ++written_;
}

std::string dump(const json& value) {
  return value.dump(-1, ' ', false, json::error_handler_t::strict);
}

}  // namespace aot::jsonl
