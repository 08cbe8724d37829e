#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace aot::text {

std::string_view trim(std::string_view s);

// Splits on '\n'; a trailing '\r' on each line is dropped.
std::vector<std::string_view> split_lines(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);

// ASCII case folding; bytes >= 0x80 pass through unchanged.
std::string to_lower(std::string_view s);

std::string collapse_whitespace(std::string_view s);

bool starts_with_at(std::string_view s, std::size_t pos, std::string_view prefix);

}  // namespace aot::text
