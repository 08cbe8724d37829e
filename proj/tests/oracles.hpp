#pragma once

// Reference implementations used only by tests. Each one is written from the
// definition rather than from the library code, usually in the slowest
// obvious way, so agreement means something.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "aot/format.hpp"

namespace oracle {

// Substring s[from, to) is brace-balanced: no prefix closes more than it
// opened and the totals agree.
inline bool balanced(const std::string& s, std::size_t from, std::size_t to) {
  long depth = 0;
  for (std::size_t i = from; i < to; ++i) {
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth < 0) return false;
  }
  return depth == 0;
}

// Content of the last "\boxed{" occurrence: the shortest balanced run
// followed by '}'. Brute force over every candidate closing brace.
inline std::optional<std::string> last_boxed(const std::string& s) {
  const std::string open = "\\boxed{";
  std::optional<std::size_t> last;
  for (std::size_t p = 0; p + open.size() <= s.size(); ++p) {
    if (s.compare(p, open.size(), open) == 0) last = p;
  }
  if (!last) return std::nullopt;
  const std::size_t content = *last + open.size();
  for (std::size_t r = content; r < s.size(); ++r) {
    if (s[r] == '}' && balanced(s, content, r)) return s.substr(content, r - content);
  }
  return std::nullopt;
}

inline int max_depth(const std::string& s) {
  int depth = 0, worst = 0;
  for (char c : s) {
    if (c == '{') worst = std::max(worst, ++depth);
    if (c == '}') --depth;
  }
  return worst;
}

// Random strings over tokens that stress the scanner, nesting depth <= 3.
inline std::string random_brace_string(std::mt19937_64& rng) {
  static const std::vector<std::string> tokens = {"\\boxed{", "{", "}", "}", "a", "42", " ",
                                                  "\\box", "boxed{", "\\", "x^", "\n"};
  for (;;) {
    std::string s;
    const int n = static_cast<int>(rng() % 24);
    for (int i = 0; i < n; ++i) s += tokens[rng() % tokens.size()];
    if (max_depth(s) <= 3) return s;
  }
}

// |A ∩ B| / |A ∪ B| by building both sets and their union explicitly.
inline double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  auto fold = [](std::string w) {
    for (char& c : w) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return w;
  };
  std::set<std::string> sa, sb, uni, inter;
  for (const auto& w : a) sa.insert(fold(w));
  for (const auto& w : b) sb.insert(fold(w));
  uni = sa;
  uni.insert(sb.begin(), sb.end());
  for (const auto& w : sa) {
    if (sb.count(w) != 0) inter.insert(w);
  }
  if (uni.empty()) return 0.0;
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline std::vector<std::string> random_words(std::mt19937_64& rng, int max_len) {
  static const std::vector<std::string> vocab = {"the", "The", "cat", "CAT", "sat", "ran", "on",
                                                 "mat", "a", "dog", "x", "42",  "Step", "!"};
  std::vector<std::string> out;
  const int n = static_cast<int>(rng() % static_cast<std::uint64_t>(max_len + 1));
  for (int i = 0; i < n; ++i) out.push_back(vocab[rng() % vocab.size()]);
  return out;
}

inline std::string join(const std::vector<std::string>& words, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

// A valid document: purposes and details are non-empty trimmed lines that
// never look like a step header, answers may nest braces.
inline aot::format::AotTextDoc random_doc(std::mt19937_64& rng) {
  static const std::vector<std::string> vocab = {"compute", "the", "sum", "of", "x", "=", "3", "+",
                                                 "y", "Steps", "step", "(a)", "42.", "±", "√",
                                                 "b²", "Step-wise", "then", "{", "}"};
  auto line = [&](int max_words) {
    std::string s;
    const int n = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_words));
    for (int i = 0; i < n; ++i) {
      if (i) s += (rng() % 5 == 0) ? "  " : " ";
      s += vocab[rng() % vocab.size()];
    }
    return s;
  };
  aot::format::AotTextDoc d;
  const int steps = 1 + static_cast<int>(rng() % 6);
  for (int i = 1; i <= steps; ++i) {
    aot::format::AbstractionStep st;
    st.index = i;
    st.purpose = line(6);
    const int details = static_cast<int>(rng() % 5);
    for (int k = 0; k < details; ++k) st.details.push_back(line(8));
    d.steps.push_back(std::move(st));
  }
  static const std::vector<std::string> answers = {"A", "42", "x^{2}+1", "{a}{b}", "(B)",
                                                   "\\frac{1}{2}", "x=1 or x=2", "{{{}}}"};
  d.boxed_answer = answers[rng() % answers.size()];
  return d;
}

// Largest-remainder apportionment computed with plain long division, from
// the definition: floors first, then one extra seat to the largest
// remainders, ties to the smaller name.
inline std::map<std::string, std::size_t> quotas(const std::map<std::string, std::size_t>& pop,
                                                 std::size_t n) {
  std::size_t total = 0;
  for (const auto& [_, p] : pop) total += p;
  std::map<std::string, std::size_t> q;
  std::vector<std::pair<__int128, std::string>> rems;
  std::size_t given = 0;
  for (const auto& [name, p] : pop) {
    __int128 num = static_cast<__int128>(n) * static_cast<__int128>(p);
    q[name] = static_cast<std::size_t>(num / static_cast<__int128>(total));
    given += q[name];
    rems.push_back({num % static_cast<__int128>(total), name});
  }
  std::sort(rems.begin(), rems.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t k = 0; given < n; ++k, ++given) ++q[rems[k].second];
  return q;
}

}  // namespace oracle
