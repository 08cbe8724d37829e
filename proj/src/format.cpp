#include "aot/format.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "aot/error.hpp"
#include "aot/text_util.hpp"

namespace aot::format {

namespace {

constexpr std::string_view kBoxedOpen = "\\boxed{";

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// ---------------------------------------------------------------------------
// Text grammar

struct StepHeader {
  int index = 0;
  std::string_view remainder;
};

// "Step" <ws>* <digits> [<ws>* (':' | '.')] followed by whitespace or end of
// line. Leading indentation is tolerated; "Step" is case-sensitive.
std::optional<StepHeader> match_step_header(std::string_view line) {
  std::string_view s = line;
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  if (!s.starts_with("Step")) return std::nullopt;
  s.remove_prefix(4);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  std::size_t digits = 0;
  while (digits < s.size() && std::isdigit(static_cast<unsigned char>(s[digits]))) ++digits;
  if (digits == 0 || digits > 9) return std::nullopt;
  int index = std::stoi(std::string(s.substr(0, digits)));
  s.remove_prefix(digits);

  auto at_boundary = [](std::string_view rest) {
    return rest.empty() || rest.front() == ' ' || rest.front() == '\t';
  };
  std::string_view after_sep = s;
  while (!after_sep.empty() && (after_sep.front() == ' ' || after_sep.front() == '\t')) {
    after_sep.remove_prefix(1);
  }
  if (!after_sep.empty() && (after_sep.front() == ':' || after_sep.front() == '.')) {
    after_sep.remove_prefix(1);
    if (at_boundary(after_sep)) return StepHeader{index, text::trim(after_sep)};
  }
  if (at_boundary(s)) return StepHeader{index, text::trim(s)};
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Python segmentation

struct PyScan {
  std::string sanitized;             // strings and comments blanked to spaces
  std::vector<bool> line_in_string;  // line starts inside a triple-quoted string
};

PyScan scan_python(std::string_view code) {
  PyScan out;
  out.sanitized.assign(code.size(), ' ');
  out.line_in_string.push_back(false);

  enum class State { kNormal, kComment, kSingle, kTriple };
  State state = State::kNormal;
  char quote = 0;

  for (std::size_t i = 0; i < code.size(); ++i) {
    char c = code[i];
    if (c == '\n') {
      out.sanitized[i] = '\n';
      if (state == State::kComment || state == State::kSingle) state = State::kNormal;
      out.line_in_string.push_back(state == State::kTriple);
      continue;
    }
    switch (state) {
      case State::kNormal:
        if (c == '#') {
          state = State::kComment;
        } else if (c == '\'' || c == '"') {
          quote = c;
          if (i + 2 < code.size() && code[i + 1] == c && code[i + 2] == c) {
            state = State::kTriple;
            i += 2;
          } else {
            state = State::kSingle;
          }
        } else {
          out.sanitized[i] = c;
        }
        break;
      case State::kComment:
        break;
      case State::kSingle:
        if (c == '\\' && i + 1 < code.size() && code[i + 1] != '\n') {
          ++i;
        } else if (c == quote) {
          state = State::kNormal;
        }
        break;
      case State::kTriple:
        if (c == '\\' && i + 1 < code.size() && code[i + 1] != '\n') {
          ++i;
        } else if (c == quote && i + 2 < code.size() && code[i + 1] == c && code[i + 2] == c) {
          state = State::kNormal;
          i += 2;
        }
        break;
    }
  }
  return out;
}

enum class LineKind { kBlank, kIndented, kComment, kDecorator, kDef, kClass, kGuard, kOther };

struct ClassifiedLine {
  LineKind kind = LineKind::kBlank;
  std::string name;
};

std::string_view skip_spaces(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::string read_identifier(std::string_view s) {
  std::size_t n = 0;
  if (s.empty() || !is_ident_start(s[0])) return {};
  while (n < s.size() && is_ident_char(s[n])) ++n;
  return std::string(s.substr(0, n));
}

bool is_main_guard(std::string_view sanitized_line) {
  // Quotes are blanked in the sanitized view, so match on the raw shape:
  // if __name__ == <string>:
  std::string_view s = sanitized_line;
  if (!s.starts_with("if")) return false;
  s = skip_spaces(s.substr(2));
  if (!s.starts_with("__name__")) return false;
  s = skip_spaces(s.substr(8));
  if (!s.starts_with("==")) return false;
  return true;
}

ClassifiedLine classify(std::string_view line, std::string_view sanitized_line,
                        bool in_string) {
  if (in_string) return {LineKind::kIndented, {}};
  if (text::trim(line).empty()) return {LineKind::kBlank, {}};
  if (line.front() == ' ' || line.front() == '\t') return {LineKind::kIndented, {}};
  if (line.front() == '#') return {LineKind::kComment, {}};
  if (line.front() == '@') return {LineKind::kDecorator, {}};

  std::string_view s = line;
  if (s.starts_with("async") && s.size() > 5 && (s[5] == ' ' || s[5] == '\t')) {
    s = skip_spaces(s.substr(5));
  }
  if (s.starts_with("def") && s.size() > 3 && (s[3] == ' ' || s[3] == '\t')) {
    std::string name = read_identifier(skip_spaces(s.substr(3)));
    if (!name.empty()) return {LineKind::kDef, name};
  }
  if (line.starts_with("class") && line.size() > 5 && (line[5] == ' ' || line[5] == '\t')) {
    std::string name = read_identifier(skip_spaces(line.substr(5)));
    if (!name.empty()) return {LineKind::kClass, name};
  }
  if (is_main_guard(sanitized_line)) return {LineKind::kGuard, {}};
  return {LineKind::kOther, {}};
}

bool is_terminator(LineKind kind) {
  return kind != LineKind::kBlank && kind != LineKind::kIndented && kind != LineKind::kComment;
}

std::string comment_text(std::string_view line) {
  std::string_view s = line;
  while (!s.empty() && s.front() == '#') s.remove_prefix(1);
  return std::string(text::trim(s));
}

// Docstring of a definition whose header is at `header` (first body statement
// being a string literal).
std::string docstring_after(const std::vector<std::string_view>& lines, std::size_t header,
                            std::size_t end) {
  std::size_t j = header + 1;
  while (j < end && text::trim(lines[j]).empty()) ++j;
  if (j >= end) return {};

  // Re-join the remaining body so triple-quoted docstrings spanning lines can
  // be read as one string.
  std::string rest;
  for (std::size_t k = j; k < end; ++k) {
    rest.append(lines[k]);
    rest.push_back('\n');
  }
  std::string_view s = text::trim(rest);
  while (!s.empty() && (s.front() == 'r' || s.front() == 'R' || s.front() == 'u' || s.front() == 'U')) {
    s.remove_prefix(1);
  }
  if (s.empty() || (s.front() != '"' && s.front() != '\'')) return {};

  char q = s.front();
  std::string delim = (s.size() >= 3 && s[1] == q && s[2] == q) ? std::string(3, q) : std::string(1, q);
  s.remove_prefix(delim.size());
  std::size_t close = s.find(delim);
  if (delim.size() == 1) {
    std::size_t nl = s.find('\n');
    if (close == std::string_view::npos || (nl != std::string_view::npos && nl < close)) return {};
  }
  if (close == std::string_view::npos) return {};
  return std::string(text::trim(s.substr(0, close)));
}

void collect_callees(std::string_view sanitized_body, std::set<std::string>& out) {
  static const std::set<std::string, std::less<>> kKeywords = {
      "if",     "elif",  "while",  "for",    "return",   "and",  "or",    "not",
      "in",     "is",    "lambda", "yield",  "assert",   "del",  "with",  "except",
      "raise",  "await", "def",    "class",  "else",     "import", "from", "as",
      "global", "nonlocal", "pass", "break", "continue", "try",  "finally", "None",
      "True",   "False", "match",  "case"};
  std::size_t i = 0;
  while (i < sanitized_body.size()) {
    char c = sanitized_body[i];
    if (!is_ident_start(c) || (i > 0 && is_ident_char(sanitized_body[i - 1]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < sanitized_body.size() && is_ident_char(sanitized_body[j])) ++j;
    std::size_t k = j;
    while (k < sanitized_body.size() && (sanitized_body[k] == ' ' || sanitized_body[k] == '\t')) ++k;
    bool attribute = false;
    std::size_t p = i;
    while (p > 0 && (sanitized_body[p - 1] == ' ' || sanitized_body[p - 1] == '\t')) --p;
    if (p > 0 && sanitized_body[p - 1] == '.') attribute = true;
    if (k < sanitized_body.size() && sanitized_body[k] == '(' && !attribute) {
      std::string name(sanitized_body.substr(i, j - i));
      if (!kKeywords.contains(name)) out.insert(std::move(name));
    }
    i = j;
  }
}

std::string join_lines(const std::vector<std::string_view>& lines, std::size_t begin,
                       std::size_t end) {
  std::string out;
  for (std::size_t k = begin; k < end; ++k) {
    if (k > begin) out.push_back('\n');
    out.append(lines[k]);
  }
  return out;
}

struct FencedBlock {
  std::string tag;
  std::string code;
};

std::vector<FencedBlock> fenced_blocks(std::string_view raw) {
  std::vector<FencedBlock> blocks;
  auto lines = text::split_lines(raw);
  std::optional<FencedBlock> open;
  for (auto line : lines) {
    std::string_view t = text::trim(line);
    if (t.starts_with("```")) {
      if (open) {
        blocks.push_back(std::move(*open));
        open.reset();
      } else {
        open = FencedBlock{std::string(text::trim(t.substr(3))), {}};
      }
      continue;
    }
    if (open) {
      open->code.append(line);
      open->code.push_back('\n');
    }
  }
  // An unterminated final fence (truncated generation) still counts.
  if (open) blocks.push_back(std::move(*open));
  return blocks;
}

}  // namespace

// ---------------------------------------------------------------------------

bool structurally_equal(const AotTextDoc& a, const AotTextDoc& b) {
  return a.steps == b.steps && a.boxed_answer == b.boxed_answer;
}

std::string_view to_string(PieceKind kind) {
  switch (kind) {
    case PieceKind::kFunction: return "function";
    case PieceKind::kClass: return "class";
    case PieceKind::kMain: return "main";
  }
  return "function";
}

const CodePiece* AotCodeDoc::main_piece() const {
  for (const auto& p : pieces) {
    if (p.kind == PieceKind::kMain) return &p;
  }
  return nullptr;
}

bool FormatReport::has(std::string_view rule) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.rule == rule; });
}

std::optional<BoxedSpan> find_last_boxed(std::string_view text) {
  std::size_t at = text.rfind(kBoxedOpen);
  if (at == std::string_view::npos) return std::nullopt;
  std::size_t content_begin = at + kBoxedOpen.size();
  int depth = 1;
  for (std::size_t i = content_begin; i < text.size(); ++i) {
    if (text[i] == '{') {
      ++depth;
    } else if (text[i] == '}') {
      if (--depth == 0) return BoxedSpan{at, content_begin, i, i + 1};
    }
  }
  return std::nullopt;
}

std::string extract_boxed(std::string_view text) {
  auto span = find_last_boxed(text);
  if (!span) {
    throw Error(ErrorCode::kNoBoxedAnswer,
                text.find(kBoxedOpen) == std::string_view::npos ? "no \\boxed{} in response"
                                                                 : "unbalanced braces in \\boxed{}");
  }
  return std::string(text.substr(span->content_begin, span->content_end - span->content_begin));
}

AotTextDoc parse_text_aot(std::string_view raw) {
  AotTextDoc doc;
  doc.raw = std::string(raw);

  // The answer is cut out of the body so it never shows up as a detail line.
  auto span = find_last_boxed(raw);
  std::string body;
  if (span) {
    body.append(raw.substr(0, span->begin));
    body.append(raw.substr(span->end));
  } else {
    body = std::string(raw);
  }

  bool in_step = false;
  bool have_purpose = false;
  for (auto line : text::split_lines(body)) {
    if (auto header = match_step_header(line)) {
      doc.steps.push_back(AbstractionStep{header->index, std::string(header->remainder), {}});
      in_step = true;
      have_purpose = !header->remainder.empty();
      continue;
    }
    if (!in_step) continue;  // preamble before "Step 1"
    std::string_view t = text::trim(line);
    if (t.empty()) continue;
    if (!have_purpose) {
      doc.steps.back().purpose = std::string(t);
      have_purpose = true;
    } else {
      doc.steps.back().details.emplace_back(t);
    }
  }

  if (doc.steps.empty()) throw Error(ErrorCode::kNoSteps, "no \"Step i\" header found");
  for (std::size_t i = 0; i < doc.steps.size(); ++i) {
    if (doc.steps[i].index != static_cast<int>(i) + 1) {
      throw Error(ErrorCode::kNonSequentialSteps,
                  "expected Step " + std::to_string(i + 1) + ", found Step " +
                      std::to_string(doc.steps[i].index));
    }
  }
  if (!span) {
    throw Error(ErrorCode::kNoBoxedAnswer, raw.find(kBoxedOpen) == std::string_view::npos
                                               ? "no \\boxed{} in response"
                                               : "unbalanced braces in \\boxed{}");
  }
  doc.boxed_answer =
      std::string(raw.substr(span->content_begin, span->content_end - span->content_begin));
  return doc;
}

FormatReport validate_text_aot(const AotTextDoc& doc) {
  FormatReport report;
  if (doc.steps.empty()) {
    report.violations.push_back({"steps-present", "response has no steps", "document"});
  }
  for (std::size_t i = 0; i < doc.steps.size(); ++i) {
    const auto& step = doc.steps[i];
    std::string where = "step " + std::to_string(i + 1);
    if (step.index != static_cast<int>(i) + 1) {
      report.violations.push_back({"steps-sequential",
                                   "expected Step " + std::to_string(i + 1) + ", found Step " +
                                       std::to_string(step.index),
                                   where});
    }
    if (text::trim(step.purpose).empty()) {
      report.violations.push_back({"purpose-nonempty", "step has no abstract purpose", where});
    }
    for (std::size_t d = 0; d < step.details.size(); ++d) {
      if (text::trim(step.details[d]).empty()) {
        report.violations.push_back(
            {"detail-nonempty", "empty detail line", where + " detail " + std::to_string(d + 1)});
      }
    }
  }
  if (!doc.boxed_answer) {
    report.violations.push_back({"boxed-present", "no \\boxed{} answer", "document"});
  }
  return report;
}

std::string serialize_text_aot(const AotTextDoc& doc) {
  std::string out;
  for (const auto& step : doc.steps) {
    if (!out.empty()) out.push_back('\n');
    out += "Step " + std::to_string(step.index) + ": " + step.purpose;
    for (const auto& d : step.details) {
      out.push_back('\n');
      out += d;
    }
  }
  if (doc.boxed_answer) {
    if (!out.empty()) out.push_back('\n');
    out += "\\boxed{" + *doc.boxed_answer + "}";
  }
  return out;
}

bool has_fenced_block(std::string_view raw) {
  for (auto line : text::split_lines(raw)) {
    if (text::trim(line).starts_with("```")) return true;
  }
  return false;
}

CodeRegion extract_code_region(std::string_view raw) {
  auto blocks = fenced_blocks(raw);
  if (!blocks.empty()) {
    return CodeRegion{std::move(blocks.back().code), std::move(blocks.back().tag), true};
  }
  return CodeRegion{std::string(raw), {}, false};
}

bool has_top_level_definition(std::string_view code) {
  PyScan scan = scan_python(code);
  auto lines = text::split_lines(code);
  auto slines = text::split_lines(scan.sanitized);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto kind = classify(lines[i], slines[i], scan.line_in_string[i]).kind;
    if (kind == LineKind::kDef || kind == LineKind::kClass) return true;
  }
  return false;
}

AotCodeDoc parse_code_aot(std::string_view raw, const CodeParseOptions& options) {
  AotCodeDoc doc;
  doc.raw = std::string(raw);
  CodeRegion region = extract_code_region(raw);
  doc.language_tag = region.language_tag;
  doc.code = region.code;
  if (text::trim(region.code).empty()) throw Error(ErrorCode::kNoCodeFound, "response has no code");

  PyScan scan = scan_python(region.code);
  auto lines = text::split_lines(region.code);
  auto slines = text::split_lines(scan.sanitized);

  std::vector<ClassifiedLine> kinds;
  kinds.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    kinds.push_back(classify(lines[i], slines[i], scan.line_in_string[i]));
  }

  auto extent_end = [&](std::size_t header) {
    std::size_t end = header + 1;
    while (end < lines.size() && !is_terminator(kinds[end].kind)) ++end;
    // Trailing blanks and column-0 comments belong to whatever follows.
    while (end > header + 1 &&
           (kinds[end - 1].kind == LineKind::kBlank || kinds[end - 1].kind == LineKind::kComment)) {
      --end;
    }
    return end;
  };

  bool has_def_main = std::any_of(kinds.begin(), kinds.end(), [](const ClassifiedLine& k) {
    return k.kind == LineKind::kDef && k.name == "main";
  });

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& k = kinds[i];
    bool guard_main = k.kind == LineKind::kGuard && !has_def_main;
    if (k.kind != LineKind::kDef && k.kind != LineKind::kClass && !guard_main) continue;

    std::size_t start = i;
    while (start > 0 && kinds[start - 1].kind == LineKind::kDecorator) --start;
    std::size_t end = extent_end(i);

    CodePiece piece;
    if (guard_main) {
      piece.name = "__main__";
      piece.kind = PieceKind::kMain;
    } else {
      piece.name = k.name;
      piece.kind = k.kind == LineKind::kClass
                       ? PieceKind::kClass
                       : (k.name == "main" ? PieceKind::kMain : PieceKind::kFunction);
    }
    piece.body = join_lines(lines, start, end);

    std::string annotation = docstring_after(lines, i, end);
    if (annotation.empty()) {
      std::size_t c = start;
      std::vector<std::string> comments;
      while (c > 0 && kinds[c - 1].kind == LineKind::kComment) {
        --c;
        comments.push_back(comment_text(lines[c]));
      }
      std::reverse(comments.begin(), comments.end());
      for (const auto& line : comments) {
        if (line.empty()) continue;
        if (!annotation.empty()) annotation.push_back('\n');
        annotation += line;
      }
    }
    piece.annotation = std::move(annotation);

    if (piece.kind == PieceKind::kMain) {
      collect_callees(join_lines(slines, i + 1, end), piece.callees);
    }
    doc.pieces.push_back(std::move(piece));
    i = end - 1;
  }

  if (doc.main_piece() == nullptr) {
    throw Error(ErrorCode::kNoMainFunction, "no main function or __main__ block");
  }
  if (options.require_annotations) {
    for (const auto& p : doc.pieces) {
      if (p.kind != PieceKind::kMain && p.annotation.empty()) {
        throw Error(ErrorCode::kUnannotatedPiece, p.name);
      }
    }
  }
  return doc;
}

FormatReport validate_code_aot(const AotCodeDoc& doc) {
  FormatReport report;
  std::set<std::string> defined;
  std::set<std::string> seen;
  int mains = 0;
  for (const auto& p : doc.pieces) {
    if (!seen.insert(p.name).second) {
      report.violations.push_back({"piece-names-unique", "duplicate definition", p.name});
    }
    if (p.kind == PieceKind::kMain) {
      ++mains;
      continue;
    }
    defined.insert(p.name);
    if (text::trim(p.annotation).empty()) {
      report.violations.push_back(
          {"piece-annotated", "no docstring or comment explaining the piece", p.name});
    }
  }
  if (mains == 0) {
    report.violations.push_back({"main-present", "no main function", "document"});
  } else if (mains > 1) {
    report.violations.push_back({"main-unique", "more than one main", "document"});
  }
  if (const CodePiece* m = doc.main_piece()) {
    bool calls_helper = std::any_of(m->callees.begin(), m->callees.end(),
                                    [&](const std::string& c) { return defined.contains(c); });
    if (!calls_helper) {
      report.violations.push_back(
          {"main-calls-helper", "main does not call any defined function or class", m->name});
    }
  }
  return report;
}

}  // namespace aot::format
