#pragma once

// Two-level Abstraction-of-Thought response grammar.
//
// Text responses are a sequence of "Step i" blocks. The first non-empty
// content of a block (the header remainder, or failing that the next
// non-empty line) is the level-1 purpose; every remaining non-empty line is
// a level-2 detail. The final answer sits in the last \boxed{...}.
//
// Code responses are Python programs split into top-level functions and
// classes, each annotated with a docstring or a comment block directly
// above it, plus a main function (or `if __name__ == "__main__":` block)
// that calls them.

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace aot::format {

struct AbstractionStep {
  int index = 0;
  std::string purpose;
  std::vector<std::string> details;

  bool operator==(const AbstractionStep&) const = default;
};

struct AotTextDoc {
  std::vector<AbstractionStep> steps;
  std::optional<std::string> boxed_answer;
  std::string raw;
};

// Equality on steps and boxed answer; `raw` is ignored.
bool structurally_equal(const AotTextDoc& a, const AotTextDoc& b);

enum class PieceKind { kFunction, kClass, kMain };

std::string_view to_string(PieceKind kind);

struct CodePiece {
  std::string name;
  PieceKind kind = PieceKind::kFunction;
  std::string annotation;
  std::string body;
  std::set<std::string> callees;
};

struct AotCodeDoc {
  std::vector<CodePiece> pieces;
  std::string language_tag;
  std::string raw;
  std::string code;  // the region that was segmented (fenced block or whole text)

  // First piece of kind kMain, or nullptr.
  const CodePiece* main_piece() const;
};

struct Violation {
  std::string rule;
  std::string message;
  std::string location;
};

struct FormatReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(std::string_view rule) const;
};

// Byte offsets of one \boxed{...} occurrence within the scanned text.
struct BoxedSpan {
  std::size_t begin = 0;          // position of the backslash
  std::size_t content_begin = 0;  // first byte after the opening brace
  std::size_t content_end = 0;    // position of the matching closing brace
  std::size_t end = 0;            // one past the closing brace
};

// Last occurrence of "\boxed{" with its balanced closing brace. Nested braces
// are kept verbatim. nullopt when there is no occurrence or the last one is
// unbalanced.
std::optional<BoxedSpan> find_last_boxed(std::string_view text);

// Content of the last \boxed{...}; throws Error(kNoBoxedAnswer).
std::string extract_boxed(std::string_view text);

// Throws kNoSteps, kNonSequentialSteps, kNoBoxedAnswer.
AotTextDoc parse_text_aot(std::string_view raw);

FormatReport validate_text_aot(const AotTextDoc& doc);

// Canonical rendering: "Step i: <purpose>", one detail per line, then
// "\boxed{answer}" on the last line.
std::string serialize_text_aot(const AotTextDoc& doc);

struct CodeRegion {
  std::string code;
  std::string language_tag;
  bool fenced = false;
};

// The last fenced ``` block if any, else the whole text.
CodeRegion extract_code_region(std::string_view raw);

bool has_fenced_block(std::string_view raw);

struct CodeParseOptions {
  // When false, unannotated pieces are returned with an empty annotation so
  // validate_code_aot can report them instead of parse throwing.
  bool require_annotations = true;
};

// Throws kNoCodeFound, kNoMainFunction, kUnannotatedPiece.
AotCodeDoc parse_code_aot(std::string_view raw, const CodeParseOptions& options = {});

// True when the code region holds at least one top-level `def`/`class`.
bool has_top_level_definition(std::string_view code);

FormatReport validate_code_aot(const AotCodeDoc& doc);

}  // namespace aot::format
