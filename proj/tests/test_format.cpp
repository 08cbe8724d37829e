#include <doctest.h>

#include <random>
#include <string>

#include "aot/format.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace aot;
using namespace aot::format;

TEST_CASE("extract_boxed basics") {
  CHECK(extract_boxed("the answer is \\boxed{42}.") == "42");
  CHECK(extract_boxed("\\boxed{x^{2}+1}") == "x^{2}+1");
  CHECK_ERROR(extract_boxed("no box here"), ErrorCode::kNoBoxedAnswer);
  CHECK(extract_boxed("\\boxed{1} then \\boxed{2}") == "2");
  CHECK_ERROR(extract_boxed("\\boxed{1} then \\boxed{2"), ErrorCode::kNoBoxedAnswer);
  CHECK(extract_boxed("\\boxed{}") == "");
}

TEST_CASE("find_last_boxed offsets") {
  const std::string s = "ab \\boxed{{x}} cd";
  auto span = find_last_boxed(s);
  REQUIRE(span);
  CHECK(span->begin == 3);
  CHECK(s.substr(span->content_begin, span->content_end - span->content_begin) == "{x}");
  CHECK(s[span->content_end] == '}');
  CHECK(span->end == s.size() - 3);
}

TEST_CASE("extract_boxed agrees with brute-force scanner at depth <= 3") {
  std::mt19937_64 rng(12345);
  int with_answer = 0;
  for (int i = 0; i < 20000; ++i) {
    const std::string s = oracle::random_brace_string(rng);
    const auto want = oracle::last_boxed(s);
    const auto got = find_last_boxed(s);
    REQUIRE_MESSAGE(want.has_value() == got.has_value(), s);
    if (want) {
      ++with_answer;
      CHECK(s.substr(got->content_begin, got->content_end - got->content_begin) == *want);
      CHECK(extract_boxed(s) == *want);
    } else {
      CHECK_ERROR(extract_boxed(s), ErrorCode::kNoBoxedAnswer);
    }
  }
  CHECK(with_answer > 1000);
}

TEST_CASE("parse quadratic example") {
  const std::string raw =
      "Step 1: Derive the general formula.\nx = (-b ± √(b²-4ac)) / 2a\nStep 2: Substitute "
      "coefficients.\na=1, b=-3, c=2\n\\boxed{x=1 or x=2}";
  auto doc = parse_text_aot(raw);
  REQUIRE(doc.steps.size() == 2);
  CHECK(doc.steps[0].purpose == "Derive the general formula.");
  CHECK(doc.steps[1].purpose == "Substitute coefficients.");
  CHECK(doc.steps[0].details == std::vector<std::string>{"x = (-b ± √(b²-4ac)) / 2a"});
  CHECK(doc.steps[1].details == std::vector<std::string>{"a=1, b=-3, c=2"});
  CHECK(doc.boxed_answer == "x=1 or x=2");
  CHECK(doc.raw == raw);
  CHECK(validate_text_aot(doc).ok());

  auto again = parse_text_aot(serialize_text_aot(doc));
  CHECK(structurally_equal(doc, again));
}

TEST_CASE("minimal document and its serialization") {
  auto doc = parse_text_aot("Step 1: Done.\n\\boxed{A}");
  REQUIRE(doc.steps.size() == 1);
  CHECK(doc.steps[0].details.empty());
  CHECK(doc.boxed_answer == "A");
  CHECK(serialize_text_aot(doc) == "Step 1: Done.\n\\boxed{A}");
}

TEST_CASE("parse errors") {
  CHECK_ERROR(parse_text_aot("Step 1: a\nStep 3: b\n\\boxed{x}"), ErrorCode::kNonSequentialSteps);
  CHECK_ERROR(parse_text_aot("Step 2: a\n\\boxed{x}"), ErrorCode::kNonSequentialSteps);
  CHECK_ERROR(parse_text_aot("just prose \\boxed{x}"), ErrorCode::kNoSteps);
  CHECK_ERROR(parse_text_aot(""), ErrorCode::kNoSteps);
  CHECK_ERROR(parse_text_aot("Step 1: a\nb"), ErrorCode::kNoBoxedAnswer);
  // Missing steps is reported before a missing answer.
  CHECK_ERROR(parse_text_aot("nothing"), ErrorCode::kNoSteps);
}

TEST_CASE("step header variants") {
  auto d = parse_text_aot("Step 1. dot\nStep 2 no punctuation\n  Step  3 : spaced\nStep 4:\nnext line\n\\boxed{k}");
  REQUIRE(d.steps.size() == 4);
  CHECK(d.steps[0].purpose == "dot");
  CHECK(d.steps[1].purpose == "no punctuation");
  CHECK(d.steps[2].purpose == "spaced");
  CHECK(d.steps[3].purpose == "next line");
  CHECK(d.steps[3].details.empty());

  // Not headers: lowercase, glued word, no number.
  auto e = parse_text_aot("Step 1: real\nstep 2: lower\nSteps 2: plural\nStep2x glued\nStep: none\n\\boxed{k}");
  REQUIRE(e.steps.size() == 1);
  CHECK(e.steps[0].details.size() == 4);
}

TEST_CASE("preamble before the first step is ignored") {
  auto d = parse_text_aot("Let me think.\n\nStep 1: go\n  detail one  \n\n\\boxed{1}");
  REQUIRE(d.steps.size() == 1);
  CHECK(d.steps[0].details == std::vector<std::string>{"detail one"});
}

TEST_CASE("boxed answer is cut from the body before splitting lines") {
  auto d = parse_text_aot("Step 1: compute\nso the answer is \\boxed{7}.");
  REQUIRE(d.steps[0].details.size() == 1);
  CHECK(d.steps[0].details[0].find("\\boxed") == std::string::npos);
  CHECK(d.boxed_answer == "7");
}

TEST_CASE("validate_text_aot rules") {
  AotTextDoc d;
  d.steps = {{1, "Find x", {"x=1"}}, {2, "", {"y=2"}}};
  d.boxed_answer = "3";
  auto r = validate_text_aot(d);
  REQUIRE(r.violations.size() == 1);
  CHECK(r.violations[0].rule == "purpose-nonempty");
  CHECK(r.violations[0].location == "step 2");

  d.steps[1].purpose = "Find y";
  d.boxed_answer.reset();
  r = validate_text_aot(d);
  CHECK(r.has("boxed-present"));
  CHECK(r.violations.size() == 1);

  d.boxed_answer = "3";
  d.steps[1].index = 5;
  CHECK(validate_text_aot(d).has("steps-sequential"));

  AotTextDoc empty;
  empty.boxed_answer = "x";
  CHECK(validate_text_aot(empty).has("steps-present"));

  // Pure: same input, same report.
  auto a = validate_text_aot(d), b = validate_text_aot(d);
  CHECK(a.violations.size() == b.violations.size());
  CHECK(a.violations[0].message == b.violations[0].message);
}

TEST_CASE("empty purpose in a raw response surfaces in validation") {
  auto d = parse_text_aot("Step 1: first\na\nStep 2:\nStep 3: third\n\\boxed{z}");
  REQUIRE(d.steps.size() == 3);
  CHECK(d.steps[1].purpose.empty());
  auto r = validate_text_aot(d);
  CHECK(r.has("purpose-nonempty"));
  CHECK(r.violations[0].location == "step 2");
}

TEST_CASE("random documents round-trip through serialize and parse") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 2000; ++i) {
    const AotTextDoc d = oracle::random_doc(rng);
    REQUIRE(validate_text_aot(d).ok());
    const std::string s = serialize_text_aot(d);
    const AotTextDoc back = parse_text_aot(s);
    REQUIRE_MESSAGE(structurally_equal(d, back), s);
    // Purposes precede their details in the rendering.
    std::size_t pos = 0;
    for (const auto& st : d.steps) {
      auto p = s.find(st.purpose, pos);
      REQUIRE(p != std::string::npos);
      pos = p + st.purpose.size();
      for (const auto& det : st.details) {
        auto q = s.find(det, pos);
        REQUIRE(q != std::string::npos);
        pos = q + det.size();
      }
    }
  }
}

namespace {

const char* kCountObjects = R"(Here is the program.
```python
def count_objects(items):
    """Counts the objects in the list."""
    return len(items)


def main():
    print(count_objects(["apple", "pear"]))


main()
```
)";

}  // namespace

TEST_CASE("code parse: docstring helper and main") {
  auto doc = parse_code_aot(kCountObjects);
  REQUIRE(doc.pieces.size() == 2);
  CHECK(doc.language_tag == "python");
  CHECK(doc.pieces[0].name == "count_objects");
  CHECK(doc.pieces[0].kind == PieceKind::kFunction);
  CHECK(doc.pieces[0].annotation.find("Counts the objects") != std::string::npos);
  const CodePiece* m = doc.main_piece();
  REQUIRE(m != nullptr);
  CHECK(m->name == "main");
  CHECK(m->callees.count("count_objects") == 1);
  CHECK(validate_code_aot(doc).ok());
}

TEST_CASE("code parse: main that calls nothing") {
  auto doc = parse_code_aot("```python\ndef main():\n    print(1)\n```");
  REQUIRE(doc.main_piece() != nullptr);
  auto r = validate_code_aot(doc);
  CHECK(r.has("main-calls-helper"));
  CHECK(!r.has("main-present"));
}

TEST_CASE("code parse: errors") {
  CHECK_ERROR(parse_code_aot(""), ErrorCode::kNoCodeFound);
  CHECK_ERROR(parse_code_aot("```python\n\n```"), ErrorCode::kNoCodeFound);
  CHECK_ERROR(parse_code_aot("```python\ndef helper():\n    \"\"\"h\"\"\"\n    return 1\n```"),
              ErrorCode::kNoMainFunction);
  CHECK_ERROR(parse_code_aot("```python\ndef helper():\n    return 1\n\ndef main():\n    helper()\n```"),
              ErrorCode::kUnannotatedPiece);
}

TEST_CASE("code parse: lenient mode reports unannotated pieces") {
  const std::string src = "```python\ndef helper():\n    return 1\n\ndef main():\n    print(helper())\n```";
  auto doc = parse_code_aot(src, {.require_annotations = false});
  auto r = validate_code_aot(doc);
  REQUIRE(r.has("piece-annotated"));
  CHECK(r.violations[0].location == "helper");
}

TEST_CASE("code parse: comment annotation, guard block, class") {
  const std::string src = R"(import math

# Area of a circle of radius r.
# Uses math.pi.
def area(r):
    return math.pi * r * r


class Shape:
    """A named shape."""

    def __init__(self, name):
        self.name = name


if __name__ == "__main__":
    s = Shape("c")
    print(round(area(2), 2), s.name)
)";
  auto doc = parse_code_aot(src);
  REQUIRE(doc.pieces.size() == 3);
  CHECK(doc.pieces[0].name == "area");
  CHECK(doc.pieces[0].annotation.find("Area of a circle") != std::string::npos);
  CHECK(doc.pieces[0].annotation.find("Uses math.pi") != std::string::npos);
  CHECK(doc.pieces[1].kind == PieceKind::kClass);
  CHECK(doc.pieces[1].name == "Shape");
  const CodePiece* m = doc.main_piece();
  REQUIRE(m != nullptr);
  CHECK(m->kind == PieceKind::kMain);
  CHECK(m->name == "__main__");
  CHECK(m->callees == std::set<std::string>{"Shape", "area", "print", "round"});
  CHECK(validate_code_aot(doc).ok());
}

TEST_CASE("code parse: guard block does not replace an explicit main") {
  const std::string src =
      "def f():\n    \"\"\"f\"\"\"\n    return 1\n\ndef main():\n    print(f())\n\n"
      "if __name__ == \"__main__\":\n    main()\n";
  auto doc = parse_code_aot(src);
  int mains = 0;
  for (const auto& p : doc.pieces) mains += p.kind == PieceKind::kMain;
  CHECK(mains == 1);
  CHECK(doc.main_piece()->name == "main");
}

TEST_CASE("code parse: attribute calls and strings are not callees or pieces") {
  const std::string src = R"(```python
def helper(xs):
    """Sorts words."""
    return sorted(xs)


def main():
    text = "def fake(): pass"
    words = text.split()
    print(" ".join(helper(words)))
```)";
  auto doc = parse_code_aot(src);
  REQUIRE(doc.pieces.size() == 2);
  const auto& callees = doc.main_piece()->callees;
  CHECK(callees.count("helper") == 1);
  CHECK(callees.count("split") == 0);
  CHECK(callees.count("join") == 0);
  CHECK(callees.count("fake") == 0);
}

TEST_CASE("code parse: decorators stay with their definition") {
  const std::string src =
      "import functools\n\n@functools.lru_cache(None)\ndef fib(n):\n    \"\"\"Fibonacci.\"\"\"\n"
      "    return n if n < 2 else fib(n - 1) + fib(n - 2)\n\ndef main():\n    print(fib(10))\n";
  auto doc = parse_code_aot(src);
  REQUIRE(doc.pieces.size() == 2);
  CHECK(doc.pieces[0].name == "fib");
  CHECK(doc.pieces[0].annotation == "Fibonacci.");
  CHECK(validate_code_aot(doc).ok());
}

TEST_CASE("code parse: last fenced block wins") {
  const std::string src =
      "First attempt:\n```python\ndef main():\n    print('old')\n```\nFinal:\n```py\n"
      "def g():\n    \"\"\"g\"\"\"\n    return 2\n\ndef main():\n    print(g())\n```\n";
  auto doc = parse_code_aot(src);
  CHECK(doc.language_tag == "py");
  CHECK(doc.pieces.size() == 2);
  CHECK(doc.code.find("old") == std::string::npos);
  auto region = extract_code_region(src);
  CHECK(region.fenced);
  CHECK(has_fenced_block(src));
  CHECK(!has_fenced_block("no fences"));
}

TEST_CASE("code parse: duplicate definitions are flagged") {
  const std::string src =
      "def f():\n    \"\"\"a\"\"\"\n    return 1\n\ndef f():\n    \"\"\"b\"\"\"\n    return 2\n\n"
      "def main():\n    print(f())\n";
  auto r = validate_code_aot(parse_code_aot(src));
  CHECK(r.has("piece-names-unique"));
}

TEST_CASE("unfenced code and top-level definition detection") {
  CHECK(has_top_level_definition("def main():\n    return 1\n"));
  CHECK(has_top_level_definition("x = 1\nclass A:\n    pass\n"));
  CHECK(!has_top_level_definition("    def indented():\n        pass\n"));
  CHECK(!has_top_level_definition("I define things in prose."));
  auto region = extract_code_region("def main():\n    return 1\n");
  CHECK(!region.fenced);
}
