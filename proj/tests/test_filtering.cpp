#include <doctest.h>

#include <algorithm>
#include <random>

#include "aot/filtering.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace aot;
using namespace aot::filtering;
using aot::exec::ExecStatus;
using aot::exec::ExecutionResult;

namespace {

// Returns a fixed result and remembers what it was asked to run.
class FixedExecutor final : public exec::Executor {
 public:
  explicit FixedExecutor(ExecutionResult r) : result_(std::move(r)) {}
  ExecutionResult run(std::string_view source, double timeout) override {
    ++calls;
    last_source = source;
    last_timeout = timeout;
    return result_;
  }
  int calls = 0;
  std::string last_source;
  double last_timeout = 0;

 private:
  ExecutionResult result_;
};

ExecutionResult ok_run(std::string out, std::optional<std::string> ret = std::nullopt) {
  return {ExecStatus::kSuccess, std::move(out), std::move(ret), 0.01, ""};
}

format::AotTextDoc doc_with_details(std::vector<std::string> details) {
  format::AotTextDoc d;
  d.steps.push_back({1, "purpose", std::move(details)});
  d.boxed_answer = "x";
  return d;
}

const char* kGoodCode =
    "```python\ndef add(a, b):\n    \"\"\"Adds.\"\"\"\n    return a + b\n\ndef main():\n"
    "    print(add(2, 2))\n\nmain()\n```";

corpus::Instance text_inst(std::string gold) {
  return {"t", "drop", corpus::Modality::kText, "q", std::move(gold)};
}
corpus::Instance code_inst(std::string gold) {
  return {"c", "gsm8k", corpus::Modality::kCode, "q", std::move(gold)};
}

}  // namespace

TEST_CASE("jaccard examples") {
  CHECK(jaccard_words("the cat sat", "the cat sat") == 1.0);
  CHECK(jaccard_words("alpha beta", "gamma delta") == 0.0);
  CHECK(jaccard_words("the cat sat", "the cat ran") == 0.5);
  CHECK(jaccard_words("", "") == 0.0);
  CHECK(jaccard_words("", "a") == 0.0);
  CHECK(jaccard_words("The CAT", "the cat the") == 1.0);
}

TEST_CASE("jaccard equals set-builder oracle on 10000 pairs") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 10000; ++i) {
    auto a = oracle::random_words(rng, 8);
    auto b = oracle::random_words(rng, 8);
    const std::string sa = oracle::join(a, (i % 2) ? " " : " \t ");
    const std::string sb = oracle::join(b, " ");
    const double got = jaccard_words(sa, sb);
    REQUIRE(got == oracle::jaccard(a, b));
    CHECK(got == jaccard_words(sb, sa));
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
    if (!a.empty()) CHECK(jaccard_words(sa, sa) == 1.0);
  }
}

TEST_CASE("degeneration gate") {
  CHECK(check_step_degeneration(doc_with_details({"alpha beta", "gamma delta"})).passed);
  auto boundary = check_step_degeneration(doc_with_details({"the cat sat", "the cat ran"}));
  CHECK(!boundary.passed);
  CHECK(boundary.detail == "max_jaccard=0.5 lines 1,2");
  CHECK(check_step_degeneration(doc_with_details({"only one"})).passed);
  CHECK(check_step_degeneration(doc_with_details({})).passed);

  // Pairs are taken across steps.
  format::AotTextDoc d;
  d.steps = {{1, "p", {"x = 1 + 2"}}, {2, "q", {"y = 5"}, }, {3, "r", {"x = 1 + 2 again"}}};
  d.boxed_answer = "3";
  auto across = check_step_degeneration(d);
  CHECK(!across.passed);
  CHECK(across.detail.find("lines 1,3") != std::string::npos);

  // Purposes only count when asked.
  format::AotTextDoc p;
  p.steps = {{1, "same words here", {"a"}}, {2, "same words here", {"b"}}};
  p.boxed_answer = "z";
  CHECK(check_step_degeneration(p).passed);
  CHECK(!check_step_degeneration(p, {.include_purposes = true}).passed);

  CHECK(check_step_degeneration(doc_with_details({"a b c", "a b d"}), {.threshold = 0.6}).passed);
}

TEST_CASE("degeneration is permutation invariant") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    std::vector<std::string> lines;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int k = 0; k < n; ++k) {
      auto w = oracle::random_words(rng, 5);
      if (w.empty()) w.push_back("w");
      lines.push_back(oracle::join(w, " "));
    }
    double worst = 0.0;
    for (std::size_t a = 0; a < lines.size(); ++a) {
      for (std::size_t b = a + 1; b < lines.size(); ++b) {
        worst = std::max(worst, jaccard_words(lines[a], lines[b]));
      }
    }
    const bool expect = worst < 0.5;
    auto shuffled = lines;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(check_step_degeneration(doc_with_details(lines)).passed == expect);
    CHECK(check_step_degeneration(doc_with_details(shuffled)).passed == expect);
  }
}

TEST_CASE("answer normalization and matching") {
  CHECK(normalize_answer("  Hello   World ") == "hello world");
  CHECK(normalize_answer("ÄB") == "Äb");
  CHECK(answers_match("42", "42"));
  CHECK(answers_match("(a)", "(A)"));
  CHECK(!answers_match("41", "42"));
  CHECK(answers_match("42.0000001", "42"));
  CHECK(!answers_match("42.00001", "42"));
  CHECK(answers_match("1e3", "1000"));
  CHECK(answers_match("-0.5", "-.5"));
  CHECK(!answers_match("inf", "inf1"));
  CHECK(!answers_match("Yes", "yes", {.case_fold = false}));
  CHECK(answers_match("x  y", "x y"));
  CHECK(!answers_match("x  y", "x y", {.collapse_whitespace = false}));

  CHECK(parse_number("3.5") == 3.5);
  CHECK(!parse_number("3.5 apples"));
  CHECK(!parse_number("nan"));
  CHECK(!parse_number(""));

  CHECK(!answers_match("B", "(B)"));
  MatchOptions mc{.multiple_choice = true};
  CHECK(answers_match("B", "(B)", mc));
  CHECK(answers_match("the answer is (b)", "(B)", mc));
  CHECK(!answers_match("(C)", "(B)", mc));
  CHECK(!answers_match("Bob", "(B)", mc));
}

TEST_CASE("answer consistency gate") {
  auto d = doc_with_details({"a"});
  d.boxed_answer = "42";
  CHECK(check_answer_consistency(d, "42").passed);
  d.boxed_answer = "(a)";
  CHECK(check_answer_consistency(d, "(A)").passed);
  d.boxed_answer = "41";
  auto r = check_answer_consistency(d, "42");
  CHECK(!r.passed);
  CHECK(r.detail == "boxed \"41\" != gold \"42\"");
}

TEST_CASE("execution gate: prints or returns") {
  auto doc = format::parse_code_aot(kGoodCode);
  FixedExecutor prints(ok_run("working\n4\n\n"));
  auto r = check_code_execution(doc, "4", &prints, 10.0);
  CHECK(r.passed);
  CHECK(r.detail == "printed gold");
  CHECK(prints.last_timeout == 10.0);
  CHECK(prints.last_source.find("```") == std::string::npos);

  FixedExecutor returns(ok_run("", "4"));
  auto r2 = check_code_execution(doc, "4", &returns, 10.0);
  CHECK(r2.passed);
  CHECK(r2.detail == "returned gold");

  FixedExecutor either(ok_run("5\n", "4"));
  CHECK(check_code_execution(doc, "4", &either, 10.0).passed);

  FixedExecutor wrong(ok_run("5\n", "6"));
  auto r3 = check_code_execution(doc, "4", &wrong, 10.0);
  CHECK(!r3.passed);
  CHECK(r3.detail == "printed \"5\", returned \"6\", gold \"4\"");

  FixedExecutor timeout(ExecutionResult{ExecStatus::kTimeout, "4\n", std::nullopt, 10.0, ""});
  auto r4 = check_code_execution(doc, "4", &timeout, 10.0);
  CHECK(!r4.passed);
  CHECK(r4.detail == "timeout");

  FixedExecutor crash(ExecutionResult{ExecStatus::kException, "4\n", std::nullopt, 0.1, "ZeroDivisionError"});
  auto r5 = check_code_execution(doc, "4", &crash, 10.0);
  CHECK(!r5.passed);
  CHECK(r5.detail == "exception: ZeroDivisionError");

  CHECK_ERROR(check_code_execution(doc, "4", nullptr, 10.0), ErrorCode::kExecutorUnavailable);
}

TEST_CASE("filter_instance text path") {
  const std::string good =
      "Step 1: Count apples.\nalice has 3 apples\nStep 2: Add.\n3 + 2 = 5\n\\boxed{5}";
  auto v = filter_instance(text_inst("5"), good, nullptr);
  CHECK(v.passed);
  REQUIRE(v.checks.size() == 3);
  CHECK(v.checks[0].check == CheckId::kFormat);
  CHECK(v.checks[1].check == CheckId::kAnswer);
  CHECK(v.checks[2].check == CheckId::kDegeneration);
  CHECK(v.find(CheckId::kExecution) == nullptr);

  auto bad = filter_instance(text_inst("5"), "no steps at all", nullptr);
  CHECK(!bad.passed);
  REQUIRE(bad.checks.size() == 1);
  CHECK(bad.checks[0].check == CheckId::kFormat);
  CHECK(bad.checks[0].detail == "NoSteps: no \"Step i\" header found");

  auto wrong = filter_instance(text_inst("6"), good, nullptr);
  CHECK(!wrong.passed);
  REQUIRE(wrong.checks.size() == 2);
  CHECK(wrong.checks[0].passed);
  CHECK(!wrong.checks[1].passed);

  auto degenerate = filter_instance(
      text_inst("5"), "Step 1: a\nthe cat sat\nStep 2: b\nthe cat ran\n\\boxed{5}", nullptr);
  CHECK(!degenerate.passed);
  CHECK(degenerate.checks.back().check == CheckId::kDegeneration);

  auto empty_purpose = filter_instance(text_inst("5"), "Step 1:\n\nStep 2: b\nc\n\\boxed{5}", nullptr);
  CHECK(!empty_purpose.passed);
  // "Step 1:" takes the next non-empty line, which is a header, so step 1 is empty.
  CHECK(empty_purpose.checks[0].detail == "purpose-nonempty at step 1");
}

TEST_CASE("filter_instance code path") {
  FixedExecutor prints4(ok_run("4\n"));
  auto v = filter_instance(code_inst("4"), kGoodCode, &prints4);
  CHECK(v.passed);
  REQUIRE(v.checks.size() == 2);
  CHECK(v.checks[1].check == CheckId::kExecution);
  CHECK(v.find(CheckId::kDegeneration) == nullptr);

  auto wrong = filter_instance(code_inst("5"), kGoodCode, &prints4);
  CHECK(!wrong.passed);
  CHECK(wrong.checks[0].passed);
  CHECK(!wrong.checks[1].passed);

  FixedExecutor never(ok_run("4\n"));
  auto prose = filter_instance(code_inst("4"), "I think it is 4.", &never);
  CHECK(!prose.passed);
  CHECK(prose.checks.size() == 1);
  CHECK(never.calls == 0);

  auto unannotated = filter_instance(
      code_inst("4"), "def helper():\n    return 4\n\ndef main():\n    print(helper())\n", &never);
  CHECK(!unannotated.passed);
  CHECK(unannotated.checks[0].detail == "piece-annotated at helper");
  CHECK(never.calls == 0);
}

TEST_CASE("gate chain monotonicity and determinism") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> responses = {
      "Step 1: a\nb\n\\boxed{1}", "Step 1: a\n\\boxed{2}", "Step 2: a\n\\boxed{1}", "", "\\boxed{1}",
      "Step 1: a\nx y\nStep 2: b\nx y\n\\boxed{1}", kGoodCode, "def main():\n    print(1)\n"};
  FixedExecutor ex(ok_run("1\n"));
  for (const auto& r : responses) {
    for (auto inst : {text_inst("1"), code_inst("1")}) {
      auto v = filter_instance(inst, r, &ex);
      auto w = filter_instance(inst, r, &ex);
      CHECK(verdict_to_json("id", v) == verdict_to_json("id", w));
      bool seen_fail = false;
      for (const auto& c : v.checks) {
        CHECK(!seen_fail);  // nothing follows a failed gate
        if (!c.passed) seen_fail = true;
      }
      CHECK(v.passed == !seen_fail);
      if (inst.modality == corpus::Modality::kText) CHECK(v.find(CheckId::kExecution) == nullptr);
      else CHECK(v.find(CheckId::kDegeneration) == nullptr);
    }
  }
}

TEST_CASE("verdict json shape") {
  FilterVerdict v;
  v.passed = false;
  v.checks.push_back({CheckId::kFormat, false, "NoSteps"});
  auto j = verdict_to_json("x1", v);
  CHECK(j.dump() == R"({"checks":[{"check":"format","detail":"NoSteps","passed":false}],"id":"x1","passed":false})");
}
