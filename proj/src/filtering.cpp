#include "aot/filtering.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "aot/error.hpp"
#include "aot/text_util.hpp"

namespace aot::filtering {

using nlohmann::json;

std::string normalize_answer(std::string_view s, const MatchOptions& options) {
  std::string out = options.collapse_whitespace ? text::collapse_whitespace(s)
                                                : std::string(text::trim(s));
  if (options.case_fold) out = text::to_lower(out);
  return out;
}

std::optional<double> parse_number(std::string_view s) {
  std::string t(text::trim(s));
  if (t.empty()) return std::nullopt;
  // strtod also accepts "inf", "nan" and hex floats; only plain decimals count.
  for (char c : t) {
    if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+' ||
          c == 'e' || c == 'E')) {
      return std::nullopt;
    }
  }
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
  return v;
}

namespace {

// "(X)" with a single letter X.
std::optional<char> choice_letter(std::string_view gold) {
  auto t = text::trim(gold);
  if (t.size() == 3 && t[0] == '(' && t[2] == ')' && std::isalpha(static_cast<unsigned char>(t[1]))) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(t[1])));
  }
  return std::nullopt;
}

}  // namespace

bool answers_match(std::string_view predicted, std::string_view gold, const MatchOptions& options) {
  const std::string p = normalize_answer(predicted, options);
  const std::string g = normalize_answer(gold, options);
  if (p == g) return true;
  if (auto pv = parse_number(p), gv = parse_number(g); pv && gv) {
    return std::fabs(*pv - *gv) <= options.numeric_tolerance;
  }
  if (options.multiple_choice) {
    if (auto letter = choice_letter(gold)) {
      std::string lp = text::to_lower(p);
      std::string paren = {'(', *letter, ')'};
      if (lp.find(paren) != std::string::npos) return true;
      if (lp.size() == 1 && lp[0] == *letter) return true;
    }
  }
  return false;
}

double jaccard_words(std::string_view a, std::string_view b) {
  std::set<std::string> wa, wb;
  for (auto& w : text::split_whitespace(a)) wa.insert(text::to_lower(w));
  for (auto& w : text::split_whitespace(b)) wb.insert(text::to_lower(w));
  if (wa.empty() && wb.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& w : wa) inter += wb.contains(w) ? 1 : 0;
  const std::size_t uni = wa.size() + wb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::string_view to_string(CheckId id) {
  switch (id) {
    case CheckId::kFormat: return "format";
    case CheckId::kAnswer: return "answer";
    case CheckId::kDegeneration: return "degeneration";
    case CheckId::kExecution: return "execution";
  }
  return "format";
}

const CheckResult* FilterVerdict::find(CheckId id) const {
  for (const auto& c : checks) {
    if (c.check == id) return &c;
  }
  return nullptr;
}

CheckResult check_step_degeneration(const format::AotTextDoc& doc,
                                    const DegenerationOptions& options) {
  std::vector<std::string_view> lines;
  for (const auto& step : doc.steps) {
    if (options.include_purposes) lines.push_back(step.purpose);
    for (const auto& d : step.details) lines.push_back(d);
  }
  double worst = 0.0;
  std::size_t wi = 0, wj = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      double sim = jaccard_words(lines[i], lines[j]);
      if (sim > worst) {
        worst = sim;
        wi = i;
        wj = j;
      }
    }
  }
  CheckResult r{CheckId::kDegeneration, worst < options.threshold, {}};
  std::ostringstream detail;
  detail << "max_jaccard=" << worst;
  if (worst > 0.0) detail << " lines " << wi + 1 << "," << wj + 1;
  r.detail = detail.str();
  return r;
}

CheckResult check_answer_consistency(const format::AotTextDoc& doc, std::string_view gold,
                                     const MatchOptions& options) {
  if (!doc.boxed_answer) return {CheckId::kAnswer, false, "no boxed answer"};
  bool ok = answers_match(*doc.boxed_answer, gold, options);
  return {CheckId::kAnswer, ok,
          ok ? "boxed answer matches gold"
             : "boxed \"" + *doc.boxed_answer + "\" != gold \"" + std::string(gold) + "\""};
}

CheckResult check_code_execution(const format::AotCodeDoc& doc, std::string_view gold,
                                 exec::Executor* executor, double timeout_seconds,
                                 const MatchOptions& options) {
  if (executor == nullptr) throw Error(ErrorCode::kExecutorUnavailable, "no executor configured");
  exec::ExecutionResult run = executor->run(doc.code, timeout_seconds);
  if (run.status == exec::ExecStatus::kTimeout) return {CheckId::kExecution, false, "timeout"};
  if (run.status == exec::ExecStatus::kException) {
    return {CheckId::kExecution, false,
            run.detail.empty() ? "exception" : "exception: " + run.detail};
  }
  auto printed = exec::last_printed_line(run);
  if (printed && answers_match(*printed, gold, options)) {
    return {CheckId::kExecution, true, "printed gold"};
  }
  if (run.returned && answers_match(*run.returned, gold, options)) {
    return {CheckId::kExecution, true, "returned gold"};
  }
  return {CheckId::kExecution, false,
          "printed \"" + printed.value_or("") + "\", returned \"" + run.returned.value_or("") +
              "\", gold \"" + std::string(gold) + "\""};
}

namespace {

std::string describe(const format::FormatReport& report) {
  std::string out;
  for (const auto& v : report.violations) {
    if (!out.empty()) out += "; ";
    out += v.rule + " at " + v.location;
  }
  return out;
}

}  // namespace

FilterVerdict filter_instance(const corpus::Instance& inst, std::string_view response,
                              exec::Executor* executor, const FilterOptions& options) {
  FilterVerdict verdict;
  auto fail = [&](CheckResult r) {
    verdict.checks.push_back(std::move(r));
    verdict.passed = false;
    return verdict;
  };

  if (inst.modality == corpus::Modality::kText) {
    format::AotTextDoc doc;
    try {
      doc = format::parse_text_aot(response);
    } catch (const Error& e) {
      return fail({CheckId::kFormat, false, e.what()});
    }
    auto report = format::validate_text_aot(doc);
    if (!report.ok()) return fail({CheckId::kFormat, false, describe(report)});
    verdict.checks.push_back({CheckId::kFormat, true, "ok"});

    auto answer = check_answer_consistency(doc, inst.gold_answer, options.match);
    if (!answer.passed) return fail(std::move(answer));
    verdict.checks.push_back(std::move(answer));

    auto degeneration = check_step_degeneration(doc, options.degeneration);
    if (!degeneration.passed) return fail(std::move(degeneration));
    verdict.checks.push_back(std::move(degeneration));
  } else {
    format::AotCodeDoc doc;
    try {
      doc = format::parse_code_aot(response, {.require_annotations = false});
    } catch (const Error& e) {
      return fail({CheckId::kFormat, false, e.what()});
    }
    auto report = format::validate_code_aot(doc);
    if (!report.ok()) return fail({CheckId::kFormat, false, describe(report)});
    verdict.checks.push_back({CheckId::kFormat, true, "ok"});

    auto execution =
        check_code_execution(doc, inst.gold_answer, executor, options.sandbox_timeout, options.match);
    if (!execution.passed) return fail(std::move(execution));
    verdict.checks.push_back(std::move(execution));
  }
  verdict.passed = true;
  return verdict;
}

json verdict_to_json(std::string_view id, const FilterVerdict& verdict) {
  json checks = json::array();
  for (const auto& c : verdict.checks) {
    checks.push_back({{"check", to_string(c.check)}, {"passed", c.passed}, {"detail", c.detail}});
  }
  return {{"id", std::string(id)}, {"passed", verdict.passed}, {"checks", std::move(checks)}};
}

}  // namespace aot::filtering
