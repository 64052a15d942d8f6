#include "qbench/grading.hpp"

#include "qbench/errors.hpp"
#include "qbench/llm_gateway.hpp"
#include "qbench/prompts.hpp"
#include "qbench/util.hpp"

#include <algorithm>
#include <sstream>

namespace qbench {

namespace {

bool is_line_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f';
}

std::string collapse_spaces(const std::string& line) {
  std::string out;
  out.reserve(line.size());
  bool in_run = false;
  for (char c : line) {
    if (c == ' ' || c == '\t') {
      in_run = true;
      continue;
    }
    if (in_run) {
      out += ' ';  // a leading run still becomes one space
      in_run = false;
    }
    out += c;
  }
  return out;
}

std::string clip(const std::string& text, std::size_t limit = 500) {
  if (text.size() <= limit) {
    return text;
  }
  return text.substr(0, limit) + "...";
}

}  // namespace

std::string normalize_output(const std::string& raw) {
  std::string text;
  text.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == '\r' && i + 1 < raw.size() && raw[i + 1] == '\n') {
      continue;  // CRLF -> LF
    }
    text += raw[i];
  }

  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  lines.push_back(current);

  for (auto& line : lines) {
    while (!line.empty() && is_line_space(line.back())) {
      line.pop_back();
    }
  }
  std::size_t begin = 0;
  std::size_t end = lines.size();
  while (begin < end && lines[begin].empty()) {
    ++begin;
  }
  while (end > begin && lines[end - 1].empty()) {
    --end;
  }

  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) {
      out += '\n';
    }
    out += collapse_spaces(lines[i]);
  }
  return out;
}

bool compare_outputs(const std::string& actual, const std::string& expected) {
  return normalize_output(actual) == normalize_output(expected);
}

std::string to_string(CaseOutcome o) {
  switch (o) {
    case CaseOutcome::Pass:
      return "pass";
    case CaseOutcome::JudgePass:
      return "judge_pass";
    case CaseOutcome::Fail:
      return "fail";
    case CaseOutcome::Error:
      return "error";
    case CaseOutcome::Timeout:
      return "timeout";
  }
  return "fail";
}

nlohmann::ordered_json verdict_to_json(const Verdict& v) {
  nlohmann::ordered_json node;
  node["problem_id"] = v.problem_id;
  node["candidate_ref"] = v.candidate_ref;
  nlohmann::ordered_json cases = nlohmann::ordered_json::array();
  for (const auto& cr : v.per_case) {
    nlohmann::ordered_json c;
    c["index"] = cr.index;
    c["outcome"] = to_string(cr.outcome);
    if (cr.judge_flagged) {
      c["judge_flagged"] = true;
    }
    if (!cr.detail.empty()) {
      c["detail"] = cr.detail;
    }
    cases.push_back(std::move(c));
  }
  node["per_case"] = std::move(cases);
  node["passed"] = v.passed;
  node["total"] = v.total;
  node["all_passed"] = v.all_passed;
  if (v.judge_flagged) {
    node["judge_flagged"] = true;
  }
  return node;
}

JudgeDecision ScriptedJudge::judge(const std::string&, const std::string&, const std::string&) {
  ++calls_;
  if (!scripted_.empty()) {
    JudgeDecision d = scripted_.front();
    scripted_.erase(scripted_.begin());
    return d;
  }
  return {default_equivalent_, false};
}

std::string judge_shots_text(int shots) {
  struct Shot {
    const char* actual;
    const char* expected;
    const char* answer;
  };
  static const Shot kShots[] = {
      {"(1;2;3)", "[1, 2, 3]", "yes"},
      {"1b", "True", "yes"},
      {"3", "4", "no"},
      {"`hello", "hello", "yes"},
  };
  const int available = static_cast<int>(sizeof(kShots) / sizeof(kShots[0]));
  int count = std::clamp(shots, 0, available);
  std::ostringstream out;
  for (int i = 0; i < count; ++i) {
    if (i > 0) {
      out << "\n\n";
    }
    out << "Q output:\n" << kShots[i].actual << "\nPython output:\n" << kShots[i].expected
        << "\nEquivalent: " << kShots[i].answer;
  }
  return out.str();
}

LlmJudge::LlmJudge(LlmClient& client, const PromptLibrary& prompts, JudgeConfig config)
    : client_(client), prompts_(prompts), config_(std::move(config)) {
  if (config_.shots < 0) {
    throw ConfigError("judge shots must be >= 0");
  }
  if (config_.max_attempts < 1) {
    throw ConfigError("judge max_attempts must be >= 1");
  }
}

JudgeDecision LlmJudge::judge(const std::string& problem_context, const std::string& actual,
                              const std::string& expected) {
  std::string prompt = render_prompt(prompts_.get("judge_equivalence"),
                                     {{"shots", judge_shots_text(config_.shots)},
                                      {"actual", actual},
                                      {"expected", expected},
                                      {"problem_context", problem_context}});
  GenerationParams params;
  params.temperature = 0.0;
  params.max_tokens = 8;
  params.model = config_.model;

  for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
    std::string reply;
    try {
      reply = client_.complete(prompt, params);
    } catch (const GatewayError&) {
      // The client already retried transport failures; never treat an
      // unreachable judge as agreement.
      return {false, true};
    }
    std::string word = util::to_lower(util::trim(reply));
    if (!word.empty() && word.back() == '.') {
      word.pop_back();
    }
    if (word == "yes") {
      return {true, false};
    }
    if (word == "no") {
      return {false, false};
    }
  }
  return {false, true};
}

Verdict grade_candidate(const std::string& code, const std::vector<TestCase>& cases,
                        const InterpreterProfile& profile, Executor& executor,
                        EquivalenceJudge* judge, const std::string& problem_context,
                        const std::string& problem_id, HarnessSide side) {
  if (cases.empty()) {
    throw Error("grade_candidate requires at least one test case");
  }

  Verdict verdict;
  verdict.problem_id = problem_id;
  verdict.candidate_ref = util::hex64(util::fnv1a_64(code));
  verdict.total = static_cast<int>(cases.size());

  for (const auto& tc : cases) {
    CaseResult cr;
    cr.index = tc.index;
    cr.expected = normalize_output(tc.expected_output);

    std::string harness =
        side == HarnessSide::Target ? target_harness_snippet(tc) : source_harness_snippet(tc);
    ExecutionResult exec = executor.execute(code, harness, profile);
    switch (exec.status) {
      case ExecStatus::InterpreterMissing:
        throw EnvironmentError("interpreter '" + profile.name +
                               "' is not available; install it or point the profile at a "
                               "valid command (verification is never skipped)");
      case ExecStatus::Timeout:
        cr.outcome = CaseOutcome::Timeout;
        cr.detail = clip(exec.stderr_text);
        break;
      case ExecStatus::RuntimeError:
        cr.outcome = CaseOutcome::Error;
        cr.detail = clip(exec.stderr_text);
        break;
      case ExecStatus::Ok: {
        cr.actual = normalize_output(exec.stdout_text);
        if (cr.actual == cr.expected) {
          cr.outcome = CaseOutcome::Pass;
        } else if (judge) {
          JudgeDecision d = judge->judge(problem_context, cr.actual, cr.expected);
          cr.outcome = d.equivalent ? CaseOutcome::JudgePass : CaseOutcome::Fail;
          cr.judge_flagged = d.flagged;
          verdict.judge_flagged = verdict.judge_flagged || d.flagged;
        } else {
          cr.outcome = CaseOutcome::Fail;
        }
        break;
      }
    }
    if (cr.outcome == CaseOutcome::Pass || cr.outcome == CaseOutcome::JudgePass) {
      ++verdict.passed;
    }
    verdict.per_case.push_back(std::move(cr));
  }

  verdict.all_passed = verdict.passed == verdict.total;
  return verdict;
}

std::string to_string(RewardScheme s) {
  switch (s) {
    case RewardScheme::TestFraction:
      return "test_fraction";
    case RewardScheme::PerfectOnly:
      return "perfect_only";
    case RewardScheme::Combined:
      return "combined";
  }
  return "test_fraction";
}

RewardScheme reward_scheme_from_string(const std::string& s) {
  if (s == "test_fraction") return RewardScheme::TestFraction;
  if (s == "perfect_only") return RewardScheme::PerfectOnly;
  if (s == "combined") return RewardScheme::Combined;
  throw ConfigError("unknown reward scheme: '" + s +
                    "' (expected test_fraction, perfect_only, or combined)");
}

double compute_reward(const Verdict& verdict, const RewardConfig& cfg) {
  if (verdict.total <= 0) {
    throw Error("reward is undefined for a verdict with no test cases");
  }
  if (cfg.perfect_bonus < 0) {
    throw ConfigError("perfect_bonus must be >= 0");
  }
  const double fraction = static_cast<double>(verdict.passed) / verdict.total;
  const double bonus = verdict.all_passed ? cfg.perfect_bonus : 0.0;
  switch (cfg.scheme) {
    case RewardScheme::TestFraction:
      return fraction;
    case RewardScheme::PerfectOnly:
      return bonus;
    case RewardScheme::Combined:
      return fraction + bonus;
  }
  return fraction;
}

std::optional<std::string> extract_answer(const std::string& raw_completion, AnswerMode mode) {
  if (mode == AnswerMode::Reasoning) {
    const std::string open = "<answer>";
    const std::string close = "</answer>";
    std::size_t start = raw_completion.find(open);
    if (start == std::string::npos) {
      return std::nullopt;
    }
    start += open.size();
    std::size_t stop = raw_completion.find(close, start);
    if (stop == std::string::npos) {
      return std::nullopt;
    }
    std::string inner = util::trim(raw_completion.substr(start, stop - start));
    if (inner.empty()) {
      return std::nullopt;
    }
    return inner;
  }

  // Plain mode: strip one surrounding fence when present.
  std::string text = util::trim(raw_completion);
  if (util::starts_with(text, "```")) {
    std::size_t first_newline = text.find('\n');
    if (first_newline != std::string::npos) {
      std::string body = text.substr(first_newline + 1);
      std::size_t closing = body.rfind("```");
      if (closing != std::string::npos && util::trim(body.substr(closing + 3)).empty()) {
        body = body.substr(0, closing);
      }
      text = util::trim(body);
    }
  }
  return text;
}

}  // namespace qbench
