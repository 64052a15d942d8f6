#pragma once

#include "qbench/dataset.hpp"
#include "qbench/sandbox.hpp"

#include <optional>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"

namespace qbench {

class LlmClient;
class PromptLibrary;

// --- output comparison -------------------------------------------------------

// Canonicalizes interpreter output before comparison: CRLF -> LF, trailing
// whitespace stripped per line, leading/trailing blank lines dropped, runs of
// spaces/tabs collapsed to one space. The target language prints the same
// value in several layouts; this folds them together.
std::string normalize_output(const std::string& raw);

// Exact equality after normalization.
bool compare_outputs(const std::string& actual, const std::string& expected);

// --- verdicts ----------------------------------------------------------------

enum class CaseOutcome { Pass, JudgePass, Fail, Error, Timeout };

std::string to_string(CaseOutcome o);

struct CaseResult {
  int index = 0;
  CaseOutcome outcome = CaseOutcome::Fail;
  std::string actual;    // normalized program output
  std::string expected;  // normalized expected output
  bool judge_flagged = false;
  std::string detail;  // stderr/diagnostic snippet for error and timeout outcomes
};

struct Verdict {
  std::string problem_id;
  std::string candidate_ref;  // content hash of the graded code
  std::vector<CaseResult> per_case;
  int passed = 0;
  int total = 0;
  bool all_passed = false;
  bool judge_flagged = false;  // some judge call failed and was scored not-equivalent
};

nlohmann::ordered_json verdict_to_json(const Verdict& v);

// --- LLM judge fallback --------------------------------------------------------

struct JudgeConfig {
  std::string model = "judge";
  int shots = 3;         // in-context exemplars embedded in the judge prompt
  int max_attempts = 2;  // constrained-response attempts before giving up
};

struct JudgeDecision {
  bool equivalent = false;
  bool flagged = false;  // endpoint failure or unusable responses; scored not-equivalent
};

class EquivalenceJudge {
 public:
  virtual ~EquivalenceJudge() = default;
  virtual JudgeDecision judge(const std::string& problem_context, const std::string& actual,
                              const std::string& expected) = 0;
};

// Test double: fixed or scripted answers plus a call counter, so tests can
// assert the judge is consulted exactly when exact comparison fails.
class ScriptedJudge : public EquivalenceJudge {
 public:
  explicit ScriptedJudge(bool always_equivalent = false)
      : default_equivalent_(always_equivalent) {}

  JudgeDecision judge(const std::string& problem_context, const std::string& actual,
                      const std::string& expected) override;

  void push_answer(JudgeDecision d) { scripted_.push_back(d); }
  int calls() const { return calls_; }

 private:
  bool default_equivalent_;
  std::vector<JudgeDecision> scripted_;
  int calls_ = 0;
};

// Judge backed by a chat model. Builds a K-shot yes/no prompt, accepts only a
// single yes or no line, retries unusable replies up to max_attempts, and
// treats persistent failure as not-equivalent with the verdict flagged.
class LlmJudge : public EquivalenceJudge {
 public:
  LlmJudge(LlmClient& client, const PromptLibrary& prompts, JudgeConfig config);

  JudgeDecision judge(const std::string& problem_context, const std::string& actual,
                      const std::string& expected) override;

 private:
  LlmClient& client_;
  const PromptLibrary& prompts_;
  JudgeConfig config_;
};

// Renders the K exemplar blocks embedded in the judge prompt.
std::string judge_shots_text(int shots);

// --- grading -----------------------------------------------------------------

// Which language's harness to append: the target language's canonical
// invocations or the source language's.
enum class HarnessSide { Target, Source };

// Runs `code` against every test case independently (one sandbox execution per
// case) and aggregates outcomes. A missing interpreter throws EnvironmentError:
// verification must never silently pass or fail for environmental reasons.
Verdict grade_candidate(const std::string& code, const std::vector<TestCase>& cases,
                        const InterpreterProfile& profile, Executor& executor,
                        EquivalenceJudge* judge = nullptr,
                        const std::string& problem_context = "",
                        const std::string& problem_id = "",
                        HarnessSide side = HarnessSide::Target);

// --- rewards -----------------------------------------------------------------

enum class RewardScheme { TestFraction, PerfectOnly, Combined };

std::string to_string(RewardScheme s);
RewardScheme reward_scheme_from_string(const std::string& s);

struct RewardConfig {
  RewardScheme scheme = RewardScheme::TestFraction;
  double perfect_bonus = 2.0;
};

// test_fraction: passed/total. perfect_only: bonus iff all passed.
// combined: fraction plus bonus iff all passed. Empty verdicts are an error.
double compute_reward(const Verdict& verdict, const RewardConfig& cfg);

// --- completion parsing --------------------------------------------------------

enum class AnswerMode { Reasoning, Plain };

// Reasoning mode: the text strictly between the first <answer> tag and its
// closing tag, trimmed; missing or empty tags yield nullopt (parse failure,
// which downstream scores as reward 0). Plain mode: the whole completion with
// surrounding code fences stripped; never fails.
std::optional<std::string> extract_answer(const std::string& raw_completion, AnswerMode mode);

}  // namespace qbench
