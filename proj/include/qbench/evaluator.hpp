#pragma once

#include "qbench/dataset.hpp"
#include "qbench/grading.hpp"
#include "qbench/llm_gateway.hpp"
#include "qbench/metrics.hpp"
#include "qbench/prompts.hpp"
#include "qbench/sandbox.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace qbench {

enum class EvalTask { DescToTarget, SourceToTarget, TargetToSource };
enum class EvalProtocol { Standard, Retries, Context };

std::string to_string(EvalTask t);
std::string to_string(EvalProtocol p);
EvalTask eval_task_from_string(const std::string& s);
EvalProtocol eval_protocol_from_string(const std::string& s);

struct ContextAssets {
  std::string language_reference;
  std::vector<std::string> exemplar_ids;  // must name train-split problems
};

struct EvalJobSpec {
  EvalTask task = EvalTask::SourceToTarget;
  EvalProtocol protocol = EvalProtocol::Standard;
  int n_samples = 1;  // standard protocol
  int k_max = 4;      // retries protocol
  // Context protocol wraps one of the other two; which one is chosen here.
  EvalProtocol context_base = EvalProtocol::Standard;
  ContextAssets context;
  GenerationParams params;
  std::vector<int> ks = {1, 2, 4, 8, 16};  // trimmed to k <= n_samples
  int workers = 8;
  InterpreterProfile target_profile;
  InterpreterProfile source_profile;
  std::filesystem::path event_log;  // empty = no event log
};

struct EvalDeps {
  LlmClient& client;
  const PromptLibrary& prompts;
  EquivalenceJudge* judge = nullptr;
};

// The prompt sent for one problem under a task (before any context prefix or
// retry feedback). Exposed so tests and the bootstrap holdout check share it.
std::string task_prompt(const PromptLibrary& prompts, EvalTask task, const Problem& problem);

// Standard protocol: |problems| x n_samples independent completions, each
// graded against the problem's full case list. Infrastructure failures count
// the sample as incorrect and are tallied in metadata; they never abort a run.
EvalReport run_standard(const Dataset& dataset, const EvalJobSpec& spec, EvalDeps deps);

// Retries protocol: up to k_max sequential attempts per problem; failed
// attempts feed a feedback block (code, per-case outcomes, error text) into
// the next prompt; stops early on success. Outcomes record n=1, c=1 iff any
// attempt passed; attempts used per problem land in report metadata.
EvalReport run_retries(const Dataset& dataset, const EvalJobSpec& spec, EvalDeps deps);

// Context protocol: the chosen base protocol with every prompt prefixed by a
// language reference and train-split exemplar programs. An exemplar drawn
// from the test split aborts with a contamination error.
EvalReport run_with_context(const Dataset& dataset, const EvalJobSpec& spec, EvalDeps deps);

// Dispatch on spec.protocol.
EvalReport run_eval(const Dataset& dataset, const EvalJobSpec& spec, EvalDeps deps);

// Mock chat handlers for deterministic runs. The oracle handler recognizes a
// problem by the task's input text appearing in the prompt and answers with
// the stored solution; the fixed handler always answers the same text.
MockBackend::ChatHandler make_oracle_chat_handler(const Dataset& dataset, EvalTask task);
MockBackend::ChatHandler make_fixed_chat_handler(std::string text);

// Oracle for bootstrap runs: answers harness requests with the dataset's
// stored per-case invocation and solution requests with the stored target
// solution, so a fully specified dataset bootstraps itself deterministically.
MockBackend::ChatHandler make_bootstrap_oracle_handler(const Dataset& dataset);

}  // namespace qbench
