#pragma once

#include "qbench/dataset.hpp"
#include "qbench/grading.hpp"
#include "qbench/llm_gateway.hpp"
#include "qbench/prompts.hpp"
#include "qbench/sandbox.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"

namespace qbench {

struct BootstrapConfig {
  int batch_size = 20;           // problems drawn per iteration
  int attempts_per_problem = 8;  // solution candidates per problem
  int sft_trigger = 20;          // admissions between fine-tuning rounds
  int sft_steps = 100;
  double holdout_fraction = 0.10;
  // External trainer argv; {train_file}, {eval_file}, {steps} get substituted.
  // Empty means "export files, record the trigger, run nothing".
  std::vector<std::string> trainer_command;
  GenerationParams params;
  std::string embed_model = "embedding";
  JudgeConfig judge;
  bool use_judge = false;
  InterpreterProfile target_profile;
  int harness_retries = 3;
  int workers = 1;
  std::uint64_t seed = 0;
};

struct SolvedEntry {
  std::string solution;               // admitted target-language solution
  std::vector<std::string> harness;   // one target-language snippet per case
};

struct BootstrapState {
  int iteration = 0;
  std::map<std::string, SolvedEntry> solved;
  std::set<std::string> unsolved;
  int new_since_sft = 0;
  int sft_triggers = 0;
  long long journal_lines = 0;  // journal records reflected in this state
};

// Deterministic batch pick: unsolved ids in sorted order, rotated by
// iteration * n so a stuck prefix cannot starve the rest of the queue.
// Empty result signals loop termination.
std::vector<std::string> select_batch(const std::set<std::string>& unsolved, int iteration,
                                      int n);

struct HarnessValidation {
  bool ok = false;
  std::string reason;
};

// Static checks: snippet count equals case count and every snippet calls the
// solve symbol. When a known-good solution (plus profile and executor) is
// supplied, each snippet must also produce output against it; otherwise that
// self-check is deferred to admission.
HarnessValidation validate_harness(const std::vector<std::string>& snippets,
                                   const std::vector<TestCase>& cases,
                                   const std::string* known_good_solution = nullptr,
                                   const InterpreterProfile* profile = nullptr,
                                   Executor* executor = nullptr);

// Model-in-the-loop dataset construction over a state directory:
//
//   journal.jsonl     append-only event records (source of truth)
//   checkpoint.json   state snapshot + journal offset (fast resume)
//   sft/              exported fine-tuning files per trigger
//   lock              held exclusively while an engine is alive
//
// Each iteration: select a batch of unsolved problems; per problem, look up
// the most similar solved exemplar (embeddings), generate a test harness
// WITHOUT ever placing candidate-solution bytes in that request, generate up
// to M solution candidates; then verify candidates against the canonical
// expected outputs and admit the first that passes everything. Every L
// admissions, the solved set is exported as fine-tuning data (with a held-out
// eval slice) and the external trainer command runs.
class BootstrapEngine {
 public:
  BootstrapEngine(std::filesystem::path state_dir, Dataset dataset, BootstrapConfig config,
                  LlmClient& client, const PromptLibrary& prompts,
                  EquivalenceJudge* judge = nullptr);
  ~BootstrapEngine();

  BootstrapEngine(const BootstrapEngine&) = delete;
  BootstrapEngine& operator=(const BootstrapEngine&) = delete;

  const BootstrapState& state() const { return state_; }
  const std::filesystem::path& state_dir() const { return state_dir_; }

  // One full pass. Returns false (without consuming an iteration) when no
  // unsolved problems remain.
  bool run_iteration();

  // Runs until max_iterations or exhaustion; returns iterations executed.
  int run(int max_iterations);

  // Solved problems as a dataset: target solutions and per-case invocations
  // filled in from the admitted entries. This is the freeze/export surface.
  Dataset export_solved() const;

  // Replaces the solved set with a human-curated dataset. Every entry must
  // carry a target solution and per-case invocations and must still pass all
  // canonical cases; anything dropped from the file returns to unsolved.
  void import_curated(const Dataset& curated);

  // Exposed for tests and the CLI.
  std::optional<std::string> retrieve_exemplar(const Problem& problem);

 private:
  struct GenerationOutcome {
    std::vector<std::string> harness;
    bool harness_valid = false;
    std::string harness_reason;
    std::vector<std::string> candidates;
    std::optional<std::string> exemplar_id;
  };

  void acquire_lock();
  void load_or_rebuild();
  void apply_journal_record(const nlohmann::ordered_json& record);
  void journal(const std::string& event, nlohmann::ordered_json fields);
  void write_checkpoint();

  const Problem& problem_by_id(const std::string& id) const;
  std::vector<double> embedding_for(const std::string& problem_id, const std::string& text);
  GenerationOutcome generate_for_problem(const Problem& problem);
  std::vector<std::string> generate_harness(const Problem& problem);
  std::vector<std::string> generate_solution_candidates(const Problem& problem,
                                                        const std::optional<std::string>& exemplar_id);
  bool verify_and_admit(const Problem& problem, const GenerationOutcome& gen);
  void maybe_trigger_sft();
  Problem solved_problem(const std::string& id) const;

  std::filesystem::path state_dir_;
  Dataset dataset_;
  BootstrapConfig config_;
  LlmClient& client_;
  const PromptLibrary& prompts_;
  EquivalenceJudge* judge_;
  std::unique_ptr<Executor> executor_;

  BootstrapState state_;
  std::map<std::string, std::vector<double>> embeddings_;  // rebuilt on demand
  std::mutex journal_mutex_;
  std::mutex state_mutex_;
  int lock_fd_ = -1;
};

}  // namespace qbench
