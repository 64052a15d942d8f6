#include "qbench/bootstrap.hpp"

#include "qbench/errors.hpp"
#include "qbench/thread_pool.hpp"
#include "qbench/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace qbench {

namespace {

using ojson = nlohmann::ordered_json;

void substitute_all(std::string& text, const std::string& token, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = text.find(token, pos)) != std::string::npos) {
    text.replace(pos, token.size(), value);
    pos += value.size();
  }
}

}  // namespace

std::vector<std::string> select_batch(const std::set<std::string>& unsolved, int iteration,
                                      int n) {
  std::vector<std::string> ids(unsolved.begin(), unsolved.end());
  if (ids.empty() || n < 1) {
    return {};
  }
  const std::size_t count = ids.size();
  const std::size_t take = std::min(static_cast<std::size_t>(n), count);
  const std::size_t offset =
      (static_cast<std::size_t>(std::max(iteration, 0)) * static_cast<std::size_t>(n)) % count;
  std::vector<std::string> batch;
  batch.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    batch.push_back(ids[(offset + i) % count]);
  }
  return batch;
}

HarnessValidation validate_harness(const std::vector<std::string>& snippets,
                                   const std::vector<TestCase>& cases,
                                   const std::string* known_good_solution,
                                   const InterpreterProfile* profile, Executor* executor) {
  if (snippets.size() != cases.size()) {
    return {false, "expected " + std::to_string(cases.size()) + " snippets, got " +
                       std::to_string(snippets.size())};
  }
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    if (snippets[i].find("solve") == std::string::npos) {
      return {false, "snippet " + std::to_string(i + 1) + " lacks a solve call"};
    }
  }
  if (known_good_solution && profile && executor) {
    for (std::size_t i = 0; i < snippets.size(); ++i) {
      ExecutionResult result = executor->execute(*known_good_solution, snippets[i], *profile);
      if (result.status == ExecStatus::InterpreterMissing) {
        throw EnvironmentError("interpreter '" + profile->name +
                               "' is not available for harness self-checks");
      }
      if (!result.ok() || util::trim(result.stdout_text).empty()) {
        return {false, "snippet " + std::to_string(i + 1) +
                           " produces no output against the known-good solution"};
      }
    }
  }
  return {true, ""};
}

BootstrapEngine::BootstrapEngine(std::filesystem::path state_dir, Dataset dataset,
                                 BootstrapConfig config, LlmClient& client,
                                 const PromptLibrary& prompts, EquivalenceJudge* judge)
    : state_dir_(std::move(state_dir)),
      dataset_(std::move(dataset)),
      config_(std::move(config)),
      client_(client),
      prompts_(prompts),
      judge_(judge) {
  if (config_.batch_size < 1 || config_.attempts_per_problem < 1 || config_.sft_trigger < 1) {
    throw ConfigError("bootstrap requires batch_size, attempts_per_problem, sft_trigger >= 1");
  }
  if (config_.holdout_fraction < 0.0 || config_.holdout_fraction >= 1.0) {
    throw ConfigError("bootstrap holdout_fraction must be in [0, 1)");
  }
  if (config_.harness_retries < 1) {
    throw ConfigError("bootstrap harness_retries must be >= 1");
  }
  if (config_.workers < 1) {
    config_.workers = 1;
  }
  executor_ = make_executor(config_.target_profile);

  std::filesystem::create_directories(state_dir_);
  std::filesystem::create_directories(state_dir_ / "sft");
  acquire_lock();
  load_or_rebuild();
  // An empty journal marks a fresh-but-initialized state directory.
  const auto journal_path = state_dir_ / "journal.jsonl";
  if (!std::filesystem::exists(journal_path)) {
    util::write_file(journal_path, "");
  }
}

BootstrapEngine::~BootstrapEngine() {
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
}

void BootstrapEngine::acquire_lock() {
  auto lock_path = state_dir_ / "lock";
  lock_fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
  if (lock_fd_ < 0) {
    throw EnvironmentError("cannot open lock file: " + lock_path.string());
  }
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(lock_fd_);
    lock_fd_ = -1;
    throw StateLockError("another bootstrap process holds " + state_dir_.string() +
                         "; stop it or pick a different state directory");
  }
}

void BootstrapEngine::load_or_rebuild() {
  state_ = BootstrapState{};
  for (const auto& p : dataset_.problems) {
    state_.unsolved.insert(p.id);
  }

  auto checkpoint_path = state_dir_ / "checkpoint.json";
  if (std::filesystem::exists(checkpoint_path)) {
    ojson doc;
    try {
      doc = ojson::parse(util::read_file(checkpoint_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error("corrupt checkpoint " + checkpoint_path.string() + ": " + e.what());
    }
    state_.iteration = doc.value("iteration", 0);
    state_.new_since_sft = doc.value("new_since_sft", 0);
    state_.sft_triggers = doc.value("sft_triggers", 0);
    state_.journal_lines = doc.value("journal_lines", 0ll);
    if (doc.contains("solved")) {
      for (const auto& item : doc.at("solved").items()) {
        SolvedEntry entry;
        entry.solution = item.value().at("solution").get<std::string>();
        entry.harness = item.value().at("harness").get<std::vector<std::string>>();
        state_.solved[item.key()] = std::move(entry);
        state_.unsolved.erase(item.key());
      }
    }
  }

  auto journal_path = state_dir_ / "journal.jsonl";
  if (std::filesystem::exists(journal_path)) {
    auto lines = util::split_lines(util::read_file(journal_path));
    if (state_.journal_lines > static_cast<long long>(lines.size())) {
      throw Error("checkpoint is ahead of the journal in " + state_dir_.string() +
                  "; the state directory is corrupt");
    }
    for (std::size_t i = static_cast<std::size_t>(state_.journal_lines); i < lines.size(); ++i) {
      if (util::trim(lines[i]).empty()) {
        continue;
      }
      ojson record;
      try {
        record = ojson::parse(lines[i]);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error("corrupt journal record at line " + std::to_string(i + 1) + ": " + e.what());
      }
      apply_journal_record(record);
    }
    state_.journal_lines = static_cast<long long>(lines.size());
  } else if (state_.journal_lines > 0) {
    throw Error("checkpoint references a journal that does not exist in " + state_dir_.string());
  }
}

void BootstrapEngine::apply_journal_record(const ojson& record) {
  const std::string event = record.value("event", "");
  if (event == "admitted") {
    const std::string id = record.at("problem_id").get<std::string>();
    if (state_.solved.count(id) == 0) {
      SolvedEntry entry;
      entry.solution = record.at("solution").get<std::string>();
      entry.harness = record.at("harness").get<std::vector<std::string>>();
      state_.solved[id] = std::move(entry);
      state_.unsolved.erase(id);
      ++state_.new_since_sft;
    }
  } else if (event == "sft_triggered") {
    state_.new_since_sft = 0;
    ++state_.sft_triggers;
  } else if (event == "iteration_end") {
    state_.iteration = record.value("iteration", state_.iteration) + 1;
  } else if (event == "import") {
    state_.solved.clear();
    state_.unsolved.clear();
    for (const auto& p : dataset_.problems) {
      state_.unsolved.insert(p.id);
    }
    for (const auto& item : record.at("solved").items()) {
      SolvedEntry entry;
      entry.solution = item.value().at("solution").get<std::string>();
      entry.harness = item.value().at("harness").get<std::vector<std::string>>();
      state_.solved[item.key()] = std::move(entry);
      state_.unsolved.erase(item.key());
    }
  }
}

void BootstrapEngine::journal(const std::string& event, ojson fields) {
  ojson record;
  record["ts"] = util::utc_timestamp();
  record["event"] = event;
  for (const auto& item : fields.items()) {
    record[item.key()] = item.value();
  }
  std::lock_guard<std::mutex> lock(journal_mutex_);
  util::append_line(state_dir_ / "journal.jsonl", record.dump());
  ++state_.journal_lines;
}

void BootstrapEngine::write_checkpoint() {
  ojson doc;
  doc["iteration"] = state_.iteration;
  doc["new_since_sft"] = state_.new_since_sft;
  doc["sft_triggers"] = state_.sft_triggers;
  doc["journal_lines"] = state_.journal_lines;
  ojson solved = ojson::object();
  for (const auto& [id, entry] : state_.solved) {
    solved[id] = {{"solution", entry.solution}, {"harness", entry.harness}};
  }
  doc["solved"] = std::move(solved);
  util::write_file_atomic(state_dir_ / "checkpoint.json", doc.dump(2));
}

const Problem& BootstrapEngine::problem_by_id(const std::string& id) const {
  const Problem* p = dataset_.find(id);
  if (!p) {
    throw DatasetError("problem '" + id + "' is not in the working dataset");
  }
  return *p;
}

std::vector<double> BootstrapEngine::embedding_for(const std::string& problem_id,
                                                   const std::string& text) {
  {
    std::lock_guard<std::mutex> lock(state_mutex_);
    auto it = embeddings_.find(problem_id);
    if (it != embeddings_.end()) {
      return it->second;
    }
  }
  auto vectors = client_.embed(config_.embed_model, {text});
  std::lock_guard<std::mutex> lock(state_mutex_);
  embeddings_[problem_id] = vectors.front().values;
  return embeddings_[problem_id];
}

std::optional<std::string> BootstrapEngine::retrieve_exemplar(const Problem& problem) {
  std::vector<std::string> solved_ids;
  {
    std::lock_guard<std::mutex> lock(state_mutex_);
    solved_ids.reserve(state_.solved.size());
    for (const auto& [id, entry] : state_.solved) {
      solved_ids.push_back(id);
    }
  }
  if (solved_ids.empty()) {
    return std::nullopt;
  }
  try {
    auto query = embedding_for(problem.id, problem.description);
    std::string best;
    double best_sim = -2.0;
    for (const auto& id : solved_ids) {  // sorted; strict > keeps the smallest id on ties
      double sim = cosine_similarity(query, embedding_for(id, problem_by_id(id).description));
      if (sim > best_sim) {
        best_sim = sim;
        best = id;
      }
    }
    journal("exemplar_selected",
            {{"problem_id", problem.id}, {"exemplar_id", best}, {"similarity", best_sim}});
    return best;
  } catch (const std::exception& e) {
    journal("exemplar_lookup_failed", {{"problem_id", problem.id}, {"warning", e.what()}});
    return std::nullopt;
  }
}

std::vector<std::string> BootstrapEngine::generate_harness(const Problem& problem) {
  // Retries happen in generate_for_problem; this issues one full snippet set.
  std::vector<std::string> snippets;
  snippets.reserve(problem.test_cases.size());
  for (const auto& tc : problem.test_cases) {
    std::string request =
        render_prompt(prompts_.get("harness_translation"),
                      {{"source_invocation", tc.source_invocation},
                       {"expected_output", tc.expected_output}});
    journal("harness_request", {{"problem_id", problem.id},
                                {"case", tc.index},
                                {"request", request}});
    GenerationParams params = config_.params;
    params.n = 1;
    std::string text = client_.chat({{"user", request}}, params).front();
    snippets.push_back(extract_answer(text, AnswerMode::Plain).value_or(""));
  }
  return snippets;
}

std::vector<std::string> BootstrapEngine::generate_solution_candidates(
    const Problem& problem, const std::optional<std::string>& exemplar_id) {
  std::string prompt = render_prompt(prompts_.get("solution_translation"),
                                     {{"problem_desc", problem.description},
                                      {"python_code", problem.source_solution}});
  if (exemplar_id) {
    const Problem& exemplar = problem_by_id(*exemplar_id);
    std::string exemplar_solution;
    {
      std::lock_guard<std::mutex> lock(state_mutex_);
      exemplar_solution = state_.solved.at(*exemplar_id).solution;
    }
    prompt += "\n\n" + render_prompt(prompts_.get("exemplar_context"),
                                     {{"exemplar_desc", exemplar.description},
                                      {"exemplar_solution", exemplar_solution}});
  }

  std::vector<std::string> candidates;
  int failures = 0;
  for (int i = 0; i < config_.attempts_per_problem; ++i) {
    try {
      GenerationParams params = config_.params;
      params.n = 1;
      std::string text = client_.chat({{"user", prompt}}, params).front();
      candidates.push_back(extract_answer(text, AnswerMode::Plain).value_or(""));
    } catch (const GatewayError& e) {
      ++failures;
      journal("candidate_request_failed",
              {{"problem_id", problem.id}, {"attempt", i + 1}, {"error", e.what()}});
    }
  }
  journal("candidates_generated", {{"problem_id", problem.id},
                                   {"requested", config_.attempts_per_problem},
                                   {"received", candidates.size()},
                                   {"failures", failures},
                                   {"prompt", prompt},
                                   {"candidates", candidates}});
  return candidates;
}

BootstrapEngine::GenerationOutcome BootstrapEngine::generate_for_problem(const Problem& problem) {
  GenerationOutcome out;
  out.exemplar_id = retrieve_exemplar(problem);

  // Harness first: its requests cannot contain candidate bytes that do not
  // exist yet, which keeps the solution/harness separation easy to audit.
  for (int attempt = 1; attempt <= config_.harness_retries; ++attempt) {
    std::vector<std::string> snippets;
    HarnessValidation validation;
    try {
      snippets = generate_harness(problem);
      validation = validate_harness(snippets, problem.test_cases);
    } catch (const GatewayError& e) {
      validation = {false, std::string("gateway failure during harness generation: ") + e.what()};
    }
    journal("harness_result", {{"problem_id", problem.id},
                               {"attempt", attempt},
                               {"snippets", snippets},
                               {"valid", validation.ok},
                               {"reason", validation.reason}});
    if (validation.ok) {
      out.harness = std::move(snippets);
      out.harness_valid = true;
      break;
    }
    out.harness_reason = validation.reason;
  }
  if (!out.harness_valid) {
    return out;
  }

  out.candidates = generate_solution_candidates(problem, out.exemplar_id);
  return out;
}

bool BootstrapEngine::verify_and_admit(const Problem& problem, const GenerationOutcome& gen) {
  std::vector<TestCase> cases = problem.test_cases;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    cases[i].target_invocation = gen.harness[i];
  }

  for (std::size_t ci = 0; ci < gen.candidates.size(); ++ci) {
    const std::string& candidate = gen.candidates[ci];
    EquivalenceJudge* judge = config_.use_judge ? judge_ : nullptr;
    Verdict verdict = grade_candidate(candidate, cases, config_.target_profile, *executor_,
                                      judge, problem.description, problem.id);
    journal("verification", {{"problem_id", problem.id},
                             {"candidate", ci},
                             {"passed", verdict.passed},
                             {"total", verdict.total},
                             {"all_passed", verdict.all_passed}});
    if (verdict.all_passed) {
      {
        std::lock_guard<std::mutex> lock(state_mutex_);
        state_.solved[problem.id] = SolvedEntry{candidate, gen.harness};
        state_.unsolved.erase(problem.id);
        ++state_.new_since_sft;
      }
      journal("admitted", {{"problem_id", problem.id},
                           {"candidate_index", ci},
                           {"solution", candidate},
                           {"harness", gen.harness}});
      maybe_trigger_sft();
      return true;
    }
  }
  journal("not_admitted", {{"problem_id", problem.id}});
  return false;
}

void BootstrapEngine::maybe_trigger_sft() {
  if (state_.new_since_sft < config_.sft_trigger) {
    return;
  }
  const int trigger = state_.sft_triggers + 1;

  std::vector<std::string> ids;
  {
    std::lock_guard<std::mutex> lock(state_mutex_);
    ids.reserve(state_.solved.size());
    for (const auto& [id, entry] : state_.solved) {
      ids.push_back(id);
    }
  }

  std::vector<std::string> shuffled = ids;
  std::mt19937_64 rng(config_.seed ^ util::fnv1a_64("sft-holdout") ^
                      static_cast<std::uint64_t>(trigger));
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::size_t eval_count =
      static_cast<std::size_t>(std::lround(config_.holdout_fraction * ids.size()));
  if (!ids.empty() && eval_count >= ids.size()) {
    eval_count = ids.size() - 1;  // the trainer always needs a train set
  }
  std::set<std::string> eval_ids(shuffled.begin(),
                                 shuffled.begin() + static_cast<std::ptrdiff_t>(eval_count));

  std::vector<SftSample> train_samples;
  std::vector<SftSample> eval_samples;
  for (const auto& id : ids) {  // original sorted order within each group
    Problem p = solved_problem(id);
    auto samples = expand_sft(p, prompts_);
    auto& bucket = eval_ids.count(id) ? eval_samples : train_samples;
    bucket.insert(bucket.end(), samples.begin(), samples.end());
  }

  char suffix[32];
  std::snprintf(suffix, sizeof(suffix), "sft_%03d", trigger);
  auto train_file = state_dir_ / "sft" / (std::string(suffix) + "_train.jsonl");
  auto eval_file = state_dir_ / "sft" / (std::string(suffix) + "_eval.jsonl");
  write_sft_samples(train_samples, train_file);
  write_sft_samples(eval_samples, eval_file);

  ojson trainer_exit = nullptr;
  if (!config_.trainer_command.empty()) {
    std::vector<std::string> argv = config_.trainer_command;
    for (auto& arg : argv) {
      substitute_all(arg, "{train_file}", train_file.string());
      substitute_all(arg, "{eval_file}", eval_file.string());
      substitute_all(arg, "{steps}", std::to_string(config_.sft_steps));
    }
    trainer_exit = util::run_command(argv);  // nonzero is logged, never fatal
  }

  journal("sft_triggered", {{"trigger", trigger},
                            {"solved", ids.size()},
                            {"train_problems", ids.size() - eval_count},
                            {"eval_problems", eval_count},
                            {"train_samples", train_samples.size()},
                            {"eval_samples", eval_samples.size()},
                            {"train_file", train_file.string()},
                            {"eval_file", eval_file.string()},
                            {"steps", config_.sft_steps},
                            {"trainer_exit", trainer_exit}});
  {
    std::lock_guard<std::mutex> lock(state_mutex_);
    state_.new_since_sft = 0;
    ++state_.sft_triggers;
  }
}

Problem BootstrapEngine::solved_problem(const std::string& id) const {
  Problem p = problem_by_id(id);
  const SolvedEntry& entry = state_.solved.at(id);
  p.target_solution = entry.solution;
  for (std::size_t i = 0; i < p.test_cases.size() && i < entry.harness.size(); ++i) {
    p.test_cases[i].target_invocation = entry.harness[i];
  }
  return p;
}

bool BootstrapEngine::run_iteration() {
  auto batch = select_batch(state_.unsolved, state_.iteration, config_.batch_size);
  if (batch.empty()) {
    return false;
  }
  journal("iteration_start", {{"iteration", state_.iteration}, {"batch", batch}});

  std::vector<GenerationOutcome> outcomes(batch.size());
  auto generate_one = [&](std::size_t i) {
    try {
      outcomes[i] = generate_for_problem(problem_by_id(batch[i]));
    } catch (const std::exception& e) {
      outcomes[i].harness_valid = false;
      outcomes[i].harness_reason = e.what();
      journal("problem_generation_failed", {{"problem_id", batch[i]}, {"error", e.what()}});
    }
  };
  if (config_.workers > 1) {
    ThreadPool pool(static_cast<std::size_t>(config_.workers));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      pool.submit([&generate_one, i] { generate_one(i); });
    }
    pool.wait_idle();
  } else {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      generate_one(i);
    }
  }

  // Verification and admission run in batch order: deterministic admissions,
  // deterministic SFT trigger points.
  int admitted = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const GenerationOutcome& gen = outcomes[i];
    if (!gen.harness_valid) {
      journal("problem_skipped",
              {{"problem_id", batch[i]},
               {"reason", gen.harness_reason.empty() ? "harness validation failed"
                                                     : gen.harness_reason}});
      continue;
    }
    if (gen.candidates.empty()) {
      journal("problem_skipped", {{"problem_id", batch[i]}, {"reason", "no candidates"}});
      continue;
    }
    if (verify_and_admit(problem_by_id(batch[i]), gen)) {
      ++admitted;
    }
  }

  journal("iteration_end", {{"iteration", state_.iteration}, {"admitted", admitted}});
  ++state_.iteration;
  write_checkpoint();
  return true;
}

int BootstrapEngine::run(int max_iterations) {
  int done = 0;
  while (done < max_iterations && run_iteration()) {
    ++done;
  }
  return done;
}

Dataset BootstrapEngine::export_solved() const {
  Dataset out;
  for (const auto& p : dataset_.problems) {
    if (state_.solved.count(p.id)) {
      out.problems.push_back(solved_problem(p.id));
    }
  }
  return out;
}

void BootstrapEngine::import_curated(const Dataset& curated) {
  std::map<std::string, SolvedEntry> incoming;
  for (const auto& p : curated.problems) {
    const Problem& canonical = problem_by_id(p.id);
    if (!p.target_solution) {
      throw DatasetError("curated problem '" + p.id + "' has no target solution");
    }
    if (p.test_cases.size() != canonical.test_cases.size()) {
      throw DatasetError("curated problem '" + p.id + "' changed the test case count");
    }
    std::vector<TestCase> cases = canonical.test_cases;
    std::vector<std::string> harness;
    harness.reserve(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
      if (p.test_cases[i].expected_output != canonical.test_cases[i].expected_output) {
        throw DatasetError("curated problem '" + p.id +
                           "' changed a canonical expected output (case " +
                           std::to_string(i + 1) + ")");
      }
      if (!p.test_cases[i].target_invocation) {
        throw DatasetError("curated problem '" + p.id + "' case " + std::to_string(i + 1) +
                           " has no target invocation");
      }
      cases[i].target_invocation = p.test_cases[i].target_invocation;
      harness.push_back(*p.test_cases[i].target_invocation);
    }
    Verdict verdict = grade_candidate(*p.target_solution, cases, config_.target_profile,
                                      *executor_, config_.use_judge ? judge_ : nullptr,
                                      canonical.description, p.id);
    if (!verdict.all_passed) {
      throw DatasetError("curated solution for '" + p.id + "' fails verification (" +
                         std::to_string(verdict.passed) + "/" + std::to_string(verdict.total) +
                         " cases)");
    }
    incoming[p.id] = SolvedEntry{*p.target_solution, std::move(harness)};
  }

  ojson solved = ojson::object();
  for (const auto& [id, entry] : incoming) {
    solved[id] = {{"solution", entry.solution}, {"harness", entry.harness}};
  }
  {
    std::lock_guard<std::mutex> lock(state_mutex_);
    state_.solved = std::move(incoming);
    state_.unsolved.clear();
    for (const auto& p : dataset_.problems) {
      if (state_.solved.count(p.id) == 0) {
        state_.unsolved.insert(p.id);
      }
    }
  }
  journal("import", {{"count", solved.size()}, {"solved", std::move(solved)}});
  write_checkpoint();
}

}  // namespace qbench
