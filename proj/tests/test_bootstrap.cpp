#include "doctest.h"

#include "qbench/bootstrap.hpp"
#include "qbench/errors.hpp"
#include "qbench/evaluator.hpp"
#include "qbench/util.hpp"

#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

using namespace qbench;

namespace {

InterpreterProfile stub_profile() {
  InterpreterProfile p;
  p.name = "stub";
  p.command = {"builtin:stub"};
  p.file_extension = ".txt";
  return p;
}

BootstrapConfig small_config(int batch = 4, int attempts = 2, int trigger = 4) {
  BootstrapConfig cfg;
  cfg.batch_size = batch;
  cfg.attempts_per_problem = attempts;
  cfg.sft_trigger = trigger;
  cfg.target_profile = stub_profile();
  cfg.workers = 2;
  return cfg;
}

struct World {
  Dataset dataset;
  MockBackend backend;
  std::unique_ptr<LlmClient> client;
  PromptLibrary prompts = PromptLibrary::builtin();

  explicit World(int problems, int cases = 2) {
    dataset = testsupport::make_stub_world(problems, cases);
    backend.set_chat_handler(make_bootstrap_oracle_handler(dataset));
    client = std::make_unique<LlmClient>(backend, ClientConfig{});
  }
};

std::vector<nlohmann::ordered_json> read_journal(const std::filesystem::path& dir) {
  std::vector<nlohmann::ordered_json> records;
  for (const auto& line : util::split_lines(util::read_file(dir / "journal.jsonl"))) {
    records.push_back(nlohmann::ordered_json::parse(line));
  }
  return records;
}

}  // namespace

TEST_CASE("select_batch rotates deterministically through sorted ids") {
  std::set<std::string> ids = {"e", "a", "c", "b", "d"};
  CHECK(select_batch(ids, 0, 2) == std::vector<std::string>{"a", "b"});
  CHECK(select_batch(ids, 1, 2) == std::vector<std::string>{"c", "d"});
  CHECK(select_batch(ids, 2, 2) == std::vector<std::string>{"e", "a"});
  CHECK(select_batch(ids, 0, 10) == std::vector<std::string>{"a", "b", "c", "d", "e"});
  CHECK(select_batch({}, 0, 3).empty());
}

TEST_CASE("validate_harness checks count and solve usage") {
  std::vector<TestCase> cases(2);
  cases[0].index = 1;
  cases[1].index = 2;

  const auto short_list = validate_harness({"result:solve[1]; show result"}, cases);
  CHECK_FALSE(short_list.ok);
  CHECK(short_list.reason.find("expected 2") != std::string::npos);

  const auto no_call = validate_harness(
      {"result:solve[1]; show result", "show 42"}, cases);
  CHECK_FALSE(no_call.ok);
  CHECK(no_call.reason.find("solve") != std::string::npos);

  const auto ok = validate_harness(
      {"result:solve[1]; show result", "result:solve[2]; show result"}, cases);
  CHECK(ok.ok);
}

TEST_CASE("validate_harness can self-check against a known-good solution") {
  std::vector<TestCase> cases(1);
  cases[0].index = 1;
  const std::string good = "stub:on solve[1] => 7\n";
  const auto profile = stub_profile();
  StubExecutor executor;

  const auto ok = validate_harness({"result:solve[1]; show result"}, cases, &good,
                                   &profile, &executor);
  CHECK(ok.ok);

  // A harness the known-good solution produces no output for is rejected.
  const auto silent = validate_harness({"result:solve[99]; show result"}, cases,
                                       &good, &profile, &executor);
  CHECK_FALSE(silent.ok);
}

TEST_CASE("engine constructor validates its configuration") {
  testsupport::TempDir dir;
  World world(2);
  auto bad = small_config();
  bad.batch_size = 0;
  CHECK_THROWS_AS(BootstrapEngine(dir.path / "s", world.dataset, bad, *world.client,
                                  world.prompts),
                  ConfigError);
  auto bad_holdout = small_config();
  bad_holdout.holdout_fraction = 1.0;
  CHECK_THROWS_AS(BootstrapEngine(dir.path / "s2", world.dataset, bad_holdout,
                                  *world.client, world.prompts),
                  ConfigError);
}

TEST_CASE("fresh engine starts with everything unsolved") {
  testsupport::TempDir dir;
  World world(5);
  BootstrapEngine engine(dir.path / "state", world.dataset, small_config(),
                         *world.client, world.prompts);
  CHECK(engine.state().iteration == 0);
  CHECK(engine.state().solved.empty());
  CHECK(engine.state().unsolved.size() == 5);
  CHECK(std::filesystem::exists(dir.path / "state" / "journal.jsonl"));
}

TEST_CASE("state directory is exclusively locked while an engine lives") {
  testsupport::TempDir dir;
  World world(2);
  BootstrapEngine engine(dir.path / "state", world.dataset, small_config(),
                         *world.client, world.prompts);
  World other(2);
  CHECK_THROWS_AS(BootstrapEngine(dir.path / "state", other.dataset, small_config(),
                                  *other.client, other.prompts),
                  StateLockError);
  // A different directory is fine.
  BootstrapEngine second(dir.path / "state2", other.dataset, small_config(),
                         *other.client, other.prompts);
  CHECK(second.state().unsolved.size() == 2);
}

TEST_CASE("one iteration admits the batch and advances the counter") {
  testsupport::TempDir dir;
  World world(6, 2);
  BootstrapEngine engine(dir.path / "state", world.dataset, small_config(4, 2, 100),
                         *world.client, world.prompts);
  REQUIRE(engine.run_iteration());
  CHECK(engine.state().iteration == 1);
  CHECK(engine.state().solved.size() == 4);
  CHECK(engine.state().unsolved.size() == 2);
  REQUIRE(engine.run_iteration());
  CHECK(engine.state().solved.size() == 6);
  CHECK(engine.state().unsolved.empty());
  // Exhausted: no iteration consumed.
  CHECK_FALSE(engine.run_iteration());
  CHECK(engine.state().iteration == 2);
}

TEST_CASE("solved set grows monotonically and admissions re-verify canonically") {
  testsupport::TempDir dir;
  World world(8, 3);
  BootstrapEngine engine(dir.path / "state", world.dataset, small_config(3, 2, 100),
                         *world.client, world.prompts);
  std::size_t prev = 0;
  while (engine.run_iteration()) {
    CHECK(engine.state().solved.size() >= prev);
    prev = engine.state().solved.size();
  }
  CHECK(engine.state().solved.size() == 8);

  // Every admitted solution must pass every canonical case when re-graded
  // against the dataset's own invocations and expected outputs.
  StubExecutor executor;
  for (const auto& [id, entry] : engine.state().solved) {
    const Problem* p = world.dataset.find(id);
    REQUIRE(p != nullptr);
    const auto verdict = grade_candidate(entry.solution, p->test_cases, stub_profile(),
                                         executor, nullptr, "", id);
    CHECK(verdict.all_passed);
    CHECK(entry.harness.size() == p->test_cases.size());
  }
}

TEST_CASE("harness requests never contain candidate solution bytes") {
  testsupport::TempDir dir;
  World world(6, 2);
  BootstrapEngine engine(dir.path / "state", world.dataset, small_config(3, 2, 100),
                         *world.client, world.prompts);
  engine.run(10);
  REQUIRE(engine.state().solved.size() == 6);

  // Journal records carry full request and candidate texts, so the separation
  // is checkable as pure data: no harness request may contain any candidate.
  const auto records = read_journal(dir.path / "state");
  std::vector<std::string> harness_requests;
  std::vector<std::string> candidates;
  for (const auto& rec : records) {
    if (rec["event"] == "harness_request") {
      harness_requests.push_back(rec["request"].get<std::string>());
    }
    if (rec["event"] == "candidates_generated") {
      for (const auto& c : rec["candidates"]) {
        candidates.push_back(c.get<std::string>());
      }
    }
  }
  REQUIRE_FALSE(harness_requests.empty());
  REQUIRE_FALSE(candidates.empty());
  for (const auto& request : harness_requests) {
    for (const auto& candidate : candidates) {
      REQUIRE_FALSE(candidate.empty());
      CHECK(request.find(candidate) == std::string::npos);
    }
  }

  // Ordering inside each problem: the harness request is journaled before any
  // candidate generation for that problem.
  std::map<std::string, std::size_t> first_harness;
  std::map<std::string, std::size_t> first_candidates;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    if (!rec.contains("problem_id")) {
      continue;
    }
    const std::string id = rec["problem_id"].get<std::string>();
    if (rec["event"] == "harness_request" && !first_harness.count(id)) {
      first_harness[id] = i;
    }
    if (rec["event"] == "candidates_generated" && !first_candidates.count(id)) {
      first_candidates[id] = i;
    }
  }
  for (const auto& [id, where] : first_candidates) {
    REQUIRE(first_harness.count(id) == 1);
    CHECK(first_harness[id] < where);
  }
}

TEST_CASE("sft rounds fire on the admission trigger with a holdout slice") {
  testsupport::TempDir dir;
  World world(10, 2);
  auto cfg = small_config(5, 2, 5);
  cfg.holdout_fraction = 0.2;
  cfg.sft_steps = 17;
  BootstrapEngine engine(dir.path / "state", world.dataset, cfg, *world.client,
                         world.prompts);
  engine.run(10);
  CHECK(engine.state().solved.size() == 10);
  CHECK(engine.state().sft_triggers == 2);

  for (int trigger = 1; trigger <= 2; ++trigger) {
    char train_name[32];
    char eval_name[32];
    std::snprintf(train_name, sizeof(train_name), "sft_%03d_train.jsonl", trigger);
    std::snprintf(eval_name, sizeof(eval_name), "sft_%03d_eval.jsonl", trigger);
    const auto train_file = dir.path / "state" / "sft" / train_name;
    const auto eval_file = dir.path / "state" / "sft" / eval_name;
    REQUIRE(std::filesystem::exists(train_file));
    REQUIRE(std::filesystem::exists(eval_file));

    // Eight samples per problem; holdout is problem-level, so line counts are
    // multiples of eight and no problem straddles the split.
    const auto train_lines = util::split_lines(util::read_file(train_file));
    const auto eval_lines = util::split_lines(util::read_file(eval_file));
    CHECK(train_lines.size() % 8 == 0);
    CHECK(eval_lines.size() % 8 == 0);
    const std::size_t total_problems = (train_lines.size() + eval_lines.size()) / 8;
    CHECK(total_problems == static_cast<std::size_t>(5 * trigger));
    CHECK(eval_lines.size() / 8 ==
          static_cast<std::size_t>(std::lround(0.2 * 5 * trigger)));

    std::set<std::string> train_ids;
    std::set<std::string> eval_ids;
    for (const auto& line : train_lines) {
      train_ids.insert(nlohmann::ordered_json::parse(line)["problem_id"].get<std::string>());
    }
    for (const auto& line : eval_lines) {
      eval_ids.insert(nlohmann::ordered_json::parse(line)["problem_id"].get<std::string>());
    }
    for (const auto& id : eval_ids) {
      CHECK(train_ids.count(id) == 0);
    }
  }

  // The journal records the trigger with its file paths and step count.
  int sft_events = 0;
  for (const auto& rec : read_journal(dir.path / "state")) {
    if (rec["event"] == "sft_triggered") {
      ++sft_events;
      CHECK(rec["steps"] == 17);
      CHECK(rec["trainer_exit"].is_null());
    }
  }
  CHECK(sft_events == 2);
}

TEST_CASE("sft holdout is deterministic for a fixed seed") {
  auto run_once = [](std::uint64_t seed) {
    testsupport::TempDir dir;
    World world(10, 2);
    auto cfg = small_config(10, 2, 10);
    cfg.holdout_fraction = 0.3;
    cfg.seed = seed;
    BootstrapEngine engine(dir.path / "state", world.dataset, cfg, *world.client,
                           world.prompts);
    engine.run(2);
    return util::read_file(dir.path / "state" / "sft" / "sft_001_eval.jsonl");
  };
  CHECK(run_once(7) == run_once(7));
  CHECK(run_once(7) != run_once(8));
}

TEST_CASE("trainer command runs with substituted files and steps") {
  testsupport::TempDir dir;
  World world(4, 2);
  const auto marker = dir.path / "trainer-ran.txt";
  auto cfg = small_config(4, 2, 4);
  cfg.trainer_command = {"cp", "{train_file}", marker.string()};
  cfg.sft_steps = 5;
  BootstrapEngine engine(dir.path / "state", world.dataset, cfg, *world.client,
                         world.prompts);
  engine.run(2);
  CHECK(engine.state().sft_triggers == 1);
  REQUIRE(std::filesystem::exists(marker));
  CHECK(util::split_lines(util::read_file(marker)).size() % 8 == 0);

  for (const auto& rec : read_journal(dir.path / "state")) {
    if (rec["event"] == "sft_triggered") {
      CHECK(rec["trainer_exit"] == 0);
    }
  }
}

TEST_CASE("a failing trainer is recorded but does not abort the run") {
  testsupport::TempDir dir;
  World world(4, 2);
  auto cfg = small_config(2, 2, 2);
  cfg.trainer_command = {"false"};
  BootstrapEngine engine(dir.path / "state", world.dataset, cfg, *world.client,
                         world.prompts);
  engine.run(10);
  CHECK(engine.state().solved.size() == 4);
  CHECK(engine.state().sft_triggers == 2);
  bool saw_nonzero = false;
  for (const auto& rec : read_journal(dir.path / "state")) {
    if (rec["event"] == "sft_triggered" && rec["trainer_exit"] == 1) {
      saw_nonzero = true;
    }
  }
  CHECK(saw_nonzero);
}

TEST_CASE("resume from checkpoint reproduces the exact state") {
  testsupport::TempDir dir;
  World world(6, 2);
  BootstrapState before;
  {
    BootstrapEngine engine(dir.path / "state", world.dataset, small_config(2, 2, 100),
                           *world.client, world.prompts);
    engine.run(2);
    before = engine.state();
  }
  REQUIRE(before.solved.size() == 4);

  World world2(6, 2);
  BootstrapEngine resumed(dir.path / "state", world2.dataset, small_config(2, 2, 100),
                          *world2.client, world2.prompts);
  CHECK(resumed.state().iteration == before.iteration);
  CHECK(resumed.state().new_since_sft == before.new_since_sft);
  CHECK(resumed.state().sft_triggers == before.sft_triggers);
  CHECK(resumed.state().unsolved == before.unsolved);
  REQUIRE(resumed.state().solved.size() == before.solved.size());
  for (const auto& [id, entry] : before.solved) {
    REQUIRE(resumed.state().solved.count(id) == 1);
    CHECK(resumed.state().solved.at(id).solution == entry.solution);
    CHECK(resumed.state().solved.at(id).harness == entry.harness);
  }

  // And the resumed engine keeps making progress.
  resumed.run(10);
  CHECK(resumed.state().solved.size() == 6);
}

TEST_CASE("resume replays journal records past a stale checkpoint") {
  testsupport::TempDir dir;
  World world(4, 2);
  {
    BootstrapEngine engine(dir.path / "state", world.dataset, small_config(2, 2, 100),
                           *world.client, world.prompts);
    engine.run(2);  // all 4 solved, checkpoint current
  }
  // Make the checkpoint stale: rewind it to the fresh-start snapshot while the
  // journal retains everything.
  const auto checkpoint = dir.path / "state" / "checkpoint.json";
  auto doc = nlohmann::ordered_json::parse(util::read_file(checkpoint));
  doc["iteration"] = 0;
  doc["new_since_sft"] = 0;
  doc["sft_triggers"] = 0;
  doc["journal_lines"] = 0;
  doc["solved"] = nlohmann::ordered_json::object();
  util::write_file(checkpoint, doc.dump());

  World world2(4, 2);
  BootstrapEngine resumed(dir.path / "state", world2.dataset, small_config(2, 2, 100),
                          *world2.client, world2.prompts);
  CHECK(resumed.state().solved.size() == 4);
  CHECK(resumed.state().iteration == 2);
}

TEST_CASE("mid-iteration crash cannot double-admit after resume") {
  testsupport::TempDir dir;
  World world(4, 2);
  {
    BootstrapEngine engine(dir.path / "state", world.dataset, small_config(4, 2, 100),
                           *world.client, world.prompts);
    engine.run(1);  // all 4 admitted in one iteration
  }

  // Simulate a crash after two admissions, before iteration_end: truncate the
  // journal right after the second "admitted" record and drop the checkpoint.
  const auto journal_path = dir.path / "state" / "journal.jsonl";
  const auto lines = util::split_lines(util::read_file(journal_path));
  std::string truncated;
  int admitted_seen = 0;
  for (const auto& line : lines) {
    truncated += line + "\n";
    if (nlohmann::ordered_json::parse(line)["event"] == "admitted") {
      if (++admitted_seen == 2) {
        break;
      }
    }
  }
  REQUIRE(admitted_seen == 2);
  util::write_file(journal_path, truncated);
  std::filesystem::remove(dir.path / "state" / "checkpoint.json");

  World world2(4, 2);
  BootstrapEngine resumed(dir.path / "state", world2.dataset, small_config(4, 2, 100),
                          *world2.client, world2.prompts);
  CHECK(resumed.state().solved.size() == 2);
  CHECK(resumed.state().iteration == 0);  // the interrupted iteration reruns
  resumed.run(5);
  CHECK(resumed.state().solved.size() == 4);

  // No problem id may be admitted twice across the whole journal history.
  std::multiset<std::string> admitted_ids;
  for (const auto& rec : read_journal(dir.path / "state")) {
    if (rec["event"] == "admitted") {
      admitted_ids.insert(rec["problem_id"].get<std::string>());
    }
  }
  for (const auto& id : std::set<std::string>(admitted_ids.begin(), admitted_ids.end())) {
    CHECK(admitted_ids.count(id) == 1);
  }
}

TEST_CASE("a corrupt journal is a hard error, not silent state loss") {
  testsupport::TempDir dir;
  World world(2, 2);
  {
    BootstrapEngine engine(dir.path / "state", world.dataset, small_config(),
                           *world.client, world.prompts);
    engine.run(1);
  }
  util::append_line(dir.path / "state" / "journal.jsonl", "{not json at all");
  std::filesystem::remove(dir.path / "state" / "checkpoint.json");
  World world2(2, 2);
  CHECK_THROWS_AS(BootstrapEngine(dir.path / "state", world2.dataset, small_config(),
                                  *world2.client, world2.prompts),
                  Error);
}

TEST_CASE("a checkpoint claiming more journal lines than exist is rejected") {
  testsupport::TempDir dir;
  World world(2, 2);
  {
    BootstrapEngine engine(dir.path / "state", world.dataset, small_config(),
                           *world.client, world.prompts);
    engine.run(1);
  }
  const auto checkpoint = dir.path / "state" / "checkpoint.json";
  auto doc = nlohmann::ordered_json::parse(util::read_file(checkpoint));
  doc["journal_lines"] = 100000;
  util::write_file(checkpoint, doc.dump());
  World world2(2, 2);
  CHECK_THROWS_AS(BootstrapEngine(dir.path / "state", world2.dataset, small_config(),
                                  *world2.client, world2.prompts),
                  Error);
}

TEST_CASE("exemplar retrieval picks the most similar solved problem") {
  testsupport::TempDir dir;
  World world(5, 2);
  BootstrapEngine engine(dir.path / "state", world.dataset, small_config(3, 2, 100),
                         *world.client, world.prompts);

  // Nothing solved yet: no exemplar.
  CHECK_FALSE(engine.retrieve_exemplar(world.dataset.problems[4]).has_value());

  engine.run_iteration();  // solves p001..p003
  const auto pick = engine.retrieve_exemplar(world.dataset.problems[4]);
  REQUIRE(pick.has_value());
  CHECK(engine.state().solved.count(*pick) == 1);

  // A problem identical in text to a solved one must retrieve that problem
  // (cosine similarity 1.0 beats everything else).
  Problem clone = world.dataset.problems[1];
  clone.id = "clone";
  const auto self = engine.retrieve_exemplar(clone);
  REQUIRE(self.has_value());
  CHECK(*self == world.dataset.problems[1].id);
}

TEST_CASE("export_solved yields a verified dataset in canonical order") {
  testsupport::TempDir dir;
  World world(5, 2);
  BootstrapEngine engine(dir.path / "state", world.dataset, small_config(3, 2, 100),
                         *world.client, world.prompts);
  engine.run(1);
  const auto frozen = engine.export_solved();
  REQUIRE(frozen.size() == 3);
  // Dataset order, not admission or alphabetical-by-accident order.
  std::vector<std::string> ids;
  for (const auto& p : frozen.problems) {
    ids.push_back(p.id);
  }
  CHECK(std::is_sorted(ids.begin(), ids.end()));
  for (const auto& p : frozen.problems) {
    REQUIRE(p.target_solution.has_value());
    for (const auto& tc : p.test_cases) {
      CHECK(tc.target_invocation.has_value());
    }
  }
}

TEST_CASE("import_curated replaces the solved set after re-verification") {
  testsupport::TempDir dir;
  World world(4, 2);
  BootstrapEngine engine(dir.path / "state", world.dataset, small_config(4, 2, 100),
                         *world.client, world.prompts);
  engine.run(1);
  REQUIRE(engine.state().solved.size() == 4);

  auto curated = engine.export_solved();
  curated.problems.pop_back();  // curator dropped one entry
  engine.import_curated(curated);
  CHECK(engine.state().solved.size() == 3);
  CHECK(engine.state().unsolved.size() == 1);

  // The dropped problem is solvable again.
  engine.run(5);
  CHECK(engine.state().solved.size() == 4);
}

TEST_CASE("import_curated validates entries against the canonical dataset") {
  testsupport::TempDir dir;
  World world(3, 2);
  BootstrapEngine engine(dir.path / "state", world.dataset, small_config(3, 2, 100),
                         *world.client, world.prompts);
  engine.run(1);

  SUBCASE("unknown problem id") {
    auto curated = engine.export_solved();
    curated.problems[0].id = "not-in-dataset";
    CHECK_THROWS_AS(engine.import_curated(curated), DatasetError);
  }
  SUBCASE("missing target solution") {
    auto curated = engine.export_solved();
    curated.problems[0].target_solution.reset();
    CHECK_THROWS_AS(engine.import_curated(curated), DatasetError);
  }
  SUBCASE("changed case count") {
    auto curated = engine.export_solved();
    curated.problems[0].test_cases.pop_back();
    CHECK_THROWS_AS(engine.import_curated(curated), DatasetError);
  }
  SUBCASE("changed canonical expected output") {
    auto curated = engine.export_solved();
    curated.problems[0].test_cases[0].expected_output = "tampered";
    CHECK_THROWS_AS(engine.import_curated(curated), DatasetError);
  }
  SUBCASE("solution that no longer passes") {
    auto curated = engine.export_solved();
    curated.problems[0].target_solution = "stub:const garbage";
    CHECK_THROWS_AS(engine.import_curated(curated), DatasetError);
  }
  SUBCASE("a valid curated set with an edited-but-passing solution is accepted") {
    auto curated = engine.export_solved();
    // Re-deriving the stored solution is allowed as long as it still passes.
    engine.import_curated(curated);
    CHECK(engine.state().solved.size() == 3);
  }
}

TEST_CASE("resume state after import reflects the imported set") {
  testsupport::TempDir dir;
  World world(3, 2);
  {
    BootstrapEngine engine(dir.path / "state", world.dataset, small_config(3, 2, 100),
                           *world.client, world.prompts);
    engine.run(1);
    auto curated = engine.export_solved();
    curated.problems.erase(curated.problems.begin());
    engine.import_curated(curated);
    CHECK(engine.state().solved.size() == 2);
  }
  World world2(3, 2);
  BootstrapEngine resumed(dir.path / "state", world2.dataset, small_config(3, 2, 100),
                          *world2.client, world2.prompts);
  CHECK(resumed.state().solved.size() == 2);
  CHECK(resumed.state().unsolved.size() == 1);
}

TEST_CASE("gateway failures during candidate generation are absorbed") {
  testsupport::TempDir dir;
  Dataset ds = testsupport::make_stub_world(2, 2);
  MockBackend backend;
  const auto oracle = make_bootstrap_oracle_handler(ds);
  std::atomic<int> solution_calls{0};
  backend.set_chat_handler(
      [&](const std::vector<Message>& messages, const GenerationParams& params)
          -> std::vector<std::string> {
        const bool is_harness =
            messages.back().content.find("Convert this Python test case") !=
            std::string::npos;
        if (!is_harness && solution_calls.fetch_add(1) == 0) {
          throw GatewayError("scripted outage", 400);
        }
        return oracle(messages, params);
      });
  LlmClient client(backend, ClientConfig{});
  const auto prompts = PromptLibrary::builtin();

  BootstrapEngine engine(dir.path / "state", ds, small_config(2, 3, 100), client,
                         prompts);
  engine.run(1);
  // One candidate request was lost; the others still carried both problems.
  CHECK(engine.state().solved.size() == 2);

  bool saw_failure_event = false;
  for (const auto& rec : read_journal(dir.path / "state")) {
    if (rec["event"] == "candidate_request_failed") {
      saw_failure_event = true;
    }
  }
  CHECK(saw_failure_event);
}

TEST_CASE("problems whose candidates all fail stay unsolved and are revisited") {
  testsupport::TempDir dir;
  Dataset ds = testsupport::make_stub_world(2, 2);
  MockBackend backend;
  const auto oracle = make_bootstrap_oracle_handler(ds);
  // p001 always gets a wrong solution; p002 resolves normally.
  backend.set_chat_handler(
      [&](const std::vector<Message>& messages, const GenerationParams& params)
          -> std::vector<std::string> {
        const std::string& prompt = messages.back().content;
        const bool is_harness =
            prompt.find("Convert this Python test case") != std::string::npos;
        if (!is_harness && prompt.find("table_p001") != std::string::npos) {
          return {"stub:const wrong"};
        }
        return oracle(messages, params);
      });
  LlmClient client(backend, ClientConfig{});
  const auto prompts = PromptLibrary::builtin();

  BootstrapEngine engine(dir.path / "state", ds, small_config(2, 2, 100), client,
                         prompts);
  const int iterations = engine.run(3);
  CHECK(iterations == 3);
  CHECK(engine.state().solved.size() == 1);
  CHECK(engine.state().solved.count("p002") == 1);
  CHECK(engine.state().unsolved.count("p001") == 1);

  bool saw_not_admitted = false;
  for (const auto& rec : read_journal(dir.path / "state")) {
    if (rec["event"] == "not_admitted" && rec["problem_id"] == "p001") {
      saw_not_admitted = true;
    }
  }
  CHECK(saw_not_admitted);
}
