// qbench: one entry point for evaluation, dataset bootstrapping, reward
// serving, corpus preparation, SFT expansion, and report rendering.
//
// Exit codes: 0 success; 2 usage or bad input; 3 environment (missing
// interpreter, unreachable endpoint); 4 lock or port contention; 1 other.

#include "qbench/bootstrap.hpp"
#include "qbench/config.hpp"
#include "qbench/corpus.hpp"
#include "qbench/dataset.hpp"
#include "qbench/errors.hpp"
#include "qbench/evaluator.hpp"
#include "qbench/grading.hpp"
#include "qbench/llm_gateway.hpp"
#include "qbench/metrics.hpp"
#include "qbench/prompts.hpp"
#include "qbench/reward_service.hpp"
#include "qbench/sandbox.hpp"
#include "qbench/util.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

namespace {

using namespace qbench;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitEnvironment = 3;
constexpr int kExitLocked = 4;

struct CommonOpts {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> endpoint;
  std::optional<std::string> model;
};

void add_common_options(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_file, "global config file (JSON)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "deterministic seed (beats env and config)");
  cmd->add_option("--workers", opts.workers, "worker threads");
  cmd->add_option("--endpoint", opts.endpoint, "generation endpoint base URL");
  cmd->add_option("--model", opts.model, "generation model name");
}

GlobalConfig effective_config(const CommonOpts& opts) {
  GlobalConfig config;
  if (!opts.config_file.empty()) {
    config = load_config(opts.config_file);
  } else if (auto env = util::getenv_str("QBENCH_CONFIG")) {
    config = load_config(*env);
  } else {
    config = default_config();
  }
  apply_env_overrides(config);
  if (opts.seed) {
    config.seed = *opts.seed;
  }
  if (opts.workers) {
    if (*opts.workers < 1) {
      throw ConfigError("--workers must be >= 1");
    }
    config.workers = *opts.workers;
  }
  if (opts.endpoint) {
    config.endpoints["generation"].base_url = *opts.endpoint;
  }
  if (opts.model) {
    config.params.model = *opts.model;
  }
  return config;
}

// Chat backend + retrying client, either HTTP or an in-process mock.
// Mock modes: "off" (real endpoint), "default" (prompt-hash completions),
// "oracle" (dataset-derived answers), "fixed:TEXT".
struct Gateway {
  std::unique_ptr<MockBackend> mock;
  std::unique_ptr<HttpChatBackend> http;
  std::unique_ptr<LlmClient> client;
};

Gateway make_gateway(const GlobalConfig& config, const std::string& mock_mode, int latency_ms,
                     MockBackend::ChatHandler oracle_handler,
                     const std::filesystem::path& request_log) {
  Gateway gateway;
  ClientConfig client_config;
  client_config.max_in_flight = config.max_in_flight;
  client_config.request_log = request_log;
  if (mock_mode == "off") {
    gateway.http = std::make_unique<HttpChatBackend>(require_endpoint(config, "generation"));
    gateway.client = std::make_unique<LlmClient>(*gateway.http, client_config);
    return gateway;
  }
  gateway.mock = std::make_unique<MockBackend>();
  gateway.mock->set_seed(config.seed);
  if (latency_ms > 0) {
    gateway.mock->set_latency(std::chrono::milliseconds(latency_ms));
  }
  if (mock_mode == "oracle") {
    if (!oracle_handler) {
      throw ConfigError("mock mode 'oracle' is not supported by this command");
    }
    gateway.mock->set_chat_handler(std::move(oracle_handler));
  } else if (util::starts_with(mock_mode, "fixed:")) {
    gateway.mock->set_chat_handler(make_fixed_chat_handler(mock_mode.substr(6)));
  } else if (mock_mode != "default") {
    throw ConfigError("unknown --mock mode '" + mock_mode +
                      "' (expected off, default, oracle, or fixed:TEXT)");
  }
  gateway.client = std::make_unique<LlmClient>(*gateway.mock, client_config);
  return gateway;
}

std::vector<int> parse_k_list(const std::string& text) {
  std::vector<int> ks;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    item = util::trim(item);
    if (item.empty()) {
      continue;
    }
    try {
      std::size_t used = 0;
      int k = std::stoi(item, &used);
      if (used != item.size() || k < 1) {
        throw std::invalid_argument("bad k");
      }
      ks.push_back(k);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse k value '" + item + "' in --k list");
    }
  }
  if (ks.empty()) {
    throw ConfigError("--k list is empty");
  }
  return ks;
}

Dataset load_split(const std::filesystem::path& path, const std::string& split) {
  Dataset dataset = load_dataset(path);
  if (split == "all") {
    return dataset;
  }
  DatasetFilter filter;
  filter.split = split_from_string(split);
  return filter_dataset(dataset, filter);
}

std::vector<std::string> split_command_line(const std::string& text) {
  std::vector<std::string> argv;
  std::stringstream stream(text);
  std::string word;
  while (stream >> word) {
    argv.push_back(word);
  }
  return argv;
}

// --- eval ----------------------------------------------------------------------

struct EvalOpts {
  CommonOpts common;
  std::string dataset;
  std::string split = "test";
  std::string task = "source_to_target";
  std::string protocol = "standard";
  int samples = 1;
  int k_max = 4;
  std::string k_list = "1,2,4,8,16";
  std::string target_profile = "q";
  std::string source_profile = "python";
  std::string mock = "off";
  int mock_latency_ms = 0;
  bool use_judge = false;
  std::string judge_model = "judge";
  std::string context_reference_file;
  std::vector<std::string> context_exemplars;
  std::string context_base = "standard";
  std::string out_dir;
};

int cmd_eval(const EvalOpts& opts) {
  GlobalConfig config = effective_config(opts.common);
  const std::filesystem::path out_dir =
      opts.out_dir.empty() ? std::filesystem::path(config.output_dir)
                           : std::filesystem::path(opts.out_dir);
  std::filesystem::create_directories(out_dir);

  Dataset dataset = load_split(opts.dataset, opts.split);

  EvalJobSpec spec;
  spec.task = eval_task_from_string(opts.task);
  spec.protocol = eval_protocol_from_string(opts.protocol);
  spec.n_samples = opts.samples;
  spec.k_max = opts.k_max;
  spec.ks = parse_k_list(opts.k_list);
  spec.workers = config.workers;
  spec.params = config.params;
  spec.target_profile = require_profile(config, opts.target_profile);
  spec.source_profile = require_profile(config, opts.source_profile);
  spec.event_log = out_dir / "events.jsonl";
  if (spec.protocol == EvalProtocol::Context) {
    spec.context_base = eval_protocol_from_string(opts.context_base);
    if (!opts.context_reference_file.empty()) {
      spec.context.language_reference = util::read_file(opts.context_reference_file);
    }
    spec.context.exemplar_ids = opts.context_exemplars;
  }

  Gateway gateway = make_gateway(config, opts.mock, opts.mock_latency_ms,
                                 make_oracle_chat_handler(dataset, spec.task),
                                 out_dir / "requests.jsonl");

  PromptLibrary prompts = PromptLibrary::builtin();
  std::unique_ptr<HttpChatBackend> judge_backend;
  std::unique_ptr<LlmClient> judge_client;
  std::unique_ptr<LlmJudge> judge;
  if (opts.use_judge) {
    if (opts.mock != "off") {
      throw ConfigError("--judge needs a live judge endpoint; it cannot run in mock mode");
    }
    judge_backend = std::make_unique<HttpChatBackend>(require_endpoint(config, "judge"));
    ClientConfig judge_config;
    judge_config.max_in_flight = config.max_in_flight;
    judge_client = std::make_unique<LlmClient>(*judge_backend, judge_config);
    JudgeConfig jc;
    jc.model = opts.judge_model;
    judge = std::make_unique<LlmJudge>(*judge_client, prompts, jc);
  }

  EvalDeps deps{*gateway.client, prompts, judge.get()};

  const auto started = std::chrono::steady_clock::now();
  EvalReport report = run_eval(dataset, spec, deps);
  const double wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  report.meta.extra["seed"] = config.seed;
  util::write_file_atomic(out_dir / "report.json", report_to_json(report).dump(2) + "\n");
  util::write_file_atomic(out_dir / "report.csv", report_to_csv(report));
  nlohmann::ordered_json timing;  // sidecar: keeps report bytes run-independent
  timing["wall_seconds"] = wall_seconds;
  timing["workers"] = spec.workers;
  util::write_file_atomic(out_dir / "timing.json", timing.dump(2) + "\n");

  std::printf("task=%s protocol=%s problems=%zu samples=%d\n", to_string(spec.task).c_str(),
              to_string(spec.protocol).c_str(), report.outcomes.size(), spec.n_samples);
  for (const auto& [k, value] : report.pass_at_k_values) {
    std::printf("pass@%-4d %.4f\n", k, value);
  }
  std::printf("overall   %.4f\n", report.overall_pass);
  std::printf("completions=%lld case_executions=%lld infra_failures=%lld\n",
              report.meta.total_completions, report.meta.total_case_executions,
              report.meta.infrastructure_failures);
  std::printf("report: %s\n", (out_dir / "report.json").string().c_str());
  return kExitOk;
}

// --- bootstrap -------------------------------------------------------------------

struct BootstrapOpts {
  CommonOpts common;
  std::string dataset;
  std::string state_dir;
  int iterations = 1;
  int batch_size = 20;
  int attempts = 8;
  int sft_trigger = 20;
  int sft_steps = 100;
  double holdout = 0.10;
  std::string trainer;
  std::string profile = "q";
  std::string mock = "off";
  int mock_latency_ms = 0;
  bool use_judge = false;
  std::string out_file;   // freeze
  std::string in_file;    // import
  int harness_retries = 3;
};

std::unique_ptr<BootstrapEngine> make_engine(const BootstrapOpts& opts, Gateway& gateway,
                                             PromptLibrary& prompts, Dataset dataset,
                                             const GlobalConfig& config) {
  BootstrapConfig bc;
  bc.batch_size = opts.batch_size;
  bc.attempts_per_problem = opts.attempts;
  bc.sft_trigger = opts.sft_trigger;
  bc.sft_steps = opts.sft_steps;
  bc.holdout_fraction = opts.holdout;
  bc.trainer_command = split_command_line(opts.trainer);
  bc.params = config.params;
  bc.target_profile = require_profile(config, opts.profile);
  bc.harness_retries = opts.harness_retries;
  bc.workers = config.workers;
  bc.seed = config.seed;
  bc.use_judge = false;  // judge wiring arrives with a live judge endpoint
  if (opts.use_judge) {
    throw ConfigError("--judge is not supported for bootstrap runs yet");
  }
  return std::make_unique<BootstrapEngine>(opts.state_dir, std::move(dataset), bc,
                                           *gateway.client, prompts, nullptr);
}

int cmd_bootstrap(const BootstrapOpts& opts, const std::string& action) {
  GlobalConfig config = effective_config(opts.common);
  Dataset dataset = load_dataset(opts.dataset);
  PromptLibrary prompts = PromptLibrary::builtin();
  Gateway gateway = make_gateway(config, opts.mock, opts.mock_latency_ms,
                                 make_bootstrap_oracle_handler(dataset),
                                 std::filesystem::path(opts.state_dir) / "requests.jsonl");
  auto engine = make_engine(opts, gateway, prompts, std::move(dataset), config);

  if (action == "init") {
    std::printf("state initialized at %s: solved=%zu unsolved=%zu\n",
                engine->state_dir().string().c_str(), engine->state().solved.size(),
                engine->state().unsolved.size());
    return kExitOk;
  }
  if (action == "run") {
    const int executed = engine->run(opts.iterations);
    const auto& state = engine->state();
    std::printf("iterations=%d solved=%zu unsolved=%zu sft_triggers=%d\n", executed,
                state.solved.size(), state.unsolved.size(), state.sft_triggers);
    return kExitOk;
  }
  if (action == "freeze") {
    Dataset solved = engine->export_solved();
    save_dataset(solved, opts.out_file);
    std::printf("froze %zu solved problems to %s\n", solved.size(), opts.out_file.c_str());
    return kExitOk;
  }
  if (action == "import") {
    Dataset curated = load_dataset(opts.in_file);
    engine->import_curated(curated);
    std::printf("imported %zu curated problems; solved=%zu unsolved=%zu\n", curated.size(),
                engine->state().solved.size(), engine->state().unsolved.size());
    return kExitOk;
  }
  throw ConfigError("unknown bootstrap action '" + action + "'");
}

// --- reward service ---------------------------------------------------------------

std::atomic<bool> g_shutdown{false};

void handle_shutdown_signal(int) { g_shutdown = true; }

struct RewardServeOpts {
  CommonOpts common;
  std::string host = "127.0.0.1";
  int port = 8787;
  std::string profile = "q";
  std::string scheme = "test_fraction";
  double bonus = 2.0;
  int max_concurrency = 16;
};

int cmd_reward_serve(const RewardServeOpts& opts) {
  GlobalConfig config = effective_config(opts.common);
  RewardServiceConfig service_config;
  service_config.host = opts.host;
  service_config.port = opts.port;
  service_config.profile = require_profile(config, opts.profile);
  service_config.default_scheme = reward_scheme_from_string(opts.scheme);
  service_config.default_bonus = opts.bonus;
  service_config.max_concurrency = opts.max_concurrency;

  RewardService service(service_config);
  if (!service.start()) {
    std::fprintf(stderr, "cannot bind %s:%d (port in use?)\n", opts.host.c_str(), opts.port);
    return kExitLocked;
  }

  std::signal(SIGINT, handle_shutdown_signal);
  std::signal(SIGTERM, handle_shutdown_signal);
  std::thread watcher([&service] {
    while (!g_shutdown.load()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    service.stop();
  });

  const bool available = interpreter_available(service_config.profile);
  std::printf("reward service listening on http://%s:%d (profile=%s scheme=%s status=%s)\n",
              service.host().c_str(), service.port(), service_config.profile.name.c_str(),
              opts.scheme.c_str(), available ? "ok" : "degraded");
  std::fflush(stdout);

  service.wait();
  g_shutdown = true;
  watcher.join();
  std::printf("reward service stopped\n");
  return kExitOk;
}

// --- corpus ------------------------------------------------------------------------

struct CorpusOpts {
  CommonOpts common;
  std::string manifest;
  std::string root;
  std::string out;
  std::string mock = "off";
  int threshold = 4;
  std::string histogram_file;
  std::string exclude_file;
  int max_tokens = 4096;
  std::string chunks_file;
  double eval_fraction = 0.10;
  std::string train_out;
  std::string eval_out;
};

int cmd_corpus_score(const CorpusOpts& opts) {
  GlobalConfig config = effective_config(opts.common);
  auto files = load_corpus_manifest(opts.manifest, opts.root);
  Gateway gateway = make_gateway(config, opts.mock, 0, nullptr, {});
  PromptLibrary prompts = PromptLibrary::builtin();
  GenerationParams params = config.params;
  params.temperature = 0.0;  // constrained single-integer reply
  params.max_tokens = 8;
  score_files(files, *gateway.client, prompts, params, config.workers);
  const std::string out = opts.out.empty() ? opts.manifest : opts.out;
  save_corpus_manifest(files, out);
  int scored = 0;
  int flagged = 0;
  for (const auto& file : files) {
    scored += file.score ? 1 : 0;
    flagged += file.needs_review ? 1 : 0;
  }
  std::printf("scored %d/%zu files (%d flagged for review) -> %s\n", scored, files.size(),
              flagged, out.c_str());
  return kExitOk;
}

int cmd_corpus_filter(const CorpusOpts& opts) {
  auto files = load_corpus_manifest(opts.manifest, opts.root);
  FilterResult result = filter_corpus(files, opts.threshold);
  int excluded = 0;
  if (!opts.exclude_file.empty()) {
    excluded = apply_exclusions(files, load_exclusion_list(opts.exclude_file));
  }
  const std::string out = opts.out.empty() ? opts.manifest : opts.out;
  save_corpus_manifest(files, out);
  if (!opts.histogram_file.empty()) {
    nlohmann::ordered_json doc;
    doc["schema_version"] = 1;
    doc["threshold"] = opts.threshold;
    doc["total"] = result.total;
    doc["retained"] = result.retained - excluded;
    doc["manually_excluded"] = excluded;
    nlohmann::ordered_json bins = nlohmann::ordered_json::object();
    for (const auto& [score, count] : result.histogram) {
      bins[std::to_string(score)] = count;
    }
    doc["histogram"] = std::move(bins);
    util::write_file_atomic(opts.histogram_file, doc.dump(2) + "\n");
  }
  std::printf("retained %d/%d files at threshold %d (%d manually excluded) -> %s\n",
              result.retained - excluded, result.total, opts.threshold, excluded, out.c_str());
  return kExitOk;
}

int cmd_corpus_chunk(const CorpusOpts& opts) {
  auto files = load_corpus_manifest(opts.manifest, opts.root);
  auto chunks = chunk_corpus(files, opts.max_tokens);
  write_chunks(chunks, opts.out);
  long long total_tokens = 0;
  for (const auto& chunk : chunks) {
    total_tokens += chunk.token_count;
  }
  std::printf("wrote %zu chunks (%lld tokens, max %d per chunk) -> %s\n", chunks.size(),
              total_tokens, opts.max_tokens, opts.out.c_str());
  return kExitOk;
}

int cmd_corpus_split(const CorpusOpts& opts) {
  GlobalConfig config = effective_config(opts.common);
  auto chunks = load_chunks(opts.chunks_file);
  ChunkSplit split = split_chunks(chunks, opts.eval_fraction, config.seed);
  write_chunks(split.train, opts.train_out);
  write_chunks(split.eval, opts.eval_out);
  std::printf("split %zu chunks into %zu train / %zu eval (fraction %.3f, seed %llu)\n",
              chunks.size(), split.train.size(), split.eval.size(), opts.eval_fraction,
              static_cast<unsigned long long>(config.seed));
  return kExitOk;
}

// --- sft-gen -------------------------------------------------------------------------

struct SftGenOpts {
  std::string dataset;
  std::string out;
  std::string split = "train";
};

int cmd_sft_gen(const SftGenOpts& opts) {
  Dataset dataset = load_split(opts.dataset, opts.split);
  PromptLibrary prompts = PromptLibrary::builtin();
  std::vector<SftSample> samples;
  int expanded = 0;
  int skipped = 0;
  for (const auto& problem : dataset.problems) {
    if (!problem.target_solution) {
      ++skipped;
      continue;
    }
    auto expanded_samples = expand_sft(problem, prompts);
    samples.insert(samples.end(), expanded_samples.begin(), expanded_samples.end());
    ++expanded;
  }
  write_sft_samples(samples, opts.out);
  std::printf("expanded %d problems into %zu samples (%d skipped without target solutions) -> %s\n",
              expanded, samples.size(), skipped, opts.out.c_str());
  return kExitOk;
}

// --- report --------------------------------------------------------------------------

struct ReportOpts {
  std::string report_file;
  std::string by = "both";
  std::string csv_out;
};

int cmd_report(const ReportOpts& opts) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(util::read_file(opts.report_file));
  } catch (const nlohmann::json::parse_error& e) {
    throw DatasetError(std::string("cannot parse report: ") + e.what());
  }
  std::vector<ProblemOutcome> outcomes;
  for (const auto& node : doc.at("outcomes")) {
    ProblemOutcome outcome;
    outcome.problem_id = node.at("problem_id").get<std::string>();
    outcome.n = node.at("n").get<int>();
    outcome.c = node.at("c").get<int>();
    outcome.difficulty = difficulty_from_string(node.at("difficulty").get<std::string>());
    outcome.tags = node.at("tags").get<std::vector<std::string>>();
    outcomes.push_back(std::move(outcome));
  }
  std::vector<int> ks;
  for (const auto& item : doc.at("pass_at_k").items()) {
    ks.push_back(std::stoi(item.key().substr(std::string("pass@").size())));
  }
  EvalReport report = aggregate(outcomes, ks);

  std::string csv = "group,axis,problems";
  for (int k : report.ks) {
    csv += ",pass@" + std::to_string(k);
  }
  csv += ",misses\n";

  auto render = [&](BreakdownAxis axis, const std::string& axis_name) {
    std::printf("by %s:\n", axis_name.c_str());
    for (const auto& row : breakdown(report, axis)) {
      std::printf("  %-16s problems=%-4d", row.key.c_str(), row.problem_count);
      for (int k : report.ks) {
        std::printf(" pass@%d=%.4f", k, row.pass_at_k_values.at(k));
      }
      std::printf(" misses=%d\n", row.miss_count);
      csv += row.key + "," + axis_name + "," + std::to_string(row.problem_count);
      for (int k : report.ks) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.10g", row.pass_at_k_values.at(k));
        csv += std::string(",") + buf;
      }
      csv += "," + std::to_string(row.miss_count) + "\n";
    }
  };
  if (opts.by == "difficulty" || opts.by == "both") {
    render(BreakdownAxis::Difficulty, "difficulty");
  }
  if (opts.by == "tag" || opts.by == "both") {
    render(BreakdownAxis::Tag, "tag");
  }
  if (opts.by != "difficulty" && opts.by != "tag" && opts.by != "both") {
    throw ConfigError("--by must be difficulty, tag, or both");
  }
  if (!opts.csv_out.empty()) {
    util::write_file_atomic(opts.csv_out, csv);
    std::printf("csv: %s\n", opts.csv_out.c_str());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"benchmark evaluation and dataset bootstrapping for low-resource languages"};
  app.require_subcommand(1);

  EvalOpts eval_opts;
  CLI::App* eval_cmd = app.add_subcommand("eval", "run an evaluation protocol over a dataset");
  add_common_options(eval_cmd, eval_opts.common);
  eval_cmd->add_option("--dataset", eval_opts.dataset, "problem dataset (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", eval_opts.split, "test|train|all")->default_val("test");
  eval_cmd->add_option("--task", eval_opts.task, "desc_to_target|source_to_target|target_to_source");
  eval_cmd->add_option("--protocol", eval_opts.protocol, "standard|retries|context");
  eval_cmd->add_option("--samples", eval_opts.samples, "completions per problem (standard)");
  eval_cmd->add_option("--k-max", eval_opts.k_max, "max attempts (retries)");
  eval_cmd->add_option("--k", eval_opts.k_list, "comma-separated k values");
  eval_cmd->add_option("--target-profile", eval_opts.target_profile, "interpreter profile name");
  eval_cmd->add_option("--source-profile", eval_opts.source_profile, "interpreter profile name");
  eval_cmd->add_option("--mock", eval_opts.mock, "off|default|oracle|fixed:TEXT");
  eval_cmd->add_option("--mock-latency-ms", eval_opts.mock_latency_ms,
                       "simulated per-call latency");
  eval_cmd->add_flag("--judge", eval_opts.use_judge, "enable the equivalence judge fallback");
  eval_cmd->add_option("--judge-model", eval_opts.judge_model, "judge model name");
  eval_cmd->add_option("--context-reference", eval_opts.context_reference_file,
                       "language reference file (context protocol)")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--context-exemplar", eval_opts.context_exemplars,
                       "train-split exemplar problem id (repeatable)");
  eval_cmd->add_option("--context-base", eval_opts.context_base,
                       "standard|retries (context protocol)");
  eval_cmd->add_option("--out", eval_opts.out_dir, "output directory");

  BootstrapOpts bootstrap_opts;
  CLI::App* bootstrap_cmd =
      app.add_subcommand("bootstrap", "model-in-the-loop dataset construction");
  bootstrap_cmd->require_subcommand(1);
  auto add_bootstrap_shared = [&](CLI::App* cmd) {
    add_common_options(cmd, bootstrap_opts.common);
    cmd->add_option("--dataset", bootstrap_opts.dataset, "problem dataset (JSONL)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--state-dir", bootstrap_opts.state_dir, "bootstrap state directory")
        ->required();
    cmd->add_option("--profile", bootstrap_opts.profile, "target interpreter profile");
    cmd->add_option("--mock", bootstrap_opts.mock, "off|default|oracle|fixed:TEXT");
  };
  CLI::App* bs_init = bootstrap_cmd->add_subcommand("init", "create or reopen a state directory");
  add_bootstrap_shared(bs_init);
  CLI::App* bs_run = bootstrap_cmd->add_subcommand("run", "execute bootstrap iterations");
  add_bootstrap_shared(bs_run);
  bs_run->add_option("--iterations", bootstrap_opts.iterations, "iterations to run");
  bs_run->add_option("--batch-size", bootstrap_opts.batch_size, "problems per iteration");
  bs_run->add_option("--attempts", bootstrap_opts.attempts, "solution candidates per problem");
  bs_run->add_option("--sft-trigger", bootstrap_opts.sft_trigger,
                     "admissions between fine-tuning rounds");
  bs_run->add_option("--sft-steps", bootstrap_opts.sft_steps, "training steps per round");
  bs_run->add_option("--holdout", bootstrap_opts.holdout, "eval fraction per SFT export");
  bs_run->add_option("--trainer", bootstrap_opts.trainer,
                     "trainer command ({train_file} {eval_file} {steps} substituted)");
  bs_run->add_option("--harness-retries", bootstrap_opts.harness_retries,
                     "harness regeneration attempts");
  bs_run->add_option("--mock-latency-ms", bootstrap_opts.mock_latency_ms,
                     "simulated per-call latency");
  bs_run->add_flag("--judge", bootstrap_opts.use_judge, "enable the equivalence judge fallback");
  CLI::App* bs_freeze =
      bootstrap_cmd->add_subcommand("freeze", "export the solved set for manual review");
  add_bootstrap_shared(bs_freeze);
  bs_freeze->add_option("--out", bootstrap_opts.out_file, "output dataset file")->required();
  CLI::App* bs_import =
      bootstrap_cmd->add_subcommand("import", "re-ingest a reviewed solved set");
  add_bootstrap_shared(bs_import);
  bs_import->add_option("--file", bootstrap_opts.in_file, "curated dataset file")
      ->required()
      ->check(CLI::ExistingFile);

  RewardServeOpts reward_opts;
  CLI::App* reward_cmd = app.add_subcommand("reward-serve", "HTTP reward endpoint for RL");
  add_common_options(reward_cmd, reward_opts.common);
  reward_cmd->add_option("--host", reward_opts.host, "bind address");
  reward_cmd->add_option("--port", reward_opts.port, "port (0 = any free port)");
  reward_cmd->add_option("--profile", reward_opts.profile, "interpreter profile name");
  reward_cmd->add_option("--scheme", reward_opts.scheme,
                         "test_fraction|perfect_only|combined");
  reward_cmd->add_option("--bonus", reward_opts.bonus, "perfect bonus value");
  reward_cmd->add_option("--max-concurrency", reward_opts.max_concurrency,
                         "request worker threads");

  CorpusOpts corpus_opts;
  CLI::App* corpus_cmd = app.add_subcommand("corpus", "pretraining corpus preparation");
  corpus_cmd->require_subcommand(1);
  CLI::App* corpus_score_cmd = corpus_cmd->add_subcommand("score", "LLM usefulness scoring");
  add_common_options(corpus_score_cmd, corpus_opts.common);
  corpus_score_cmd->add_option("--manifest", corpus_opts.manifest, "corpus manifest (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  corpus_score_cmd->add_option("--root", corpus_opts.root, "content root directory");
  corpus_score_cmd->add_option("--out", corpus_opts.out, "output manifest (default: in place)");
  corpus_score_cmd->add_option("--mock", corpus_opts.mock, "off|default|fixed:TEXT");
  CLI::App* corpus_filter_cmd =
      corpus_cmd->add_subcommand("filter", "threshold filter over scored files");
  corpus_filter_cmd->add_option("--manifest", corpus_opts.manifest, "corpus manifest (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  corpus_filter_cmd->add_option("--root", corpus_opts.root, "content root directory");
  corpus_filter_cmd->add_option("--threshold", corpus_opts.threshold, "minimum retained score");
  corpus_filter_cmd->add_option("--out", corpus_opts.out, "output manifest (default: in place)");
  corpus_filter_cmd->add_option("--histogram", corpus_opts.histogram_file,
                                "score histogram output (JSON)");
  corpus_filter_cmd->add_option("--exclude", corpus_opts.exclude_file,
                                "manual exclusion list (one path per line)")
      ->check(CLI::ExistingFile);
  CLI::App* corpus_chunk_cmd =
      corpus_cmd->add_subcommand("chunk", "token-bounded chunking of retained files");
  corpus_chunk_cmd->add_option("--manifest", corpus_opts.manifest, "corpus manifest (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  corpus_chunk_cmd->add_option("--root", corpus_opts.root, "content root directory");
  corpus_chunk_cmd->add_option("--max-tokens", corpus_opts.max_tokens, "tokens per chunk");
  corpus_chunk_cmd->add_option("--out", corpus_opts.out, "chunk output (JSONL)")->required();
  CLI::App* corpus_split_cmd = corpus_cmd->add_subcommand("split", "seeded train/eval split");
  add_common_options(corpus_split_cmd, corpus_opts.common);
  corpus_split_cmd->add_option("--chunks", corpus_opts.chunks_file, "chunk file (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  corpus_split_cmd->add_option("--eval-fraction", corpus_opts.eval_fraction,
                               "held-out fraction");
  corpus_split_cmd->add_option("--train-out", corpus_opts.train_out, "train chunk output")
      ->required();
  corpus_split_cmd->add_option("--eval-out", corpus_opts.eval_out, "eval chunk output")
      ->required();

  SftGenOpts sft_opts;
  CLI::App* sft_cmd = app.add_subcommand("sft-gen", "expand solved problems into SFT samples");
  sft_cmd->add_option("--dataset", sft_opts.dataset, "problem dataset (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  sft_cmd->add_option("--out", sft_opts.out, "sample output (JSONL)")->required();
  sft_cmd->add_option("--split", sft_opts.split, "train|test|all");

  ReportOpts report_opts;
  CLI::App* report_cmd = app.add_subcommand("report", "render breakdowns from a report file");
  report_cmd->add_option("--report", report_opts.report_file, "report JSON from eval")
      ->required()
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--by", report_opts.by, "difficulty|tag|both");
  report_cmd->add_option("--csv", report_opts.csv_out, "plot-ready CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (eval_cmd->parsed()) {
      return cmd_eval(eval_opts);
    }
    if (bootstrap_cmd->parsed()) {
      std::string action;
      if (bs_init->parsed()) {
        action = "init";
      } else if (bs_run->parsed()) {
        action = "run";
      } else if (bs_freeze->parsed()) {
        action = "freeze";
      } else {
        action = "import";
      }
      return cmd_bootstrap(bootstrap_opts, action);
    }
    if (reward_cmd->parsed()) {
      return cmd_reward_serve(reward_opts);
    }
    if (corpus_cmd->parsed()) {
      if (corpus_score_cmd->parsed()) {
        return cmd_corpus_score(corpus_opts);
      }
      if (corpus_filter_cmd->parsed()) {
        return cmd_corpus_filter(corpus_opts);
      }
      if (corpus_chunk_cmd->parsed()) {
        return cmd_corpus_chunk(corpus_opts);
      }
      return cmd_corpus_split(corpus_opts);
    }
    if (sft_cmd->parsed()) {
      return cmd_sft_gen(sft_opts);
    }
    if (report_cmd->parsed()) {
      return cmd_report(report_opts);
    }
    std::fprintf(stderr, "no command given\n");
    return kExitUsage;
  } catch (const StateLockError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitLocked;
  } catch (const EnvironmentError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitEnvironment;
  } catch (const GatewayError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitEnvironment;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const DatasetError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
