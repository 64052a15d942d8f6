#pragma once

#include "qbench/grading.hpp"
#include "qbench/sandbox.hpp"

#include <atomic>
#include <memory>
#include <string>
#include <thread>

namespace qbench {

struct RewardServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8787;  // 0 = pick any free port
  InterpreterProfile profile;
  RewardScheme default_scheme = RewardScheme::TestFraction;
  double default_bonus = 2.0;
  int max_concurrency = 16;  // worker threads; extra requests queue
};

// HTTP reward endpoint for an external RL trainer. One request grades one
// candidate in its own sandboxed execution.
//
//   POST /v1/reward
//     {"code": "..."} or {"raw_completion": "...", "mode": "reasoning"|"plain"},
//     "cases": [{"index": 1, "target_invocation": "...", "expected_output": "..."}],
//     optional "scheme": "test_fraction"|"perfect_only"|"combined",
//     optional "bonus": number, optional "profile": name (must match the
//     served profile)
//   -> 200 {"schema_version", "reward", "per_case", "passed", "total",
//           "all_passed"} with "parse_failure": true (reward 0) when
//      reasoning extraction finds no answer block
//   -> 400 on malformed bodies, 503 when the interpreter is unavailable
//
//   GET /healthz -> {"status": "ok"|"degraded", "profile", "interpreter_available"}
class RewardService {
 public:
  explicit RewardService(RewardServiceConfig config);
  ~RewardService();

  RewardService(const RewardService&) = delete;
  RewardService& operator=(const RewardService&) = delete;

  // Binds and starts serving on a background thread. Returns false when the
  // port is already taken.
  bool start();
  void stop();
  // Blocks until stop() (possibly from a signal watcher) shuts the server down.
  void wait();

  int port() const { return port_; }
  const std::string& host() const { return config_.host; }

 private:
  struct Impl;  // hides the HTTP library from this header

  RewardServiceConfig config_;
  std::unique_ptr<Executor> executor_;
  std::unique_ptr<Impl> impl_;
  std::thread serve_thread_;
  std::atomic<bool> running_{false};
  int port_ = 0;
};

}  // namespace qbench
