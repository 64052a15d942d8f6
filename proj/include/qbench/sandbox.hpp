#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qbench {

// How to run a program for one language: interpreter argv template plus limits.
// The command is an argv vector; any "{file}" token expands to the program path,
// and the path is appended when no token mentions it.
struct InterpreterProfile {
  std::string name;
  std::vector<std::string> command;
  std::string file_extension;
  double timeout_seconds = 10.0;
  std::map<std::string, std::string> env_overrides;
  // Optional wrapper prefixed to the command, e.g. a jail or rlimit helper.
  std::vector<std::string> jail_command;
};

enum class ExecStatus { Ok, RuntimeError, Timeout, InterpreterMissing };

std::string to_string(ExecStatus s);

struct ExecutionResult {
  ExecStatus status = ExecStatus::Ok;
  std::string stdout_text;
  std::string stderr_text;
  double duration_seconds = 0.0;
  std::optional<int> exit_code;
  bool output_truncated = false;

  bool ok() const { return status == ExecStatus::Ok; }
};

// Per-stream capture cap; anything beyond is dropped and marked.
inline constexpr std::size_t kOutputCapBytes = 1 << 20;
inline constexpr const char* kTruncationMarker = "\n[output truncated]";

class Executor {
 public:
  virtual ~Executor() = default;
  // Runs `code` with `harness` appended (one newline between them) under the
  // profile's interpreter. Never throws for program failures; those are
  // reported through ExecutionResult::status.
  virtual ExecutionResult execute(const std::string& code, const std::string& harness,
                                  const InterpreterProfile& profile) = 0;
};

// Real subprocess executor: fresh temp dir per run, process-group kill on
// timeout, capped output capture.
class SandboxExecutor : public Executor {
 public:
  ExecutionResult execute(const std::string& code, const std::string& harness,
                          const InterpreterProfile& profile) override;
};

// Deterministic in-process executor for tests and mock runs. It interprets a
// tiny directive language found in `code`:
//
//   stub:crash                      -> runtime error, exit 1
//   stub:hang                       -> timeout at the profile limit
//   stub:on <needle> => <output>    -> when the harness contains <needle>,
//                                      print <output> (first match wins)
//   stub:const <output>             -> fallback output when no stub:on matched
//
// Lines without a directive are ignored, so arbitrary code passes through as
// a no-op. Selected via the profile command "builtin:stub".
class StubExecutor : public Executor {
 public:
  ExecutionResult execute(const std::string& code, const std::string& harness,
                          const InterpreterProfile& profile) override;
};

// Picks StubExecutor when the profile command is "builtin:stub", otherwise the
// real sandbox.
std::unique_ptr<Executor> make_executor(const InterpreterProfile& profile);

// True when the profile's interpreter can be invoked (resolvable executable or
// the builtin stub). Used for health reporting and skip decisions.
bool interpreter_available(const InterpreterProfile& profile);

}  // namespace qbench
