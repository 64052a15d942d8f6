#include "doctest.h"

#include "qbench/sandbox.hpp"

#include "support.hpp"

#include <string>

using namespace qbench;

namespace {

InterpreterProfile stub_profile() {
  InterpreterProfile p;
  p.name = "stub";
  p.command = {"builtin:stub"};
  p.file_extension = ".txt";
  return p;
}

InterpreterProfile python_profile(double timeout = 10.0) {
  InterpreterProfile p;
  p.name = "python";
  p.command = {"python3", "{file}"};
  p.file_extension = ".py";
  p.timeout_seconds = timeout;
  return p;
}

}  // namespace

TEST_CASE("stub const directive prints a fixed output") {
  StubExecutor ex;
  const auto r = ex.execute("stub:const 42", "anything", stub_profile());
  CHECK(r.ok());
  CHECK(r.stdout_text == "42\n");
  CHECK(r.exit_code == 0);
}

TEST_CASE("stub on-directives key off the harness text, first match wins") {
  StubExecutor ex;
  const std::string code =
      "stub:on case-1 => out-1\n"
      "stub:on case-2 => out-2\n"
      "stub:const fallback";
  CHECK(ex.execute(code, "run case-1 now", stub_profile()).stdout_text == "out-1\n");
  CHECK(ex.execute(code, "run case-2 now", stub_profile()).stdout_text == "out-2\n");
  CHECK(ex.execute(code, "run case-3 now", stub_profile()).stdout_text == "fallback\n");
}

TEST_CASE("stub crash reports a runtime error") {
  StubExecutor ex;
  const auto r = ex.execute("stub:crash", "h", stub_profile());
  CHECK(r.status == ExecStatus::RuntimeError);
  CHECK(r.exit_code == 1);
  CHECK_FALSE(r.ok());
}

TEST_CASE("stub hang reports a timeout without sleeping for real") {
  StubExecutor ex;
  auto profile = stub_profile();
  profile.timeout_seconds = 0.25;
  const auto r = ex.execute("stub:hang", "h", stub_profile());
  CHECK(r.status == ExecStatus::Timeout);
}

TEST_CASE("stub with no matching directive emits nothing") {
  StubExecutor ex;
  const auto r = ex.execute("ordinary code, no directives", "h", stub_profile());
  CHECK(r.ok());
  CHECK(r.stdout_text.empty());
}

TEST_CASE("make_executor dispatches on the builtin marker") {
  auto stub = make_executor(stub_profile());
  REQUIRE(stub != nullptr);
  CHECK(dynamic_cast<StubExecutor*>(stub.get()) != nullptr);
  auto real = make_executor(python_profile());
  REQUIRE(real != nullptr);
  CHECK(dynamic_cast<SandboxExecutor*>(real.get()) != nullptr);
}

TEST_CASE("interpreter availability") {
  CHECK(interpreter_available(stub_profile()));
  CHECK(interpreter_available(python_profile()));
  InterpreterProfile missing;
  missing.name = "ghost";
  missing.command = {"definitely-not-a-real-binary-qbench", "{file}"};
  missing.file_extension = ".x";
  CHECK_FALSE(interpreter_available(missing));
}

TEST_CASE("sandbox runs python code with the harness appended") {
  SandboxExecutor ex;
  const auto r = ex.execute("def solve(x):\n    return x * 2", "print(solve(21))",
                            python_profile());
  REQUIRE(r.ok());
  CHECK(r.stdout_text == "42\n");
  CHECK(r.exit_code == 0);
  CHECK(r.duration_seconds > 0.0);
}

TEST_CASE("sandbox surfaces runtime errors with stderr") {
  SandboxExecutor ex;
  const auto r = ex.execute("raise ValueError('boom')", "", python_profile());
  CHECK(r.status == ExecStatus::RuntimeError);
  CHECK(r.stderr_text.find("ValueError") != std::string::npos);
  REQUIRE(r.exit_code.has_value());
  CHECK(*r.exit_code != 0);
}

TEST_CASE("sandbox kills a hanging program at the profile timeout") {
  SandboxExecutor ex;
  const auto r = ex.execute("import time\ntime.sleep(30)", "", python_profile(0.5));
  CHECK(r.status == ExecStatus::Timeout);
  CHECK(r.duration_seconds < 5.0);
}

TEST_CASE("sandbox reports a missing interpreter distinctly") {
  SandboxExecutor ex;
  InterpreterProfile missing;
  missing.name = "ghost";
  missing.command = {"definitely-not-a-real-binary-qbench", "{file}"};
  missing.file_extension = ".x";
  const auto r = ex.execute("code", "harness", missing);
  CHECK(r.status == ExecStatus::InterpreterMissing);
}

TEST_CASE("sandbox caps captured output and flags truncation") {
  SandboxExecutor ex;
  // ~4 MB of output against a 1 MB cap.
  const auto r = ex.execute("print('x' * (4 * 1024 * 1024))", "", python_profile());
  CHECK(r.output_truncated);
  CHECK(r.stdout_text.size() <= kOutputCapBytes + std::string(kTruncationMarker).size());
}

TEST_CASE("sandbox applies env overrides to the child") {
  SandboxExecutor ex;
  auto profile = python_profile();
  profile.env_overrides["QBENCH_SANDBOX_PROBE"] = "present";
  const auto r = ex.execute(
      "import os\nprint(os.environ.get('QBENCH_SANDBOX_PROBE', 'absent'))", "",
      profile);
  REQUIRE(r.ok());
  CHECK(r.stdout_text == "present\n");
}

TEST_CASE("sandbox preserves nonzero exit codes") {
  SandboxExecutor ex;
  const auto r = ex.execute("import sys\nsys.exit(7)", "", python_profile());
  CHECK(r.status == ExecStatus::RuntimeError);
  CHECK(r.exit_code == 7);
}

TEST_CASE("exec status names are stable") {
  CHECK(to_string(ExecStatus::Ok) == "ok");
  CHECK(to_string(ExecStatus::RuntimeError) == "runtime_error");
  CHECK(to_string(ExecStatus::Timeout) == "timeout");
  CHECK(to_string(ExecStatus::InterpreterMissing) == "interpreter_missing");
}
