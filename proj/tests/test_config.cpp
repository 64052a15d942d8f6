#include "doctest.h"

#include "qbench/config.hpp"
#include "qbench/errors.hpp"
#include "qbench/util.hpp"

#include "support.hpp"

#include <cstdlib>
#include <string>

using namespace qbench;

namespace {

// RAII environment patcher so tests cannot leak overrides into each other.
struct EnvGuard {
  std::string name;
  std::optional<std::string> saved;

  EnvGuard(const std::string& n, const std::string& value) : name(n) {
    saved = util::getenv_str(n);
    ::setenv(n.c_str(), value.c_str(), 1);
  }
  ~EnvGuard() {
    if (saved) {
      ::setenv(name.c_str(), saved->c_str(), 1);
    } else {
      ::unsetenv(name.c_str());
    }
  }
};

}  // namespace

TEST_CASE("default config defines the standard endpoints and profiles") {
  const auto cfg = default_config();
  CHECK(cfg.endpoints.count("generation") == 1);
  CHECK(cfg.endpoints.count("embedding") == 1);
  CHECK(cfg.endpoints.count("judge") == 1);

  const auto& q = require_profile(cfg, "q");
  CHECK(q.command.front() == "q");
  CHECK(q.file_extension == ".q");

  const auto& python = require_profile(cfg, "python");
  CHECK(python.command.front() == "python3");
  CHECK(python.file_extension == ".py");

  const auto& stub = require_profile(cfg, "stub");
  CHECK(stub.command.front() == "builtin:stub");

  CHECK(cfg.workers == 8);
  CHECK(cfg.state_dir == "state");
  CHECK(cfg.output_dir == "out");
  CHECK(cfg.seed == 0);
}

TEST_CASE("config JSON round-trips") {
  auto cfg = default_config();
  cfg.workers = 3;
  cfg.seed = 99;
  cfg.params.model = "my-model";
  cfg.params.temperature = 0.25;
  cfg.endpoints["generation"].base_url = "http://10.0.0.5:9000";
  cfg.profiles["q"].timeout_seconds = 4.5;

  const auto back = config_from_json(config_to_json(cfg));
  CHECK(back.workers == 3);
  CHECK(back.seed == 99);
  CHECK(back.params.model == "my-model");
  CHECK(back.params.temperature == doctest::Approx(0.25));
  CHECK(back.endpoints.at("generation").base_url == "http://10.0.0.5:9000");
  CHECK(back.profiles.at("q").timeout_seconds == doctest::Approx(4.5));
}

TEST_CASE("a partial file overrides only what it mentions") {
  testsupport::TempDir dir;
  const auto file = dir.path / "config.json";
  util::write_file(file, R"({"schema_version": 1, "workers": 2})");
  const auto cfg = load_config(file);
  CHECK(cfg.workers == 2);
  // Everything else keeps its default.
  CHECK(cfg.max_in_flight == 8);
  CHECK(cfg.profiles.count("q") == 1);
  CHECK(cfg.endpoints.count("generation") == 1);
}

TEST_CASE("save and load round-trip through a file") {
  testsupport::TempDir dir;
  auto cfg = default_config();
  cfg.seed = 1234;
  cfg.state_dir = "custom-state";
  const auto file = dir.path / "config.json";
  save_config(cfg, file);
  const auto back = load_config(file);
  CHECK(back.seed == 1234);
  CHECK(back.state_dir == "custom-state");
}

TEST_CASE("unknown keys are rejected with their location") {
  testsupport::TempDir dir;
  const auto file = dir.path / "config.json";
  util::write_file(file, R"({"schema_version": 1, "wrokers": 2})");
  try {
    (void)load_config(file);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("wrokers") != std::string::npos);
  }

  util::write_file(file,
                   R"({"schema_version": 1, "generation": {"model": "m", "temprature": 0.5}})");
  CHECK_THROWS_AS((void)load_config(file), ConfigError);
}

TEST_CASE("missing config file is an error") {
  CHECK_THROWS_AS((void)load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("environment variables override file values") {
  auto cfg = default_config();
  {
    EnvGuard endpoint("QBENCH_ENDPOINT", "http://alt-host:7000");
    EnvGuard model("QBENCH_MODEL", "env-model");
    EnvGuard seed("QBENCH_SEED", "42");
    EnvGuard workers("QBENCH_WORKERS", "5");
    EnvGuard state("QBENCH_STATE_DIR", "/tmp/env-state");
    apply_env_overrides(cfg);
  }
  CHECK(cfg.endpoints.at("generation").base_url == "http://alt-host:7000");
  CHECK(cfg.params.model == "env-model");
  CHECK(cfg.seed == 42);
  CHECK(cfg.workers == 5);
  CHECK(cfg.state_dir == "/tmp/env-state");

  // Embedding and judge endpoints have their own variables.
  auto cfg2 = default_config();
  {
    EnvGuard embed("QBENCH_EMBEDDING_ENDPOINT", "http://embed:1");
    EnvGuard judge("QBENCH_JUDGE_ENDPOINT", "http://judge:2");
    apply_env_overrides(cfg2);
  }
  CHECK(cfg2.endpoints.at("embedding").base_url == "http://embed:1");
  CHECK(cfg2.endpoints.at("judge").base_url == "http://judge:2");
  CHECK(cfg2.endpoints.at("generation").base_url ==
        default_config().endpoints.at("generation").base_url);
}

TEST_CASE("malformed numeric environment values fail loudly") {
  auto cfg = default_config();
  EnvGuard seed("QBENCH_SEED", "not-a-number");
  CHECK_THROWS_AS(apply_env_overrides(cfg), ConfigError);
}

TEST_CASE("require helpers fail loudly for unknown names") {
  const auto cfg = default_config();
  CHECK_THROWS_AS((void)require_profile(cfg, "cobol"), ConfigError);
  CHECK_THROWS_AS((void)require_endpoint(cfg, "mystery"), ConfigError);
  try {
    (void)require_profile(cfg, "cobol");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("cobol") != std::string::npos);
  }
}

TEST_CASE("profiles serialize their full shape") {
  InterpreterProfile p;
  p.name = "custom";
  p.command = {"deno", "run", "{file}"};
  p.file_extension = ".ts";
  p.timeout_seconds = 2.5;
  p.env_overrides["NO_COLOR"] = "1";
  p.jail_command = {"nice", "-n", "19"};
  const auto back = profile_from_json(profile_to_json(p), "custom");
  CHECK(back.command == p.command);
  CHECK(back.file_extension == ".ts");
  CHECK(back.timeout_seconds == doctest::Approx(2.5));
  CHECK(back.env_overrides.at("NO_COLOR") == "1");
  CHECK(back.jail_command == p.jail_command);
}
