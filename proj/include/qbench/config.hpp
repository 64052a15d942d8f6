#pragma once

#include "qbench/llm_gateway.hpp"
#include "qbench/sandbox.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "nlohmann/json.hpp"

namespace qbench {

// Process-wide settings shared by every command. Precedence when assembling
// the effective value: command-line flag > QBENCH_* environment variable >
// config file > built-in default.
struct GlobalConfig {
  std::map<std::string, EndpointConfig> endpoints;     // generation / embedding / judge
  std::map<std::string, InterpreterProfile> profiles;  // q / python / stub / ...
  int workers = 8;
  int max_in_flight = 8;
  GenerationParams params;  // default generation parameters
  std::string state_dir = "state";
  std::string output_dir = "out";
  std::uint64_t seed = 0;
};

// Built-in endpoints ("generation", "embedding", "judge" on localhost) and
// interpreter profiles ("q", "python", "stub").
GlobalConfig default_config();

// JSON (de)serialization. load starts from default_config(), so a partial
// file only overrides what it mentions. Unknown keys are rejected.
GlobalConfig load_config(const std::filesystem::path& file);
void save_config(const GlobalConfig& config, const std::filesystem::path& file);
nlohmann::ordered_json config_to_json(const GlobalConfig& config);
GlobalConfig config_from_json(const nlohmann::ordered_json& doc);

// Environment overrides (documented in docs/config.md):
//   QBENCH_ENDPOINT, QBENCH_EMBEDDING_ENDPOINT, QBENCH_JUDGE_ENDPOINT
//   QBENCH_MODEL, QBENCH_SEED, QBENCH_WORKERS,
//   QBENCH_STATE_DIR, QBENCH_OUTPUT_DIR
void apply_env_overrides(GlobalConfig& config);

// Lookup helpers that fail loudly when a name is not defined.
const InterpreterProfile& require_profile(const GlobalConfig& config, const std::string& name);
const EndpointConfig& require_endpoint(const GlobalConfig& config, const std::string& name);

InterpreterProfile profile_from_json(const nlohmann::ordered_json& doc, const std::string& name);
nlohmann::ordered_json profile_to_json(const InterpreterProfile& profile);
EndpointConfig endpoint_from_json(const nlohmann::ordered_json& doc, const std::string& name);
nlohmann::ordered_json endpoint_to_json(const EndpointConfig& endpoint);

}  // namespace qbench
