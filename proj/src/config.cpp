#include "qbench/config.hpp"

#include "qbench/errors.hpp"
#include "qbench/util.hpp"

#include <algorithm>
#include <cstdlib>
#include <vector>

namespace qbench {

namespace {

using ojson = nlohmann::ordered_json;

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const unsigned long long value = std::stoull(text, &used);
    if (used != text.size()) {
      throw std::invalid_argument("trailing characters");
    }
    return static_cast<std::uint64_t>(value);
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + what + " from '" + text + "'");
  }
}

int parse_int(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const int value = std::stoi(text, &used);
    if (used != text.size()) {
      throw std::invalid_argument("trailing characters");
    }
    return value;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + what + " from '" + text + "'");
  }
}

void reject_unknown_keys(const ojson& doc, const std::vector<std::string>& known,
                         const std::string& where) {
  for (const auto& item : doc.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

}  // namespace

GlobalConfig default_config() {
  GlobalConfig config;
  config.endpoints["generation"] = EndpointConfig{};
  config.endpoints["embedding"] = EndpointConfig{};
  config.endpoints["judge"] = EndpointConfig{};

  InterpreterProfile q;
  q.name = "q";
  q.command = {"q", "{file}", "-q"};
  q.file_extension = ".q";
  q.timeout_seconds = 10.0;
  config.profiles["q"] = q;

  InterpreterProfile python;
  python.name = "python";
  python.command = {"python3", "{file}"};
  python.file_extension = ".py";
  python.timeout_seconds = 10.0;
  config.profiles["python"] = python;

  InterpreterProfile stub;
  stub.name = "stub";
  stub.command = {"builtin:stub"};
  stub.file_extension = ".txt";
  stub.timeout_seconds = 10.0;
  config.profiles["stub"] = stub;

  return config;
}

ojson endpoint_to_json(const EndpointConfig& endpoint) {
  ojson doc;
  doc["base_url"] = endpoint.base_url;
  doc["api_key_env"] = endpoint.api_key_env;
  doc["chat_path"] = endpoint.chat_path;
  doc["embed_path"] = endpoint.embed_path;
  doc["timeout_seconds"] = endpoint.timeout_seconds;
  return doc;
}

EndpointConfig endpoint_from_json(const ojson& doc, const std::string& name) {
  reject_unknown_keys(doc, {"base_url", "api_key_env", "chat_path", "embed_path",
                            "timeout_seconds"},
                      "endpoint '" + name + "'");
  EndpointConfig endpoint;
  endpoint.base_url = doc.value("base_url", endpoint.base_url);
  endpoint.api_key_env = doc.value("api_key_env", endpoint.api_key_env);
  endpoint.chat_path = doc.value("chat_path", endpoint.chat_path);
  endpoint.embed_path = doc.value("embed_path", endpoint.embed_path);
  endpoint.timeout_seconds = doc.value("timeout_seconds", endpoint.timeout_seconds);
  return endpoint;
}

ojson profile_to_json(const InterpreterProfile& profile) {
  ojson doc;
  doc["command"] = profile.command;
  doc["file_extension"] = profile.file_extension;
  doc["timeout_seconds"] = profile.timeout_seconds;
  ojson env = ojson::object();
  for (const auto& [key, value] : profile.env_overrides) {
    env[key] = value;
  }
  doc["env"] = std::move(env);
  doc["jail"] = profile.jail_command;
  return doc;
}

InterpreterProfile profile_from_json(const ojson& doc, const std::string& name) {
  reject_unknown_keys(doc, {"command", "file_extension", "timeout_seconds", "env", "jail"},
                      "profile '" + name + "'");
  InterpreterProfile profile;
  profile.name = name;
  if (!doc.contains("command") || !doc.at("command").is_array() || doc.at("command").empty()) {
    throw ConfigError("profile '" + name + "' needs a non-empty command array");
  }
  profile.command = doc.at("command").get<std::vector<std::string>>();
  profile.file_extension = doc.value("file_extension", std::string(".txt"));
  profile.timeout_seconds = doc.value("timeout_seconds", 10.0);
  if (doc.contains("env")) {
    for (const auto& item : doc.at("env").items()) {
      profile.env_overrides[item.key()] = item.value().get<std::string>();
    }
  }
  if (doc.contains("jail")) {
    profile.jail_command = doc.at("jail").get<std::vector<std::string>>();
  }
  return profile;
}

ojson config_to_json(const GlobalConfig& config) {
  ojson doc;
  doc["schema_version"] = 1;
  doc["seed"] = config.seed;
  doc["workers"] = config.workers;
  doc["max_in_flight"] = config.max_in_flight;
  doc["state_dir"] = config.state_dir;
  doc["output_dir"] = config.output_dir;
  ojson generation;
  generation["model"] = config.params.model;
  generation["temperature"] = config.params.temperature;
  generation["max_tokens"] = config.params.max_tokens;
  doc["generation"] = std::move(generation);
  ojson endpoints = ojson::object();
  for (const auto& [name, endpoint] : config.endpoints) {
    endpoints[name] = endpoint_to_json(endpoint);
  }
  doc["endpoints"] = std::move(endpoints);
  ojson profiles = ojson::object();
  for (const auto& [name, profile] : config.profiles) {
    profiles[name] = profile_to_json(profile);
  }
  doc["profiles"] = std::move(profiles);
  return doc;
}

GlobalConfig config_from_json(const ojson& doc) {
  reject_unknown_keys(doc,
                      {"schema_version", "seed", "workers", "max_in_flight", "state_dir",
                       "output_dir", "generation", "endpoints", "profiles"},
                      "config");
  GlobalConfig config = default_config();
  config.seed = doc.value("seed", config.seed);
  config.workers = doc.value("workers", config.workers);
  config.max_in_flight = doc.value("max_in_flight", config.max_in_flight);
  config.state_dir = doc.value("state_dir", config.state_dir);
  config.output_dir = doc.value("output_dir", config.output_dir);
  if (doc.contains("generation")) {
    const auto& generation = doc.at("generation");
    reject_unknown_keys(generation, {"model", "temperature", "max_tokens"}, "generation");
    config.params.model = generation.value("model", config.params.model);
    config.params.temperature = generation.value("temperature", config.params.temperature);
    config.params.max_tokens = generation.value("max_tokens", config.params.max_tokens);
  }
  if (doc.contains("endpoints")) {
    for (const auto& item : doc.at("endpoints").items()) {
      config.endpoints[item.key()] = endpoint_from_json(item.value(), item.key());
    }
  }
  if (doc.contains("profiles")) {
    for (const auto& item : doc.at("profiles").items()) {
      config.profiles[item.key()] = profile_from_json(item.value(), item.key());
    }
  }
  if (config.workers < 1 || config.max_in_flight < 1) {
    throw ConfigError("workers and max_in_flight must be >= 1");
  }
  return config;
}

GlobalConfig load_config(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) {
    throw ConfigError("config file not found: " + file.string());
  }
  ojson doc;
  try {
    doc = ojson::parse(util::read_file(file));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse config " + file.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

void save_config(const GlobalConfig& config, const std::filesystem::path& file) {
  util::write_file_atomic(file, config_to_json(config).dump(2) + "\n");
}

void apply_env_overrides(GlobalConfig& config) {
  if (auto value = util::getenv_str("QBENCH_ENDPOINT")) {
    config.endpoints["generation"].base_url = *value;
  }
  if (auto value = util::getenv_str("QBENCH_EMBEDDING_ENDPOINT")) {
    config.endpoints["embedding"].base_url = *value;
  }
  if (auto value = util::getenv_str("QBENCH_JUDGE_ENDPOINT")) {
    config.endpoints["judge"].base_url = *value;
  }
  if (auto value = util::getenv_str("QBENCH_MODEL")) {
    config.params.model = *value;
  }
  if (auto value = util::getenv_str("QBENCH_SEED")) {
    config.seed = parse_u64(*value, "QBENCH_SEED");
  }
  if (auto value = util::getenv_str("QBENCH_WORKERS")) {
    config.workers = parse_int(*value, "QBENCH_WORKERS");
    if (config.workers < 1) {
      throw ConfigError("QBENCH_WORKERS must be >= 1");
    }
  }
  if (auto value = util::getenv_str("QBENCH_STATE_DIR")) {
    config.state_dir = *value;
  }
  if (auto value = util::getenv_str("QBENCH_OUTPUT_DIR")) {
    config.output_dir = *value;
  }
}

const InterpreterProfile& require_profile(const GlobalConfig& config, const std::string& name) {
  auto it = config.profiles.find(name);
  if (it == config.profiles.end()) {
    throw ConfigError("interpreter profile '" + name + "' is not defined; add it to the config");
  }
  return it->second;
}

const EndpointConfig& require_endpoint(const GlobalConfig& config, const std::string& name) {
  auto it = config.endpoints.find(name);
  if (it == config.endpoints.end()) {
    throw ConfigError("endpoint '" + name + "' is not defined; add it to the config");
  }
  return it->second;
}

}  // namespace qbench
