#include "qbench/llm_gateway.hpp"

#include "qbench/errors.hpp"
#include "qbench/util.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "httplib.h"
#include "nlohmann/json.hpp"

namespace qbench {

namespace {

using json = nlohmann::json;

bool retryable_status(int status) {
  // 0 covers transport-level failures (connect/timeout) with no HTTP status.
  return status == 0 || status == 408 || status == 429 || (status >= 500 && status < 600);
}

void validate_params(const GenerationParams& params) {
  if (params.n < 1) {
    throw ConfigError("generation params require n >= 1");
  }
  if (params.temperature < 0) {
    throw ConfigError("generation params require temperature >= 0");
  }
  if (params.max_tokens < 1) {
    throw ConfigError("generation params require max_tokens >= 1");
  }
}

std::uint64_t hash_messages(const std::vector<Message>& messages) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& m : messages) {
    h ^= util::fnv1a_64(m.role);
    h *= 1099511628211ull;
    h ^= util::fnv1a_64(m.content);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) {
    throw Error("cosine similarity requires equal-length vectors (got " +
                std::to_string(u.size()) + " and " + std::to_string(v.size()) + ")");
  }
  double dot = 0.0;
  double nu = 0.0;
  double nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) {
    throw Error("cosine similarity is undefined for a zero-norm vector");
  }
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

// --- HttpChatBackend -----------------------------------------------------------

HttpChatBackend::HttpChatBackend(EndpointConfig config) : config_(std::move(config)) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (util::starts_with(config_.base_url, "https://")) {
    throw ConfigError(
        "this build supports http:// endpoints only; use a plain-http inference "
        "server or rebuild with TLS support");
  }
#endif
}

std::string HttpChatBackend::post_json(const std::string& path, const std::string& body) {
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(std::chrono::milliseconds(
      static_cast<int>(config_.timeout_seconds * 1000)));
  client.set_read_timeout(std::chrono::milliseconds(
      static_cast<int>(config_.timeout_seconds * 1000)));
  client.set_write_timeout(std::chrono::milliseconds(
      static_cast<int>(config_.timeout_seconds * 1000)));

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    auto key = util::getenv_str(config_.api_key_env);
    if (key && !key->empty()) {
      headers.emplace("Authorization", "Bearer " + *key);
    }
  }

  auto res = client.Post(path, headers, body, "application/json");
  if (!res) {
    throw GatewayError("request to " + config_.base_url + path + " failed: " +
                           httplib::to_string(res.error()),
                       0);
  }
  if (res->status < 200 || res->status >= 300) {
    throw GatewayError("request to " + config_.base_url + path + " returned status " +
                           std::to_string(res->status),
                       res->status);
  }
  return res->body;
}

std::vector<std::string> HttpChatBackend::chat(const std::vector<Message>& messages,
                                               const GenerationParams& params) {
  json body;
  body["model"] = params.model;
  json msgs = json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", m.role}, {"content", m.content}});
  }
  body["messages"] = std::move(msgs);
  body["temperature"] = params.temperature;
  body["max_tokens"] = params.max_tokens;
  body["n"] = params.n;
  if (!params.stop.empty()) {
    body["stop"] = params.stop;
  }

  std::string response = post_json(config_.chat_path, body.dump());
  json doc;
  try {
    doc = json::parse(response);
  } catch (const json::parse_error& e) {
    throw GatewayError(std::string("malformed chat response: ") + e.what(), 0);
  }
  if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
    throw GatewayError("malformed chat response: missing choices", 0);
  }
  std::vector<std::string> texts;
  for (const auto& choice : doc["choices"]) {
    if (!choice.contains("message") || !choice["message"].contains("content") ||
        !choice["message"]["content"].is_string()) {
      throw GatewayError("malformed chat response: choice without message content", 0);
    }
    texts.push_back(choice["message"]["content"].get<std::string>());
  }
  return texts;
}

std::vector<std::vector<double>> HttpChatBackend::embed(const std::string& model,
                                                        const std::vector<std::string>& texts) {
  json body;
  body["model"] = model;
  body["input"] = texts;

  std::string response = post_json(config_.embed_path, body.dump());
  json doc;
  try {
    doc = json::parse(response);
  } catch (const json::parse_error& e) {
    throw GatewayError(std::string("malformed embedding response: ") + e.what(), 0);
  }
  if (!doc.contains("data") || !doc["data"].is_array() || doc["data"].size() != texts.size()) {
    throw GatewayError("malformed embedding response: expected " + std::to_string(texts.size()) +
                           " vectors",
                       0);
  }
  std::vector<std::vector<double>> vectors(texts.size());
  for (const auto& item : doc["data"]) {
    if (!item.contains("index") || !item.contains("embedding") ||
        !item["embedding"].is_array()) {
      throw GatewayError("malformed embedding response: bad data entry", 0);
    }
    std::size_t index = item["index"].get<std::size_t>();
    if (index >= vectors.size()) {
      throw GatewayError("malformed embedding response: index out of range", 0);
    }
    vectors[index] = item["embedding"].get<std::vector<double>>();
  }
  return vectors;
}

// --- MockBackend ---------------------------------------------------------------

std::vector<std::string> MockBackend::chat(const std::vector<Message>& messages,
                                           const GenerationParams& params) {
  chat_calls_.fetch_add(1);

  std::chrono::milliseconds latency;
  ChatHandler handler;
  std::optional<Scripted> scripted;
  std::optional<std::string> default_completion;
  std::uint64_t seed;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    latency = latency_;
    handler = handler_;
    default_completion = default_completion_;
    seed = seed_;
    if (!handler && !queue_.empty()) {
      scripted = queue_.front();
      queue_.erase(queue_.begin());
    }
  }
  if (latency.count() > 0) {
    std::this_thread::sleep_for(latency);
  }

  if (handler) {
    std::vector<std::string> texts = handler(messages, params);
    if (static_cast<int>(texts.size()) > params.n) {
      texts.resize(static_cast<std::size_t>(params.n));
    }
    return texts;
  }
  if (scripted) {
    if (scripted->fail_status != 0 || !scripted->fail_message.empty()) {
      throw GatewayError(scripted->fail_message.empty() ? "scripted failure"
                                                        : scripted->fail_message,
                         scripted->fail_status);
    }
    return scripted->texts;
  }

  std::vector<std::string> texts;
  texts.reserve(static_cast<std::size_t>(params.n));
  for (int i = 0; i < params.n; ++i) {
    if (default_completion) {
      texts.push_back(*default_completion);
    } else {
      std::uint64_t h = hash_messages(messages) ^ seed ^ static_cast<std::uint64_t>(i);
      texts.push_back("mock-completion-" + util::hex64(h));
    }
  }
  return texts;
}

std::vector<std::vector<double>> MockBackend::embed(const std::string& model,
                                                    const std::vector<std::string>& texts) {
  embed_calls_.fetch_add(1);
  std::size_t dim;
  std::uint64_t seed;
  std::chrono::milliseconds latency;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    dim = embedding_dim_;
    seed = seed_;
    latency = latency_;
  }
  if (latency.count() > 0) {
    std::this_thread::sleep_for(latency);
  }

  std::vector<std::vector<double>> vectors;
  vectors.reserve(texts.size());
  for (const auto& text : texts) {
    std::mt19937_64 rng(util::fnv1a_64(text) ^ util::fnv1a_64(model) ^ seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> values(dim);
    for (auto& v : values) {
      v = dist(rng);
    }
    values[0] += 2.0;  // keeps the vector away from zero norm
    vectors.push_back(std::move(values));
  }
  return vectors;
}

void MockBackend::set_chat_handler(ChatHandler handler) {
  std::lock_guard<std::mutex> lock(mutex_);
  handler_ = std::move(handler);
}

void MockBackend::push_chat_response(std::vector<std::string> texts) {
  std::lock_guard<std::mutex> lock(mutex_);
  queue_.push_back({std::move(texts), 0, ""});
}

void MockBackend::push_chat_failure(int status, std::string message) {
  std::lock_guard<std::mutex> lock(mutex_);
  queue_.push_back({{}, status, std::move(message)});
}

void MockBackend::set_default_completion(std::string text) {
  std::lock_guard<std::mutex> lock(mutex_);
  default_completion_ = std::move(text);
}

void MockBackend::set_latency(std::chrono::milliseconds latency) {
  std::lock_guard<std::mutex> lock(mutex_);
  latency_ = latency;
}

void MockBackend::set_embedding_dim(std::size_t dim) {
  std::lock_guard<std::mutex> lock(mutex_);
  embedding_dim_ = dim;
}

void MockBackend::set_seed(std::uint64_t seed) {
  std::lock_guard<std::mutex> lock(mutex_);
  seed_ = seed;
}

// --- LlmClient -----------------------------------------------------------------

class LlmClient::FlightSlot {
 public:
  explicit FlightSlot(LlmClient& client) : client_(client) {
    std::unique_lock<std::mutex> lock(client_.flight_mutex_);
    client_.flight_cv_.wait(lock,
                            [&] { return client_.in_flight_ < client_.config_.max_in_flight; });
    ++client_.in_flight_;
  }
  ~FlightSlot() {
    {
      std::lock_guard<std::mutex> lock(client_.flight_mutex_);
      --client_.in_flight_;
    }
    client_.flight_cv_.notify_one();
  }

 private:
  LlmClient& client_;
};

LlmClient::LlmClient(ChatBackend& backend, ClientConfig config)
    : backend_(backend), config_(std::move(config)) {
  if (config_.max_attempts < 1) {
    throw ConfigError("client max_attempts must be >= 1");
  }
  if (config_.max_in_flight < 1) {
    throw ConfigError("client max_in_flight must be >= 1");
  }
  if (config_.run_id.empty()) {
    config_.run_id = util::hex64(util::fnv1a_64(util::utc_timestamp()) ^
                                 static_cast<std::uint64_t>(
                                     std::chrono::steady_clock::now().time_since_epoch().count()));
  }
  if (!config_.embed_cache_dir.empty()) {
    std::filesystem::create_directories(config_.embed_cache_dir);
  }
}

std::vector<std::string> LlmClient::chat_with_retries(const std::vector<Message>& messages,
                                                      const GenerationParams& params,
                                                      int* attempts_out) {
  int backoff_ms = config_.backoff_initial_ms;
  for (int attempt = 1;; ++attempt) {
    *attempts_out = attempt;
    try {
      return backend_.chat(messages, params);
    } catch (const GatewayError& e) {
      if (attempt >= config_.max_attempts || !retryable_status(e.last_status())) {
        throw;
      }
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
    backoff_ms = std::min(static_cast<int>(backoff_ms * config_.backoff_multiplier),
                          config_.backoff_max_ms);
  }
}

std::vector<std::string> LlmClient::chat(const std::vector<Message>& messages,
                                         const GenerationParams& params) {
  validate_params(params);
  FlightSlot slot(*this);

  int total_attempts = 0;
  std::vector<std::string> texts;
  try {
    while (static_cast<int>(texts.size()) < params.n) {
      GenerationParams request = params;
      request.n = params.n - static_cast<int>(texts.size());
      int attempts = 0;
      std::vector<std::string> batch = chat_with_retries(messages, request, &attempts);
      total_attempts += attempts;
      if (batch.empty()) {
        throw GatewayError("backend returned no completions", 0);
      }
      for (auto& text : batch) {
        if (static_cast<int>(texts.size()) < params.n) {
          texts.push_back(std::move(text));
        }
      }
    }
  } catch (const GatewayError&) {
    last_attempts_.store(total_attempts);
    log_event("chat", params.model, hash_messages(messages), total_attempts, "error");
    throw;
  }
  last_attempts_.store(total_attempts);
  log_event("chat", params.model, hash_messages(messages), total_attempts, "ok");
  return texts;
}

std::string LlmClient::complete(const std::string& prompt, const GenerationParams& params) {
  GenerationParams request = params;
  request.n = 1;
  return chat({{"user", prompt}}, request).front();
}

std::filesystem::path LlmClient::cache_file(const std::string& model,
                                            std::uint64_t text_hash) const {
  return config_.embed_cache_dir /
         (util::hex64(util::fnv1a_64(model)) + "-" + util::hex64(text_hash) + ".json");
}

std::vector<EmbeddingVector> LlmClient::embed(const std::string& model,
                                              const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> result(texts.size());
  std::vector<std::size_t> misses;

  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      std::uint64_t h = util::fnv1a_64(texts[i]);
      result[i].text_hash = h;
      auto key = std::make_pair(model, h);
      auto it = memory_cache_.find(key);
      if (it != memory_cache_.end()) {
        result[i].values = it->second;
        continue;
      }
      if (!config_.embed_cache_dir.empty()) {
        auto path = cache_file(model, h);
        if (std::filesystem::exists(path)) {
          try {
            auto doc = json::parse(util::read_file(path));
            auto values = doc.at("values").get<std::vector<double>>();
            memory_cache_[key] = values;
            result[i].values = std::move(values);
            continue;
          } catch (...) {
            // unreadable cache entry: fall through and re-fetch
          }
        }
      }
      misses.push_back(i);
    }
  }

  if (misses.empty()) {
    return result;
  }

  std::vector<std::string> miss_texts;
  miss_texts.reserve(misses.size());
  for (std::size_t i : misses) {
    miss_texts.push_back(texts[i]);
  }

  std::vector<std::vector<double>> fetched;
  {
    FlightSlot slot(*this);
    int backoff_ms = config_.backoff_initial_ms;
    for (int attempt = 1;; ++attempt) {
      try {
        fetched = backend_.embed(model, miss_texts);
        last_attempts_.store(attempt);
        break;
      } catch (const GatewayError& e) {
        if (attempt >= config_.max_attempts || !retryable_status(e.last_status())) {
          last_attempts_.store(attempt);
          log_event("embed", model, util::fnv1a_64(util::join(miss_texts, "\x1f")), attempt,
                    "error");
          throw;
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms = std::min(static_cast<int>(backoff_ms * config_.backoff_multiplier),
                            config_.backoff_max_ms);
    }
  }
  if (fetched.size() != miss_texts.size()) {
    throw GatewayError("embedding backend returned " + std::to_string(fetched.size()) +
                           " vectors for " + std::to_string(miss_texts.size()) + " inputs",
                       0);
  }

  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    for (std::size_t j = 0; j < misses.size(); ++j) {
      std::size_t i = misses[j];
      std::uint64_t h = result[i].text_hash;
      memory_cache_[{model, h}] = fetched[j];
      result[i].values = fetched[j];
      if (!config_.embed_cache_dir.empty()) {
        json doc;
        doc["model"] = model;
        doc["text_hash"] = util::hex64(h);
        doc["values"] = fetched[j];
        util::write_file_atomic(cache_file(model, h), doc.dump());
      }
    }
  }
  log_event("embed", model, util::fnv1a_64(util::join(miss_texts, "\x1f")),
            last_attempts_.load(), "ok");
  return result;
}

void LlmClient::log_event(const std::string& kind, const std::string& model,
                          std::uint64_t input_hash, int attempts, const std::string& status) {
  if (config_.request_log.empty()) {
    return;
  }
  nlohmann::ordered_json record;
  record["ts"] = util::utc_timestamp();
  record["run_id"] = config_.run_id;
  record["kind"] = kind;
  record["model"] = model;
  record["input_hash"] = util::hex64(input_hash);
  record["attempts"] = attempts;
  record["status"] = status;
  std::lock_guard<std::mutex> lock(log_mutex_);
  util::append_line(config_.request_log, record.dump());
}

}  // namespace qbench
