#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace qbench {

struct Message {
  std::string role;  // "system", "user", "assistant"
  std::string content;
};

struct GenerationParams {
  std::string model = "default";
  double temperature = 0.8;
  int max_tokens = 2048;
  int n = 1;  // completions per request
  std::vector<std::string> stop;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::uint64_t text_hash = 0;
};

// dot(u,v) / (|u|*|v|). Errors on length mismatch or a zero-norm input.
double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v);

// One transport attempt against a chat-completions style endpoint. Throws
// GatewayError on failure; retry policy lives in LlmClient so that test
// backends can count raw attempts.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::vector<std::string> chat(const std::vector<Message>& messages,
                                        const GenerationParams& params) = 0;
  virtual std::vector<std::vector<double>> embed(const std::string& model,
                                                 const std::vector<std::string>& texts) = 0;
};

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string api_key_env;  // name of the env var holding the key; empty = no auth header
  std::string chat_path = "/v1/chat/completions";
  std::string embed_path = "/v1/embeddings";
  double timeout_seconds = 120.0;
};

// Speaks the de facto chat-completions JSON protocol, so hosted APIs and
// self-hosted inference servers both work. A fresh connection per request
// keeps the backend safe under concurrent workers.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(EndpointConfig config);

  std::vector<std::string> chat(const std::vector<Message>& messages,
                                const GenerationParams& params) override;
  std::vector<std::vector<double>> embed(const std::string& model,
                                         const std::vector<std::string>& texts) override;

 private:
  std::string post_json(const std::string& path, const std::string& body);

  EndpointConfig config_;
};

// Deterministic in-process backend for tests and mock runs.
//
// Responses come from, in priority order: an installed handler, the scripted
// queue, or a deterministic default derived from the prompt hash. Scripted
// entries may carry an HTTP-style failure status instead of texts, which makes
// retry behavior testable. Optional fixed latency simulates a slow endpoint.
class MockBackend : public ChatBackend {
 public:
  using ChatHandler = std::function<std::vector<std::string>(const std::vector<Message>&,
                                                             const GenerationParams&)>;

  std::vector<std::string> chat(const std::vector<Message>& messages,
                                const GenerationParams& params) override;
  std::vector<std::vector<double>> embed(const std::string& model,
                                         const std::vector<std::string>& texts) override;

  // Handler must be safe to call from multiple worker threads.
  void set_chat_handler(ChatHandler handler);
  void push_chat_response(std::vector<std::string> texts);
  void push_chat_failure(int status, std::string message);
  void set_default_completion(std::string text);
  void set_latency(std::chrono::milliseconds latency);
  void set_embedding_dim(std::size_t dim);
  void set_seed(std::uint64_t seed);

  int chat_calls() const { return chat_calls_.load(); }
  int embed_calls() const { return embed_calls_.load(); }

 private:
  struct Scripted {
    std::vector<std::string> texts;
    int fail_status = 0;
    std::string fail_message;
  };

  mutable std::mutex mutex_;
  ChatHandler handler_;
  std::vector<Scripted> queue_;
  std::optional<std::string> default_completion_;
  std::chrono::milliseconds latency_{0};
  std::size_t embedding_dim_ = 8;
  std::uint64_t seed_ = 0;
  std::atomic<int> chat_calls_{0};
  std::atomic<int> embed_calls_{0};
};

struct ClientConfig {
  int max_attempts = 5;  // total attempts per request, including the first
  int backoff_initial_ms = 250;
  double backoff_multiplier = 2.0;
  int backoff_max_ms = 8000;
  int max_in_flight = 8;
  std::filesystem::path embed_cache_dir;  // empty = in-memory cache only
  std::filesystem::path request_log;      // empty = no logging
  std::string run_id;
};

// Shared gateway: bounded in-flight requests, exponential backoff on
// transient failures (timeouts, 5xx, 429), top-up calls when a backend
// returns fewer than n choices, a persistent embedding cache, and request
// logging tagged with a run id.
class LlmClient {
 public:
  LlmClient(ChatBackend& backend, ClientConfig config = {});

  // Returns exactly params.n texts or throws GatewayError carrying the last
  // HTTP status after retries are exhausted.
  std::vector<std::string> chat(const std::vector<Message>& messages,
                                const GenerationParams& params);

  // Single user message, first completion.
  std::string complete(const std::string& prompt, const GenerationParams& params);

  // Order-preserving; cache hits never touch the backend.
  std::vector<EmbeddingVector> embed(const std::string& model,
                                     const std::vector<std::string>& texts);

  int last_attempts() const { return last_attempts_.load(); }
  const std::string& run_id() const { return config_.run_id; }

 private:
  class FlightSlot;

  std::vector<std::string> chat_with_retries(const std::vector<Message>& messages,
                                             const GenerationParams& params, int* attempts_out);
  void log_event(const std::string& kind, const std::string& model, std::uint64_t input_hash,
                 int attempts, const std::string& status);
  std::filesystem::path cache_file(const std::string& model, std::uint64_t text_hash) const;

  ChatBackend& backend_;
  ClientConfig config_;
  std::atomic<int> last_attempts_{0};

  std::mutex flight_mutex_;
  std::condition_variable flight_cv_;
  int in_flight_ = 0;

  std::mutex cache_mutex_;
  std::map<std::pair<std::string, std::uint64_t>, std::vector<double>> memory_cache_;

  std::mutex log_mutex_;
};

}  // namespace qbench
