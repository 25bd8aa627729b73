#pragma once

// Chat-completion access behind one interface. Three backends: live HTTP
// (OpenAI-compatible wire format), recording (live + persistent cache) and
// replay (cache only, never touches the network).

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace c3sql {

enum class ChatRole { kSystem, kUser, kAssistant };

std::string_view to_string(ChatRole role);
ChatRole parse_chat_role(std::string_view role);

struct ChatMessage {
  ChatRole role = ChatRole::kUser;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatExchange {
  std::vector<ChatMessage> messages;
  int n = 1;
  double temperature = 1.0;
  std::string model_name;
  int max_output_tokens = 512;

  // Throws std::invalid_argument: empty content, last message not from the
  // user, n < 1, negative temperature, max_output_tokens < 1.
  void validate() const;
};

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatCompletion {
  std::vector<std::string> texts;
  std::optional<TokenUsage> usage;
};

// Sorted-key compact JSON over model, temperature, n, max_output_tokens and
// the role-tagged messages. This is what the fingerprint hashes.
std::string canonical_request_json(const ChatExchange& exchange);

// Lowercase hex SHA-256 of canonical_request_json.
std::string request_fingerprint(const ChatExchange& exchange);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatCompletion complete(const ChatExchange& exchange) = 0;
};

// Directory of <fingerprint>.json files, each holding the canonical request
// and the completion texts. Writes are atomic and serialized per fingerprint.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<ChatCompletion> load(const std::string& fingerprint) const;
  void store(const ChatExchange& exchange, const ChatCompletion& completion);
  std::filesystem::path entry_path(const std::string& fingerprint) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::mutex& stripe(const std::string& fingerprint) const;

  std::filesystem::path dir_;
  mutable std::array<std::mutex, 16> stripes_;
};

class ReplayBackend : public ChatBackend {
 public:
  explicit ReplayBackend(std::shared_ptr<const ResponseCache> cache);
  ChatCompletion complete(const ChatExchange& exchange) override;  // CacheMissError on miss

 private:
  std::shared_ptr<const ResponseCache> cache_;
};

// Serves cache hits; forwards misses upstream and persists the answer
// before returning it.
class RecordingBackend : public ChatBackend {
 public:
  RecordingBackend(std::shared_ptr<ChatBackend> upstream, std::shared_ptr<ResponseCache> cache);
  ChatCompletion complete(const ChatExchange& exchange) override;

 private:
  std::shared_ptr<ChatBackend> upstream_;
  std::shared_ptr<ResponseCache> cache_;
};

struct HttpBackendOptions {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{1000};
  double backoff_factor = 2.0;
  std::chrono::seconds request_timeout{120};
};

// Request body for POST <base_url>/chat/completions.
nlohmann::json chat_request_body(const ChatExchange& exchange);

// Parses a chat-completions response body. Throws BackendError when the
// body is malformed or carries a different number of choices than expected.
ChatCompletion parse_chat_response(std::string_view body, int expected_n);

class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendOptions options);
  ChatCompletion complete(const ChatExchange& exchange) override;

 private:
  HttpBackendOptions options_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

// Front door used by the pipeline: validates the exchange, bounds the number
// of in-flight backend calls and keeps token/call counters.
class LlmGateway {
 public:
  LlmGateway(std::shared_ptr<ChatBackend> backend, int max_inflight);

  ChatCompletion complete(const ChatExchange& exchange);

  std::int64_t calls() const { return calls_.load(); }
  std::int64_t prompt_tokens() const { return prompt_tokens_.load(); }
  std::int64_t completion_tokens() const { return completion_tokens_.load(); }

 private:
  std::shared_ptr<ChatBackend> backend_;
  std::counting_semaphore<> slots_;
  std::atomic<std::int64_t> calls_{0};
  std::atomic<std::int64_t> prompt_tokens_{0};
  std::atomic<std::int64_t> completion_tokens_{0};
};

}  // namespace c3sql
