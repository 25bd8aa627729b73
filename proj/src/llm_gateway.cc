#include "c3sql/llm_gateway.h"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <functional>
#include <regex>
#include <stdexcept>
#include <thread>

#include "c3sql/errors.h"
#include "c3sql/text_util.h"
#include "httplib.h"

namespace c3sql {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ChatRole role) {
  switch (role) {
    case ChatRole::kSystem: return "system";
    case ChatRole::kUser: return "user";
    case ChatRole::kAssistant: return "assistant";
  }
  return "user";
}

ChatRole parse_chat_role(std::string_view role) {
  if (role == "system") return ChatRole::kSystem;
  if (role == "user") return ChatRole::kUser;
  if (role == "assistant") return ChatRole::kAssistant;
  throw std::invalid_argument("unknown chat role '" + std::string(role) + "'");
}

void ChatExchange::validate() const {
  if (messages.empty()) throw std::invalid_argument("chat exchange has no messages");
  for (const auto& m : messages) {
    if (m.content.empty()) throw std::invalid_argument("chat message with empty content");
  }
  if (messages.back().role != ChatRole::kUser) {
    throw std::invalid_argument("last chat message must come from the user");
  }
  if (n < 1) throw std::invalid_argument("sample count n must be >= 1");
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be non-negative");
  if (max_output_tokens < 1) throw std::invalid_argument("max_output_tokens must be >= 1");
}

namespace {

json messages_json(const std::vector<ChatMessage>& messages) {
  json arr = json::array();
  for (const auto& m : messages) {
    arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  return arr;
}

json canonical_request(const ChatExchange& exchange) {
  return {{"model", exchange.model_name},
          {"temperature", exchange.temperature},
          {"n", exchange.n},
          {"max_output_tokens", exchange.max_output_tokens},
          {"messages", messages_json(exchange.messages)}};
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

json completion_json(const ChatCompletion& completion) {
  json j = {{"texts", completion.texts}};
  if (completion.usage) {
    j["usage"] = {{"prompt_tokens", completion.usage->prompt_tokens},
                  {"completion_tokens", completion.usage->completion_tokens}};
  }
  return j;
}

ChatCompletion completion_from_json(const json& j) {
  ChatCompletion c;
  c.texts = j.at("texts").get<std::vector<std::string>>();
  if (j.contains("usage") && j["usage"].is_object()) {
    c.usage = TokenUsage{j["usage"].value("prompt_tokens", std::int64_t{0}),
                         j["usage"].value("completion_tokens", std::int64_t{0})};
  }
  return c;
}

}  // namespace

std::string canonical_request_json(const ChatExchange& exchange) {
  return canonical_request(exchange).dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string request_fingerprint(const ChatExchange& exchange) {
  return sha256_hex(canonical_request_json(exchange));
}

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) {}

fs::path ResponseCache::entry_path(const std::string& fingerprint) const {
  return dir_ / (fingerprint + ".json");
}

std::mutex& ResponseCache::stripe(const std::string& fingerprint) const {
  return stripes_[std::hash<std::string>{}(fingerprint) % stripes_.size()];
}

std::optional<ChatCompletion> ResponseCache::load(const std::string& fingerprint) const {
  auto path = entry_path(fingerprint);
  std::lock_guard lock(stripe(fingerprint));
  if (!fs::exists(path)) return std::nullopt;
  try {
    return completion_from_json(json::parse(text::read_file(path)).at("response"));
  } catch (const json::exception& e) {
    throw BackendError("corrupt cache entry " + path.string() + ": " + e.what());
  }
}

void ResponseCache::store(const ChatExchange& exchange, const ChatCompletion& completion) {
  auto fingerprint = request_fingerprint(exchange);
  json entry = {{"fingerprint", fingerprint},
                {"request", canonical_request(exchange)},
                {"response", completion_json(completion)}};
  std::lock_guard lock(stripe(fingerprint));
  text::write_file_atomic(entry_path(fingerprint),
                          entry.dump(2, ' ', false, json::error_handler_t::replace) + "\n");
}

ReplayBackend::ReplayBackend(std::shared_ptr<const ResponseCache> cache) : cache_(std::move(cache)) {}

ChatCompletion ReplayBackend::complete(const ChatExchange& exchange) {
  auto fingerprint = request_fingerprint(exchange);
  auto hit = cache_->load(fingerprint);
  if (!hit) throw CacheMissError(fingerprint);
  if (hit->texts.size() != static_cast<std::size_t>(exchange.n)) {
    throw BackendError("cache entry " + fingerprint + " holds " +
                       std::to_string(hit->texts.size()) + " completions, request wants " +
                       std::to_string(exchange.n));
  }
  return *hit;
}

RecordingBackend::RecordingBackend(std::shared_ptr<ChatBackend> upstream,
                                   std::shared_ptr<ResponseCache> cache)
    : upstream_(std::move(upstream)), cache_(std::move(cache)) {}

ChatCompletion RecordingBackend::complete(const ChatExchange& exchange) {
  auto fingerprint = request_fingerprint(exchange);
  if (auto hit = cache_->load(fingerprint);
      hit && hit->texts.size() == static_cast<std::size_t>(exchange.n)) {
    return *hit;
  }
  auto completion = upstream_->complete(exchange);
  if (completion.texts.size() != static_cast<std::size_t>(exchange.n)) {
    throw BackendError("upstream returned " + std::to_string(completion.texts.size()) +
                       " completions for n=" + std::to_string(exchange.n));
  }
  cache_->store(exchange, completion);
  return completion;
}

json chat_request_body(const ChatExchange& exchange) {
  return {{"model", exchange.model_name},
          {"messages", messages_json(exchange.messages)},
          {"n", exchange.n},
          {"temperature", exchange.temperature},
          {"max_tokens", exchange.max_output_tokens}};
}

ChatCompletion parse_chat_response(std::string_view body, int expected_n) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw BackendError(std::string("malformed chat-completions response: ") + e.what());
  }
  if (!doc.contains("choices") || !doc["choices"].is_array()) {
    throw BackendError("chat-completions response has no choices array");
  }
  const auto& choices = doc["choices"];
  if (choices.size() != static_cast<std::size_t>(expected_n)) {
    throw BackendError("backend returned " + std::to_string(choices.size()) +
                       " choices for n=" + std::to_string(expected_n));
  }
  ChatCompletion completion;
  completion.texts.resize(choices.size());
  std::vector<bool> seen(choices.size(), false);
  for (std::size_t i = 0; i < choices.size(); ++i) {
    const auto& choice = choices[i];
    std::size_t slot = choice.contains("index") && choice["index"].is_number_unsigned()
                           ? choice["index"].get<std::size_t>()
                           : i;
    if (slot >= choices.size() || seen[slot]) slot = i;
    seen[slot] = true;
    const auto& content = choice.contains("message") ? choice["message"].value("content", json())
                                                     : json();
    completion.texts[slot] = content.is_string() ? content.get<std::string>() : std::string{};
  }
  if (doc.contains("usage") && doc["usage"].is_object()) {
    completion.usage = TokenUsage{doc["usage"].value("prompt_tokens", std::int64_t{0}),
                                  doc["usage"].value("completion_tokens", std::int64_t{0})};
  }
  return completion;
}

HttpChatBackend::HttpChatBackend(HttpBackendOptions options) : options_(std::move(options)) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(options_.base_url, m, kUrl)) {
    throw ConfigError("invalid API base URL '" + options_.base_url + "'");
  }
  scheme_host_port_ = m[1].str();
  path_prefix_ = m[2].matched ? m[2].str() : std::string{};
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (options_.api_key.empty()) throw ConfigError("live backend requires an API key");
  if (options_.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
}

ChatCompletion HttpChatBackend::complete(const ChatExchange& exchange) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(options_.request_timeout);
  client.set_write_timeout(options_.request_timeout);
  httplib::Headers headers = {{"Authorization", "Bearer " + options_.api_key}};
  const std::string body = chat_request_body(exchange).dump();
  const std::string path = path_prefix_ + "/chat/completions";

  auto delay = std::chrono::duration<double, std::milli>(options_.initial_backoff);
  std::string last_failure;
  bool last_was_rate_limit = false;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_failure = "transport failure: " + httplib::to_string(res.error());
      last_was_rate_limit = false;
    } else if (res->status == 200) {
      return parse_chat_response(res->body, exchange.n);
    } else if (res->status == 401 || res->status == 403) {
      throw AuthenticationError("authentication rejected (HTTP " + std::to_string(res->status) +
                                "): " + res->body);
    } else if (res->status == 429) {
      last_failure = "rate limited (HTTP 429)";
      last_was_rate_limit = true;
    } else if (res->status >= 500) {
      last_failure = "server error (HTTP " + std::to_string(res->status) + ")";
      last_was_rate_limit = false;
    } else {
      throw BackendError("request rejected (HTTP " + std::to_string(res->status) +
                         "): " + res->body);
    }
    if (attempt < options_.max_attempts) {
      spdlog::warn("chat request attempt {}/{} failed: {}; retrying in {:.0f} ms", attempt,
                   options_.max_attempts, last_failure, delay.count());
      std::this_thread::sleep_for(delay);
      delay *= options_.backoff_factor;
    }
  }
  auto msg = last_failure + " after " + std::to_string(options_.max_attempts) + " attempts";
  if (last_was_rate_limit) throw RateLimitError(msg);
  throw TransportError(msg);
}

LlmGateway::LlmGateway(std::shared_ptr<ChatBackend> backend, int max_inflight)
    : backend_(std::move(backend)), slots_(max_inflight < 1 ? 1 : max_inflight) {
  if (!backend_) throw ConfigError("gateway needs a backend");
}

ChatCompletion LlmGateway::complete(const ChatExchange& exchange) {
  exchange.validate();
  slots_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{slots_};

  ++calls_;
  auto completion = backend_->complete(exchange);
  if (completion.texts.size() != static_cast<std::size_t>(exchange.n)) {
    throw BackendError("backend returned " + std::to_string(completion.texts.size()) +
                       " completions for n=" + std::to_string(exchange.n));
  }
  if (completion.usage) {
    prompt_tokens_ += completion.usage->prompt_tokens;
    completion_tokens_ += completion.usage->completion_tokens;
    spdlog::debug("llm usage: prompt={} completion={}", completion.usage->prompt_tokens,
                  completion.usage->completion_tokens);
  }
  return completion;
}

}  // namespace c3sql
