#pragma once

// Test double that answers from corpus/mini/script.json. The question is
// found by looking for its text inside the last message; the stage by the
// opening words of that message.

#include <atomic>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "c3sql/llm_gateway.h"

namespace c3sql::testing {

class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(const std::filesystem::path& script_path);

  // The first n completions of the matching script entry, cycling when the
  // script is shorter. Throws BackendError when nothing matches.
  ChatCompletion complete(const ChatExchange& exchange) override;

  int calls() const { return calls_.load(); }

 private:
  // question text -> stage -> expanded completions
  std::map<std::string, std::map<std::string, std::vector<std::string>>> script_;
  std::atomic<int> calls_{0};
};

// Returns n copies of `text` after a short sleep and records the highest
// number of overlapping calls.
class CountingBackend : public ChatBackend {
 public:
  explicit CountingBackend(std::string text = " 1", int sleep_ms = 5)
      : text_(std::move(text)), sleep_ms_(sleep_ms) {}

  ChatCompletion complete(const ChatExchange& exchange) override;

  int calls() const { return calls_.load(); }
  int max_concurrent() const { return max_concurrent_.load(); }

 private:
  std::string text_;
  int sleep_ms_;
  std::atomic<int> calls_{0};
  std::atomic<int> current_{0};
  std::atomic<int> max_concurrent_{0};
};

}  // namespace c3sql::testing
