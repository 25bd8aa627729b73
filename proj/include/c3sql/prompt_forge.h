#pragma once

// Generation prompt assembly: optional calibration-hint history followed by
// the instruction / schema / question block that ends in "SELECT".

#include <cstddef>
#include <string>
#include <vector>

#include "c3sql/llm_gateway.h"
#include "c3sql/schema_catalog.h"

namespace c3sql {

enum class PromptLayout { kClear, kComplicated };

std::string_view to_string(PromptLayout layout);
PromptLayout parse_prompt_layout(std::string_view name);  // throws ConfigError

struct PromptConfig {
  bool use_calibration = true;
  bool use_linking = true;
  bool include_foreign_keys = true;
  PromptLayout layout = PromptLayout::kClear;

  // The complicated layout is only defined over the full schema.
  void validate() const;  // throws ConfigError
};

struct SamplingParams {
  int n = 20;
  double temperature = 1.0;
  std::string model_name = "gpt-3.5-turbo-0301";
  int max_output_tokens = 512;
};

inline constexpr std::string_view kGenerationInstruction =
    "### Complete sqlite SQL query only and with no explanation, and do not select extra "
    "columns that are not explicitly requested in the query.";

// System priming plus two tip/acknowledgement rounds (five messages).
const std::vector<ChatMessage>& calibration_history();

// The final user message for the clear layout.
std::string clear_generation_block(const SchemaView& context, const Question& question,
                                   bool include_foreign_keys);

ChatExchange build_generation_prompt(const SchemaView& context, const Question& question,
                                     const PromptConfig& config, const SamplingParams& sampling);

// Reference layout with the bare instruction and ";"/"." terminated table
// lines over the full schema. Kept for layout comparisons.
std::string baseline_clear_prompt(const SchemaView& schema, const Question& question);

// Rough size estimate: characters / 4 over all message contents.
std::size_t estimate_tokens(const ChatExchange& exchange);

// Logs a warning and returns true when the estimate exceeds `budget`.
bool warn_if_over_budget(const ChatExchange& exchange, std::size_t budget,
                         std::string_view label);

}  // namespace c3sql
