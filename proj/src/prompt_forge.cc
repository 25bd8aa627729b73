#include "c3sql/prompt_forge.h"

#include <spdlog/spdlog.h>

#include "c3sql/errors.h"

namespace c3sql {

std::string_view to_string(PromptLayout layout) {
  return layout == PromptLayout::kClear ? "clear" : "complicated";
}

PromptLayout parse_prompt_layout(std::string_view name) {
  if (name == "clear") return PromptLayout::kClear;
  if (name == "complicated") return PromptLayout::kComplicated;
  throw ConfigError("unknown layout '" + std::string(name) + "' (expected clear or complicated)");
}

void PromptConfig::validate() const {
  if (layout == PromptLayout::kComplicated && use_linking) {
    throw ConfigError("the complicated layout uses the full schema; disable linking");
  }
}

const std::vector<ChatMessage>& calibration_history() {
  static const std::vector<ChatMessage> kHistory = {
      {ChatRole::kSystem,
       "You are now an excellent SQL writer, first I'll give you some tips and examples, and I "
       "need you to remember the tips, and do not make same mistakes."},
      {ChatRole::kUser,
       "Tips 1:\n"
       "Question: Which A has most number of B?\n"
       "Gold SQL: select A from B group by A order by count ( * ) desc limit 1;\n"
       "Notice that the Gold SQL doesn't select COUNT(*) because the question only wants to know "
       "the A and the number should be only used in ORDER BY clause, there are many questions "
       "asks in this way, and I need you to remember this in the the following questions."},
      {ChatRole::kAssistant,
       "Thank you for the tip! I'll keep in mind that when the question only asks for a certain "
       "field, I should not include the COUNT(*) in the SELECT statement, but instead use it in "
       "the ORDER BY clause to sort the results based on the count of that field."},
      {ChatRole::kUser,
       "Tips 2:\n"
       "Don't use \"IN\", \"OR\", \"LEFT JOIN\" as it might cause extra results, use "
       "\"INTERSECT\" or \"EXCEPT\" instead, and remember to use \"DISTINCT\" or \"LIMIT\" when "
       "necessary.\n"
       "For example,\n"
       "Question: Who are the A who have been nominated for both B award and C award?\n"
       "Gold SQL should be: select A from X where award = 'B' intersect select A from X where "
       "award = 'C';"},
      {ChatRole::kAssistant,
       "Thank you for the tip! I'll remember to use \"INTERSECT\" or \"EXCEPT\" instead of "
       "\"IN\", \"NOT IN\", or \"LEFT JOIN\" when I want to find records that match or don't "
       "match across two tables. Additionally, I'll make sure to use \"DISTINCT\" or \"LIMIT\" "
       "when necessary to avoid repetitive results or limit the number of results returned."},
  };
  return kHistory;
}

std::string clear_generation_block(const SchemaView& context, const Question& question,
                                   bool include_foreign_keys) {
  std::string block(kGenerationInstruction);
  block += "\n### Sqlite SQL tables, with their properties:\n#\n";
  block += serialize_clear_layout(context, {TableLineEnd::kNone, include_foreign_keys});
  block += "#\n### " + question.text + "\nSELECT";
  return block;
}

ChatExchange build_generation_prompt(const SchemaView& context, const Question& question,
                                     const PromptConfig& config, const SamplingParams& sampling) {
  config.validate();
  ChatExchange exchange;
  if (config.use_calibration) exchange.messages = calibration_history();
  std::string final_block = config.layout == PromptLayout::kClear
                                ? clear_generation_block(context, question, config.include_foreign_keys)
                                : serialize_complicated_layout(context, question);
  exchange.messages.push_back({ChatRole::kUser, std::move(final_block)});
  exchange.n = sampling.n;
  exchange.temperature = sampling.temperature;
  exchange.model_name = sampling.model_name;
  exchange.max_output_tokens = sampling.max_output_tokens;
  return exchange;
}

std::string baseline_clear_prompt(const SchemaView& schema, const Question& question) {
  std::string prompt =
      "### Complete sqlite SQL query only and with no explanation\n"
      "### Sqlite SQL tables, with their properties:\n#\n";
  prompt += serialize_clear_layout(schema, {TableLineEnd::kStatementList, false});
  prompt += "#\n### " + question.text + "\nSELECT";
  return prompt;
}

std::size_t estimate_tokens(const ChatExchange& exchange) {
  std::size_t chars = 0;
  for (const auto& m : exchange.messages) chars += m.content.size();
  return chars / 4;
}

bool warn_if_over_budget(const ChatExchange& exchange, std::size_t budget, std::string_view label) {
  auto estimate = estimate_tokens(exchange);
  if (estimate <= budget) return false;
  spdlog::warn("{}: prompt is ~{} tokens, over the {} token budget", label, estimate, budget);
  return true;
}

}  // namespace c3sql
