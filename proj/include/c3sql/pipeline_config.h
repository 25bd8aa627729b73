#pragma once

// Run configuration. Layers, lowest first: built-in defaults, a flat
// key = value file, C3SQL_<KEY> environment variables, command-line flags.
// Every layer goes through apply_setting, so they all accept the same keys
// and values.

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "c3sql/consistency_vote.h"
#include "c3sql/prompt_forge.h"
#include "c3sql/schema_linking.h"
#include "c3sql/sql_executor.h"
#include "json.hpp"

namespace c3sql {

enum class BackendKind { kLive, kRecord, kReplay };
std::string_view to_string(BackendKind kind);

struct PipelineConfig {
  std::string model_name = "gpt-3.5-turbo-0301";
  double temperature = 1.0;
  int n_samples = 20;
  int recall_samples = 10;
  int k_tables = 4;
  int k_columns = 5;
  int exec_timeout_ms = 5000;
  int row_cap = 10000;
  int max_inflight_requests = 4;
  int workers = 4;
  BackendKind backend = BackendKind::kReplay;
  std::filesystem::path cache_dir = "cache";

  bool use_calibration = true;
  bool use_linking = true;
  bool use_self_consistency = true;
  bool use_foreign_keys = true;
  PromptLayout layout = PromptLayout::kClear;

  std::string api_base_url = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  int max_attempts = 5;
  int generation_max_tokens = 512;
  int recall_max_tokens = 1024;
  std::size_t token_budget = 1800;
  bool dump_traces = false;
  bool auc_per_question = false;

  // Throws ConfigError: counts below 1, complicated layout with linking.
  void validate() const;

  // Without self-consistency a single sample is drawn.
  int effective_n_samples() const { return use_self_consistency ? n_samples : 1; }

  PromptConfig prompt_config() const;
  SamplingParams sampling_params() const;
  LinkingConfig linking_config() const;
  ExecutionLimits execution_limits() const;
  GenerationConfig generation_config() const;

  nlohmann::json to_json() const;
};

// Known keys in a stable order.
const std::vector<std::string>& setting_keys();

// Throws ConfigError for an unknown key or a value that does not parse.
// Booleans accept true/false, 1/0, yes/no, on/off.
void apply_setting(PipelineConfig& config, std::string_view key, std::string_view value);

// "key = value" lines; blank lines and lines starting with '#' are skipped.
void apply_config_file(PipelineConfig& config, const std::filesystem::path& path);

using EnvLookup = std::function<const char*(const char*)>;

// For every known key, C3SQL_<KEY in upper case> overrides the current value.
void apply_environment(PipelineConfig& config, const EnvLookup& lookup);

}  // namespace c3sql
