#include "c3sql/pipeline_config.h"

#include <charconv>
#include <map>

#include "c3sql/errors.h"
#include "c3sql/text_util.h"

namespace c3sql {

namespace {

int parse_int(std::string_view key, std::string_view value) {
  int out = 0;
  auto v = text::trim(value);
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(std::string(key) + ": expected an integer, got '" + std::string(value) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  std::string v(text::trim(value));
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(value) + "'");
}

bool parse_bool(std::string_view key, std::string_view value) {
  auto v = text::to_lower(text::trim(value));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(std::string(key) + ": expected a boolean, got '" + std::string(value) + "'");
}

BackendKind parse_backend(std::string_view value) {
  auto v = text::to_lower(text::trim(value));
  if (v == "live") return BackendKind::kLive;
  if (v == "record") return BackendKind::kRecord;
  if (v == "replay") return BackendKind::kReplay;
  throw ConfigError("backend: expected live, record or replay, got '" + std::string(value) + "'");
}

using Setter = std::function<void(PipelineConfig&, std::string_view key, std::string_view value)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> kSetters = {
      {"model_name", [](auto& c, auto, auto v) { c.model_name = std::string(text::trim(v)); }},
      {"temperature", [](auto& c, auto k, auto v) { c.temperature = parse_double(k, v); }},
      {"n_samples", [](auto& c, auto k, auto v) { c.n_samples = parse_int(k, v); }},
      {"recall_samples", [](auto& c, auto k, auto v) { c.recall_samples = parse_int(k, v); }},
      {"k_tables", [](auto& c, auto k, auto v) { c.k_tables = parse_int(k, v); }},
      {"k_columns", [](auto& c, auto k, auto v) { c.k_columns = parse_int(k, v); }},
      {"exec_timeout_ms", [](auto& c, auto k, auto v) { c.exec_timeout_ms = parse_int(k, v); }},
      {"row_cap", [](auto& c, auto k, auto v) { c.row_cap = parse_int(k, v); }},
      {"max_inflight_requests",
       [](auto& c, auto k, auto v) { c.max_inflight_requests = parse_int(k, v); }},
      {"workers", [](auto& c, auto k, auto v) { c.workers = parse_int(k, v); }},
      {"backend", [](auto& c, auto, auto v) { c.backend = parse_backend(v); }},
      {"cache_dir", [](auto& c, auto, auto v) { c.cache_dir = std::string(text::trim(v)); }},
      {"use_calibration", [](auto& c, auto k, auto v) { c.use_calibration = parse_bool(k, v); }},
      {"use_linking", [](auto& c, auto k, auto v) { c.use_linking = parse_bool(k, v); }},
      {"use_self_consistency",
       [](auto& c, auto k, auto v) { c.use_self_consistency = parse_bool(k, v); }},
      {"use_foreign_keys", [](auto& c, auto k, auto v) { c.use_foreign_keys = parse_bool(k, v); }},
      {"layout", [](auto& c, auto, auto v) { c.layout = parse_prompt_layout(text::trim(v)); }},
      {"api_base_url", [](auto& c, auto, auto v) { c.api_base_url = std::string(text::trim(v)); }},
      {"api_key_env", [](auto& c, auto, auto v) { c.api_key_env = std::string(text::trim(v)); }},
      {"max_attempts", [](auto& c, auto k, auto v) { c.max_attempts = parse_int(k, v); }},
      {"generation_max_tokens",
       [](auto& c, auto k, auto v) { c.generation_max_tokens = parse_int(k, v); }},
      {"recall_max_tokens", [](auto& c, auto k, auto v) { c.recall_max_tokens = parse_int(k, v); }},
      {"token_budget",
       [](auto& c, auto k, auto v) { c.token_budget = static_cast<std::size_t>(parse_int(k, v)); }},
      {"dump_traces", [](auto& c, auto k, auto v) { c.dump_traces = parse_bool(k, v); }},
      {"auc_per_question", [](auto& c, auto k, auto v) { c.auc_per_question = parse_bool(k, v); }},
  };
  return kSetters;
}

}  // namespace

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kLive: return "live";
    case BackendKind::kRecord: return "record";
    case BackendKind::kReplay: return "replay";
  }
  return "replay";
}

void PipelineConfig::validate() const {
  const std::pair<const char*, int> counts[] = {
      {"n_samples", n_samples},         {"recall_samples", recall_samples},
      {"k_tables", k_tables},           {"k_columns", k_columns},
      {"exec_timeout_ms", exec_timeout_ms}, {"row_cap", row_cap},
      {"max_inflight_requests", max_inflight_requests}, {"workers", workers},
      {"max_attempts", max_attempts},   {"generation_max_tokens", generation_max_tokens},
      {"recall_max_tokens", recall_max_tokens},
  };
  for (const auto& [name, value] : counts) {
    if (value < 1) throw ConfigError(std::string(name) + " must be at least 1");
  }
  if (temperature < 0.0) throw ConfigError("temperature must not be negative");
  prompt_config().validate();
}

PromptConfig PipelineConfig::prompt_config() const {
  return {use_calibration, use_linking, use_foreign_keys, layout};
}

SamplingParams PipelineConfig::sampling_params() const {
  return {effective_n_samples(), temperature, model_name, generation_max_tokens};
}

LinkingConfig PipelineConfig::linking_config() const {
  return {recall_samples, k_tables, k_columns, temperature, model_name, recall_max_tokens};
}

ExecutionLimits PipelineConfig::execution_limits() const {
  return {std::chrono::milliseconds(exec_timeout_ms), static_cast<std::size_t>(row_cap)};
}

GenerationConfig PipelineConfig::generation_config() const {
  return {prompt_config(), sampling_params(), execution_limits(), token_budget};
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"model_name", model_name},
          {"temperature", temperature},
          {"n_samples", n_samples},
          {"effective_n_samples", effective_n_samples()},
          {"recall_samples", recall_samples},
          {"k_tables", k_tables},
          {"k_columns", k_columns},
          {"exec_timeout_ms", exec_timeout_ms},
          {"row_cap", row_cap},
          {"max_inflight_requests", max_inflight_requests},
          {"workers", workers},
          {"backend", to_string(backend)},
          {"cache_dir", cache_dir.string()},
          {"use_calibration", use_calibration},
          {"use_linking", use_linking},
          {"use_self_consistency", use_self_consistency},
          {"use_foreign_keys", use_foreign_keys},
          {"layout", to_string(layout)},
          {"api_base_url", api_base_url},
          {"api_key_env", api_key_env},
          {"max_attempts", max_attempts},
          {"generation_max_tokens", generation_max_tokens},
          {"recall_max_tokens", recall_max_tokens},
          {"token_budget", token_budget},
          {"dump_traces", dump_traces},
          {"auc_per_question", auc_per_question}};
}

const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> kKeys = [] {
    std::vector<std::string> keys;
    for (const auto& [key, setter] : setters()) keys.push_back(key);
    return keys;
  }();
  return kKeys;
}

void apply_setting(PipelineConfig& config, std::string_view key, std::string_view value) {
  auto normalized = text::to_lower(text::trim(key));
  for (auto& ch : normalized) {
    if (ch == '-') ch = '_';
  }
  for (const auto& [name, setter] : setters()) {
    if (name == normalized) {
      setter(config, name, value);
      return;
    }
  }
  throw ConfigError("unknown setting '" + std::string(key) + "'");
}

void apply_config_file(PipelineConfig& config, const std::filesystem::path& path) {
  auto content = text::read_file(path);
  int line_no = 0;
  for (auto line : text::split_lines(content)) {
    ++line_no;
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_setting(config, t.substr(0, eq), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_environment(PipelineConfig& config, const EnvLookup& lookup) {
  for (const auto& key : setting_keys()) {
    auto var = "C3SQL_" + text::to_upper(key);
    if (const char* value = lookup(var.c_str())) {
      try {
        apply_setting(config, key, value);
      } catch (const ConfigError& e) {
        throw ConfigError(var + ": " + e.what());
      }
    }
  }
}

}  // namespace c3sql
