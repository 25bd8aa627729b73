#pragma once

// Batch driver for the link -> generate -> eval stages. Each stage reads
// and writes plain files under one output directory:
//
//   links/<question_id>.json     linked schema and recall scores
//   predictions.json             [{question_id, sql}] in dataset order
//   traces/<question_id>.json    vote traces (dump_traces only)
//   <stage>_failures.json        per-question failures of the last run
//   report.json, report.txt      evaluation report
//   eval_records.json            per-question outcomes

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "c3sql/llm_gateway.h"
#include "c3sql/pipeline_config.h"
#include "c3sql/schema_catalog.h"

namespace c3sql {

struct DatasetPaths {
  std::filesystem::path tables;     // Spider tables.json
  std::filesystem::path questions;  // Spider dev.json layout
  std::filesystem::path db_dir;     // <db_dir>/<db_id>/<db_id>.sqlite; empty: next to tables
};

struct StageFailure {
  std::string question_id;
  std::string message;
};

struct StageSummary {
  std::string stage;
  std::size_t processed = 0;
  std::size_t skipped = 0;
  std::vector<StageFailure> failures;
};

struct RunSummary {
  std::vector<StageSummary> stages;
  bool has_failures() const;
};

// Builds the backend named by config.backend. `upstream` stands in for the
// HTTP client when given (record and live modes); replay never uses it.
// Throws ConfigError when the live client is needed and the API key
// variable is unset.
std::shared_ptr<ChatBackend> make_backend(const PipelineConfig& config,
                                          std::shared_ptr<ChatBackend> upstream = nullptr);

// Chat transcript in a readable form: a header line with the sampling
// parameters and fingerprint, then one "[role]" block per message.
std::string render_transcript(const ChatExchange& exchange);

class Pipeline {
 public:
  // Validates the configuration and builds the backend before touching any
  // dataset file.
  Pipeline(PipelineConfig config, DatasetPaths paths, std::filesystem::path out_dir,
           std::shared_ptr<ChatBackend> upstream = nullptr);

  StageSummary link(bool force);
  StageSummary generate();
  // Defaults to <out_dir>/predictions.json.
  StageSummary eval(const std::optional<std::filesystem::path>& predictions = std::nullopt);
  // Link (when linking is on), generate, eval.
  RunSummary run(bool force);

  // Prompt for one question and stage ("table", "column" or "generation").
  std::string dump_prompt(const std::string& question_id, const std::string& stage);

  const PipelineConfig& config() const { return config_; }
  const LlmGateway& gateway() const { return *gateway_; }
  const std::filesystem::path& out_dir() const { return out_dir_; }

 private:
  void load_dataset();
  const Question& question(const std::string& question_id);
  std::filesystem::path link_path(const Question& q) const;
  SchemaView generation_context(const Question& q, const DatabaseSchema& schema) const;
  void write_failures(const StageSummary& summary) const;

  PipelineConfig config_;
  DatasetPaths paths_;
  std::filesystem::path out_dir_;
  std::unique_ptr<LlmGateway> gateway_;
  bool loaded_ = false;
  Catalog catalog_;
  std::vector<Question> questions_;
};

}  // namespace c3sql
