#pragma once

// Execution-based self-consistency: normalize sampled completions, group
// them by execution result and keep a query from the largest group.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "c3sql/llm_gateway.h"
#include "c3sql/prompt_forge.h"
#include "c3sql/schema_catalog.h"
#include "c3sql/sql_executor.h"
#include "json.hpp"

namespace c3sql {

struct SqlCandidate {
  std::string text;
  int sample_index = 0;
  std::string raw_completion;
  bool parseable = true;
};

// Strips code fences and leading prose, restores the "SELECT " the prompt
// ended with, joins lines with single spaces and drops trailing semicolons.
// Idempotent. An empty residue yields parseable == false.
SqlCandidate postprocess_completion(std::string_view raw, int sample_index);

enum class DiscardReason { kSqlError, kTimeout, kUnparseable, kRowOverflow };
std::string_view to_string(DiscardReason reason);

struct Discard {
  int sample_index = 0;
  DiscardReason reason = DiscardReason::kSqlError;
  std::string detail;
};

struct ResultCluster {
  ResultTable representative;  // result of the lowest-index member
  std::vector<int> members;    // sample indices, ascending
};

// Clusters ordered by size (descending), then by smallest member index.
struct Clustering {
  std::vector<ResultCluster> clusters;
  std::vector<Discard> discarded;
};

// Groups successful outcomes into connected components of
// results_equivalent (each candidate keeps its own order sensitivity).
// `outcomes[i]` belongs to `candidates[i]`; unparseable candidates are
// discarded whatever their outcome slot holds.
Clustering group_outcomes(std::span<const SqlCandidate> candidates,
                          std::span<const ExecutionOutcome> outcomes);

// Executes each parseable candidate once on one read-only connection.
Clustering cluster_by_execution(std::span<const SqlCandidate> candidates,
                                const std::filesystem::path& db_path,
                                const ExecutionLimits& limits);

struct VoteResult {
  SqlCandidate winner;
  std::vector<ResultCluster> clusters;
  std::vector<Discard> discarded;
  bool used_fallback = false;
};

// Winner: lowest sample index of the first (largest) cluster. With no
// clusters at all, the fallback wins and used_fallback is set.
VoteResult select_final(Clustering clustering, std::span<const SqlCandidate> candidates,
                        const SqlCandidate& fallback);

struct GenerationConfig {
  PromptConfig prompt;
  SamplingParams sampling;
  ExecutionLimits limits;
  std::size_t token_budget = 1800;
};

VoteResult generate_sql(const Question& question, const SchemaView& context,
                        const std::filesystem::path& db_path, LlmGateway& gateway,
                        const GenerationConfig& config);

nlohmann::json vote_trace_json(const Question& question, const VoteResult& vote);

}  // namespace c3sql
