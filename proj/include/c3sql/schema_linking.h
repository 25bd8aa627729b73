#pragma once

// LLM-driven schema linking: table recall, then column recall over the
// winning tables, each sampled several times and settled by vote.

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "c3sql/llm_gateway.h"
#include "c3sql/schema_catalog.h"
#include "json.hpp"

namespace c3sql {

// Linked subset of a schema: at most k tables, at most k columns each, and
// only foreign keys whose two tables were both linked.
using LinkedSchema = SchemaView;

// Fraction of recall samples that placed an item in their top k. Every
// table and column of the source schema has an entry.
struct RecallScores {
  std::map<std::string, double> table_scores;
  std::map<std::pair<std::string, std::string>, double> column_scores;
};

struct LinkingConfig {
  int recall_samples = 10;
  int k_tables = 4;
  int k_columns = 5;
  double temperature = 1.0;
  std::string model_name = "gpt-3.5-turbo-0301";
  int max_output_tokens = 1024;
};

struct TableColumns {
  std::string table;
  std::vector<std::string> columns;

  friend bool operator==(const TableColumns&, const TableColumns&) = default;
};

// One entry per linked table, in linked-table order.
using ColumnMap = std::vector<TableColumns>;

ChatExchange build_table_recall_prompt(const DatabaseSchema& schema, const Question& question,
                                       const LinkingConfig& config);

// First bracketed list in `text`, matched case-insensitively to schema
// tables. Unknown names are dropped, duplicates keep their first position.
std::vector<std::string> parse_table_list(std::string_view text, const DatabaseSchema& schema);

// Truncates each sample to k_tables, keys it as an unordered set and returns
// the most frequent non-empty set, ordered as in the earliest sample that
// shows it. Ties go to the set seen first. Throws LinkingFailure when every
// sample is empty.
std::vector<std::string> vote_table_sets(const std::vector<std::vector<std::string>>& samples,
                                         int k_tables);

// `linked_tables` carries every column of each linked table plus the
// foreign keys among them.
ChatExchange build_column_recall_prompt(const SchemaView& linked_tables, const Question& question,
                                        const LinkingConfig& config);

// First top-level JSON object in `text`; keys and values matched
// case-insensitively against linked tables and their columns.
ColumnMap parse_column_dict(std::string_view text, const SchemaView& linked_tables);

// Per table: rank columns by how many samples mention them, then by mean
// position within those samples, then by schema order; keep k_columns.
// A table nobody mentioned falls back to its first k_columns columns.
ColumnMap vote_columns(const std::vector<ColumnMap>& samples, const SchemaView& linked_tables,
                       int k_columns);

struct LinkingResult {
  LinkedSchema linked;
  RecallScores scores;
  bool fell_back = false;
  std::string note;
};

LinkingResult link_schema(const DatabaseSchema& schema, const Question& question,
                          LlmGateway& gateway, const LinkingConfig& config);

nlohmann::json linking_to_json(const Question& question, const LinkingResult& result);
LinkingResult linking_from_json(const nlohmann::json& j);

}  // namespace c3sql
