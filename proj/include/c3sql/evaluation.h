#pragma once

// Execution accuracy, recall AUC and report rendering.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "c3sql/schema_catalog.h"
#include "c3sql/schema_linking.h"
#include "c3sql/sql_executor.h"

namespace c3sql {

enum class EvalOutcome { kMatch, kMismatch, kPredError, kGoldError };
std::string_view to_string(EvalOutcome outcome);

struct EvalItem {
  std::string question_id;
  std::optional<std::string> predicted_sql;  // nullopt: no prediction for this id
  std::string gold_sql;
  std::filesystem::path db_path;
  std::optional<Difficulty> difficulty;
};

struct EvalRecord {
  std::string question_id;
  std::string predicted_sql;
  std::string gold_sql;
  EvalOutcome outcome = EvalOutcome::kMismatch;
  std::optional<Difficulty> difficulty;
  std::string detail;
};

// Gold runs first; a failing gold is a gold_error whatever the prediction
// does. The prediction is compared with gold's order sensitivity. A missing
// database throws EnvironmentError.
EvalRecord score_item(const EvalItem& item, const ExecutionLimits& limits = {});

// Scores every item, spreading the work over `workers` threads. Output is
// in input order.
std::vector<EvalRecord> score_items(std::span<const EvalItem> items,
                                    const ExecutionLimits& limits = {}, int workers = 1);

struct ExCount {
  std::size_t matches = 0;
  std::size_t total = 0;
  std::optional<double> ex() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(matches) / static_cast<double>(total);
  }
};

struct EvalReport {
  ExCount overall;
  std::map<std::string, ExCount> per_difficulty;  // keyed by difficulty label
  std::map<std::string, std::size_t> counts;      // every outcome label present, zeros included
  std::optional<double> table_auc;
  std::optional<double> column_auc;
  std::vector<std::string> notes;
};

EvalReport summarize(std::span<const EvalRecord> records);

EvalReport execution_accuracy(std::span<const EvalItem> items, const ExecutionLimits& limits = {},
                              int workers = 1);

struct GoldItems {
  std::set<std::string> tables;
  std::set<std::pair<std::string, std::string>> columns;
};

// Best effort: identifiers outside string literals that name a schema table
// mark it; "t.c" resolves through "AS" aliases; a bare column name marks
// that column in every marked table that has it. Names come back in schema
// spelling. Implicit aliases (no AS) are not followed.
GoldItems extract_gold_schema_items(std::string_view gold_sql, const DatabaseSchema& schema);

// Mann-Whitney AUC with ties counted half, computed from integer rank sums.
// nullopt when either side is empty.
std::optional<double> mann_whitney_auc(std::span<const double> positives,
                                       std::span<const double> negatives);

enum class AucPooling { kPooled, kPerQuestion };

struct RecallSample {
  std::string question_id;
  RecallScores scores;
  GoldItems gold;
};

struct AucResult {
  std::optional<double> table_auc;
  std::optional<double> column_auc;
  std::vector<std::string> notes;
};

// Pooled: one ranking over every (question, item) pair. Per-question: the
// mean of per-question AUCs, skipping questions where it is undefined.
AucResult recall_auc(std::span<const RecallSample> samples,
                     AucPooling pooling = AucPooling::kPooled);

enum class ReportFormat { kJson, kText };

std::string render_report(const EvalReport& report, ReportFormat format);

}  // namespace c3sql
