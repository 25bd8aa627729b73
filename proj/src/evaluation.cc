#include "c3sql/evaluation.h"

#include <fmt/format.h>

#include <algorithm>
#include <cstdint>

#include "c3sql/parallel.h"
#include "c3sql/sql_lexer.h"
#include "c3sql/text_util.h"
#include "json.hpp"

namespace c3sql {

using nlohmann::json;

std::string_view to_string(EvalOutcome outcome) {
  switch (outcome) {
    case EvalOutcome::kMatch: return "match";
    case EvalOutcome::kMismatch: return "mismatch";
    case EvalOutcome::kPredError: return "pred_error";
    case EvalOutcome::kGoldError: return "gold_error";
  }
  return "mismatch";
}

EvalRecord score_item(const EvalItem& item, const ExecutionLimits& limits) {
  EvalRecord record;
  record.question_id = item.question_id;
  record.predicted_sql = item.predicted_sql.value_or("");
  record.gold_sql = item.gold_sql;
  record.difficulty = item.difficulty;

  ReadOnlyDatabase db(item.db_path);
  auto gold = db.execute(item.gold_sql, limits);
  if (!is_success(gold)) {
    record.outcome = EvalOutcome::kGoldError;
    record.detail = describe(gold);
    return record;
  }
  if (!item.predicted_sql) {
    record.outcome = EvalOutcome::kMismatch;
    record.detail = "no prediction";
    return record;
  }
  auto pred = db.execute(*item.predicted_sql, limits);
  if (!is_success(pred)) {
    record.outcome = EvalOutcome::kPredError;
    record.detail = describe(pred);
    return record;
  }
  auto& gold_table = std::get<ResultTable>(gold);
  auto& pred_table = std::get<ResultTable>(pred);
  pred_table.order_sensitive = gold_table.order_sensitive;
  record.outcome =
      results_equivalent(pred_table, gold_table) ? EvalOutcome::kMatch : EvalOutcome::kMismatch;
  return record;
}

std::vector<EvalRecord> score_items(std::span<const EvalItem> items, const ExecutionLimits& limits,
                                    int workers) {
  std::vector<EvalRecord> records(items.size());
  parallel_for(items.size(), workers, [&](std::size_t i) { records[i] = score_item(items[i], limits); });
  return records;
}

EvalReport summarize(std::span<const EvalRecord> records) {
  EvalReport report;
  for (auto o : {EvalOutcome::kMatch, EvalOutcome::kMismatch, EvalOutcome::kPredError,
                 EvalOutcome::kGoldError}) {
    report.counts[std::string(to_string(o))] = 0;
  }
  for (const auto& r : records) {
    bool match = r.outcome == EvalOutcome::kMatch;
    ++report.overall.total;
    report.overall.matches += match;
    ++report.counts[std::string(to_string(r.outcome))];
    if (r.difficulty) {
      auto& bucket = report.per_difficulty[std::string(to_string(*r.difficulty))];
      ++bucket.total;
      bucket.matches += match;
    }
    if (r.outcome == EvalOutcome::kGoldError) {
      report.notes.push_back("gold query failed for " + r.question_id + ": " + r.detail);
    }
  }
  return report;
}

EvalReport execution_accuracy(std::span<const EvalItem> items, const ExecutionLimits& limits,
                              int workers) {
  auto records = score_items(items, limits, workers);
  return summarize(records);
}

GoldItems extract_gold_schema_items(std::string_view gold_sql, const DatabaseSchema& schema) {
  GoldItems items;
  auto tokens = tokenize_sql(gold_sql);
  auto is_ident = [&](std::size_t i) {
    return i < tokens.size() && (tokens[i].kind == SqlToken::Kind::kWord ||
                                 tokens[i].kind == SqlToken::Kind::kQuotedIdent);
  };
  auto is_dot = [&](std::size_t i) {
    return i < tokens.size() && tokens[i].kind == SqlToken::Kind::kPunct && tokens[i].text == ".";
  };

  std::map<std::string, const Table*> aliases;  // lower-case alias -> table
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!is_ident(i)) continue;
    const Table* table = schema.find_table(tokens[i].text);
    if (!table) continue;
    items.tables.insert(table->name);
    if (i + 2 < tokens.size() && tokens[i + 1].kind == SqlToken::Kind::kWord &&
        text::iequals(tokens[i + 1].text, "AS") && is_ident(i + 2)) {
      aliases[text::to_lower(tokens[i + 2].text)] = table;
    }
  }

  auto resolve_qualifier = [&](std::string_view name) -> const Table* {
    if (auto it = aliases.find(text::to_lower(name)); it != aliases.end()) return it->second;
    return schema.find_table(name);
  };

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!is_ident(i)) continue;
    if (is_dot(i + 1) && is_ident(i + 2)) {
      if (const Table* table = resolve_qualifier(tokens[i].text)) {
        if (const Column* column = table->find_column(tokens[i + 2].text)) {
          items.tables.insert(table->name);
          items.columns.insert({table->name, column->name});
        }
      }
      i += 2;
      continue;
    }
    for (const auto& name : items.tables) {
      const Table* table = schema.find_table(name);
      if (const Column* column = table->find_column(tokens[i].text)) {
        items.columns.insert({table->name, column->name});
      }
    }
  }
  return items;
}

std::optional<double> mann_whitney_auc(std::span<const double> positives,
                                       std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) return std::nullopt;
  std::vector<std::pair<double, bool>> all;
  all.reserve(positives.size() + negatives.size());
  for (double p : positives) all.emplace_back(p, true);
  for (double q : negatives) all.emplace_back(q, false);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // Doubled mid-ranks keep everything in integers: a tie group covering
  // 1-based positions i..j gets rank (i + j) / 2 each.
  std::uint64_t doubled_rank_sum = 0;
  std::size_t start = 0;
  while (start < all.size()) {
    std::size_t end = start;
    while (end + 1 < all.size() && all[end + 1].first == all[start].first) ++end;
    const std::uint64_t doubled_rank = (start + 1) + (end + 1);
    for (std::size_t k = start; k <= end; ++k) {
      if (all[k].second) doubled_rank_sum += doubled_rank;
    }
    start = end + 1;
  }
  const std::uint64_t p = positives.size();
  const std::uint64_t n = negatives.size();
  const std::uint64_t doubled_u = doubled_rank_sum - p * (p + 1);
  return static_cast<double>(doubled_u) / static_cast<double>(2 * p * n);
}

namespace {

struct Split {
  std::vector<double> positives;
  std::vector<double> negatives;
};

void split_tables(const RecallSample& s, Split& out) {
  for (const auto& [table, score] : s.scores.table_scores) {
    (s.gold.tables.count(table) ? out.positives : out.negatives).push_back(score);
  }
}

void split_columns(const RecallSample& s, Split& out) {
  for (const auto& [key, score] : s.scores.column_scores) {
    (s.gold.columns.count(key) ? out.positives : out.negatives).push_back(score);
  }
}

template <typename SplitFn>
std::optional<double> auc_for(std::span<const RecallSample> samples, AucPooling pooling,
                              SplitFn split, std::string_view label,
                              std::vector<std::string>& notes) {
  std::optional<double> result;
  if (pooling == AucPooling::kPooled) {
    Split pooled;
    for (const auto& s : samples) split(s, pooled);
    result = mann_whitney_auc(pooled.positives, pooled.negatives);
  } else {
    double sum = 0.0;
    std::size_t defined = 0;
    for (const auto& s : samples) {
      Split one;
      split(s, one);
      if (auto auc = mann_whitney_auc(one.positives, one.negatives)) {
        sum += *auc;
        ++defined;
      }
    }
    if (defined > 0) result = sum / static_cast<double>(defined);
  }
  if (!result) {
    notes.push_back(fmt::format("{} AUC undefined: needs at least one gold and one non-gold item",
                                label));
  }
  return result;
}

std::string ex_cell(const ExCount& c) {
  auto ex = c.ex();
  if (!ex) return fmt::format("{:>8}  ({}/{})", "n/a", c.matches, c.total);
  return fmt::format("{:>8.4f}  ({}/{})", *ex, c.matches, c.total);
}

std::string auc_cell(const std::optional<double>& v) {
  return v ? fmt::format("{:>8.4f}", *v) : fmt::format("{:>8}", "n/a");
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

AucResult recall_auc(std::span<const RecallSample> samples, AucPooling pooling) {
  AucResult result;
  result.table_auc = auc_for(samples, pooling, split_tables, "table", result.notes);
  result.column_auc = auc_for(samples, pooling, split_columns, "column", result.notes);
  return result;
}

std::string render_report(const EvalReport& report, ReportFormat format) {
  if (format == ReportFormat::kJson) {
    json per_difficulty = json::object();
    for (const auto& [label, c] : report.per_difficulty) {
      per_difficulty[label] = {{"ex", optional_number(c.ex())}, {"matches", c.matches},
                               {"total", c.total}};
    }
    json j = {{"overall",
               {{"ex", optional_number(report.overall.ex())},
                {"matches", report.overall.matches},
                {"total", report.overall.total}}},
              {"per_difficulty", per_difficulty},
              {"counts", report.counts},
              {"table_auc", optional_number(report.table_auc)},
              {"column_auc", optional_number(report.column_auc)},
              {"notes", report.notes}};
    return j.dump(2) + "\n";
  }

  std::string out;
  out += "Execution accuracy\n";
  out += fmt::format("  {:<14}{}\n", "overall", ex_cell(report.overall));
  for (const auto& [label, c] : report.per_difficulty) {
    out += fmt::format("  {:<14}{}\n", label, ex_cell(c));
  }
  out += "Recall AUC\n";
  out += fmt::format("  {:<14}{}\n", "tables", auc_cell(report.table_auc));
  out += fmt::format("  {:<14}{}\n", "columns", auc_cell(report.column_auc));
  out += "Outcomes\n";
  for (const auto& [label, count] : report.counts) {
    out += fmt::format("  {:<14}{:>8}\n", label, count);
  }
  if (!report.notes.empty()) {
    out += "Notes\n";
    for (const auto& note : report.notes) out += "  - " + note + "\n";
  }
  return out;
}

}  // namespace c3sql
