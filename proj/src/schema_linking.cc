#include "c3sql/schema_linking.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <optional>
#include <set>

#include "c3sql/errors.h"
#include "c3sql/text_util.h"

namespace c3sql {

using nlohmann::json;

namespace {

constexpr std::string_view kTableRecallInstruction =
    "Given the database schema and question, perform the following actions:\n"
    "1 - Rank all the tables based on the possibility of being used in the SQL according to the "
    "question from the most relevant to the least relevant, Table or its column that matches "
    "more with the question words is highly relevant and must be placed ahead.\n"
    "2 - Check whether you consider all the tables.\n"
    "3 - Output a list object in the order of step 2, Your output should contain all the tables. "
    "The format should be like:\n"
    "[\n"
    "\"table_1\", \"table_2\", ...\n"
    "]\n";

constexpr std::string_view kColumnRecallInstruction =
    "Given the database tables and question, perform the following actions:\n"
    "1 - Rank the columns in each table based on the possibility of being used in the SQL, "
    "Column that matches more with the question words or the foreign key is highly relevant and "
    "must be placed ahead. You should output them in the order of the most relevant to the least "
    "relevant.\n"
    "Explain why you choose each column.\n"
    "2 - Output a JSON object that contains all the columns in each table according to your "
    "explanation. The format should be like:\n"
    "{\n"
    "\"table_1\": [\"column_1\", \"column_2\", ......],\n"
    "\"table_2\": [\"column_1\", \"column_2\", ......],\n"
    "\"table_3\": [\"column_1\", \"column_2\", ......],\n"
    "......\n"
    "}\n";

ChatExchange single_prompt(std::string content, const LinkingConfig& config) {
  ChatExchange exchange;
  exchange.messages.push_back({ChatRole::kUser, std::move(content)});
  exchange.n = config.recall_samples;
  exchange.temperature = config.temperature;
  exchange.model_name = config.model_name;
  exchange.max_output_tokens = config.max_output_tokens;
  return exchange;
}

// Span of the first balanced open/close pair, ignoring delimiters inside
// double-quoted strings. nullopt when no balanced span exists.
std::optional<std::string_view> first_balanced(std::string_view text, char open, char close) {
  auto start = text.find(open);
  if (start == std::string_view::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == open) ++depth;
    else if (c == close && --depth == 0) return text.substr(start, i - start + 1);
  }
  return std::nullopt;
}

std::string strip_quotes(std::string_view s) {
  s = text::trim(s);
  while (!s.empty() && (s.front() == '"' || s.front() == '\'' || s.front() == '`')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == '"' || s.back() == '\'' || s.back() == '`')) s.remove_suffix(1);
  return std::string(text::trim(s));
}

const TableView* find_view_table(const SchemaView& view, std::string_view name) {
  for (const auto& t : view.tables) {
    if (text::iequals(t.name, name)) return &t;
  }
  return nullptr;
}

std::optional<std::string> match_column(const TableView& table, std::string_view name) {
  auto candidate = text::trim(name);
  if (auto dot = candidate.find('.'); dot != std::string_view::npos) {
    if (!text::iequals(candidate.substr(0, dot), table.name)) return std::nullopt;
    candidate = candidate.substr(dot + 1);
  }
  for (const auto& c : table.columns) {
    if (text::iequals(c, candidate)) return c;
  }
  return std::nullopt;
}

std::vector<FkRelation> foreign_keys_within(const DatabaseSchema& schema,
                                            const std::vector<std::string>& tables) {
  auto linked = [&](const std::string& name) {
    return std::any_of(tables.begin(), tables.end(),
                       [&](const std::string& t) { return text::iequals(t, name); });
  };
  std::vector<FkRelation> out;
  for (const auto& fk : schema.foreign_keys) {
    if (linked(fk.from_table) && linked(fk.to_table)) out.push_back(fk);
  }
  return out;
}

}  // namespace

ChatExchange build_table_recall_prompt(const DatabaseSchema& schema, const Question& question,
                                       const LinkingConfig& config) {
  std::string prompt(kTableRecallInstruction);
  prompt += "\nSchema:\n";
  prompt += serialize_clear_layout(SchemaView::from(schema), {TableLineEnd::kNone, false});
  prompt += "\nQuestion:\n### " + question.text;
  return single_prompt(std::move(prompt), config);
}

std::vector<std::string> parse_table_list(std::string_view text, const DatabaseSchema& schema) {
  std::vector<std::string> out;
  auto span = first_balanced(text, '[', ']');
  if (!span) return out;

  std::vector<std::string> raw;
  try {
    auto parsed = json::parse(*span);
    for (const auto& e : parsed) {
      if (e.is_string()) raw.push_back(e.get<std::string>());
    }
  } catch (const json::exception&) {
    auto inner = span->substr(1, span->size() - 2);
    std::size_t start = 0;
    while (start <= inner.size()) {
      auto comma = inner.find(',', start);
      auto piece = inner.substr(start, comma == std::string_view::npos ? inner.npos : comma - start);
      raw.push_back(strip_quotes(piece));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
  }

  for (const auto& name : raw) {
    const Table* t = schema.find_table(text::trim(name));
    if (!t) continue;
    if (std::find(out.begin(), out.end(), t->name) == out.end()) out.push_back(t->name);
  }
  return out;
}

std::vector<std::string> vote_table_sets(const std::vector<std::vector<std::string>>& samples,
                                         int k_tables) {
  struct Candidate {
    std::set<std::string> key;
    int votes = 0;
    std::vector<std::string> order;  // from the earliest sample with this set
  };
  std::vector<Candidate> candidates;  // in order of first appearance
  const auto k = static_cast<std::size_t>(std::max(k_tables, 1));
  for (const auto& sample : samples) {
    std::vector<std::string> top(sample.begin(), sample.begin() + std::min(k, sample.size()));
    if (top.empty()) continue;
    std::set<std::string> key;
    for (const auto& t : top) key.insert(text::to_lower(t));
    auto it = std::find_if(candidates.begin(), candidates.end(),
                           [&](const Candidate& c) { return c.key == key; });
    if (it == candidates.end()) {
      candidates.push_back({std::move(key), 1, std::move(top)});
    } else {
      ++it->votes;
    }
  }
  if (candidates.empty()) throw LinkingFailure("every table-recall sample was empty");
  const Candidate* best = &candidates.front();
  for (const auto& c : candidates) {
    if (c.votes > best->votes) best = &c;
  }
  return best->order;
}

ChatExchange build_column_recall_prompt(const SchemaView& linked_tables, const Question& question,
                                        const LinkingConfig& config) {
  std::string prompt(kColumnRecallInstruction);
  prompt += "\nSchema:\n";
  prompt += serialize_clear_layout(linked_tables, {TableLineEnd::kNone, false});
  if (!linked_tables.foreign_keys.empty()) {
    prompt += "Foreign keys:\n";
    for (const auto& fk : linked_tables.foreign_keys) prompt += clear_foreign_key_line(fk) + "\n";
  }
  prompt += "\nQuestion:\n### " + question.text;
  return single_prompt(std::move(prompt), config);
}

ColumnMap parse_column_dict(std::string_view text, const SchemaView& linked_tables) {
  ColumnMap out;
  for (const auto& t : linked_tables.tables) out.push_back({t.name, {}});

  auto span = first_balanced(text, '{', '}');
  if (!span) return out;
  json parsed;
  try {
    parsed = json::parse(*span);
  } catch (const json::exception&) {
    return out;
  }
  if (!parsed.is_object()) return out;

  for (const auto& [key, value] : parsed.items()) {
    auto slot = std::find_if(out.begin(), out.end(),
                             [&](const TableColumns& tc) { return text::iequals(tc.table, key); });
    if (slot == out.end() || !value.is_array()) continue;
    const TableView* table = find_view_table(linked_tables, slot->table);
    for (const auto& e : value) {
      if (!e.is_string()) continue;
      auto column = match_column(*table, e.get<std::string>());
      if (column && std::find(slot->columns.begin(), slot->columns.end(), *column) ==
                        slot->columns.end()) {
        slot->columns.push_back(*column);
      }
    }
  }
  return out;
}

ColumnMap vote_columns(const std::vector<ColumnMap>& samples, const SchemaView& linked_tables,
                       int k_columns) {
  const auto k = static_cast<std::size_t>(std::max(k_columns, 1));
  ColumnMap out;
  for (const auto& table : linked_tables.tables) {
    struct Tally {
      std::size_t schema_index;
      long long votes = 0;
      long long rank_sum = 0;
    };
    std::vector<Tally> tallies;
    for (std::size_t i = 0; i < table.columns.size(); ++i) tallies.push_back({i});

    for (const auto& sample : samples) {
      auto entry = std::find_if(sample.begin(), sample.end(), [&](const TableColumns& tc) {
        return text::iequals(tc.table, table.name);
      });
      if (entry == sample.end()) continue;
      std::set<std::size_t> seen;
      long long position = 0;
      for (const auto& column : entry->columns) {
        auto idx = std::find_if(table.columns.begin(), table.columns.end(),
                                [&](const std::string& c) { return text::iequals(c, column); });
        if (idx == table.columns.end()) continue;
        auto schema_index = static_cast<std::size_t>(idx - table.columns.begin());
        if (!seen.insert(schema_index).second) continue;
        ++position;
        ++tallies[schema_index].votes;
        tallies[schema_index].rank_sum += position;
      }
    }

    std::vector<Tally> recalled;
    for (const auto& t : tallies) {
      if (t.votes > 0) recalled.push_back(t);
    }
    // Mean ranks compared exactly: a.sum / a.votes < b.sum / b.votes.
    std::sort(recalled.begin(), recalled.end(), [](const Tally& a, const Tally& b) {
      if (a.votes != b.votes) return a.votes > b.votes;
      long long lhs = a.rank_sum * b.votes;
      long long rhs = b.rank_sum * a.votes;
      if (lhs != rhs) return lhs < rhs;
      return a.schema_index < b.schema_index;
    });

    TableColumns chosen{table.name, {}};
    if (recalled.empty()) {
      for (std::size_t i = 0; i < std::min(k, table.columns.size()); ++i) {
        chosen.columns.push_back(table.columns[i]);
      }
    } else {
      for (std::size_t i = 0; i < std::min(k, recalled.size()); ++i) {
        chosen.columns.push_back(table.columns[recalled[i].schema_index]);
      }
    }
    out.push_back(std::move(chosen));
  }
  return out;
}

LinkingResult link_schema(const DatabaseSchema& schema, const Question& question,
                          LlmGateway& gateway, const LinkingConfig& config) {
  LinkingResult result;
  for (const auto& t : schema.tables) {
    result.scores.table_scores[t.name] = 0.0;
    for (const auto& c : t.columns) result.scores.column_scores[{t.name, c.name}] = 0.0;
  }
  const auto k_tables = static_cast<std::size_t>(std::max(config.k_tables, 1));

  std::vector<std::string> linked_names;
  if (schema.tables.size() <= k_tables) {
    for (const auto& t : schema.tables) {
      linked_names.push_back(t.name);
      result.scores.table_scores[t.name] = 1.0;
    }
  } else {
    auto completion = gateway.complete(build_table_recall_prompt(schema, question, config));
    std::vector<std::vector<std::string>> samples;
    for (const auto& text : completion.texts) samples.push_back(parse_table_list(text, schema));
    std::map<std::string, int> hits;
    for (const auto& sample : samples) {
      for (std::size_t i = 0; i < std::min(k_tables, sample.size()); ++i) ++hits[sample[i]];
    }
    for (const auto& [name, count] : hits) {
      result.scores.table_scores[name] = count / static_cast<double>(samples.size());
    }
    try {
      linked_names = vote_table_sets(samples, config.k_tables);
    } catch (const LinkingFailure& e) {
      result.fell_back = true;
      result.note = std::string(e.what()) + "; using the first tables in schema order";
      spdlog::warn("question {}: {}", question.question_id, result.note);
      for (std::size_t i = 0; i < k_tables; ++i) linked_names.push_back(schema.tables[i].name);
    }
  }

  SchemaView candidates;
  candidates.db_id = schema.db_id;
  for (const auto& name : linked_names) {
    const Table* t = schema.find_table(name);
    TableView view{t->name, {}};
    for (const auto& c : t->columns) view.columns.push_back(c.name);
    candidates.tables.push_back(std::move(view));
  }
  candidates.foreign_keys = foreign_keys_within(schema, linked_names);

  auto completion = gateway.complete(build_column_recall_prompt(candidates, question, config));
  std::vector<ColumnMap> samples;
  for (const auto& text : completion.texts) samples.push_back(parse_column_dict(text, candidates));
  const auto k_columns = static_cast<std::size_t>(std::max(config.k_columns, 1));
  std::map<std::pair<std::string, std::string>, int> column_hits;
  for (const auto& sample : samples) {
    for (const auto& tc : sample) {
      for (std::size_t i = 0; i < std::min(k_columns, tc.columns.size()); ++i) {
        ++column_hits[{tc.table, tc.columns[i]}];
      }
    }
  }
  for (const auto& [key, count] : column_hits) {
    result.scores.column_scores[key] = count / static_cast<double>(samples.size());
  }

  result.linked.db_id = schema.db_id;
  for (auto& tc : vote_columns(samples, candidates, config.k_columns)) {
    result.linked.tables.push_back({std::move(tc.table), std::move(tc.columns)});
  }
  result.linked.foreign_keys = std::move(candidates.foreign_keys);
  return result;
}

json linking_to_json(const Question& question, const LinkingResult& result) {
  json tables = json::array();
  for (const auto& t : result.linked.tables) tables.push_back({{"name", t.name}, {"columns", t.columns}});
  json fks = json::array();
  for (const auto& fk : result.linked.foreign_keys) {
    fks.push_back({{"from_table", fk.from_table},
                   {"from_column", fk.from_column},
                   {"to_table", fk.to_table},
                   {"to_column", fk.to_column}});
  }
  json table_scores = json::array();
  for (const auto& [name, score] : result.scores.table_scores) {
    table_scores.push_back({{"table", name}, {"score", score}});
  }
  json column_scores = json::array();
  for (const auto& [key, score] : result.scores.column_scores) {
    column_scores.push_back({{"table", key.first}, {"column", key.second}, {"score", score}});
  }
  return {{"question_id", question.question_id},
          {"db_id", result.linked.db_id},
          {"fell_back", result.fell_back},
          {"note", result.note},
          {"linked", {{"tables", tables}, {"foreign_keys", fks}}},
          {"scores", {{"tables", table_scores}, {"columns", column_scores}}}};
}

LinkingResult linking_from_json(const json& j) {
  LinkingResult r;
  r.linked.db_id = j.at("db_id").get<std::string>();
  r.fell_back = j.value("fell_back", false);
  r.note = j.value("note", "");
  for (const auto& t : j.at("linked").at("tables")) {
    r.linked.tables.push_back(
        {t.at("name").get<std::string>(), t.at("columns").get<std::vector<std::string>>()});
  }
  for (const auto& fk : j.at("linked").at("foreign_keys")) {
    r.linked.foreign_keys.push_back({fk.at("from_table").get<std::string>(),
                                     fk.at("from_column").get<std::string>(),
                                     fk.at("to_table").get<std::string>(),
                                     fk.at("to_column").get<std::string>()});
  }
  for (const auto& s : j.at("scores").at("tables")) {
    r.scores.table_scores[s.at("table").get<std::string>()] = s.at("score").get<double>();
  }
  for (const auto& s : j.at("scores").at("columns")) {
    r.scores.column_scores[{s.at("table").get<std::string>(), s.at("column").get<std::string>()}] =
        s.at("score").get<double>();
  }
  return r;
}

}  // namespace c3sql
