#include "c3sql/schema_catalog.h"

#include <fstream>
#include <set>

#include "c3sql/errors.h"
#include "c3sql/text_util.h"
#include "json.hpp"

namespace c3sql {

namespace fs = std::filesystem;
using nlohmann::json;

const Column* Table::find_column(std::string_view column) const {
  for (const auto& c : columns) {
    if (text::iequals(c.name, column)) return &c;
  }
  return nullptr;
}

const Table* DatabaseSchema::find_table(std::string_view table) const {
  for (const auto& t : tables) {
    if (text::iequals(t.name, table)) return &t;
  }
  return nullptr;
}

void DatabaseSchema::validate() const {
  auto fail = [&](const std::string& why) {
    throw IntegrityError("schema " + db_id + ": " + why);
  };
  std::set<std::string> table_names;
  for (const auto& t : tables) {
    if (text::trim(t.name).empty()) fail("table with empty name");
    if (!table_names.insert(text::to_lower(t.name)).second) fail("duplicate table " + t.name);
    if (t.columns.empty()) fail("table " + t.name + " has no columns");
    std::set<std::string> column_names;
    for (const auto& c : t.columns) {
      if (text::trim(c.name).empty()) fail("table " + t.name + " has a column with empty name");
      if (!column_names.insert(text::to_lower(c.name)).second) {
        fail("duplicate column " + t.name + "." + c.name);
      }
    }
  }
  for (const auto& fk : foreign_keys) {
    const Table* from = find_table(fk.from_table);
    const Table* to = find_table(fk.to_table);
    if (!from || !from->find_column(fk.from_column) || !to || !to->find_column(fk.to_column)) {
      fail("foreign key " + fk.from_table + "." + fk.from_column + " -> " + fk.to_table + "." +
           fk.to_column + " names a missing endpoint");
    }
    if (text::iequals(fk.from_table, fk.to_table) && text::iequals(fk.from_column, fk.to_column)) {
      fail("foreign key " + fk.from_table + "." + fk.from_column + " references itself");
    }
  }
}

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kMedium: return "medium";
    case Difficulty::kHard: return "hard";
    case Difficulty::kExtra: return "extra";
  }
  return "unknown";
}

std::optional<Difficulty> parse_difficulty(std::string_view label) {
  auto l = text::to_lower(text::trim(label));
  if (l == "easy") return Difficulty::kEasy;
  if (l == "medium") return Difficulty::kMedium;
  if (l == "hard") return Difficulty::kHard;
  if (l == "extra" || l == "extra hard") return Difficulty::kExtra;
  return std::nullopt;
}

SchemaView SchemaView::from(const DatabaseSchema& schema) {
  SchemaView view;
  view.db_id = schema.db_id;
  for (const auto& t : schema.tables) {
    TableView tv{t.name, {}};
    for (const auto& c : t.columns) tv.columns.push_back(c.name);
    view.tables.push_back(std::move(tv));
  }
  view.foreign_keys = schema.foreign_keys;
  return view;
}

namespace {

json parse_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EnvironmentError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": malformed JSON at byte " + std::to_string(e.byte) + ": " +
                         e.what(),
                     e.byte);
  }
}

DatabaseSchema parse_descriptor(const json& d, const fs::path& database_dir) {
  DatabaseSchema schema;
  schema.db_id = d.at("db_id").get<std::string>();
  auto fail = [&](const std::string& why) {
    throw IntegrityError("schema " + schema.db_id + ": " + why);
  };

  for (const auto& name : d.at("table_names_original")) {
    schema.tables.push_back(Table{name.get<std::string>(), {}});
  }

  const auto& columns = d.at("column_names_original");
  const json types = d.value("column_types", json::array());
  // Global column index -> (table index, position within table); -1 for "*".
  std::vector<std::pair<int, std::size_t>> column_slots;
  column_slots.reserve(columns.size());
  for (std::size_t i = 0; i < columns.size(); ++i) {
    int table_index = columns[i].at(0).get<int>();
    auto name = columns[i].at(1).get<std::string>();
    if (table_index < 0) {
      column_slots.emplace_back(-1, 0);
      continue;
    }
    if (static_cast<std::size_t>(table_index) >= schema.tables.size()) {
      fail("column " + name + " refers to table index " + std::to_string(table_index));
    }
    auto& table = schema.tables[static_cast<std::size_t>(table_index)];
    std::string type = i < types.size() ? types[i].get<std::string>() : std::string{};
    column_slots.emplace_back(table_index, table.columns.size());
    table.columns.push_back(Column{std::move(name), std::move(type)});
  }

  auto resolve = [&](const json& index_json) -> std::pair<const Table*, const Column*> {
    auto idx = index_json.get<long long>();
    if (idx < 0 || static_cast<std::size_t>(idx) >= column_slots.size() ||
        column_slots[static_cast<std::size_t>(idx)].first < 0) {
      fail("foreign key refers to dangling column index " + std::to_string(idx));
    }
    auto [ti, ci] = column_slots[static_cast<std::size_t>(idx)];
    const auto& table = schema.tables[static_cast<std::size_t>(ti)];
    return {&table, &table.columns[ci]};
  };

  for (const auto& pair : d.value("foreign_keys", json::array())) {
    if (!pair.is_array() || pair.size() != 2) fail("foreign key entry is not a column-index pair");
    auto [from_t, from_c] = resolve(pair[0]);
    auto [to_t, to_c] = resolve(pair[1]);
    schema.foreign_keys.push_back({from_t->name, from_c->name, to_t->name, to_c->name});
  }

  schema.sqlite_path = database_dir / schema.db_id / (schema.db_id + ".sqlite");
  schema.validate();
  return schema;
}

}  // namespace

std::vector<DatabaseSchema> load_spider_tables(const fs::path& path, const fs::path& database_dir) {
  json doc = parse_json_file(path);
  if (!doc.is_array()) throw ParseError(path.string() + ": expected a JSON array", 0);
  fs::path db_dir = database_dir.empty() ? path.parent_path() / "database" : database_dir;

  std::vector<DatabaseSchema> schemas;
  schemas.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    try {
      schemas.push_back(parse_descriptor(doc[i], db_dir));
    } catch (const json::exception& e) {
      std::string id = doc[i].is_object() ? doc[i].value("db_id", "#" + std::to_string(i))
                                          : "#" + std::to_string(i);
      throw IntegrityError("schema " + id + ": " + e.what());
    }
  }
  return schemas;
}

std::vector<Question> load_questions(const fs::path& path) {
  json doc = parse_json_file(path);
  if (!doc.is_array()) throw ParseError(path.string() + ": expected a JSON array", 0);

  std::vector<Question> questions;
  questions.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    auto field = [&](const char* key) -> std::string {
      if (!rec.is_object() || !rec.contains(key) || !rec[key].is_string()) {
        throw IntegrityError(path.string() + ": record " + std::to_string(i) +
                             " is missing string field '" + key + "'");
      }
      return rec[key].get<std::string>();
    };
    Question q;
    q.text = field("question");
    q.db_id = field("db_id");
    if (rec.contains("question_id")) {
      const auto& id = rec["question_id"];
      q.question_id = id.is_string() ? id.get<std::string>() : id.dump();
    } else {
      q.question_id = std::to_string(i);
    }
    if (rec.contains("query") && rec["query"].is_string()) q.gold_sql = rec["query"].get<std::string>();
    for (const char* key : {"difficulty", "hardness"}) {
      if (rec.contains(key) && rec[key].is_string()) {
        q.difficulty = parse_difficulty(rec[key].get<std::string>());
        break;
      }
    }
    questions.push_back(std::move(q));
  }
  return questions;
}

Catalog::Catalog(std::vector<DatabaseSchema> schemas) {
  for (auto& s : schemas) {
    auto id = s.db_id;
    if (!schemas_.emplace(id, std::move(s)).second) {
      throw IntegrityError("duplicate db_id " + id);
    }
  }
}

const DatabaseSchema* Catalog::find(std::string_view db_id) const {
  auto it = schemas_.find(db_id);
  return it == schemas_.end() ? nullptr : &it->second;
}

const DatabaseSchema& Catalog::at(std::string_view db_id) const {
  if (const auto* s = find(db_id)) return *s;
  throw IntegrityError("unknown db_id " + std::string(db_id));
}

std::string clear_table_line(const TableView& table, std::string_view terminator) {
  std::string line = "# " + table.name + " ( " + text::join(table.columns, ", ") + " )";
  line += terminator;
  return line;
}

std::string clear_foreign_key_line(const FkRelation& fk) {
  return "# " + fk.from_table + "." + fk.from_column + " = " + fk.to_table + "." + fk.to_column;
}

std::string serialize_clear_layout(const SchemaView& view, const ClearLayoutOptions& options) {
  std::string out;
  for (std::size_t i = 0; i < view.tables.size(); ++i) {
    std::string_view end;
    switch (options.line_end) {
      case TableLineEnd::kNone: break;
      case TableLineEnd::kSemicolon: end = ";"; break;
      case TableLineEnd::kStatementList: end = i + 1 == view.tables.size() ? "." : ";"; break;
    }
    out += clear_table_line(view.tables[i], end);
    out += '\n';
  }
  if (options.include_foreign_keys) {
    for (const auto& fk : view.foreign_keys) {
      out += clear_foreign_key_line(fk);
      out += '\n';
    }
  }
  return out;
}

std::string serialize_complicated_layout(const SchemaView& view, const Question& question) {
  std::vector<std::string> segments;
  for (const auto& t : view.tables) {
    std::vector<std::string> qualified;
    for (const auto& c : t.columns) qualified.push_back(t.name + "." + c);
    segments.push_back(t.name + " : " + text::join(qualified, " , "));
  }
  return "Complete sqlite SQL query only and with no explanation. " + question.text +
         " Sqlite SQL tables, with their properties: " + text::join(segments, " | ") + "\nSELECT";
}

}  // namespace c3sql
