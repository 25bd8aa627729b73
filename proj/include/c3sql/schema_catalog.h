#pragma once

// Spider-format schema and question ingestion, plus the two prompt layouts
// used to show a schema to the model.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace c3sql {

struct Column {
  std::string name;
  std::string declared_type;
};

struct Table {
  std::string name;
  std::vector<Column> columns;

  // Case-insensitive lookup; nullptr when absent.
  const Column* find_column(std::string_view column) const;
};

struct FkRelation {
  std::string from_table;
  std::string from_column;
  std::string to_table;
  std::string to_column;

  friend bool operator==(const FkRelation&, const FkRelation&) = default;
};

struct DatabaseSchema {
  std::string db_id;
  std::vector<Table> tables;
  std::vector<FkRelation> foreign_keys;
  std::filesystem::path sqlite_path;

  const Table* find_table(std::string_view table) const;

  // Throws IntegrityError naming db_id on the first violated invariant
  // (unique names, non-empty tables, resolvable and non-reflexive FKs).
  void validate() const;
};

enum class Difficulty { kEasy, kMedium, kHard, kExtra };

std::string_view to_string(Difficulty d);
std::optional<Difficulty> parse_difficulty(std::string_view label);

struct Question {
  std::string question_id;
  std::string db_id;
  std::string text;
  std::optional<std::string> gold_sql;
  std::optional<Difficulty> difficulty;
};

// Name-only projection of a schema: what a prompt shows. A full
// DatabaseSchema and a linked subset share this shape.
struct TableView {
  std::string name;
  std::vector<std::string> columns;

  friend bool operator==(const TableView&, const TableView&) = default;
};

struct SchemaView {
  std::string db_id;
  std::vector<TableView> tables;
  std::vector<FkRelation> foreign_keys;

  static SchemaView from(const DatabaseSchema& schema);
  friend bool operator==(const SchemaView&, const SchemaView&) = default;
};

// Reads a Spider tables.json. The "*" sentinel column is dropped and
// foreign-key column indices are resolved to names. Each schema's
// sqlite_path is <database_dir>/<db_id>/<db_id>.sqlite; database_dir
// defaults to a "database" directory next to the tables file.
std::vector<DatabaseSchema> load_spider_tables(const std::filesystem::path& path,
                                               const std::filesystem::path& database_dir = {});

// Reads a Spider question file (dev.json layout).
std::vector<Question> load_questions(const std::filesystem::path& path);

// Immutable db_id -> schema index shared by pipeline workers.
class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<DatabaseSchema> schemas);

  const DatabaseSchema& at(std::string_view db_id) const;  // throws IntegrityError
  const DatabaseSchema* find(std::string_view db_id) const;
  std::size_t size() const { return schemas_.size(); }

 private:
  std::map<std::string, DatabaseSchema, std::less<>> schemas_;
};

// How each "# table ( ... )" line is terminated.
enum class TableLineEnd {
  kNone,           // "# t ( a, b )"            recall and generation prompts
  kSemicolon,      // "# t ( a, b );"
  kStatementList,  // ";" after every table, "." after the last one
};

struct ClearLayoutOptions {
  TableLineEnd line_end = TableLineEnd::kNone;
  bool include_foreign_keys = true;
};

std::string clear_table_line(const TableView& table, std::string_view terminator = {});
std::string clear_foreign_key_line(const FkRelation& fk);

// One "# <table> ( <c1>, <c2> )" line per table in view order, then one
// "# <t1>.<c1> = <t2>.<c2>" line per foreign key. Every line ends in '\n'.
std::string serialize_clear_layout(const SchemaView& view, const ClearLayoutOptions& options = {});

// The run-on layout: instruction, question, "t : t.a , t.b | u : u.c",
// then "\nSELECT".
std::string serialize_complicated_layout(const SchemaView& view, const Question& question);

}  // namespace c3sql
