#include "test_support.h"

#include <sqlite3.h>
#include <stdlib.h>

#include <map>
#include <mutex>
#include <stdexcept>

namespace c3sql::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  std::string pattern = (fs::temp_directory_path() / "c3sql-test-XXXXXX").string();
  if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void make_db(const fs::path& path, std::string_view script) {
  fs::create_directories(path.parent_path());
  fs::remove(path);
  sqlite3* db = nullptr;
  if (sqlite3_open(path.c_str(), &db) != SQLITE_OK) {
    sqlite3_close(db);
    throw std::runtime_error("cannot create " + path.string());
  }
  char* error = nullptr;
  std::string sql(script);
  int rc = sqlite3_exec(db, sql.c_str(), nullptr, nullptr, &error);
  std::string message = error ? error : "";
  sqlite3_free(error);
  sqlite3_close(db);
  if (rc != SQLITE_OK) throw std::runtime_error("script failed: " + message);
}

const DatabaseSchema& mini_schema(std::string_view db_id) {
  static std::once_flag once;
  static Catalog catalog;
  std::call_once(once, [] {
    catalog = Catalog(load_spider_tables(mini_corpus_dir() / "tables.json", mini_db_dir()));
  });
  return catalog.at(db_id);
}

}  // namespace c3sql::testing
