// Builds <out>/<name>/<name>.sqlite from every <sql_dir>/<name>.sql script.
// Existing databases are replaced.

#include <sqlite3.h>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "c3sql/text_util.h"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: seed_corpus <sql_dir> <database_dir>\n";
    return 2;
  }
  const fs::path sql_dir = argv[1];
  const fs::path out_dir = argv[2];

  std::vector<fs::path> scripts;
  for (const auto& entry : fs::directory_iterator(sql_dir)) {
    if (entry.path().extension() == ".sql") scripts.push_back(entry.path());
  }
  std::sort(scripts.begin(), scripts.end());

  for (const auto& script : scripts) {
    const auto name = script.stem().string();
    const auto target = out_dir / name / (name + ".sqlite");
    const auto staging = fs::path(target.string() + ".tmp");
    fs::create_directories(target.parent_path());
    fs::remove(staging);

    sqlite3* db = nullptr;
    if (sqlite3_open(staging.c_str(), &db) != SQLITE_OK) {
      std::cerr << "cannot create " << staging << ": " << sqlite3_errmsg(db) << "\n";
      sqlite3_close(db);
      return 1;
    }
    char* error = nullptr;
    auto sql = c3sql::text::read_file(script);
    int rc = sqlite3_exec(db, sql.c_str(), nullptr, nullptr, &error);
    sqlite3_close(db);
    if (rc != SQLITE_OK) {
      std::cerr << script << ": " << (error ? error : "unknown error") << "\n";
      sqlite3_free(error);
      fs::remove(staging);
      return 1;
    }
    fs::rename(staging, target);
  }
  std::cout << "seeded " << scripts.size() << " databases into " << out_dir << "\n";
  return 0;
}
