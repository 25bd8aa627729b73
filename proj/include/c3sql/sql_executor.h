#pragma once

// Read-only SQLite execution with a deadline and a row cap, plus the result
// equivalence used by consistency voting and execution accuracy.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

struct sqlite3;

namespace c3sql {

struct Blob {
  std::vector<std::uint8_t> bytes;
  friend bool operator==(const Blob&, const Blob&) = default;
};

using CellValue = std::variant<std::monostate, std::int64_t, double, std::string, Blob>;
using Row = std::vector<CellValue>;

inline constexpr double kRealTolerance = 1e-6;

// NULL == NULL; numbers (integer or real) within kRealTolerance; text and
// blobs byte-exact; anything else unequal.
bool cells_equivalent(const CellValue& a, const CellValue& b);

struct ResultTable {
  int column_count = 0;
  std::vector<Row> rows;
  bool order_sensitive = false;
};

struct SqlError {
  std::string message;
};
struct TimedOut {};
// More rows than the cap: never comparable, never votes.
struct RowOverflow {
  std::size_t row_cap = 0;
};

using ExecutionOutcome = std::variant<ResultTable, SqlError, TimedOut, RowOverflow>;

inline bool is_success(const ExecutionOutcome& o) { return std::holds_alternative<ResultTable>(o); }
std::string describe(const ExecutionOutcome& o);

struct ExecutionLimits {
  std::chrono::milliseconds timeout{5000};
  std::size_t row_cap = 10000;
};

// One read-only connection. Not shareable across threads; open one per
// worker and database.
class ReadOnlyDatabase {
 public:
  // Throws EnvironmentError when the file is missing or cannot be opened.
  explicit ReadOnlyDatabase(const std::filesystem::path& path);
  ~ReadOnlyDatabase();
  ReadOnlyDatabase(const ReadOnlyDatabase&) = delete;
  ReadOnlyDatabase& operator=(const ReadOnlyDatabase&) = delete;

  ExecutionOutcome execute(std::string_view sql, const ExecutionLimits& limits = {}) const;

 private:
  sqlite3* db_ = nullptr;
};

ExecutionOutcome execute_sql(const std::filesystem::path& db_path, std::string_view sql,
                             const ExecutionLimits& limits = {});

// Column counts must agree. When either side is order-sensitive rows are
// compared as sequences, otherwise as multisets.
bool results_equivalent(const ResultTable& a, const ResultTable& b);

// True iff ORDER BY appears at parenthesis depth zero, outside string
// literals, quoted identifiers and comments.
bool is_order_sensitive(std::string_view sql);

}  // namespace c3sql
