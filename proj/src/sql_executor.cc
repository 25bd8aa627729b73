#include "c3sql/sql_executor.h"

#include <sqlite3.h>

#include <algorithm>
#include <cmath>
#include <optional>

#include "c3sql/errors.h"
#include "c3sql/sql_lexer.h"
#include "c3sql/text_util.h"

namespace c3sql {

namespace fs = std::filesystem;

namespace {

std::optional<double> as_number(const CellValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::nullopt;
}

// Rank used only for sorting rows before a multiset comparison.
int type_rank(const CellValue& v) {
  if (std::holds_alternative<std::monostate>(v)) return 0;
  if (std::holds_alternative<std::int64_t>(v) || std::holds_alternative<double>(v)) return 1;
  if (std::holds_alternative<std::string>(v)) return 2;
  return 3;
}

// Numbers are bucketed at the tolerance so near-equal values sort together.
int compare_for_sort(const CellValue& a, const CellValue& b) {
  int ra = type_rank(a), rb = type_rank(b);
  if (ra != rb) return ra < rb ? -1 : 1;
  switch (ra) {
    case 1: {
      double qa = std::nearbyint(*as_number(a) / kRealTolerance);
      double qb = std::nearbyint(*as_number(b) / kRealTolerance);
      return qa < qb ? -1 : (qb < qa ? 1 : 0);
    }
    case 2: return std::get<std::string>(a).compare(std::get<std::string>(b));
    case 3: {
      const auto& x = std::get<Blob>(a).bytes;
      const auto& y = std::get<Blob>(b).bytes;
      if (x == y) return 0;
      return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end()) ? -1 : 1;
    }
    default: return 0;
  }
}

bool rows_equivalent(const Row& a, const Row& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!cells_equivalent(a[i], b[i])) return false;
  }
  return true;
}

std::vector<const Row*> sorted_rows(const ResultTable& t) {
  std::vector<const Row*> rows;
  rows.reserve(t.rows.size());
  for (const auto& r : t.rows) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const Row* x, const Row* y) {
    for (std::size_t i = 0; i < std::min(x->size(), y->size()); ++i) {
      int c = compare_for_sort((*x)[i], (*y)[i]);
      if (c != 0) return c < 0;
    }
    return x->size() < y->size();
  });
  return rows;
}

std::string_view skip_leading_comments(std::string_view sql) {
  while (true) {
    sql = text::trim(sql);
    if (sql.starts_with("--")) {
      auto nl = sql.find('\n');
      sql = nl == std::string_view::npos ? std::string_view{} : sql.substr(nl + 1);
    } else if (sql.starts_with("/*")) {
      auto end = sql.find("*/");
      sql = end == std::string_view::npos ? std::string_view{} : sql.substr(end + 2);
    } else {
      return sql;
    }
  }
}

struct Deadline {
  std::chrono::steady_clock::time_point at;
};

int progress_callback(void* arg) {
  const auto* d = static_cast<const Deadline*>(arg);
  return std::chrono::steady_clock::now() >= d->at ? 1 : 0;
}

struct StatementGuard {
  sqlite3_stmt* stmt = nullptr;
  ~StatementGuard() { sqlite3_finalize(stmt); }
};

}  // namespace

bool cells_equivalent(const CellValue& a, const CellValue& b) {
  if (std::holds_alternative<std::monostate>(a) || std::holds_alternative<std::monostate>(b)) {
    return std::holds_alternative<std::monostate>(a) && std::holds_alternative<std::monostate>(b);
  }
  const auto* ia = std::get_if<std::int64_t>(&a);
  const auto* ib = std::get_if<std::int64_t>(&b);
  if (ia && ib) return *ia == *ib;
  auto na = as_number(a);
  auto nb = as_number(b);
  if (na || nb) return na && nb && std::fabs(*na - *nb) <= kRealTolerance;
  if (const auto* sa = std::get_if<std::string>(&a)) {
    const auto* sb = std::get_if<std::string>(&b);
    return sb && *sa == *sb;
  }
  const auto* ba = std::get_if<Blob>(&a);
  const auto* bb = std::get_if<Blob>(&b);
  return ba && bb && *ba == *bb;
}

std::string describe(const ExecutionOutcome& o) {
  if (const auto* t = std::get_if<ResultTable>(&o)) {
    return "success (" + std::to_string(t->rows.size()) + " rows)";
  }
  if (const auto* e = std::get_if<SqlError>(&o)) return "sql error: " + e->message;
  if (std::holds_alternative<TimedOut>(o)) return "timeout";
  return "row overflow (cap " + std::to_string(std::get<RowOverflow>(o).row_cap) + ")";
}

ReadOnlyDatabase::ReadOnlyDatabase(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw EnvironmentError("database file not found: " + path.string());
  }
  int rc = sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READONLY | SQLITE_OPEN_NOMUTEX,
                           nullptr);
  if (rc != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : sqlite3_errstr(rc);
    sqlite3_close(db_);
    db_ = nullptr;
    throw EnvironmentError("cannot open " + path.string() + ": " + msg);
  }
  sqlite3_exec(db_, "PRAGMA query_only = 1", nullptr, nullptr, nullptr);
}

ReadOnlyDatabase::~ReadOnlyDatabase() { sqlite3_close(db_); }

ExecutionOutcome ReadOnlyDatabase::execute(std::string_view sql,
                                           const ExecutionLimits& limits) const {
  auto body = skip_leading_comments(sql);
  if (body.empty()) return SqlError{"empty statement"};
  if (!text::starts_with_keyword(body, "SELECT") && !text::starts_with_keyword(body, "WITH")) {
    return SqlError{"write statement refused"};
  }

  StatementGuard guard;
  const char* tail = nullptr;
  int rc = sqlite3_prepare_v2(db_, body.data(), static_cast<int>(body.size()), &guard.stmt, &tail);
  if (rc != SQLITE_OK) return SqlError{sqlite3_errmsg(db_)};
  if (!guard.stmt) return SqlError{"empty statement"};
  if (!sqlite3_stmt_readonly(guard.stmt)) return SqlError{"write statement refused"};
  std::string_view rest(tail, static_cast<std::size_t>(body.data() + body.size() - tail));
  auto residue = skip_leading_comments(rest);
  while (!residue.empty() && residue.front() == ';') {
    residue = skip_leading_comments(residue.substr(1));
  }
  if (!residue.empty()) return SqlError{"multiple statements are not allowed"};

  ResultTable table;
  table.column_count = sqlite3_column_count(guard.stmt);
  table.order_sensitive = is_order_sensitive(body);

  Deadline deadline{std::chrono::steady_clock::now() + limits.timeout};
  sqlite3_progress_handler(db_, 1000, progress_callback, &deadline);
  struct ProgressReset {
    sqlite3* db;
    ~ProgressReset() { sqlite3_progress_handler(db, 0, nullptr, nullptr); }
  } reset{db_};

  while (true) {
    rc = sqlite3_step(guard.stmt);
    if (rc == SQLITE_DONE) break;
    if (rc == SQLITE_INTERRUPT) return TimedOut{};
    if (rc != SQLITE_ROW) return SqlError{sqlite3_errmsg(db_)};
    if (table.rows.size() >= limits.row_cap) return RowOverflow{limits.row_cap};
    Row row;
    row.reserve(static_cast<std::size_t>(table.column_count));
    for (int c = 0; c < table.column_count; ++c) {
      switch (sqlite3_column_type(guard.stmt, c)) {
        case SQLITE_INTEGER: row.emplace_back(static_cast<std::int64_t>(sqlite3_column_int64(guard.stmt, c))); break;
        case SQLITE_FLOAT: row.emplace_back(sqlite3_column_double(guard.stmt, c)); break;
        case SQLITE_TEXT: {
          const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(guard.stmt, c));
          row.emplace_back(std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(guard.stmt, c))));
          break;
        }
        case SQLITE_BLOB: {
          const auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(guard.stmt, c));
          auto len = static_cast<std::size_t>(sqlite3_column_bytes(guard.stmt, c));
          row.emplace_back(Blob{std::vector<std::uint8_t>(p, p + len)});
          break;
        }
        default: row.emplace_back(std::monostate{}); break;
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

ExecutionOutcome execute_sql(const fs::path& db_path, std::string_view sql,
                             const ExecutionLimits& limits) {
  ReadOnlyDatabase db(db_path);
  return db.execute(sql, limits);
}

bool results_equivalent(const ResultTable& a, const ResultTable& b) {
  if (a.column_count != b.column_count) return false;
  if (a.rows.size() != b.rows.size()) return false;
  if (a.order_sensitive || b.order_sensitive) {
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      if (!rows_equivalent(a.rows[i], b.rows[i])) return false;
    }
    return true;
  }
  // Multiset comparison: sort both sides on a tolerance-bucketed key, then
  // compare pairwise. Values straddling a bucket edge in rows that also
  // differ elsewhere can be misjudged; SQL results essentially never do that.
  auto sa = sorted_rows(a);
  auto sb = sorted_rows(b);
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (!rows_equivalent(*sa[i], *sb[i])) return false;
  }
  return true;
}

bool is_order_sensitive(std::string_view sql) {
  auto tokens = tokenize_sql(sql);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const auto& next = tokens[i + 1];
    if (t.depth == 0 && t.kind == SqlToken::Kind::kWord && text::iequals(t.text, "ORDER") &&
        next.kind == SqlToken::Kind::kWord && text::iequals(next.text, "BY")) {
      return true;
    }
  }
  return false;
}

}  // namespace c3sql
