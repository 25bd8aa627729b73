#include "c3sql/sql_lexer.h"

#include <cctype>

#include "c3sql/text_util.h"

namespace c3sql {

std::vector<SqlToken> tokenize_sql(std::string_view sql) {
  std::vector<SqlToken> tokens;
  int depth = 0;
  std::size_t i = 0;
  const std::size_t n = sql.size();

  // Scans a literal delimited by `close`, where a doubled close is an escape.
  auto scan_quoted = [&](char close, SqlToken::Kind kind) {
    std::size_t start = i + 1;
    std::size_t j = start;
    while (j < n) {
      if (sql[j] == close) {
        if (close != ']' && j + 1 < n && sql[j + 1] == close) {
          j += 2;
          continue;
        }
        break;
      }
      ++j;
    }
    tokens.push_back({kind, sql.substr(start, j - start), depth});
    i = j < n ? j + 1 : n;
  };

  while (i < n) {
    char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '-' && i + 1 < n && sql[i + 1] == '-') {
      while (i < n && sql[i] != '\n') ++i;
    } else if (c == '/' && i + 1 < n && sql[i + 1] == '*') {
      auto end = sql.find("*/", i + 2);
      i = end == std::string_view::npos ? n : end + 2;
    } else if (c == '\'' || c == '"') {
      scan_quoted(c, SqlToken::Kind::kString);
    } else if (c == '`') {
      scan_quoted('`', SqlToken::Kind::kQuotedIdent);
    } else if (c == '[') {
      scan_quoted(']', SqlToken::Kind::kQuotedIdent);
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(sql[i + 1])))) {
      std::size_t j = i;
      while (j < n && (std::isalnum(static_cast<unsigned char>(sql[j])) || sql[j] == '.')) ++j;
      tokens.push_back({SqlToken::Kind::kNumber, sql.substr(i, j - i), depth});
      i = j;
    } else if (text::is_identifier_char(c) || static_cast<unsigned char>(c) >= 0x80) {
      std::size_t j = i;
      while (j < n && (text::is_identifier_char(sql[j]) || sql[j] == '$' ||
                       static_cast<unsigned char>(sql[j]) >= 0x80)) {
        ++j;
      }
      tokens.push_back({SqlToken::Kind::kWord, sql.substr(i, j - i), depth});
      i = j;
    } else {
      if (c == ')' && depth > 0) --depth;
      tokens.push_back({SqlToken::Kind::kPunct, sql.substr(i, 1), depth});
      if (c == '(') ++depth;
      ++i;
    }
  }
  return tokens;
}

}  // namespace c3sql
