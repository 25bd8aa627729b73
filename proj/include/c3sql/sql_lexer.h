#pragma once

// Minimal SQL tokenizer: enough structure to find keywords and identifiers
// outside literals and comments. Not a parser.

#include <string_view>
#include <vector>

namespace c3sql {

struct SqlToken {
  enum class Kind {
    kWord,         // bare identifier or keyword
    kQuotedIdent,  // `x` or [x]; text excludes the delimiters
    kString,       // 'x' or "x"; text excludes the delimiters
    kNumber,
    kPunct,        // single character
  };
  Kind kind;
  std::string_view text;
  int depth;  // parenthesis depth at which the token starts
};

// Comments ("-- ..." and "/* ... */") are dropped. Unterminated literals
// run to end of input.
std::vector<SqlToken> tokenize_sql(std::string_view sql);

}  // namespace c3sql
