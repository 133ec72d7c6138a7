#pragma once

#include <string>
#include <vector>

namespace dlrepro::py {

enum class TokenKind { Name, Number, String, Op, Newline, Indent, Dedent, EndMarker };

struct Token {
  TokenKind kind;
  std::string text;
  int line = 0;      // 1-based start line
  int col = 0;       // 0-based start column
  int end_line = 0;  // last line the token touches (multi-line strings)
};

/// A syntax error positioned the way CPython reports it.
struct SyntaxDiagnostic {
  int line = 0;
  int col = 0;
  std::string kind;     // "SyntaxError" or "IndentationError"
  std::string message;
};

struct TokenizeResult {
  std::vector<Token> tokens;
  bool ok = true;
  SyntaxDiagnostic error;
};

/// Tokenizes Python 3 source, producing INDENT/DEDENT/NEWLINE tokens and
/// tracking bracket nesting. Stops at the first lexical error.
TokenizeResult tokenize(std::string_view source);

}  // namespace dlrepro::py
