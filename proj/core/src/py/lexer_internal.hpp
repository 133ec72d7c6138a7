#pragma once

#include <string_view>
#include <vector>

#include "dlrepro/py/token.hpp"

namespace dlrepro::py {

// Innermost unclosed bracket after a token was produced.
struct BracketState {
  char open_char = 0;
  int open_line = 0;
  int open_col = 0;
};

struct LexOutput {
  std::vector<Token> tokens;
  std::vector<BracketState> bracket_states;  // parallel to tokens
  bool ok = true;
  SyntaxDiagnostic error;  // lexical error found after the last token
  // True for errors the tokenizer raises eagerly (bad literals, stray closers);
  // these win over parser errors found earlier in the file.
  bool error_raises = false;
  BracketState error_bracket;  // innermost open bracket where lexing stopped
};

LexOutput lex(std::string_view source);

}  // namespace dlrepro::py
