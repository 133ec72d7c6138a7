#pragma once

#include <string_view>

#include "dlrepro/py/ast.hpp"
#include "dlrepro/py/token.hpp"

namespace dlrepro::py {

struct ParseResult {
  NodePtr module;  // null when !ok
  bool ok = false;
  SyntaxDiagnostic error;
};

/// Parses a Python 3 module. Reports the first syntax error only.
ParseResult parse(std::string_view source);

}  // namespace dlrepro::py
