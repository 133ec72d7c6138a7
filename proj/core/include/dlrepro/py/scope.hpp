#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dlrepro/py/ast.hpp"

namespace dlrepro::py {

struct NameUse {
  std::string name;
  int line = 0;
  int col = 0;
};

struct ImportRef {
  std::string module;  // dotted module path ("" for `from . import x` at level 1)
  std::string name;    // imported member for `from m import name`, empty for `import m`
  std::string bound;   // name bound in the importing scope
  int level = 0;       // leading dots of a relative import
  int line = 0;
};

enum class ArityProblem { TooManyPositional, MissingArgument, UnexpectedKeyword };

struct ArityIssue {
  ArityProblem problem;
  std::string function;
  std::string argument;  // parameter or keyword involved, if any
  int line = 0;
  int col = 0;
};

struct ModuleSymbols {
  std::vector<std::string> defined;  // names bound at module level, sorted
  std::vector<std::string> top_level_defs;  // module-level def/class names in source order
  std::vector<ImportRef> imports;
  std::vector<NameUse> free_names;  // loads bound nowhere in the module (builtins included)
  std::vector<NameUse> undefined;   // free names that are not builtins
  std::vector<ArityIssue> arity;
  bool star_import = false;  // `from m import *` makes `undefined` unreliable; it is left empty
};

/// Flow-insensitive scope analysis in the spirit of pyflakes: module, class,
/// function and comprehension scopes with global/nonlocal declarations.
/// Arity is checked only for calls to functions and classes defined at module level.
ModuleSymbols analyze(const Node& module);

bool is_builtin(std::string_view name);

/// True when the top-level package of `dotted` ships with CPython.
bool is_stdlib_module(std::string_view dotted);

}  // namespace dlrepro::py
