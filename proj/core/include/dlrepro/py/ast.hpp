#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace dlrepro::py {

enum class NodeKind {
  Module,
  // statements
  FunctionDef, ClassDef, Return, Delete, Assign, AugAssign, AnnAssign, For, While, If, With,
  Raise, Try, ExceptHandler, Assert, Import, ImportFrom, Global, Nonlocal, ExprStmt, Pass, Break,
  Continue,
  // expressions
  BoolOp, NamedExpr, BinOp, UnaryOp, Lambda, IfExp, Dict, Set, ListComp, SetComp, DictComp,
  GeneratorExp, Await, Yield, YieldFrom, Compare, Call, Constant, Attribute, Subscript, Starred,
  Name, List, Tuple, Slice,
  // helpers
  Arguments, Arg, Keyword, Alias, WithItem, Comprehension, DictEntry,
};

/// Position of a child inside its parent.
enum class Role {
  None, Body, OrElse, FinalBody, Handler, Decorator, Target, Value, Test, Iter, Func, Arg, Keyword,
  Annotation, Default, Returns, Params, Base, Item, ContextExpr, OptionalVars, Elt, Key,
  Generator, Cond, SliceIndex, Lower, Upper, Step, Operand, Exc, Cause, Msg, Name, Type,
};

enum class Ctx { Load, Store, Del };

enum class ParamKind { PosOnly, Normal, VarArgs, KwOnly, KwArgs };

struct Node;
using NodePtr = std::unique_ptr<Node>;

/// Untyped AST node. The meaning of `name` and `text` depends on `kind`:
///  - Name: name = identifier          - Attribute: name = attr
///  - FunctionDef/ClassDef: name       - Arg: name, param_kind
///  - Keyword: name (empty for **kw)   - Alias: name = dotted module/name, text = asname
///  - ImportFrom: name = module, level = leading dots
///  - Constant: text = literal source  - BinOp/UnaryOp/BoolOp/AugAssign/Compare: text = operator(s)
///  - Global/Nonlocal: names in `names`
struct Node {
  NodeKind kind;
  Role role = Role::None;
  int line = 0;
  int col = 0;
  int end_line = 0;
  std::string name;
  std::string text;
  Ctx ctx = Ctx::Load;
  ParamKind param_kind = ParamKind::Normal;
  int level = 0;
  bool is_async = false;
  std::vector<std::string> names;
  std::vector<NodePtr> children;

  Node(NodeKind k, int ln, int c) : kind(k), line(ln), col(c), end_line(ln) {}

  Node* add(Role r, NodePtr child);
  const Node* first(Role r) const;
  std::vector<const Node*> all(Role r) const;
  bool is_statement() const;
};

std::string_view to_string(NodeKind kind);

/// Pre-order traversal. Return false from `visit` to skip a subtree.
template <typename F>
void walk(const Node& node, F&& visit) {
  if (!visit(node)) return;
  for (const auto& c : node.children) walk(*c, visit);
}

/// Dotted name for Name/Attribute chains (`a.b.c`), empty for anything else.
std::string dotted_name(const Node& expr);

}  // namespace dlrepro::py
