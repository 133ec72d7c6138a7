#include "dlrepro/py/ast.hpp"

namespace dlrepro::py {

Node* Node::add(Role r, NodePtr child) {
  child->role = r;
  if (child->end_line > end_line) end_line = child->end_line;
  children.push_back(std::move(child));
  return children.back().get();
}

const Node* Node::first(Role r) const {
  for (const auto& c : children)
    if (c->role == r) return c.get();
  return nullptr;
}

std::vector<const Node*> Node::all(Role r) const {
  std::vector<const Node*> out;
  for (const auto& c : children)
    if (c->role == r) out.push_back(c.get());
  return out;
}

bool Node::is_statement() const {
  return kind >= NodeKind::FunctionDef && kind <= NodeKind::Continue;
}

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Module: return "module";
    case NodeKind::FunctionDef: return "function definition";
    case NodeKind::ClassDef: return "class definition";
    case NodeKind::Return: return "return";
    case NodeKind::Delete: return "del";
    case NodeKind::Assign: return "assignment";
    case NodeKind::AugAssign: return "augmented assignment";
    case NodeKind::AnnAssign: return "annotated assignment";
    case NodeKind::For: return "for";
    case NodeKind::While: return "while";
    case NodeKind::If: return "if";
    case NodeKind::With: return "with";
    case NodeKind::Raise: return "raise";
    case NodeKind::Try: return "try";
    case NodeKind::ExceptHandler: return "except";
    case NodeKind::Assert: return "assert";
    case NodeKind::Import: return "import";
    case NodeKind::ImportFrom: return "from import";
    case NodeKind::Global: return "global";
    case NodeKind::Nonlocal: return "nonlocal";
    case NodeKind::ExprStmt: return "expression statement";
    case NodeKind::Pass: return "pass";
    case NodeKind::Break: return "break";
    case NodeKind::Continue: return "continue";
    case NodeKind::BoolOp: return "expression";
    case NodeKind::NamedExpr: return "named expression";
    case NodeKind::BinOp: return "expression";
    case NodeKind::UnaryOp: return "expression";
    case NodeKind::Lambda: return "lambda";
    case NodeKind::IfExp: return "conditional expression";
    case NodeKind::Dict: return "dict literal";
    case NodeKind::Set: return "set display";
    case NodeKind::ListComp: return "list comprehension";
    case NodeKind::SetComp: return "set comprehension";
    case NodeKind::DictComp: return "dict comprehension";
    case NodeKind::GeneratorExp: return "generator expression";
    case NodeKind::Await: return "await expression";
    case NodeKind::Yield: return "yield expression";
    case NodeKind::YieldFrom: return "yield expression";
    case NodeKind::Compare: return "comparison";
    case NodeKind::Call: return "function call";
    case NodeKind::Constant: return "literal";
    case NodeKind::Attribute: return "attribute";
    case NodeKind::Subscript: return "subscript";
    case NodeKind::Starred: return "starred";
    case NodeKind::Name: return "name";
    case NodeKind::List: return "list";
    case NodeKind::Tuple: return "tuple";
    case NodeKind::Slice: return "slice";
    case NodeKind::Arguments: return "arguments";
    case NodeKind::Arg: return "argument";
    case NodeKind::Keyword: return "keyword";
    case NodeKind::Alias: return "alias";
    case NodeKind::WithItem: return "with item";
    case NodeKind::Comprehension: return "comprehension";
    case NodeKind::DictEntry: return "dict entry";
  }
  return "node";
}

std::string dotted_name(const Node& expr) {
  if (expr.kind == NodeKind::Name) return expr.name;
  if (expr.kind == NodeKind::Attribute) {
    const Node* base = expr.first(Role::Value);
    if (!base) return {};
    auto prefix = dotted_name(*base);
    if (prefix.empty()) return {};
    return prefix + "." + expr.name;
  }
  return {};
}

}  // namespace dlrepro::py
