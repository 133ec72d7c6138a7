#include "dlrepro/py/parser.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <utility>

#include "lexer_internal.hpp"

namespace dlrepro::py {
namespace {

constexpr std::array<std::string_view, 35> kKeywords = {
    "False", "None",   "True",    "and",      "as",     "assert", "async", "await", "break",
    "class", "continue", "def",   "del",      "elif",   "else",   "except", "finally", "for",
    "from",  "global", "if",      "import",   "in",     "is",     "lambda", "nonlocal", "not",
    "or",    "pass",   "raise",   "return",   "try",    "while",  "with",  "yield",
};

bool is_keyword(std::string_view s) {
  for (auto k : kKeywords)
    if (k == s) return true;
  return false;
}

struct ParseFailure {
  SyntaxDiagnostic diag;
  bool from_lexer = false;
};

constexpr std::array<std::string_view, 13> kAugOps = {"+=", "-=", "*=", "/=", "//=", "%=", "@=",
                                                      "&=", "|=", "^=", ">>=", "<<=", "**="};

class Parser {
 public:
  explicit Parser(LexOutput lexed) : lx_(std::move(lexed)) {}

  NodePtr parse_module() {
    auto mod = std::make_unique<Node>(NodeKind::Module, 1, 0);
    while (!at_kind(TokenKind::EndMarker)) {
      if (at_kind(TokenKind::Newline)) {
        advance();
        continue;
      }
      parse_statement(*mod, Role::Body);
    }
    mod->end_line = last_end_line_;
    return mod;
  }

 private:
  // ---- token access -------------------------------------------------------

  const Token& tok(std::size_t ahead = 0) {
    std::size_t i = pos_ + ahead;
    if (i > max_seen_) max_seen_ = i;
    if (i >= lx_.tokens.size()) {
      // Running into the lexer's stopping point surfaces its error.
      if (!lx_.ok) throw ParseFailure{lx_.error, true};
      return lx_.tokens.back();
    }
    return lx_.tokens[i];
  }

  bool at_kind(TokenKind k, std::size_t ahead = 0) { return tok(ahead).kind == k; }
  bool at_op(std::string_view op, std::size_t ahead = 0) {
    const auto& t = tok(ahead);
    return t.kind == TokenKind::Op && t.text == op;
  }
  bool at_kw(std::string_view kw, std::size_t ahead = 0) {
    const auto& t = tok(ahead);
    return t.kind == TokenKind::Name && t.text == kw;
  }

  const Token& advance() {
    const Token& t = tok();
    ++pos_;
    if (t.kind != TokenKind::Newline && t.kind != TokenKind::Indent && t.kind != TokenKind::Dedent &&
        t.kind != TokenKind::EndMarker)
      last_end_line_ = t.end_line;
    return t;
  }

  [[noreturn]] void error_at(const Token& t, const std::string& message,
                             const char* kind = "SyntaxError") {
    throw ParseFailure{{t.line, t.col, kind, message}};
  }

  static bool ends_expression(const Token& t) {
    if (t.kind == TokenKind::Number || t.kind == TokenKind::String) return true;
    if (t.kind == TokenKind::Name)
      return !is_keyword(t.text) || t.text == "None" || t.text == "True" || t.text == "False";
    return t.kind == TokenKind::Op && (t.text == ")" || t.text == "]" || t.text == "}");
  }

  static bool begins_operand(const Token& t) {
    if (t.kind == TokenKind::Number || t.kind == TokenKind::String) return true;
    if (t.kind == TokenKind::Name)
      return !is_keyword(t.text) || t.text == "None" || t.text == "True" || t.text == "False" ||
             t.text == "not" || t.text == "lambda" || t.text == "await";
    return t.kind == TokenKind::Op && t.text == "{";
  }

  [[noreturn]] void invalid() {
    const Token& t = tok();
    if (t.kind == TokenKind::Indent) error_at(t, "unexpected indent", "IndentationError");
    if (pos_ > 0 && pos_ < lx_.tokens.size()) {
      const Token& prev = lx_.tokens[pos_ - 1];
      bool nested = lx_.bracket_states[pos_ - 1].open_char != 0;
      if (!nested && pos_ - 1 == stmt_start_ && (prev.text == "print" || prev.text == "exec") &&
          begins_operand(t)) {
        error_at(prev, "Missing parentheses in call to '" + prev.text + "'. Did you mean " + prev.text + "(...)?");
      }
      if (ends_expression(prev) && begins_operand(t) &&
          !(prev.kind == TokenKind::Name && t.kind == TokenKind::String)) {
        if (nested) {
          // The second operand is parsed first so that a lexical error behind it still wins.
          int line = last_expr_line_;
          std::size_t save = pos_;
          try {
            parse_expression();
          } catch (const ParseFailure& f) {
            if (f.from_lexer) throw;
          }
          pos_ = save;
          throw ParseFailure{{line, prev.col, "SyntaxError", "invalid syntax. Perhaps you forgot a comma?"}};
        }
      }
    }
    error_at(t, "invalid syntax");
  }

  void expect_op(std::string_view op) {
    if (!at_op(op)) {
      if (op == ":") error_at(tok(), "expected ':'");
      invalid();
    }
    advance();
  }

  void expect_kw(std::string_view kw) {
    if (!at_kw(kw)) invalid();
    advance();
  }

  std::string expect_name() {
    const auto& t = tok();
    if (t.kind != TokenKind::Name || is_keyword(t.text)) invalid();
    advance();
    return t.text;
  }

  NodePtr make(NodeKind k, const Token& at) { return std::make_unique<Node>(k, at.line, at.col); }
  NodePtr make(NodeKind k, const Node& at) { return std::make_unique<Node>(k, at.line, at.col); }

  NodePtr finish(NodePtr n) {
    n->end_line = std::max(n->line, last_end_line_);
    return n;
  }

  // ---- statements ---------------------------------------------------------

  void parse_statement(Node& parent, Role role) {
    const Token& t = tok();
    if (t.kind == TokenKind::Indent) error_at(t, "unexpected indent", "IndentationError");
    if (t.kind == TokenKind::Name) {
      const auto& w = t.text;
      if (w == "def" || w == "class" || w == "if" || w == "while" || w == "for" || w == "try" ||
          w == "with" || (w == "async" && (at_kw("def", 1) || at_kw("for", 1) || at_kw("with", 1)))) {
        parent.add(role, parse_compound({}));
        return;
      }
      if (w == "match" && looks_like_match()) {
        parent.add(role, parse_match());
        return;
      }
    }
    if (at_op("@")) {
      std::vector<NodePtr> decorators;
      while (at_op("@")) {
        const Token& at = advance();
        auto dec = parse_named_expression();
        dec->role = Role::Decorator;
        (void)at;
        if (!at_kind(TokenKind::Newline)) invalid();
        advance();
        decorators.push_back(std::move(dec));
      }
      if (!(at_kw("def") || at_kw("class") || (at_kw("async") && at_kw("def", 1)))) invalid();
      parent.add(role, parse_compound(std::move(decorators)));
      return;
    }
    parse_simple_statements(parent, role);
  }

  void parse_simple_statements(Node& parent, Role role) {
    while (true) {
      parent.add(role, parse_simple_statement());
      if (at_op(";")) {
        advance();
        if (at_kind(TokenKind::Newline)) break;
        continue;
      }
      break;
    }
    if (!at_kind(TokenKind::Newline)) invalid();
    advance();
  }

  NodePtr parse_simple_statement() {
    stmt_start_ = pos_;
    const Token& t = tok();
    if (t.kind == TokenKind::Name) {
      const auto& w = t.text;
      if (w == "pass" || w == "break" || w == "continue") {
        advance();
        auto n = make(w == "pass" ? NodeKind::Pass : w == "break" ? NodeKind::Break : NodeKind::Continue, t);
        return finish(std::move(n));
      }
      if (w == "return") {
        auto n = make(NodeKind::Return, advance());
        if (!at_simple_end()) n->add(Role::Value, parse_star_expressions());
        return finish(std::move(n));
      }
      if (w == "raise") {
        auto n = make(NodeKind::Raise, advance());
        if (!at_simple_end()) {
          n->add(Role::Exc, parse_expression());
          if (at_kw("from")) {
            advance();
            n->add(Role::Cause, parse_expression());
          }
        }
        return finish(std::move(n));
      }
      if (w == "global" || w == "nonlocal") {
        auto n = make(w == "global" ? NodeKind::Global : NodeKind::Nonlocal, advance());
        n->names.push_back(expect_name());
        while (at_op(",")) {
          advance();
          n->names.push_back(expect_name());
        }
        return finish(std::move(n));
      }
      if (w == "del") {
        auto n = make(NodeKind::Delete, advance());
        auto targets = parse_star_expressions();
        check_assignable(*targets, TargetUse::Del);
        set_ctx(*targets, Ctx::Del);
        n->add(Role::Target, std::move(targets));
        return finish(std::move(n));
      }
      if (w == "assert") {
        auto n = make(NodeKind::Assert, advance());
        n->add(Role::Test, parse_expression());
        if (at_op(",")) {
          advance();
          n->add(Role::Msg, parse_expression());
        }
        return finish(std::move(n));
      }
      if (w == "import") return parse_import();
      if (w == "from") return parse_from_import();
    }
    return parse_expression_statement();
  }

  bool at_simple_end() { return at_kind(TokenKind::Newline) || at_op(";"); }

  NodePtr parse_import() {
    auto n = make(NodeKind::Import, advance());
    while (true) {
      const Token& at = tok();
      auto alias = make(NodeKind::Alias, at);
      alias->name = parse_dotted_name();
      if (at_kw("as")) {
        advance();
        alias->text = expect_name();
      }
      n->add(Role::Name, finish(std::move(alias)));
      if (!at_op(",")) break;
      advance();
    }
    return finish(std::move(n));
  }

  std::string parse_dotted_name() {
    std::string name = expect_name();
    while (at_op(".")) {
      advance();
      name += "." + expect_name();
    }
    return name;
  }

  NodePtr parse_from_import() {
    auto n = make(NodeKind::ImportFrom, advance());
    while (at_op(".") || at_op("...")) {
      n->level += at_op("...") ? 3 : 1;
      advance();
    }
    if (!at_kw("import")) n->name = parse_dotted_name();
    if (n->level == 0 && n->name.empty()) invalid();
    expect_kw("import");
    if (at_op("*")) {
      auto alias = make(NodeKind::Alias, advance());
      alias->name = "*";
      n->add(Role::Name, finish(std::move(alias)));
      return finish(std::move(n));
    }
    bool paren = at_op("(");
    if (paren) advance();
    while (true) {
      const Token& at = tok();
      auto alias = make(NodeKind::Alias, at);
      alias->name = expect_name();
      if (at_kw("as")) {
        advance();
        alias->text = expect_name();
      }
      n->add(Role::Name, finish(std::move(alias)));
      if (!at_op(",")) break;
      advance();
      if (paren && at_op(")")) break;
    }
    if (paren) expect_op(")");
    return finish(std::move(n));
  }

  NodePtr parse_expression_statement() {
    const Token& start = tok();
    NodePtr first = at_kw("yield") ? parse_yield() : parse_star_expressions();
    if (at_op("=")) {
      auto n = make(NodeKind::Assign, start);
      std::vector<NodePtr> items;
      items.push_back(std::move(first));
      while (at_op("=")) {
        advance();
        items.push_back(at_kw("yield") ? parse_yield() : parse_star_expressions());
      }
      for (std::size_t i = 0; i + 1 < items.size(); ++i) {
        check_assignable(*items[i], i == 0 ? TargetUse::FirstAssign : TargetUse::Assign);
        set_ctx(*items[i], Ctx::Store);
        n->add(Role::Target, std::move(items[i]));
      }
      n->add(Role::Value, std::move(items.back()));
      return finish(std::move(n));
    }
    if (tok().kind == TokenKind::Op) {
      for (auto op : kAugOps) {
        if (tok().text == op) {
          advance();
          auto n = make(NodeKind::AugAssign, start);
          n->text = std::string(op);
          check_assignable(*first, TargetUse::Aug);
          set_ctx(*first, Ctx::Store);
          n->add(Role::Target, std::move(first));
          n->add(Role::Value, at_kw("yield") ? parse_yield() : parse_star_expressions());
          return finish(std::move(n));
        }
      }
    }
    if (at_op(":")) {
      advance();
      auto n = make(NodeKind::AnnAssign, start);
      check_assignable(*first);
      set_ctx(*first, Ctx::Store);
      n->add(Role::Target, std::move(first));
      n->add(Role::Annotation, parse_expression());
      if (at_op("=")) {
        advance();
        n->add(Role::Value, at_kw("yield") ? parse_yield() : parse_star_expressions());
      }
      return finish(std::move(n));
    }
    auto n = make(NodeKind::ExprStmt, start);
    n->add(Role::Value, std::move(first));
    return finish(std::move(n));
  }

  enum class TargetUse { Assign, FirstAssign, Aug, Del, Bind };

  static std::string expr_name(const Node& n) {
    if (n.kind == NodeKind::Constant && (n.text == "None" || n.text == "True" || n.text == "False")) return n.text;
    if (n.kind == NodeKind::Constant && n.text == "...") return "ellipsis";
    return std::string(to_string(n.kind));
  }

  void check_assignable(const Node& target, TargetUse use = TargetUse::Bind) {
    auto fail = [&](const std::string& msg) { throw ParseFailure{{target.line, target.col, "SyntaxError", msg}}; };
    if (use == TargetUse::Aug) {
      if (target.kind != NodeKind::Name && target.kind != NodeKind::Attribute && target.kind != NodeKind::Subscript)
        fail("'" + expr_name(target) + "' is an illegal expression for augmented assignment");
      return;
    }
    switch (target.kind) {
      case NodeKind::Name:
      case NodeKind::Attribute:
      case NodeKind::Subscript:
        return;
      case NodeKind::Starred:
      case NodeKind::Tuple:
      case NodeKind::List:
        for (const auto& c : target.children)
          check_assignable(*c, use == TargetUse::FirstAssign ? TargetUse::Assign : use);
        return;
      default:
        break;
    }
    if (use == TargetUse::Del) fail("cannot delete " + expr_name(target));
    if (target.kind == NodeKind::Yield || target.kind == NodeKind::YieldFrom)
      fail("assignment to yield expression not possible");
    std::string what = expr_name(target);
    bool keyword_const = what == "None" || what == "True" || what == "False";
    if (use == TargetUse::FirstAssign && !keyword_const)
      fail("cannot assign to " + what + " here. Maybe you meant '==' instead of '='?");
    fail("cannot assign to " + what);
  }

  void set_ctx(Node& n, Ctx ctx) {
    switch (n.kind) {
      case NodeKind::Name:
      case NodeKind::Attribute:
      case NodeKind::Subscript:
        n.ctx = ctx;
        return;
      case NodeKind::Starred:
      case NodeKind::Tuple:
      case NodeKind::List:
        n.ctx = ctx;
        for (auto& c : n.children) set_ctx(*c, ctx);
        return;
      default:
        return;
    }
  }

  // Parses ':' followed by an indented block or same-line simple statements.
  void parse_block(Node& owner, Role role, const std::string& what, int header_line) {
    expect_op(":");
    if (at_kind(TokenKind::Newline)) {
      advance();
      if (!at_kind(TokenKind::Indent)) {
        error_at(tok(), "expected an indented block after " + what + " on line " + std::to_string(header_line),
                 "IndentationError");
      }
      advance();
      while (!at_kind(TokenKind::Dedent) && !at_kind(TokenKind::EndMarker)) {
        if (at_kind(TokenKind::Newline)) {
          advance();
          continue;
        }
        parse_statement(owner, role);
      }
      if (at_kind(TokenKind::Dedent)) advance();
    } else {
      parse_simple_statements(owner, role);
    }
  }

  NodePtr parse_compound(std::vector<NodePtr> decorators) {
    const Token& start = decorators.empty() ? tok() : tok();
    int first_line = decorators.empty() ? start.line : decorators.front()->line;
    bool is_async = false;
    if (at_kw("async")) {
      advance();
      is_async = true;
    }
    const Token& kw = tok();
    const std::string w = kw.text;
    int header_line = kw.line;
    NodePtr n;
    if (w == "def") {
      advance();
      n = make(NodeKind::FunctionDef, kw);
      n->name = expect_name();
      expect_op("(");
      n->add(Role::Params, parse_parameters(")", kw));
      expect_op(")");
      if (at_op("->")) {
        advance();
        n->add(Role::Returns, parse_expression());
      }
      for (auto& d : decorators) n->add(Role::Decorator, std::move(d));
      parse_block(*n, Role::Body, "function definition", header_line);
    } else if (w == "class") {
      advance();
      n = make(NodeKind::ClassDef, kw);
      n->name = expect_name();
      if (at_op("(")) {
        advance();
        parse_call_arguments(*n, Role::Base);
        expect_op(")");
      }
      for (auto& d : decorators) n->add(Role::Decorator, std::move(d));
      parse_block(*n, Role::Body, "class definition", header_line);
    } else if (w == "if") {
      n = parse_if_chain("if");
    } else if (w == "while") {
      advance();
      n = make(NodeKind::While, kw);
      n->add(Role::Test, parse_condition());
      parse_block(*n, Role::Body, "'while' statement", header_line);
      parse_else(*n);
    } else if (w == "for") {
      advance();
      n = make(NodeKind::For, kw);
      auto target = parse_target_list();
      n->add(Role::Target, std::move(target));
      expect_kw("in");
      n->add(Role::Iter, parse_star_expressions());
      parse_block(*n, Role::Body, "'for' statement", header_line);
      parse_else(*n);
    } else if (w == "with") {
      advance();
      n = make(NodeKind::With, kw);
      parse_with_items(*n);
      parse_block(*n, Role::Body, "'with' statement", header_line);
    } else if (w == "try") {
      advance();
      n = make(NodeKind::Try, kw);
      parse_block(*n, Role::Body, "'try' statement", header_line);
      bool any = false;
      while (at_kw("except")) {
        any = true;
        const Token& ex = advance();
        auto h = make(NodeKind::ExceptHandler, ex);
        if (!at_op(":")) {
          h->add(Role::Type, parse_expression());
          if (at_op(",")) {
            // `except A, B:` is a Python 2 form
            error_at(tok(), "multiple exception types must be parenthesized");
          }
          if (at_kw("as")) {
            advance();
            h->name = expect_name();
          }
        }
        parse_block(*h, Role::Body, "'except' statement", ex.line);
        n->add(Role::Handler, finish(std::move(h)));
      }
      if (at_kw("else") && any) {
        const Token& e = advance();
        parse_block(*n, Role::OrElse, "'else' statement", e.line);
      }
      if (at_kw("finally")) {
        any = true;
        const Token& f = advance();
        parse_block(*n, Role::FinalBody, "'finally' statement", f.line);
      }
      if (!any) error_at(tok(), "expected 'except' or 'finally' block");
    } else {
      invalid();
    }
    n->is_async = is_async;
    n->line = first_line;
    return finish(std::move(n));
  }

  NodePtr parse_if_chain(const char* kw_text) {
    const Token& kw = advance();
    auto n = make(NodeKind::If, kw);
    n->add(Role::Test, parse_condition());
    parse_block(*n, Role::Body, std::string("'") + kw_text + "' statement", kw.line);
    if (at_kw("elif")) {
      n->add(Role::OrElse, parse_if_chain("elif"));
    } else if (at_kw("else")) {
      const Token& e = advance();
      parse_block(*n, Role::OrElse, "'else' statement", e.line);
    }
    return finish(std::move(n));
  }

  void parse_else(Node& n) {
    if (at_kw("else")) {
      const Token& e = advance();
      parse_block(n, Role::OrElse, "'else' statement", e.line);
    }
  }

  void parse_with_items(Node& n) {
    if (at_op("(")) {
      // Try the parenthesized form `with (a as b, c):`; fall back to an expression.
      std::size_t save = pos_;
      int save_end = last_end_line_;
      try {
        advance();
        std::vector<NodePtr> items;
        while (!at_op(")")) {
          items.push_back(parse_with_item());
          if (!at_op(",")) break;
          advance();
        }
        expect_op(")");
        if (!at_op(":")) throw ParseFailure{};
        for (auto& i : items) n.add(Role::Item, std::move(i));
        return;
      } catch (const ParseFailure&) {
        pos_ = save;
        last_end_line_ = save_end;
      }
    }
    while (true) {
      n.add(Role::Item, parse_with_item());
      if (!at_op(",")) break;
      advance();
    }
  }

  NodePtr parse_with_item() {
    const Token& at = tok();
    auto item = make(NodeKind::WithItem, at);
    item->add(Role::ContextExpr, parse_expression());
    if (at_kw("as")) {
      advance();
      auto target = parse_target();
      check_assignable(*target);
      set_ctx(*target, Ctx::Store);
      item->add(Role::OptionalVars, std::move(target));
    }
    return finish(std::move(item));
  }

  bool looks_like_match() {
    // `match <subject>:` NEWLINE INDENT 'case' ...; anything else is an identifier use.
    const Token& next = tok(1);
    if (next.kind == TokenKind::Newline || next.kind == TokenKind::EndMarker) return false;
    if (next.kind == TokenKind::Op && next.text != "(" && next.text != "[" && next.text != "{" &&
        next.text != "-" && next.text != "*")
      return false;
    std::size_t i = pos_ + 1;
    int depth = 0;
    while (i < lx_.tokens.size()) {
      const auto& t = lx_.tokens[i];
      if (t.kind == TokenKind::Newline || t.kind == TokenKind::EndMarker) break;
      if (t.kind == TokenKind::Op && (t.text == "(" || t.text == "[" || t.text == "{")) ++depth;
      if (t.kind == TokenKind::Op && (t.text == ")" || t.text == "]" || t.text == "}")) --depth;
      ++i;
    }
    if (i < 1 || i >= lx_.tokens.size()) return false;
    const auto& last = lx_.tokens[i - 1];
    return depth == 0 && last.kind == TokenKind::Op && last.text == ":" && i + 2 < lx_.tokens.size() &&
           lx_.tokens[i + 1].kind == TokenKind::Indent && lx_.tokens[i + 2].kind == TokenKind::Name &&
           lx_.tokens[i + 2].text == "case";
  }

  // Loose structural pattern matching: patterns are parsed as expressions and
  // their bare names become stores.
  NodePtr parse_match() {
    const Token& kw = advance();
    auto n = make(NodeKind::If, kw);
    n->text = "match";
    n->add(Role::Test, parse_star_expressions());
    expect_op(":");
    if (!at_kind(TokenKind::Newline)) invalid();
    advance();
    if (!at_kind(TokenKind::Indent))
      error_at(tok(), "expected an indented block after 'match' statement on line " + std::to_string(kw.line),
               "IndentationError");
    advance();
    while (at_kw("case")) {
      const Token& c = advance();
      auto handler = make(NodeKind::ExceptHandler, c);
      handler->text = "case";
      auto pattern = parse_pattern();
      handler->add(Role::Type, std::move(pattern));
      if (at_kw("if")) {
        advance();
        handler->add(Role::Cond, parse_named_expression());
      }
      parse_block(*handler, Role::Body, "'case' statement", c.line);
      n->add(Role::Handler, finish(std::move(handler)));
      while (at_kind(TokenKind::Newline)) advance();
    }
    if (at_kind(TokenKind::Dedent)) {
      advance();
    } else {
      invalid();
    }
    return finish(std::move(n));
  }

  NodePtr parse_pattern() {
    // Patterns stop before a guard, so they are parsed at `|` precedence.
    const Token& start = tok();
    NodePtr p = parse_target();
    if (at_op(",")) {
      auto tuple = make(NodeKind::Tuple, start);
      tuple->add(Role::Elt, std::move(p));
      while (at_op(",")) {
        advance();
        if (at_op(":") || at_kw("if")) break;
        tuple->add(Role::Elt, parse_target());
      }
      p = finish(std::move(tuple));
    }
    mark_pattern_captures(*p);
    if (at_kw("as")) {
      advance();
      auto tuple = make(NodeKind::Tuple, *p);
      tuple->add(Role::Elt, std::move(p));
      auto cap = make(NodeKind::Name, tok());
      cap->name = expect_name();
      cap->ctx = Ctx::Store;
      tuple->add(Role::Elt, finish(std::move(cap)));
      return finish(std::move(tuple));
    }
    return p;
  }

  void mark_pattern_captures(Node& p) {
    if (p.kind == NodeKind::Name) {
      if (p.name != "_") p.ctx = Ctx::Store;
      return;
    }
    if (p.kind == NodeKind::Attribute) return;  // value pattern
    if (p.kind == NodeKind::Call) {
      for (auto& c : p.children)
        if (c->role != Role::Func) mark_pattern_captures(*c);
      return;
    }
    if (p.kind == NodeKind::DictEntry) {
      for (auto& c : p.children)
        if (c->role == Role::Value) mark_pattern_captures(*c);
      return;
    }
    for (auto& c : p.children) mark_pattern_captures(*c);
  }

  NodePtr parse_parameters(std::string_view closer, const Token& owner) {
    (void)owner;
    auto args = make(NodeKind::Arguments, tok());
    bool seen_star = false;
    bool seen_default = false;
    while (!at_op(closer)) {
      const Token& at = tok();
      auto arg = make(NodeKind::Arg, at);
      if (at_op("/")) {
        advance();
        for (auto& c : args->children) c->param_kind = ParamKind::PosOnly;
        if (!at_op(",")) break;
        advance();
        continue;
      }
      if (at_op("**")) {
        advance();
        arg->param_kind = ParamKind::KwArgs;
        arg->name = expect_name();
      } else if (at_op("*")) {
        advance();
        seen_star = true;
        if (at_op(",") || at_op(closer)) {
          // bare `*` separator
          if (at_op(",")) advance();
          continue;
        }
        arg->param_kind = ParamKind::VarArgs;
        arg->name = expect_name();
      } else {
        arg->param_kind = seen_star ? ParamKind::KwOnly : ParamKind::Normal;
        arg->name = expect_name();
      }
      if (closer == ")" && at_op(":")) {
        advance();
        arg->add(Role::Annotation, parse_expression());
      }
      if (at_op("=")) {
        advance();
        arg->add(Role::Default, parse_expression());
        if (arg->param_kind == ParamKind::Normal) seen_default = true;
      } else if (seen_default && arg->param_kind == ParamKind::Normal) {
        error_at(at, "non-default argument follows default argument");
      }
      for (const auto& prev : args->children)
        if (prev->name == arg->name)
          error_at(at, "duplicate argument '" + arg->name + "' in function definition");
      args->add(Role::Arg, finish(std::move(arg)));
      if (!at_op(",")) break;
      advance();
    }
    return finish(std::move(args));
  }

  // ---- expressions ---------------------------------------------------------

  NodePtr parse_yield() {
    const Token& kw = advance();
    if (at_kw("from")) {
      advance();
      auto n = make(NodeKind::YieldFrom, kw);
      n->add(Role::Value, parse_expression());
      return finish(std::move(n));
    }
    auto n = make(NodeKind::Yield, kw);
    if (!at_simple_end() && !at_op(")") && !at_op("=") && !at_op("]") && !at_op("}"))
      n->add(Role::Value, parse_star_expressions());
    return finish(std::move(n));
  }

  bool starts_expression() {
    const Token& t = tok();
    switch (t.kind) {
      case TokenKind::Name:
        return !is_keyword(t.text) || t.text == "None" || t.text == "True" || t.text == "False" ||
               t.text == "not" || t.text == "lambda" || t.text == "await" || t.text == "yield";
      case TokenKind::Number:
      case TokenKind::String:
        return true;
      case TokenKind::Op:
        return t.text == "(" || t.text == "[" || t.text == "{" || t.text == "-" || t.text == "+" ||
               t.text == "~" || t.text == "*" || t.text == "...";
      default:
        return false;
    }
  }

  NodePtr parse_star_expressions() {
    const Token& start = tok();
    auto first = parse_star_expression();
    if (!at_op(",")) return first;
    auto tuple = make(NodeKind::Tuple, start);
    tuple->add(Role::Elt, std::move(first));
    while (at_op(",")) {
      advance();
      if (!starts_expression()) break;
      tuple->add(Role::Elt, parse_star_expression());
    }
    return finish(std::move(tuple));
  }

  NodePtr parse_star_expression() {
    if (at_op("*")) {
      const Token& s = advance();
      auto n = make(NodeKind::Starred, s);
      n->add(Role::Value, parse_bitwise_or());
      return finish(std::move(n));
    }
    return parse_expression();
  }

  NodePtr parse_star_named_expression() {
    if (at_op("*")) {
      const Token& s = advance();
      auto n = make(NodeKind::Starred, s);
      n->add(Role::Value, parse_bitwise_or());
      return finish(std::move(n));
    }
    return parse_named_expression();
  }

  // Test of an if/elif/while header; catches `=` written for `==`.
  NodePtr parse_condition() {
    auto test = parse_named_expression();
    if (at_op("=") && !at_op("=", 1)) {
      if (test->kind == NodeKind::Name) error_at(tok(), "invalid syntax. Maybe you meant '==' or ':=' instead of '='?");
      bool plain = test->kind != NodeKind::List && test->kind != NodeKind::Tuple && test->kind != NodeKind::GeneratorExp &&
                   !(test->kind == NodeKind::Constant &&
                     (test->text == "True" || test->text == "False" || test->text == "None"));
      if (plain)
        throw ParseFailure{{test->line, test->col, "SyntaxError",
                            "cannot assign to " + expr_name(*test) + " here. Maybe you meant '==' instead of '='?"}};
    }
    return test;
  }

  NodePtr parse_named_expression() {
    if (tok().kind == TokenKind::Name && !is_keyword(tok().text) && at_op(":=", 1)) {
      const Token& t = advance();
      advance();
      auto n = make(NodeKind::NamedExpr, t);
      auto target = make(NodeKind::Name, t);
      target->name = t.text;
      target->ctx = Ctx::Store;
      n->add(Role::Target, std::move(target));
      n->add(Role::Value, parse_expression());
      return finish(std::move(n));
    }
    return parse_expression();
  }

  NodePtr parse_expression() {
    if (at_kw("lambda")) return parse_lambda();
    const Token& start = tok();
    auto body = parse_disjunction();
    if (at_kw("if")) {
      advance();
      auto n = make(NodeKind::IfExp, start);
      auto test = parse_disjunction();
      if (!at_kw("else")) error_at(tok(), "expected 'else' after 'if' expression");
      advance();
      auto orelse = parse_expression();
      n->add(Role::Body, std::move(body));
      n->add(Role::Test, std::move(test));
      n->add(Role::OrElse, std::move(orelse));
      return finish(std::move(n));
    }
    return body;
  }

  NodePtr parse_lambda() {
    const Token& kw = advance();
    auto n = make(NodeKind::Lambda, kw);
    n->add(Role::Params, parse_parameters(":", kw));
    expect_op(":");
    n->add(Role::Body, parse_expression());
    return finish(std::move(n));
  }

  NodePtr parse_disjunction() {
    const Token& start = tok();
    int start_line = start.line;
    auto left = parse_conjunction();
    last_expr_line_ = start_line;
    if (!at_kw("or")) return left;
    auto n = make(NodeKind::BoolOp, start);
    n->text = "or";
    n->add(Role::Operand, std::move(left));
    while (at_kw("or")) {
      advance();
      n->add(Role::Operand, parse_conjunction());
    }
    last_expr_line_ = start_line;
    return finish(std::move(n));
  }

  NodePtr parse_conjunction() {
    const Token& start = tok();
    auto left = parse_inversion();
    if (!at_kw("and")) return left;
    auto n = make(NodeKind::BoolOp, start);
    n->text = "and";
    n->add(Role::Operand, std::move(left));
    while (at_kw("and")) {
      advance();
      n->add(Role::Operand, parse_inversion());
    }
    return finish(std::move(n));
  }

  NodePtr parse_inversion() {
    if (at_kw("not")) {
      const Token& t = advance();
      auto n = make(NodeKind::UnaryOp, t);
      n->text = "not";
      n->add(Role::Operand, parse_inversion());
      return finish(std::move(n));
    }
    return parse_comparison();
  }

  bool at_comparison_op() {
    const Token& t = tok();
    if (t.kind == TokenKind::Op)
      return t.text == "==" || t.text == "!=" || t.text == "<" || t.text == "<=" || t.text == ">" ||
             t.text == ">=";
    if (t.kind == TokenKind::Name) return t.text == "in" || t.text == "is" || (t.text == "not" && at_kw("in", 1));
    return false;
  }

  NodePtr parse_comparison() {
    const Token& start = tok();
    auto left = parse_bitwise_or();
    if (!at_comparison_op()) return left;
    auto n = make(NodeKind::Compare, start);
    n->add(Role::Operand, std::move(left));
    while (at_comparison_op()) {
      std::string op = advance().text;
      if (op == "not") {
        advance();
        op = "not in";
      } else if (op == "is" && at_kw("not")) {
        advance();
        op = "is not";
      }
      if (!n->text.empty()) n->text += ",";
      n->text += op;
      n->add(Role::Operand, parse_bitwise_or());
    }
    return finish(std::move(n));
  }

  template <typename Next>
  NodePtr parse_binary(std::initializer_list<std::string_view> ops, Next next) {
    const Token& start = tok();
    auto left = (this->*next)();
    while (true) {
      const Token& t = tok();
      if (t.kind != TokenKind::Op) break;
      bool match = false;
      for (auto op : ops)
        if (t.text == op) match = true;
      if (!match) break;
      advance();
      auto n = make(NodeKind::BinOp, start);
      n->text = t.text;
      n->add(Role::Operand, std::move(left));
      n->add(Role::Operand, (this->*next)());
      left = finish(std::move(n));
    }
    return left;
  }

  NodePtr parse_bitwise_or() { return parse_binary({"|"}, &Parser::parse_bitwise_xor); }
  NodePtr parse_bitwise_xor() { return parse_binary({"^"}, &Parser::parse_bitwise_and); }
  NodePtr parse_bitwise_and() { return parse_binary({"&"}, &Parser::parse_shift); }
  NodePtr parse_shift() { return parse_binary({"<<", ">>"}, &Parser::parse_sum); }
  NodePtr parse_sum() { return parse_binary({"+", "-"}, &Parser::parse_term); }
  NodePtr parse_term() { return parse_binary({"*", "/", "//", "%", "@"}, &Parser::parse_factor); }

  NodePtr parse_factor() {
    if (at_op("+") || at_op("-") || at_op("~")) {
      const Token& t = advance();
      auto n = make(NodeKind::UnaryOp, t);
      n->text = t.text;
      n->add(Role::Operand, parse_factor());
      return finish(std::move(n));
    }
    return parse_power();
  }

  NodePtr parse_power() {
    const Token& start = tok();
    NodePtr base;
    if (at_kw("await")) {
      const Token& t = advance();
      base = make(NodeKind::Await, t);
      base->add(Role::Value, parse_primary());
      base = finish(std::move(base));
    } else {
      base = parse_primary();
    }
    if (at_op("**")) {
      advance();
      auto n = make(NodeKind::BinOp, start);
      n->text = "**";
      n->add(Role::Operand, std::move(base));
      n->add(Role::Operand, parse_factor());
      return finish(std::move(n));
    }
    return base;
  }

  NodePtr parse_primary() {
    auto node = parse_atom();
    while (true) {
      if (at_op(".")) {
        advance();
        auto n = make(NodeKind::Attribute, *node);
        n->name = expect_name();
        n->add(Role::Value, std::move(node));
        node = finish(std::move(n));
      } else if (at_op("(")) {
        advance();
        auto n = make(NodeKind::Call, *node);
        n->add(Role::Func, std::move(node));
        parse_call_arguments(*n, Role::Arg);
        expect_op(")");
        node = finish(std::move(n));
      } else if (at_op("[")) {
        advance();
        auto n = make(NodeKind::Subscript, *node);
        n->add(Role::Value, std::move(node));
        n->add(Role::SliceIndex, parse_slices());
        expect_op("]");
        node = finish(std::move(n));
      } else {
        break;
      }
    }
    return node;
  }

  void parse_call_arguments(Node& call, Role positional_role) {
    bool first = true;
    bool seen_keyword = false;
    bool seen_unpack = false;
    auto positional_ok = [&](const Token& at) {
      if (seen_unpack) error_at(at, "positional argument follows keyword argument unpacking");
      if (seen_keyword) error_at(at, "positional argument follows keyword argument");
    };
    while (!at_op(")")) {
      const Token& at = tok();
      if (at_op("**")) {
        seen_unpack = true;
        advance();
        auto kw = make(NodeKind::Keyword, at);
        kw->add(Role::Value, parse_expression());
        call.add(Role::Keyword, finish(std::move(kw)));
      } else if (at_op("*")) {
        if (seen_unpack) error_at(at, "iterable argument unpacking follows keyword argument unpacking");
        advance();
        auto st = make(NodeKind::Starred, at);
        st->add(Role::Value, parse_expression());
        call.add(positional_role, finish(std::move(st)));
      } else if (at.kind == TokenKind::Name && !is_keyword(at.text) && at_op("=", 1)) {
        seen_keyword = true;
        advance();
        advance();
        auto kw = make(NodeKind::Keyword, at);
        kw->name = at.text;
        kw->add(Role::Value, parse_expression());
        call.add(Role::Keyword, finish(std::move(kw)));
      } else {
        auto value = parse_named_expression();
        positional_ok(at);
        if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
          if (!first) error_at(tok(), "Generator expression must be parenthesized");
          auto gen = make(NodeKind::GeneratorExp, *value);
          gen->add(Role::Elt, std::move(value));
          parse_comprehension_clauses(*gen);
          call.add(positional_role, finish(std::move(gen)));
          if (!at_op(")")) error_at(tok(), "Generator expression must be parenthesized");
          break;
        }
        call.add(positional_role, std::move(value));
      }
      first = false;
      if (!at_op(",")) break;
      advance();
    }
  }

  NodePtr parse_slices() {
    const Token& start = tok();
    auto first = parse_slice();
    if (!at_op(",")) return first;
    auto tuple = make(NodeKind::Tuple, start);
    tuple->add(Role::Elt, std::move(first));
    while (at_op(",")) {
      advance();
      if (at_op("]")) break;
      tuple->add(Role::Elt, parse_slice());
    }
    return finish(std::move(tuple));
  }

  NodePtr parse_slice() {
    const Token& start = tok();
    NodePtr lower;
    if (!at_op(":")) {
      lower = parse_star_named_expression();
      if (!at_op(":")) return lower;
    }
    auto n = make(NodeKind::Slice, start);
    if (lower) n->add(Role::Lower, std::move(lower));
    advance();  // ':'
    if (!at_op(":") && !at_op("]") && !at_op(",")) n->add(Role::Upper, parse_expression());
    if (at_op(":")) {
      advance();
      if (!at_op("]") && !at_op(",")) n->add(Role::Step, parse_expression());
    }
    return finish(std::move(n));
  }

  NodePtr parse_atom() {
    const Token& t = tok();
    switch (t.kind) {
      case TokenKind::Name: {
        if (t.text == "None" || t.text == "True" || t.text == "False") {
          advance();
          auto n = make(NodeKind::Constant, t);
          n->text = t.text;
          return finish(std::move(n));
        }
        if (is_keyword(t.text)) invalid();
        advance();
        auto n = make(NodeKind::Name, t);
        n->name = t.text;
        return finish(std::move(n));
      }
      case TokenKind::Number: {
        advance();
        auto n = make(NodeKind::Constant, t);
        n->text = t.text;
        return finish(std::move(n));
      }
      case TokenKind::String: {
        auto n = make(NodeKind::Constant, t);
        while (at_kind(TokenKind::String)) {
          if (!n->text.empty()) n->text += ' ';
          n->text += advance().text;
        }
        return finish(std::move(n));
      }
      case TokenKind::Op:
        if (t.text == "(") return parse_paren();
        if (t.text == "[") return parse_list();
        if (t.text == "{") return parse_brace();
        if (t.text == "...") {
          advance();
          auto n = make(NodeKind::Constant, t);
          n->text = "...";
          return finish(std::move(n));
        }
        invalid();
      default:
        invalid();
    }
  }

  NodePtr parse_paren() {
    const Token& open = advance();
    if (at_op(")")) {
      advance();
      return finish(make(NodeKind::Tuple, open));
    }
    if (at_kw("yield")) {
      auto y = parse_yield();
      expect_op(")");
      return y;
    }
    auto first = parse_star_named_expression();
    if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
      auto gen = make(NodeKind::GeneratorExp, open);
      gen->add(Role::Elt, std::move(first));
      parse_comprehension_clauses(*gen);
      expect_op(")");
      return finish(std::move(gen));
    }
    if (at_op(")")) {
      advance();
      return first;
    }
    auto tuple = make(NodeKind::Tuple, open);
    tuple->add(Role::Elt, std::move(first));
    while (at_op(",")) {
      advance();
      if (at_op(")")) break;
      tuple->add(Role::Elt, parse_star_named_expression());
    }
    expect_op(")");
    return finish(std::move(tuple));
  }

  NodePtr parse_list() {
    const Token& open = advance();
    auto list = make(NodeKind::List, open);
    if (at_op("]")) {
      advance();
      return finish(std::move(list));
    }
    auto first = parse_star_named_expression();
    if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
      auto comp = make(NodeKind::ListComp, open);
      comp->add(Role::Elt, std::move(first));
      parse_comprehension_clauses(*comp);
      expect_op("]");
      return finish(std::move(comp));
    }
    list->add(Role::Elt, std::move(first));
    while (at_op(",")) {
      advance();
      if (at_op("]")) break;
      list->add(Role::Elt, parse_star_named_expression());
    }
    expect_op("]");
    return finish(std::move(list));
  }

  NodePtr parse_dict_entry() {
    const Token& at = tok();
    auto entry = make(NodeKind::DictEntry, at);
    if (at_op("**")) {
      advance();
      entry->add(Role::Value, parse_bitwise_or());
      return finish(std::move(entry));
    }
    entry->add(Role::Key, parse_expression());
    if (!at_op(":")) {
      if (at_op(",") || at_op("}")) invalid();
      throw ParseFailure{{entry->line, entry->col, "SyntaxError", "':' expected after dictionary key"}};
    }
    advance();
    entry->add(Role::Value, parse_expression());
    return finish(std::move(entry));
  }

  NodePtr parse_brace() {
    const Token& open = advance();
    if (at_op("}")) {
      advance();
      return finish(make(NodeKind::Dict, open));
    }
    if (at_op("**")) {
      auto dict = make(NodeKind::Dict, open);
      dict->add(Role::Elt, parse_dict_entry());
      while (at_op(",")) {
        advance();
        if (at_op("}")) break;
        dict->add(Role::Elt, parse_dict_entry());
      }
      expect_op("}");
      return finish(std::move(dict));
    }
    auto first = parse_star_named_expression();
    if (at_op(":")) {
      advance();
      auto entry = make(NodeKind::DictEntry, *first);
      entry->add(Role::Key, std::move(first));
      entry->add(Role::Value, parse_expression());
      entry = finish(std::move(entry));
      if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
        auto comp = make(NodeKind::DictComp, open);
        comp->add(Role::Elt, std::move(entry));
        parse_comprehension_clauses(*comp);
        expect_op("}");
        return finish(std::move(comp));
      }
      auto dict = make(NodeKind::Dict, open);
      dict->add(Role::Elt, std::move(entry));
      while (at_op(",")) {
        advance();
        if (at_op("}")) break;
        dict->add(Role::Elt, parse_dict_entry());
      }
      expect_op("}");
      return finish(std::move(dict));
    }
    if (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
      auto comp = make(NodeKind::SetComp, open);
      comp->add(Role::Elt, std::move(first));
      parse_comprehension_clauses(*comp);
      expect_op("}");
      return finish(std::move(comp));
    }
    auto set = make(NodeKind::Set, open);
    set->add(Role::Elt, std::move(first));
    while (at_op(",")) {
      advance();
      if (at_op("}")) break;
      set->add(Role::Elt, parse_star_named_expression());
    }
    expect_op("}");
    return finish(std::move(set));
  }

  void parse_comprehension_clauses(Node& comp) {
    while (at_kw("for") || (at_kw("async") && at_kw("for", 1))) {
      bool is_async = false;
      if (at_kw("async")) {
        advance();
        is_async = true;
      }
      const Token& kw = advance();
      auto gen = make(NodeKind::Comprehension, kw);
      gen->is_async = is_async;
      gen->add(Role::Target, parse_target_list());
      expect_kw("in");
      gen->add(Role::Iter, parse_disjunction());
      while (at_kw("if")) {
        advance();
        gen->add(Role::Cond, parse_disjunction());
      }
      comp.add(Role::Generator, finish(std::move(gen)));
    }
  }

  // Assignment targets for `for` and comprehensions: stops before `in`.
  NodePtr parse_target_list() {
    const Token& start = tok();
    auto first = parse_target();
    NodePtr result;
    if (at_op(",")) {
      auto tuple = make(NodeKind::Tuple, start);
      tuple->add(Role::Elt, std::move(first));
      while (at_op(",")) {
        advance();
        if (at_kw("in")) break;
        tuple->add(Role::Elt, parse_target());
      }
      result = finish(std::move(tuple));
    } else {
      result = std::move(first);
    }
    check_assignable(*result);
    set_ctx(*result, Ctx::Store);
    return result;
  }

  NodePtr parse_target() {
    if (at_op("*")) {
      const Token& s = advance();
      auto n = make(NodeKind::Starred, s);
      n->add(Role::Value, parse_bitwise_or());
      return finish(std::move(n));
    }
    return parse_bitwise_or();
  }

  LexOutput lx_;
  std::size_t pos_ = 0;
  std::size_t max_seen_ = 0;
  std::size_t stmt_start_ = 0;
  int last_end_line_ = 1;
  int last_expr_line_ = 1;

 public:
  // Line of the furthest token the parser looked at.
  int furthest_line() const {
    if (lx_.tokens.empty()) return 1;
    return lx_.tokens[std::min(max_seen_, lx_.tokens.size() - 1)].line;
  }
  const LexOutput& lexed() const { return lx_; }
};


// Statements that parse but are rejected at compile time.
class PlacementChecker {
 public:
  std::optional<SyntaxDiagnostic> run(const Node& module) {
    visit_body(module, false, false, false);
    return found_;
  }

 private:
  void report(const Node& n, const char* msg) {
    if (!found_) found_ = SyntaxDiagnostic{n.line, n.col, "SyntaxError", msg};
  }

  void visit_body(const Node& n, bool in_func, bool in_async, bool in_loop) {
    for (const auto& c : n.children) visit(*c, in_func, in_async, in_loop);
  }

  void visit(const Node& n, bool in_func, bool in_async, bool in_loop) {
    if (found_) return;
    switch (n.kind) {
      case NodeKind::FunctionDef:
        for (const auto& c : n.children) {
          if (c->role == Role::Body) visit(*c, true, n.is_async, false);
          else visit(*c, in_func, in_async, in_loop);
        }
        return;
      case NodeKind::Lambda:
        for (const auto& c : n.children) visit(*c, true, false, false);
        return;
      case NodeKind::ClassDef:
        for (const auto& c : n.children) {
          if (c->role == Role::Body) visit(*c, false, false, false);
          else visit(*c, in_func, in_async, in_loop);
        }
        return;
      case NodeKind::For:
      case NodeKind::While:
        for (const auto& c : n.children) visit(*c, in_func, in_async, c->role == Role::Body || (in_loop && c->role == Role::OrElse));
        return;
      case NodeKind::Return:
        if (!in_func) report(n, "'return' outside function");
        break;
      case NodeKind::Break:
        if (!in_loop) report(n, "'break' outside loop");
        break;
      case NodeKind::Continue:
        if (!in_loop) report(n, "'continue' not properly in loop");
        break;
      case NodeKind::Yield:
      case NodeKind::YieldFrom:
        if (!in_func) report(n, "'yield' outside function");
        break;
      case NodeKind::Nonlocal:
        if (!in_func) report(n, "nonlocal declaration not allowed at module level");
        break;
      case NodeKind::Await:
        if (!in_func) report(n, "'await' outside function");
        else if (!in_async) report(n, "'await' outside async function");
        break;
      default:
        break;
    }
    visit_body(n, in_func, in_async, in_loop);
  }

  std::optional<SyntaxDiagnostic> found_;
};

std::optional<SyntaxDiagnostic> check_placement(const Node& module) { return PlacementChecker().run(module); }

}  // namespace

ParseResult parse(std::string_view source) {
  ParseResult result;
  auto lexed = lex(source);
  if (lexed.tokens.empty() && !lexed.ok) {
    result.error = lexed.error;
    return result;
  }
  Parser parser(std::move(lexed));
  try {
    result.module = parser.parse_module();
  } catch (const ParseFailure& failure) {
    result.error = failure.diag;
    const auto& lx = parser.lexed();
    if (!failure.from_lexer && !lx.ok) {
      // Mirror CPython: after a parser error the rest of the file is still
      // tokenized, and some tokenizer errors take precedence.
      if (lx.error_raises) {
        result.error = lx.error;
      } else if (lx.error_bracket.open_char != 0 && parser.furthest_line() > lx.error_bracket.open_line) {
        result.error = {lx.error_bracket.open_line, lx.error_bracket.open_col, "SyntaxError",
                        std::string("'") + lx.error_bracket.open_char + "' was never closed"};
      }
    }
    return result;
  }
  if (auto misplaced = check_placement(*result.module)) {
    result.error = *misplaced;
    result.module.reset();
    return result;
  }
  result.ok = true;
  return result;
}
}  // namespace dlrepro::py
