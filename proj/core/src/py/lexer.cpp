#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "dlrepro/py/token.hpp"
#include "lexer_internal.hpp"

namespace dlrepro::py {
namespace {

constexpr std::array<std::string_view, 24> kMultiCharOps = {
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=",
    ">=",  "==",  "!=",  "+=",  "-=",  "*=", "/=", "%=", "&=", "|=", "^=", "@=",
};
constexpr std::string_view kSingleCharOps = "+-*/%@&|^~<>()[]{},:.;=";

bool is_name_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_name_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

char closer_for(char open) {
  switch (open) {
    case '(': return ')';
    case '[': return ']';
    default: return '}';
  }
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  LexOutput run() {
    indents_.push_back(0);
    while (!failed_) {
      if (at_line_start_ && brackets_.empty()) {
        if (!handle_indentation()) break;
        if (failed_) break;
      }
      if (pos_ >= src_.size()) break;
      lex_one();
    }
    if (!failed_) finish();
    return std::move(out_);
  }

 private:
  struct OpenBracket {
    char ch;
    int line;
    int col;
  };

  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  void emit(TokenKind kind, std::string text, int line, int col, int end_line = 0) {
    Token t{kind, std::move(text), line, col, end_line ? end_line : line};
    out_.tokens.push_back(std::move(t));
    BracketState s;
    if (!brackets_.empty()) {
      s.open_char = brackets_.back().ch;
      s.open_line = brackets_.back().line;
      s.open_col = brackets_.back().col;
    }
    out_.bracket_states.push_back(s);
    if (kind != TokenKind::Newline && kind != TokenKind::Indent && kind != TokenKind::Dedent)
      line_has_tokens_ = true;
  }

  void fail(int line, int col, std::string kind, std::string message, bool raises = true) {
    failed_ = true;
    out_.ok = false;
    out_.error = SyntaxDiagnostic{line, col, std::move(kind), std::move(message)};
    out_.error_raises = raises;
    if (!brackets_.empty()) out_.error_bracket = {brackets_.back().ch, brackets_.back().line, brackets_.back().col};
  }

  // Measures indentation at the start of a logical line. Returns false at EOF.
  bool handle_indentation() {
    while (true) {
      int column = 0;
      std::size_t p = pos_;
      while (p < src_.size()) {
        char c = src_[p];
        if (c == ' ') {
          ++column;
        } else if (c == '\t') {
          column = (column / 8 + 1) * 8;
        } else if (c == '\f') {
          column = 0;
        } else {
          break;
        }
        ++p;
      }
      if (p >= src_.size()) {
        pos_ = p;
        return false;
      }
      char c = src_[p];
      if (c == '\n' || c == '#' || (c == '\r' && p + 1 < src_.size() && src_[p + 1] == '\n')) {
        // Blank or comment-only line: no indentation change, no NEWLINE token.
        pos_ = p;
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
        if (pos_ < src_.size()) {
          ++pos_;
          ++line_;
          line_start_ = pos_;
        }
        continue;
      }
      if (c == '\\' && p + 1 < src_.size() && src_[p + 1] == '\n') {
        // A continuation at the start of a line does not open an indented block.
        pos_ = p;
        at_line_start_ = false;
        return true;
      }
      pos_ = p;
      at_line_start_ = false;
      int col = static_cast<int>(pos_ - line_start_);
      if (column > indents_.back()) {
        indents_.push_back(column);
        emit(TokenKind::Indent, "", line_, col);
      } else {
        while (column < indents_.back()) {
          indents_.pop_back();
          emit(TokenKind::Dedent, "", line_, col);
        }
        if (column != indents_.back()) {
          fail(line_, col, "IndentationError", "unindent does not match any outer indentation level", false);
        }
      }
      return true;
    }
  }

  void newline_char() {
    ++pos_;
    ++line_;
    line_start_ = pos_;
  }

  void lex_one() {
    char c = peek();
    int col = static_cast<int>(pos_ - line_start_);
    if (c == ' ' || c == '\t' || c == '\f' || c == '\r') {
      ++pos_;
      return;
    }
    if (c == '#') {
      while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      return;
    }
    if (c == '\n') {
      if (brackets_.empty()) {
        if (line_has_tokens_) emit(TokenKind::Newline, "\n", line_, col);
        line_has_tokens_ = false;
        at_line_start_ = true;
      }
      newline_char();
      return;
    }
    if (c == '\\') {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && src_[p] == '\r') ++p;
      if (p < src_.size() && src_[p] == '\n') {
        pos_ = p;
        newline_char();
        if (pos_ >= src_.size()) fail(line_ - 1, col, "SyntaxError", "unexpected EOF while parsing", false);
        return;
      }
      fail(line_, col + 1, "SyntaxError", "unexpected character after line continuation character");
      return;
    }
    if (is_string_start()) {
      lex_string();
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
      lex_number();
      return;
    }
    if (is_name_start(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < src_.size() && is_name_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      emit(TokenKind::Name, std::string(src_.substr(start, pos_ - start)), line_, col);
      return;
    }
    for (auto op : kMultiCharOps) {
      if (src_.substr(pos_, op.size()) == op) {
        pos_ += op.size();
        emit(TokenKind::Op, std::string(op), line_, col);
        return;
      }
    }
    if (kSingleCharOps.find(c) != std::string_view::npos) {
      if (c == '(' || c == '[' || c == '{') {
        brackets_.push_back({c, line_, col});
      } else if (c == ')' || c == ']' || c == '}') {
        if (brackets_.empty()) {
          fail(line_, col, "SyntaxError", std::string("unmatched '") + c + "'");
          return;
        }
        auto open = brackets_.back();
        if (closer_for(open.ch) != c) {
          std::string msg = std::string("closing parenthesis '") + c +
                            "' does not match opening parenthesis '" + open.ch + "'";
          if (open.line != line_) msg += " on line " + std::to_string(open.line);
          fail(line_, col, "SyntaxError", msg);
          return;
        }
        brackets_.pop_back();
      }
      ++pos_;
      emit(TokenKind::Op, std::string(1, c), line_, col);
      return;
    }
    fail(line_, col, "SyntaxError", "invalid syntax", false);
  }

  bool is_string_start() const {
    std::size_t p = pos_;
    std::size_t n = 0;
    while (p < src_.size() && n < 2 && std::string_view("rRbBuUfF").find(src_[p]) != std::string_view::npos) {
      ++p;
      ++n;
    }
    return p < src_.size() && (src_[p] == '"' || src_[p] == '\'');
  }

  void lex_string() {
    int start_line = line_;
    int col = static_cast<int>(pos_ - line_start_);
    std::size_t start = pos_;
    while (src_[pos_] != '"' && src_[pos_] != '\'') ++pos_;
    char quote = src_[pos_];
    bool triple = peek(1) == quote && peek(2) == quote;
    pos_ += triple ? 3 : 1;
    while (true) {
      if (pos_ >= src_.size()) {
        int last_line = (!src_.empty() && src_.back() == '\n') ? line_ - 1 : line_;
        if (triple) {
          fail(start_line, col, "SyntaxError",
               "unterminated triple-quoted string literal (detected at line " + std::to_string(last_line) + ")");
        } else {
          fail(start_line, col, "SyntaxError",
               "unterminated string literal (detected at line " + std::to_string(last_line) + ")");
        }
        return;
      }
      char c = src_[pos_];
      if (c == '\\') {
        if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '\n') {
          ++pos_;
          newline_char();
        } else {
          pos_ += 2;
        }
        continue;
      }
      if (c == '\n') {
        if (!triple) {
          fail(start_line, col, "SyntaxError",
               "unterminated string literal (detected at line " + std::to_string(line_) + ")");
          return;
        }
        newline_char();
        continue;
      }
      if (c == quote) {
        if (!triple) {
          ++pos_;
          break;
        }
        if (peek(1) == quote && peek(2) == quote) {
          pos_ += 3;
          break;
        }
      }
      ++pos_;
    }
    emit(TokenKind::String, std::string(src_.substr(start, pos_ - start)), start_line, col, line_);
  }

  void lex_number() {
    int col = static_cast<int>(pos_ - line_start_);
    std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) ||
                                    (src_[pos_] == '_' && pos_ + 1 < src_.size() &&
                                     std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))))
        ++pos_;
    };
    if (peek() == '0' && std::string_view("xXoObB").find(peek(1)) != std::string_view::npos) {
      pos_ += 2;
      while (pos_ < src_.size() && (std::isxdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        ++pos_;
    } else {
      digits();
      std::string_view whole = src_.substr(start, pos_ - start);
      if (whole.size() > 1 && whole[0] == '0' && peek() != '.' && peek() != 'e' && peek() != 'E' &&
          peek() != 'j' && peek() != 'J' && whole.find_first_not_of("0_") != std::string_view::npos) {
        fail(line_, col, "SyntaxError",
             "leading zeros in decimal integer literals are not permitted; use an 0o prefix for octal integers");
        return;
      }
      if (peek() == '.') {
        ++pos_;
        digits();
      }
      if (peek() == 'e' || peek() == 'E') {
        std::size_t save = pos_;
        ++pos_;
        if (peek() == '+' || peek() == '-') ++pos_;
        if (std::isdigit(static_cast<unsigned char>(peek()))) {
          digits();
        } else {
          pos_ = save;
        }
      }
      if (peek() == 'j' || peek() == 'J') ++pos_;
    }
    if (is_name_start(static_cast<unsigned char>(peek()))) {
      fail(line_, col, "SyntaxError", "invalid decimal literal");
      return;
    }
    emit(TokenKind::Number, std::string(src_.substr(start, pos_ - start)), line_, col);
  }

  void finish() {
    if (!brackets_.empty()) {
      auto open = brackets_.back();
      fail(open.line, open.col, "SyntaxError", std::string("'") + open.ch + "' was never closed", false);
      return;
    }
    int col = static_cast<int>(pos_ - line_start_);
    if (line_has_tokens_) emit(TokenKind::Newline, "", line_, col);
    int end_line = (pos_ > line_start_) ? line_ : line_;
    while (indents_.size() > 1) {
      indents_.pop_back();
      emit(TokenKind::Dedent, "", end_line, 0);
    }
    emit(TokenKind::EndMarker, "", end_line, 0);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_start_ = 0;
  int line_ = 1;
  bool at_line_start_ = true;
  bool line_has_tokens_ = false;
  bool failed_ = false;
  std::vector<int> indents_;
  std::vector<OpenBracket> brackets_;
  LexOutput out_;
};

}  // namespace

LexOutput lex(std::string_view source) { return Lexer(source).run(); }

TokenizeResult tokenize(std::string_view source) {
  auto lexed = lex(source);
  return TokenizeResult{std::move(lexed.tokens), lexed.ok, lexed.error};
}

}  // namespace dlrepro::py
