#include "dlrepro/index/tokenizer.hpp"

#include <cctype>

namespace dlrepro::index {
namespace {

bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
bool is_lower(char c) { return std::islower(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// `HTTPServerError_v2` -> http, server, error, v2
void split_identifier(std::string_view ident, std::vector<std::string>& out) {
  std::size_t i = 0;
  while (i < ident.size()) {
    while (i < ident.size() && ident[i] == '_') ++i;
    std::size_t start = i;
    while (i < ident.size() && ident[i] != '_') {
      if (i > start) {
        char prev = ident[i - 1];
        char c = ident[i];
        bool lower_to_upper = is_upper(c) && (is_lower(prev) || std::isdigit(static_cast<unsigned char>(prev)));
        bool acronym_end = is_upper(c) && is_upper(prev) && i + 1 < ident.size() && is_lower(ident[i + 1]);
        if (lower_to_upper || acronym_end) break;
      }
      ++i;
    }
    if (i > start) out.push_back(lower(ident.substr(start, i - start)));
  }
}

}  // namespace

std::vector<std::string> tokenize_terms(std::string_view text) {
  std::vector<std::string> terms;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word(text[i])) {
      ++i;
      continue;
    }
    // A run of words joined by single dots, e.g. torch.nn.functional.relu
    std::vector<std::string_view> parts;
    std::size_t run_start = i;
    while (true) {
      std::size_t s = i;
      while (i < text.size() && is_word(text[i])) ++i;
      parts.push_back(text.substr(s, i - s));
      if (i + 1 < text.size() && text[i] == '.' && (is_alpha(text[i + 1]) || text[i + 1] == '_')) {
        ++i;
        continue;
      }
      break;
    }
    bool dotted = parts.size() > 1 && (is_alpha(parts.front()[0]) || parts.front()[0] == '_');
    if (dotted) terms.push_back(lower(text.substr(run_start, i - run_start)));
    for (auto p : parts) split_identifier(p, terms);
  }
  return terms;
}

std::map<std::string, int> count_terms(std::string_view text) {
  std::map<std::string, int> counts;
  for (auto& t : tokenize_terms(text)) ++counts[t];
  return counts;
}

}  // namespace dlrepro::index
