#include "dlrepro/util/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include "dlrepro/util/error.hpp"

namespace dlrepro::text {

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(s.substr(start));
      break;
    }
    lines.emplace_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::string slice_lines(std::string_view s, int first, int last) {
  std::size_t pos = 0;
  int line = 1;
  while (line < first && pos < s.size()) {
    auto nl = s.find('\n', pos);
    if (nl == std::string_view::npos) return {};
    pos = nl + 1;
    ++line;
  }
  std::size_t begin = pos;
  while (line <= last && pos < s.size()) {
    auto nl = s.find('\n', pos);
    if (nl == std::string_view::npos) {
      pos = s.size();
      break;
    }
    pos = nl + 1;
    ++line;
  }
  return std::string(s.substr(begin, pos - begin));
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool icontains(std::string_view haystack, std::string_view needle) {
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string dedent(std::string_view s) {
  auto lines = split_lines(s);
  std::size_t common = std::numeric_limits<std::size_t>::max();
  for (const auto& l : lines) {
    if (trim(l).empty()) continue;
    std::size_t n = 0;
    while (n < l.size() && (l[n] == ' ' || l[n] == '\t')) ++n;
    common = std::min(common, n);
  }
  if (common == std::numeric_limits<std::size_t>::max() || common == 0) return std::string(s);
  std::string out;
  for (const auto& l : lines) {
    out += l.size() >= common ? l.substr(common) : std::string(trim(l));
    out += '\n';
  }
  if (!s.empty() && s.back() != '\n' && !out.empty()) out.pop_back();
  return out;
}

std::string normalize_ws(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
    } else {
      if (space && !out.empty()) out += ' ';
      space = false;
      out += c;
    }
  }
  return out;
}

std::size_t approx_tokens(std::string_view s) {
  std::size_t words = 0;
  bool in_word = false;
  for (char c : s) {
    bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!ws && !in_word) ++words;
    in_word = !ws;
  }
  return static_cast<std::size_t>(std::ceil(static_cast<double>(words) * 1.3));
}

std::vector<std::string> numeric_literals(std::string_view s) {
  static const std::regex kNumber(R"((?:^|[^A-Za-z0-9_.])(\d+(?:\.\d+)?(?:[eE][-+]?\d+)?))");
  std::vector<std::string> out;
  std::string str(s);
  for (auto it = std::sregex_iterator(str.begin(), str.end(), kNumber); it != std::sregex_iterator();
       ++it) {
    out.push_back((*it)[1].str());
  }
  return out;
}

std::string render_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string, std::string>>& vars) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out += tmpl.substr(pos);
      break;
    }
    auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out += tmpl.substr(pos);
      break;
    }
    out += tmpl.substr(pos, open - pos);
    auto key = trim(tmpl.substr(open + 2, close - open - 2));
    bool found = false;
    for (const auto& [k, v] : vars) {
      if (k == key) {
        out += v;
        found = true;
        break;
      }
    }
    if (!found) out += tmpl.substr(open, close + 2 - open);
    pos = close + 2;
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write file: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace dlrepro::text
