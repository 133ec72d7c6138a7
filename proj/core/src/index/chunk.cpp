#include "dlrepro/index/chunk.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "dlrepro/index/tokenizer.hpp"
#include "dlrepro/py/parser.hpp"
#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"

namespace dlrepro::index {
namespace {

using py::Node;
using py::NodeKind;
using py::Role;

struct Unit {
  int start;
  int end;
  ChunkKind kind;
  std::string symbol;
  const Node* node;  // null for merged top-level statements
  std::vector<const Node*> stmts;
};

int count_lines(std::string_view source) {
  if (source.empty()) return 0;
  int n = static_cast<int>(std::count(source.begin(), source.end(), '\n'));
  if (source.back() != '\n') ++n;
  return n;
}

void collect_statement_starts(const Node& n, std::set<int>& out) {
  for (const auto& c : n.children) {
    if (c->is_statement() || c->kind == NodeKind::ExceptHandler) out.insert(c->line);
    collect_statement_starts(*c, out);
  }
}

// Cuts [a, b] into pieces of at most `max_lines`, preferring the latest
// statement boundary (at any depth) that keeps the piece under the limit.
std::vector<std::pair<int, int>> split_span(int a, int b, const std::set<int>& boundaries, int max_lines) {
  std::vector<std::pair<int, int>> pieces;
  int cur = a;
  while (b - cur + 1 > max_lines) {
    int cut = -1;
    auto it = boundaries.upper_bound(cur + max_lines);
    while (it != boundaries.begin()) {
      --it;
      if (*it <= cur) break;
      cut = *it;
      break;
    }
    if (cut < 0) cut = cur + max_lines;
    pieces.emplace_back(cur, cut - 1);
    cur = cut;
  }
  pieces.emplace_back(cur, b);
  return pieces;
}

std::vector<CodeChunk> window_chunks(const std::string& path, std::string_view source, int total,
                                     const ChunkOptions& opt) {
  std::vector<CodeChunk> out;
  int step = std::max(1, opt.window_lines - opt.window_overlap);
  for (int start = 1;; start += step) {
    int end = std::min(total, start + opt.window_lines - 1);
    CodeChunk c;
    c.file_path = path;
    c.start_line = start;
    c.end_line = end;
    c.kind = ChunkKind::TopLevelBlock;
    c.degraded = true;
    out.push_back(std::move(c));
    if (end >= total) break;
  }
  (void)source;
  return out;
}

}  // namespace

std::string_view to_string(ChunkKind kind) {
  switch (kind) {
    case ChunkKind::Function: return "function";
    case ChunkKind::Method: return "method";
    case ChunkKind::Class: return "class";
    case ChunkKind::TopLevelBlock: return "top_level_block";
  }
  return "top_level_block";
}

ChunkKind chunk_kind_from(std::string_view s) {
  if (s == "function") return ChunkKind::Function;
  if (s == "method") return ChunkKind::Method;
  if (s == "class") return ChunkKind::Class;
  if (s == "top_level_block") return ChunkKind::TopLevelBlock;
  throw Error(ErrorKind::Parse, "unknown chunk kind: " + std::string(s));
}

Grammar grammar_for(std::string_view name) {
  if (name == "python") return Grammar{"python", {".py"}};
  throw Error(ErrorKind::GrammarUnavailable, "no grammar available for language '" + std::string(name) +
                                                 "' (built-in grammars: python)");
}

std::string module_path_for(std::string_view file_path) {
  std::string p(file_path);
  if (p.size() > 3 && p.compare(p.size() - 3, 3, ".py") == 0) p.resize(p.size() - 3);
  auto parts = text::split_lines(text::replace_all(p, "/", "\n"));
  if (!parts.empty() && parts.back() == "__init__") parts.pop_back();
  parts.erase(std::remove_if(parts.begin(), parts.end(), [](const std::string& s) { return s.empty() || s == "."; }),
              parts.end());
  return text::join(parts, ".");
}

std::string make_chunk_id(std::string_view file_path, int start_line, int end_line) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "#L%06d-L%06d", start_line, end_line);
  return std::string(file_path) + buf;
}

std::vector<CodeChunk> chunk_file(const std::string& path, std::string_view source, const Grammar& grammar,
                                  const ChunkOptions& options) {
  if (grammar.name != "python") grammar_for(grammar.name);
  if (source.empty()) return {};
  if (options.max_chunk_lines < 1) throw Error(ErrorKind::InvalidArgument, "max_chunk_lines must be >= 1");
  int total = count_lines(source);

  auto finish = [&](std::vector<CodeChunk> chunks) {
    auto module = module_path_for(path);
    for (auto& c : chunks) {
      c.file_path = path;
      c.id = make_chunk_id(path, c.start_line, c.end_line);
      c.text = text::slice_lines(source, c.start_line, c.end_line);
      c.module_path = module;
      c.token_counts = count_terms(c.text);
    }
    return chunks;
  };

  auto parsed = py::parse(source);
  if (!parsed.ok) return finish(window_chunks(path, source, total, options));

  // Top-level units: each def/class alone, runs of other statements merged.
  std::vector<Unit> units;
  for (const Node* stmt : parsed.module->all(Role::Body)) {
    if (stmt->kind == NodeKind::FunctionDef || stmt->kind == NodeKind::ClassDef) {
      units.push_back({stmt->line, stmt->end_line,
                       stmt->kind == NodeKind::FunctionDef ? ChunkKind::Function : ChunkKind::Class, stmt->name,
                       stmt, {stmt}});
    } else if (!units.empty() && units.back().node == nullptr) {
      units.back().end = stmt->end_line;
      units.back().stmts.push_back(stmt);
    } else {
      units.push_back({stmt->line, stmt->end_line, ChunkKind::TopLevelBlock, "", nullptr, {stmt}});
    }
  }
  if (units.empty()) {
    // Only comments or blank lines.
    CodeChunk c;
    c.start_line = 1;
    c.end_line = total;
    c.kind = ChunkKind::TopLevelBlock;
    return finish({c});
  }
  units.front().start = 1;
  for (std::size_t i = 0; i + 1 < units.size(); ++i) units[i].end = units[i + 1].start - 1;
  units.back().end = total;

  std::vector<CodeChunk> chunks;
  auto emit = [&](int a, int b, ChunkKind kind, const std::string& symbol, const std::set<int>& boundaries) {
    for (auto [s, e] : split_span(a, b, boundaries, options.max_chunk_lines)) {
      CodeChunk c;
      c.start_line = s;
      c.end_line = e;
      c.kind = kind;
      c.symbol = symbol;
      chunks.push_back(std::move(c));
    }
  };

  for (const auto& u : units) {
    std::set<int> boundaries;
    for (const Node* s : u.stmts) {
      boundaries.insert(s->line);
      collect_statement_starts(*s, boundaries);
    }
    bool oversized = u.end - u.start + 1 > options.max_chunk_lines;
    if (!oversized) {
      emit(u.start, u.end, u.kind, u.symbol, boundaries);
      continue;
    }
    if (u.kind != ChunkKind::Class) {
      emit(u.start, u.end, u.kind, u.symbol, boundaries);
      continue;
    }
    // Oversized class: header chunk, then one chunk per method; statements
    // between methods stay with the preceding method.
    std::vector<const Node*> methods;
    for (const Node* m : u.node->all(Role::Body))
      if (m->kind == NodeKind::FunctionDef) methods.push_back(m);
    if (methods.empty()) {
      emit(u.start, u.end, ChunkKind::Class, u.symbol, boundaries);
      continue;
    }
    int header_end = methods.front()->line - 1;
    if (header_end >= u.start) {
      std::set<int> header_bounds;
      for (int line : boundaries)
        if (line <= header_end) header_bounds.insert(line);
      emit(u.start, header_end, ChunkKind::Class, u.symbol, header_bounds);
    }
    for (std::size_t i = 0; i < methods.size(); ++i) {
      int a = std::max(methods[i]->line, u.start);
      int b = i + 1 < methods.size() ? methods[i + 1]->line - 1 : u.end;
      std::set<int> bounds;
      for (int line : boundaries)
        if (line >= a && line <= b) bounds.insert(line);
      emit(a, b, ChunkKind::Method, u.symbol + "." + methods[i]->name, bounds);
    }
  }
  return finish(std::move(chunks));
}

}  // namespace dlrepro::index
