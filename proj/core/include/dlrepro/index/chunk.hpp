#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dlrepro::index {

enum class ChunkKind { Function, Method, Class, TopLevelBlock };

std::string_view to_string(ChunkKind kind);
ChunkKind chunk_kind_from(std::string_view s);

struct CodeChunk {
  std::string id;         // "<file_path>#L<start>-L<end>", zero padded
  std::string file_path;  // relative to the corpus root, '/' separated
  int start_line = 0;     // 1-based, inclusive
  int end_line = 0;
  ChunkKind kind = ChunkKind::TopLevelBlock;
  std::string text;
  std::string module_path;  // dotted module derived from file_path
  std::string symbol;       // qualified def/class name; empty for blocks
  std::map<std::string, int> token_counts;
  bool degraded = false;    // produced by line windows after a parse failure
};

/// Language handle. Only Python ships a grammar.
struct Grammar {
  std::string name;
  std::vector<std::string> extensions;
};

/// Throws Error(GrammarUnavailable) naming the grammar when none is built in.
Grammar grammar_for(std::string_view name);

struct ChunkOptions {
  int max_chunk_lines = 120;
  int window_lines = 60;
  int window_overlap = 10;
};

/// Splits a source file into grammar-bounded chunks. Every line of the file
/// belongs to at least one chunk; blank and comment lines between nodes attach
/// to the preceding chunk.
std::vector<CodeChunk> chunk_file(const std::string& path, std::string_view source, const Grammar& grammar,
                                  const ChunkOptions& options = {});

/// "pkg/sub/mod.py" -> "pkg.sub.mod"; "pkg/__init__.py" -> "pkg".
std::string module_path_for(std::string_view file_path);

std::string make_chunk_id(std::string_view file_path, int start_line, int end_line);

}  // namespace dlrepro::index
