#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dlrepro/index/corpus.hpp"

namespace dlrepro::retrieval {

struct QueryBundle {
  std::string raw_text;
  std::vector<std::string> terms;
  std::vector<double> vector;  // unit norm
};

/// Tokenizes and embeds `raw_text` (the embedding is normalized).
QueryBundle make_query(std::string raw_text, const index::EmbedFn& embed);

struct ScoredSnippet {
  index::CodeChunk chunk;
  double bm25_raw = 0.0;
  double bm25_norm = 0.0;
  double angular = 0.0;
  double hybrid = 0.0;
  std::optional<double> cross_score;
  bool unscored = false;  // the cross scorer failed for this snippet

  // cross_score when present, else hybrid.
  double score() const { return cross_score.value_or(hybrid); }
};

inline constexpr double kDefaultAlpha = 0.55;
inline constexpr std::size_t kDefaultTopK = 20;
inline constexpr std::size_t kPoolFactor = 4;

/// Okapi BM25 of one chunk; 0 when no query term occurs in it.
double bm25_score(const QueryBundle& query, const std::string& chunk_id, const index::SparseIndex& sparse);

/// BM25 for every document of the index, by position.
std::vector<double> bm25_all(const QueryBundle& query, const index::SparseIndex& sparse);

/// Min-max scaling to [0, 1]; a constant vector maps to 1 (or 0 when all zero).
std::vector<double> minmax_normalize(const std::vector<double>& scores);

/// 1 - arccos(clamp(q.d))/pi.
double angular_similarity(const std::vector<double>& q, const std::vector<double>& d);

struct HybridOptions {
  double alpha = kDefaultAlpha;
  std::size_t k = kDefaultTopK;
  std::size_t pool_factor = kPoolFactor;
};

/// Fuses min-max normalized BM25 with angular similarity over the union of the
/// sparse and ANN top-(pool_factor*k) lists, best first, ties by chunk id.
std::vector<ScoredSnippet> hybrid_rank(const QueryBundle& query, const index::Corpus& corpus,
                                       const HybridOptions& options = {});

/// (query text, chunk text) -> relevance in [0, 1]. Throws on failure.
using CrossScorer = std::function<double(std::string_view, std::string_view)>;

/// Attaches cross scores and re-sorts by them (then hybrid, then id). Snippets
/// whose scoring fails keep their slot and are flagged; throws if all fail.
std::vector<ScoredSnippet> rerank(const QueryBundle& query, std::vector<ScoredSnippet> snippets,
                                  const CrossScorer& scorer);

struct ReferencedSymbol {
  std::string name;
  std::string chunk_id;  // defining chunk; empty when external
  std::string module;    // module the name comes from, if known
  int depth = 1;         // 1 = referenced by the root chunk
  bool external() const { return chunk_id.empty(); }
};

struct DependencyClosure {
  std::string root;
  std::vector<std::string> imported_modules;
  std::vector<ReferencedSymbol> referenced_symbols;
  std::vector<index::CodeChunk> pulled_chunks;
  bool degraded = false;  // root chunk did not parse; imports were scraped from text
};

inline constexpr int kDefaultDependencyDepth = 2;

/// Resolves names a chunk uses but does not define: same module first, then
/// modules it imports from the corpus. Lazily caches per-file analyses;
/// safe to share between threads.
class DependencyResolver {
 public:
  explicit DependencyResolver(const index::Corpus& corpus);
  ~DependencyResolver();
  DependencyResolver(const DependencyResolver&) = delete;
  DependencyResolver& operator=(const DependencyResolver&) = delete;

  DependencyClosure resolve(const index::CodeChunk& root, int max_depth = kDefaultDependencyDepth) const;

  /// Corpus file implementing a dotted module, or null.
  const index::SourceFile* module_file(const std::string& dotted) const;

 private:
  struct Impl;
  Impl* impl_;
};

DependencyClosure resolve_dependencies(const ScoredSnippet& snippet, const index::Corpus& corpus,
                                       int max_depth = kDefaultDependencyDepth);

}  // namespace dlrepro::retrieval
