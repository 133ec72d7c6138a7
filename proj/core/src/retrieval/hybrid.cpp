#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "dlrepro/index/tokenizer.hpp"
#include "dlrepro/retrieval/retrieval.hpp"
#include "dlrepro/util/error.hpp"

namespace dlrepro::retrieval {

QueryBundle make_query(std::string raw_text, const index::EmbedFn& embed) {
  QueryBundle q;
  q.terms = index::tokenize_terms(raw_text);
  q.vector = embed(raw_text);
  index::normalize(q.vector);
  q.raw_text = std::move(raw_text);
  return q;
}

namespace {

std::set<std::string> unique_terms(const QueryBundle& q) { return {q.terms.begin(), q.terms.end()}; }

double idf(const index::SparseIndex& s, std::size_t n_t) {
  double n = static_cast<double>(s.doc_count);
  double nt = static_cast<double>(n_t);
  return std::log(1.0 + (n - nt + 0.5) / (nt + 0.5));
}

double term_weight(const index::SparseIndex& s, double f, double len) {
  double norm = s.avg_doc_length > 0 ? len / s.avg_doc_length : 1.0;
  return f * (s.k1 + 1.0) / (f + s.k1 * (1.0 - s.b + s.b * norm));
}

}  // namespace

double bm25_score(const QueryBundle& query, const std::string& chunk_id, const index::SparseIndex& sparse) {
  long pos = sparse.find(chunk_id);
  if (pos < 0) throw Error(ErrorKind::UnknownChunk, "chunk not in sparse index: " + chunk_id);
  auto doc = static_cast<std::uint32_t>(pos);
  double score = 0.0;
  for (const auto& t : unique_terms(query)) {
    auto it = sparse.postings.find(t);
    if (it == sparse.postings.end()) continue;
    auto p = std::lower_bound(it->second.begin(), it->second.end(), doc,
                              [](const index::Posting& a, std::uint32_t d) { return a.doc < d; });
    if (p == it->second.end() || p->doc != doc) continue;
    score += idf(sparse, it->second.size()) *
             term_weight(sparse, static_cast<double>(p->tf), static_cast<double>(sparse.doc_lengths[doc]));
  }
  return score;
}

std::vector<double> bm25_all(const QueryBundle& query, const index::SparseIndex& sparse) {
  std::vector<double> scores(sparse.doc_count, 0.0);
  for (const auto& t : unique_terms(query)) {
    auto it = sparse.postings.find(t);
    if (it == sparse.postings.end()) continue;
    double w = idf(sparse, it->second.size());
    for (const auto& p : it->second)
      scores[p.doc] +=
          w * term_weight(sparse, static_cast<double>(p.tf), static_cast<double>(sparse.doc_lengths[p.doc]));
  }
  return scores;
}

double angular_similarity(const std::vector<double>& q, const std::vector<double>& d) {
  if (q.size() != d.size())
    throw Error(ErrorKind::DimMismatch,
                "vector dimensions differ: " + std::to_string(q.size()) + " vs " + std::to_string(d.size()));
  double dot = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) dot += q[i] * d[i];
  return 1.0 - std::acos(std::clamp(dot, -1.0, 1.0)) / std::numbers::pi;
}

std::vector<double> minmax_normalize(const std::vector<double>& scores) {
  if (scores.empty()) return {};
  auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  double lo = *lo_it, hi = *hi_it;
  std::vector<double> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(hi == lo ? (hi > 0.0 ? 1.0 : 0.0) : (s - lo) / (hi - lo));
  return out;
}

namespace {

bool better(const ScoredSnippet& a, const ScoredSnippet& b) {
  if (a.hybrid != b.hybrid) return a.hybrid > b.hybrid;
  return a.chunk.id < b.chunk.id;
}

}  // namespace

std::vector<ScoredSnippet> hybrid_rank(const QueryBundle& query, const index::Corpus& corpus,
                                       const HybridOptions& options) {
  const auto& sparse = corpus.sparse;
  const auto& dense = corpus.dense;
  std::size_t n = sparse.doc_count;
  if (n == 0 || corpus.chunks.size() != n) throw Error(ErrorKind::EmptyIndex, "retrieval over an empty index");
  if (!(options.alpha >= 0.0 && options.alpha <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "alpha must lie in [0, 1]");
  if (options.k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
  const double alpha = options.alpha;

  auto raw = bm25_all(query, sparse);
  auto normalized = minmax_normalize(raw);

  std::vector<std::uint32_t> sparse_order(n);
  for (std::uint32_t i = 0; i < n; ++i) sparse_order[i] = i;
  std::sort(sparse_order.begin(), sparse_order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (raw[a] != raw[b]) return raw[a] > raw[b];
    return sparse.ids[a] < sparse.ids[b];
  });

  auto score_doc = [&](std::uint32_t i) {
    ScoredSnippet s;
    s.chunk = corpus.chunks[i];
    s.bm25_raw = raw[i];
    s.bm25_norm = normalized[i];
    long dpos = dense.find(sparse.ids[i]);
    if (dpos < 0) throw Error(ErrorKind::UnknownChunk, "chunk missing from dense index: " + sparse.ids[i]);
    const double* v = dense.vector(static_cast<std::size_t>(dpos));
    s.angular = angular_similarity(query.vector, std::vector<double>(v, v + dense.dim));
    s.hybrid = (1.0 - alpha) * s.bm25_norm + alpha * s.angular;
    return s;
  };

  // Start from the union of both top-(pool_factor*k) lists; widen until nothing
  // outside the pool can beat the k-th pooled hybrid score.
  std::size_t depth = std::max<std::size_t>(options.pool_factor, 1) * options.k;
  std::vector<ScoredSnippet> pool;
  for (;;) {
    std::size_t d = std::min(depth, n);
    std::set<std::uint32_t> members(sparse_order.begin(), sparse_order.begin() + static_cast<long>(d));
    double ann_bound = 0.0;
    if (alpha > 0.0) {
      auto ann = dense.nearest(query.vector, d);
      for (const auto& [id, cos] : ann) members.insert(static_cast<std::uint32_t>(sparse.find(id)));
      ann_bound = ann.size() < d ? 1.0 : 1.0 - std::acos(std::clamp(ann.back().second, -1.0, 1.0)) / std::numbers::pi;
    }
    pool.clear();
    for (auto i : members) pool.push_back(score_doc(i));
    std::sort(pool.begin(), pool.end(), better);
    if (pool.size() == n) break;
    double bound = (1.0 - alpha) * normalized[sparse_order[d - 1]] + alpha * ann_bound;
    if (pool.size() >= options.k && pool[options.k - 1].hybrid > bound) break;
    depth *= 2;
  }
  if (pool.size() > options.k) pool.resize(options.k);
  return pool;
}

std::vector<ScoredSnippet> rerank(const QueryBundle& query, std::vector<ScoredSnippet> snippets,
                                  const CrossScorer& scorer) {
  if (snippets.empty()) throw Error(ErrorKind::InvalidArgument, "nothing to rerank");
  std::vector<std::size_t> scored_slots;
  std::vector<ScoredSnippet> scored;
  std::string last_error;
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    auto& s = snippets[i];
    try {
      double v = scorer(query.raw_text, s.chunk.text);
      if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::ScorerFailure, "score out of [0, 1]: " + std::to_string(v));
      s.cross_score = v;
      s.unscored = false;
      scored_slots.push_back(i);
      scored.push_back(s);
    } catch (const std::exception& e) {
      s.cross_score.reset();
      s.unscored = true;
      last_error = e.what();
    }
  }
  if (scored.empty()) throw Error(ErrorKind::ScorerFailure, "cross scorer failed for every snippet: " + last_error);
  std::sort(scored.begin(), scored.end(), [](const ScoredSnippet& a, const ScoredSnippet& b) {
    if (*a.cross_score != *b.cross_score) return *a.cross_score > *b.cross_score;
    if (a.hybrid != b.hybrid) return a.hybrid > b.hybrid;
    return a.chunk.id < b.chunk.id;
  });
  for (std::size_t j = 0; j < scored.size(); ++j) snippets[scored_slots[j]] = std::move(scored[j]);
  return snippets;
}

}  // namespace dlrepro::retrieval
