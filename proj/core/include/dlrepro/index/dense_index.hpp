#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dlrepro/index/chunk.hpp"

namespace dlrepro::index {

using EmbedFn = std::function<std::vector<double>(std::string_view)>;

void normalize(std::vector<double>& v);

/// Forest of random-projection trees over unit vectors (Annoy-style: each
/// split is the hyperplane equidistant from two sampled points).
class RpForest {
 public:
  struct Node {
    std::int32_t left = -1;   // child node indices; -1 for leaves
    std::int32_t right = -1;
    double offset = 0.0;
    std::vector<double> normal;         // split direction (empty for leaves)
    std::vector<std::uint32_t> items;   // leaf payload
  };

  RpForest() = default;
  RpForest(const std::vector<double>* vectors, std::size_t dim, int n_trees, std::uint64_t seed,
           std::size_t leaf_size = 16);

  /// Candidate ids gathered by a best-first walk over all trees, exactly
  /// re-ranked by cosine. search_k < 0 means n * n_trees.
  std::vector<std::pair<std::uint32_t, double>> query(const std::vector<double>& q, std::size_t n,
                                                      long search_k = -1) const;

  int n_trees() const { return static_cast<int>(roots_.size()); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::int32_t>& roots() const { return roots_; }
  // Points the forest at a (copied or reloaded) vector table.
  void rebind(const std::vector<double>* vectors) { vectors_ = vectors; }
  void restore(const std::vector<double>* vectors, std::size_t dim, std::vector<Node> nodes,
               std::vector<std::int32_t> roots);

 private:
  std::int32_t build(std::vector<std::uint32_t> items, std::mt19937_64& rng);
  double dot(const double* a, const double* b) const;

  const std::vector<double>* vectors_ = nullptr;
  std::size_t dim_ = 0;
  std::size_t leaf_size_ = 16;
  std::vector<Node> nodes_;
  std::vector<std::int32_t> roots_;
};

struct DenseIndex {
  std::vector<std::string> ids;
  std::size_t dim = 0;
  std::vector<double> vectors;  // row-major, ids.size() x dim, unit norm
  int n_trees = 50;
  RpForest forest;
  std::unordered_map<std::string, std::uint32_t> positions;

  DenseIndex() = default;
  DenseIndex(const DenseIndex& other);
  DenseIndex& operator=(const DenseIndex& other);
  DenseIndex(DenseIndex&&) noexcept;
  DenseIndex& operator=(DenseIndex&&) noexcept;

  long find(const std::string& chunk_id) const;
  const double* vector(std::size_t i) const { return vectors.data() + i * dim; }

  /// Approximate nearest neighbours: (chunk id, cosine) best first.
  std::vector<std::pair<std::string, double>> nearest(const std::vector<double>& q, std::size_t n,
                                                      long search_k = -1) const;

  std::string serialize() const;
  static DenseIndex deserialize(std::string_view bytes);
};

/// Embeds every chunk once and builds the forest. Throws
/// Error(EmbeddingDimMismatch) or rethrows provider failures naming the chunk.
DenseIndex build_dense_index(const std::vector<CodeChunk>& chunks, const EmbedFn& embed, int n_trees = 50,
                             std::uint64_t seed = 42);

}  // namespace dlrepro::index
