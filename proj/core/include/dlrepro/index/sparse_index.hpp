#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dlrepro/index/chunk.hpp"

namespace dlrepro::index {

struct Posting {
  std::uint32_t doc;  // position in SparseIndex::ids
  std::uint32_t tf;
};

struct SparseIndex {
  std::vector<std::string> ids;
  std::map<std::string, std::vector<Posting>> postings;
  std::vector<std::uint32_t> doc_lengths;
  double avg_doc_length = 0.0;
  std::size_t doc_count = 0;
  double k1 = 1.2;
  double b = 0.75;
  std::unordered_map<std::string, std::uint32_t> positions;

  /// Position of `chunk_id` in ids, or -1.
  long find(const std::string& chunk_id) const;

  std::string serialize() const;
  static SparseIndex deserialize(std::string_view bytes);
};

/// Throws Error(NoChunks) for an empty list and Error(InvalidArgument) for k1 <= 0 or b outside [0, 1].
SparseIndex build_sparse_index(const std::vector<CodeChunk>& chunks, double k1 = 1.2, double b = 0.75);

}  // namespace dlrepro::index
