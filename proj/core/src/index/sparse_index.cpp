#include "dlrepro/index/sparse_index.hpp"

#include <numeric>

#include "dlrepro/util/binary_io.hpp"
#include "dlrepro/util/error.hpp"

namespace dlrepro::index {

namespace {
constexpr std::uint32_t kSparseMagic = 0x53504958;  // "SPIX"
}

long SparseIndex::find(const std::string& chunk_id) const {
  auto it = positions.find(chunk_id);
  return it == positions.end() ? -1 : static_cast<long>(it->second);
}

SparseIndex build_sparse_index(const std::vector<CodeChunk>& chunks, double k1, double b) {
  if (chunks.empty()) throw Error(ErrorKind::NoChunks, "cannot build a sparse index without chunks");
  if (!(k1 > 0.0)) throw Error(ErrorKind::InvalidArgument, "k1 must be positive");
  if (!(b >= 0.0 && b <= 1.0)) throw Error(ErrorKind::InvalidArgument, "b must lie in [0, 1]");
  SparseIndex idx;
  idx.k1 = k1;
  idx.b = b;
  idx.doc_count = chunks.size();
  for (std::size_t d = 0; d < chunks.size(); ++d) {
    idx.ids.push_back(chunks[d].id);
    idx.positions[chunks[d].id] = static_cast<std::uint32_t>(d);
    std::uint32_t len = 0;
    for (const auto& [term, tf] : chunks[d].token_counts) {
      if (tf <= 0) continue;
      idx.postings[term].push_back({static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(tf)});
      len += static_cast<std::uint32_t>(tf);
    }
    idx.doc_lengths.push_back(len);
  }
  double sum = std::accumulate(idx.doc_lengths.begin(), idx.doc_lengths.end(), 0.0);
  idx.avg_doc_length = sum / static_cast<double>(idx.doc_count);
  return idx;
}

std::string SparseIndex::serialize() const {
  BinaryWriter w;
  w.u32(kSparseMagic);
  w.f64(k1);
  w.f64(b);
  w.u64(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    w.str(ids[i]);
    w.u32(doc_lengths[i]);
  }
  w.u64(postings.size());
  for (const auto& [term, list] : postings) {
    w.str(term);
    w.u64(list.size());
    for (const auto& p : list) {
      w.u32(p.doc);
      w.u32(p.tf);
    }
  }
  return w.bytes();
}

SparseIndex SparseIndex::deserialize(std::string_view bytes) {
  BinaryReader r(bytes);
  if (r.u32() != kSparseMagic) throw Error(ErrorKind::Parse, "not a sparse index blob");
  SparseIndex idx;
  idx.k1 = r.f64();
  idx.b = r.f64();
  auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    idx.ids.push_back(r.str());
    idx.positions[idx.ids.back()] = static_cast<std::uint32_t>(i);
    idx.doc_lengths.push_back(r.u32());
  }
  auto terms = r.u64();
  for (std::uint64_t t = 0; t < terms; ++t) {
    auto term = r.str();
    auto count = r.u64();
    auto& list = idx.postings[term];
    for (std::uint64_t k = 0; k < count; ++k) {
      Posting p;
      p.doc = r.u32();
      p.tf = r.u32();
      list.push_back(p);
    }
  }
  idx.doc_count = idx.ids.size();
  double sum = std::accumulate(idx.doc_lengths.begin(), idx.doc_lengths.end(), 0.0);
  idx.avg_doc_length = idx.doc_count ? sum / static_cast<double>(idx.doc_count) : 0.0;
  return idx;
}

}  // namespace dlrepro::index
