#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dlrepro/index/chunk.hpp"
#include "dlrepro/index/dense_index.hpp"
#include "dlrepro/index/sparse_index.hpp"

namespace dlrepro::index {

struct SourceFile {
  std::string path;  // relative, '/' separated
  std::string text;
};

struct CorpusOptions {
  ChunkOptions chunking;
  double k1 = 1.2;
  double b = 0.75;
  int n_trees = 50;
  std::uint64_t seed = 42;
  std::string grammar = "python";
  std::string embedder_id = "mock";  // part of the corpus digest
  std::size_t embed_dim = 0;         // recorded in the manifest
};

struct Corpus {
  std::filesystem::path root;
  std::string digest;
  std::vector<SourceFile> files;
  std::vector<CodeChunk> chunks;
  SparseIndex sparse;
  DenseIndex dense;
  bool reused = false;  // loaded from a previous run's artifacts

  const CodeChunk* chunk(const std::string& id) const;
  std::vector<const CodeChunk*> chunks_in(const std::string& file_path) const;
  const SourceFile* file(const std::string& path) const;
};

/// Reads every file of the grammar's languages below `root` in sorted order.
std::vector<SourceFile> read_sources(const std::filesystem::path& root, const Grammar& grammar);

/// Digest over file contents and every parameter that affects the indices.
std::string corpus_digest(const std::vector<SourceFile>& files, const CorpusOptions& options);

/// Builds (or, when `<index_dir>/<digest>/manifest.json` exists, reloads)
/// chunks and both indices. `index_dir` may be empty to skip persistence.
Corpus build_corpus(const std::filesystem::path& root, const CorpusOptions& options, const EmbedFn& embed,
                    const std::filesystem::path& index_dir = {});

}  // namespace dlrepro::index
