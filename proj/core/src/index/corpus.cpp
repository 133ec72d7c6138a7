#include "dlrepro/index/corpus.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "dlrepro/util/digest.hpp"
#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"

namespace dlrepro::index {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "dlrepro-index-1";

bool skipped_dir(const fs::path& p) {
  auto name = p.filename().string();
  return name.empty() || name[0] == '.' || name == "__pycache__" || name == "node_modules";
}

std::vector<CodeChunk> chunk_all(const std::vector<SourceFile>& files, const CorpusOptions& options,
                                 const Grammar& grammar) {
  std::vector<CodeChunk> chunks;
  for (const auto& f : files) {
    auto part = chunk_file(f.path, f.text, grammar, options.chunking);
    chunks.insert(chunks.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return chunks;
}

bool try_reload(Corpus& c, const fs::path& dir, const CorpusOptions& options) {
  if (!fs::exists(dir / "manifest.json") || !fs::exists(dir / "sparse.bin") || !fs::exists(dir / "dense.bin"))
    return false;
  try {
    auto manifest = json::parse(text::read_file((dir / "manifest.json").string()));
    if (manifest.value("format", "") != kFormat || manifest.value("digest", "") != c.digest) return false;
    auto sparse = SparseIndex::deserialize(text::read_file((dir / "sparse.bin").string()));
    auto dense = DenseIndex::deserialize(text::read_file((dir / "dense.bin").string()));
    if (sparse.ids.size() != c.chunks.size() || dense.ids != sparse.ids) return false;
    for (std::size_t i = 0; i < c.chunks.size(); ++i)
      if (c.chunks[i].id != sparse.ids[i]) return false;
    if (options.embed_dim && dense.dim != options.embed_dim) return false;
    c.sparse = std::move(sparse);
    c.dense = std::move(dense);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

void persist(const Corpus& c, const fs::path& dir, const CorpusOptions& options) {
  fs::create_directories(dir);
  text::write_file((dir / "sparse.bin").string(), c.sparse.serialize());
  text::write_file((dir / "dense.bin").string(), c.dense.serialize());
  json files = json::array();
  for (const auto& f : c.files) {
    files.push_back({{"path", f.path},
                     {"sha256", sha256_hex(f.text)},
                     {"lines", text::split_lines(f.text).size()},
                     {"chunks", c.chunks_in(f.path).size()}});
  }
  json manifest = {
      {"format", kFormat},
      {"digest", c.digest},
      {"grammar", options.grammar},
      {"embedder", options.embedder_id},
      {"parameters",
       {{"k1", options.k1},
        {"b", options.b},
        {"n_trees", options.n_trees},
        {"seed", options.seed},
        {"dim", c.dense.dim},
        {"max_chunk_lines", options.chunking.max_chunk_lines},
        {"window_lines", options.chunking.window_lines},
        {"window_overlap", options.chunking.window_overlap}}},
      {"chunk_count", c.chunks.size()},
      {"degraded_files", std::count_if(c.files.begin(), c.files.end(),
                                       [&](const SourceFile& f) {
                                         auto in = c.chunks_in(f.path);
                                         return !in.empty() && in.front()->degraded;
                                       })},
      {"files", files},
  };
  text::write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

}  // namespace

const CodeChunk* Corpus::chunk(const std::string& id) const {
  long i = sparse.find(id);
  if (i >= 0 && static_cast<std::size_t>(i) < chunks.size() && chunks[static_cast<std::size_t>(i)].id == id)
    return &chunks[static_cast<std::size_t>(i)];
  for (const auto& c : chunks)
    if (c.id == id) return &c;
  return nullptr;
}

std::vector<const CodeChunk*> Corpus::chunks_in(const std::string& file_path) const {
  std::vector<const CodeChunk*> out;
  for (const auto& c : chunks)
    if (c.file_path == file_path) out.push_back(&c);
  return out;
}

const SourceFile* Corpus::file(const std::string& path) const {
  auto it = std::lower_bound(files.begin(), files.end(), path,
                             [](const SourceFile& f, const std::string& p) { return f.path < p; });
  return it != files.end() && it->path == path ? &*it : nullptr;
}

std::vector<SourceFile> read_sources(const fs::path& root, const Grammar& grammar) {
  if (!fs::is_directory(root)) throw Error(ErrorKind::Io, "not a directory: " + root.string());
  std::vector<SourceFile> files;
  for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator(); ++it) {
    if (it->is_directory()) {
      if (skipped_dir(it->path())) it.disable_recursion_pending();
      continue;
    }
    if (!it->is_regular_file()) continue;
    auto ext = it->path().extension().string();
    if (std::find(grammar.extensions.begin(), grammar.extensions.end(), ext) == grammar.extensions.end()) continue;
    files.push_back({fs::relative(it->path(), root).generic_string(), text::read_file(it->path().string())});
  }
  std::sort(files.begin(), files.end(), [](const SourceFile& a, const SourceFile& b) { return a.path < b.path; });
  return files;
}

std::string corpus_digest(const std::vector<SourceFile>& files, const CorpusOptions& options) {
  Sha256 h;
  h.update_field(kFormat);
  h.update_field(options.grammar);
  h.update_field(options.embedder_id);
  h.update_field(std::to_string(options.embed_dim));
  h.update_field(json(options.k1).dump());
  h.update_field(json(options.b).dump());
  h.update_field(std::to_string(options.n_trees));
  h.update_field(std::to_string(options.seed));
  h.update_field(std::to_string(options.chunking.max_chunk_lines));
  h.update_field(std::to_string(options.chunking.window_lines));
  h.update_field(std::to_string(options.chunking.window_overlap));
  for (const auto& f : files) {
    h.update_field(f.path);
    h.update_field(f.text);
  }
  return h.hex_digest();
}

Corpus build_corpus(const fs::path& root, const CorpusOptions& options, const EmbedFn& embed,
                    const fs::path& index_dir) {
  auto grammar = grammar_for(options.grammar);
  Corpus c;
  c.root = root;
  c.files = read_sources(root, grammar);
  c.digest = corpus_digest(c.files, options);
  c.chunks = chunk_all(c.files, options, grammar);
  if (c.chunks.empty())
    throw Error(ErrorKind::NoChunks, "no " + options.grammar + " sources with content under " + root.string());

  fs::path dir = index_dir.empty() ? fs::path{} : index_dir / c.digest;
  if (!dir.empty() && try_reload(c, dir, options)) {
    c.reused = true;
    return c;
  }
  c.sparse = build_sparse_index(c.chunks, options.k1, options.b);
  c.dense = build_dense_index(c.chunks, embed, options.n_trees, options.seed);
  if (!dir.empty()) persist(c, dir, options);
  return c;
}

}  // namespace dlrepro::index
