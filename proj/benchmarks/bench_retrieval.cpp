#include <benchmark/benchmark.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "dlrepro/gateway/gateway.hpp"
#include "dlrepro/index/chunk.hpp"
#include "dlrepro/index/corpus.hpp"
#include "dlrepro/index/dense_index.hpp"
#include "dlrepro/index/tokenizer.hpp"
#include "dlrepro/retrieval/retrieval.hpp"
#include "synthetic.hpp"

using namespace dlrepro;
namespace fs = std::filesystem;

namespace {

index::EmbedFn mock() {
  return [](std::string_view t) { return gateway::mock_embed(t); };
}

// Corpus of `files` synthetic modules, built once per size.
const index::Corpus& corpus(int files) {
  static std::map<int, index::Corpus> cache;
  auto it = cache.find(files);
  if (it != cache.end()) return it->second;
  auto dir = fs::temp_directory_path() / ("dlrepro-bench-" + std::to_string(files));
  fs::remove_all(dir);
  fs::create_directories(dir / "pkg");
  for (int f = 0; f < files; ++f) std::ofstream(dir / "pkg" / ("m" + std::to_string(f) + ".py")) << synthetic_module(f, 6);
  auto c = index::build_corpus(dir, {}, mock());
  fs::remove_all(dir);
  return cache.emplace(files, std::move(c)).first->second;
}

}  // namespace

static void BM_Tokenize(benchmark::State& state) {
  auto src = synthetic_module(1, 20);
  for (auto _ : state) benchmark::DoNotOptimize(index::count_terms(src));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * src.size()));
}
BENCHMARK(BM_Tokenize);

static void BM_ChunkFile(benchmark::State& state) {
  auto src = synthetic_module(2, static_cast<int>(state.range(0)));
  auto grammar = index::grammar_for("python");
  for (auto _ : state) benchmark::DoNotOptimize(index::chunk_file("pkg/m.py", src, grammar));
}
BENCHMARK(BM_ChunkFile)->Arg(10)->Arg(100);

static void BM_HybridRank(benchmark::State& state) {
  const auto& c = corpus(static_cast<int>(state.range(0)));
  auto q = retrieval::make_query("ValueError shape mismatch in hidden logits during training", mock());
  retrieval::HybridOptions opt;
  for (auto _ : state) benchmark::DoNotOptimize(retrieval::hybrid_rank(q, c, opt));
  state.counters["chunks"] = static_cast<double>(c.chunks.size());
}
BENCHMARK(BM_HybridRank)->Arg(10)->Arg(50)->Unit(benchmark::kMicrosecond);

static std::vector<double> unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> g;
  std::vector<double> v(dim);
  for (auto& x : v) x = g(rng);
  index::normalize(v);
  return v;
}

static void BM_DenseNearest(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0)), dim = 64;
  std::mt19937_64 rng(3);
  std::vector<std::vector<double>> rows;
  std::vector<index::CodeChunk> chunks(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows.push_back(unit(rng, dim));
    chunks[i].id = "c" + std::to_string(i);
    chunks[i].text = std::to_string(i);
  }
  auto idx = index::build_dense_index(chunks, [&](std::string_view s) { return rows[std::stoul(std::string(s))]; });
  auto q = unit(rng, dim);
  for (auto _ : state) benchmark::DoNotOptimize(idx.nearest(q, 10));
}
BENCHMARK(BM_DenseNearest)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);
