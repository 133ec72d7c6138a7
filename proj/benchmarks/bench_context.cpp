#include <benchmark/benchmark.h>

#include "dlrepro/context/context.hpp"
#include "dlrepro/py/parser.hpp"
#include "synthetic.hpp"

using namespace dlrepro;

static void BM_ParsePython(benchmark::State& state) {
  auto src = synthetic_module(5, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(py::parse(src));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * src.size()));
}
BENCHMARK(BM_ParsePython)->Arg(10)->Arg(100);

static void BM_DetectLoops(benchmark::State& state) {
  auto src = synthetic_module(7, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(context::detect_loops(src));
}
BENCHMARK(BM_DetectLoops)->Arg(10)->Arg(100);

static void BM_PartitionModules(benchmark::State& state) {
  std::vector<retrieval::ScoredSnippet> s(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i].chunk.id = "c" + std::to_string(i);
    s[i].chunk.module_path = "mod" + std::to_string(i % 17);
    s[i].hybrid = static_cast<double>((i * 7919) % 1000) / 1000.0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(context::partition_modules(s));
}
BENCHMARK(BM_PartitionModules)->Arg(20)->Arg(200);
