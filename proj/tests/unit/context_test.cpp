#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include <json.hpp>

#include "dlrepro/context/context.hpp"
#include "dlrepro/gateway/gateway.hpp"
#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"
#include "test_support.hpp"

using namespace dlrepro;
using context::Heuristic;
using retrieval::ScoredSnippet;

namespace {

index::EmbedFn mock() {
  return [](std::string_view t) { return gateway::mock_embed(t); };
}

std::set<std::string> heuristic_union(const std::vector<context::TrainingLoop>& loops) {
  std::set<std::string> out;
  for (const auto& l : loops)
    for (auto h : l.matched_heuristics) out.insert(context::to_string(h));
  return out;
}

ScoredSnippet snippet(const std::string& module, const std::string& id, double cross) {
  ScoredSnippet s;
  s.chunk.id = id;
  s.chunk.module_path = module;
  s.chunk.text = "x = 1\n";
  s.hybrid = cross / 2;
  s.cross_score = cross;
  return s;
}

std::size_t occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST(LoopDetection, LabeledCorpus) {
  auto labels = nlohmann::json::parse(test::read_fixture("loops/labels.json"));
  int loops = 0, others = 0;
  for (auto& [file, label] : labels.items()) {
    auto found = context::detect_loops(test::read_fixture("loops/" + file));
    bool is_loop = label["loop"].get<bool>();
    EXPECT_EQ(!found.empty(), is_loop) << file;
    if (is_loop) {
      ++loops;
      auto want = label["heuristics"].get<std::vector<std::string>>();
      EXPECT_EQ(heuristic_union(found), std::set<std::string>(want.begin(), want.end())) << file;
    } else {
      ++others;
    }
  }
  EXPECT_EQ(loops, 12);
  EXPECT_EQ(others, 8);
}

TEST(LoopDetection, StepsInsideForLoop) {
  auto loops = context::detect_loops(test::read_fixture("loops/l04_bare_steps.py"));
  ASSERT_EQ(loops.size(), 1u);
  EXPECT_EQ(loops[0].matched_heuristics,
            (std::vector<Heuristic>{Heuristic::H2, Heuristic::H3, Heuristic::H4, Heuristic::H6}));
  EXPECT_TRUE(loops[0].components.backward_pass);
  EXPECT_TRUE(loops[0].components.gradient_step);
  EXPECT_EQ(loops[0].start_line, 1);
  EXPECT_EQ(loops[0].end_line, 4);
}

TEST(LoopDetection, FitCallAndModelDefinition) {
  auto fit = context::detect_loops("model.fit(x, y)\n");
  ASSERT_EQ(fit.size(), 1u);
  EXPECT_EQ(fit[0].matched_heuristics, std::vector<Heuristic>{Heuristic::H1});
  EXPECT_TRUE(context::detect_loops(test::read_fixture("loops/n01_model_def.py")).empty());
  EXPECT_TRUE(context::detect_loops("def broken(:\n").empty());
}

TEST(LoopDetection, Deterministic) {
  for (auto& e : std::filesystem::directory_iterator(test::fixture("loops"))) {
    if (e.path().extension() != ".py") continue;
    auto src = text::read_file(e.path().string());
    auto a = context::detect_loops(src), b = context::detect_loops(src);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].start_line, b[i].start_line);
      EXPECT_EQ(a[i].matched_heuristics, b[i].matched_heuristics);
    }
  }
}

TEST(Partition, SingleStrongSnippetBeatsMany) {
  std::vector<ScoredSnippet> s = {snippet("b", "b1", 0.6), snippet("b", "b2", 0.6), snippet("a", "a1", 0.9),
                                  snippet("b", "b3", 0.6), snippet("b", "b4", 0.6)};
  auto g = context::partition_modules(s);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].module_id, "a");
  EXPECT_DOUBLE_EQ(g[0].priority, 0.9);
  EXPECT_EQ(g[1].members.size(), 4u);
}

TEST(Partition, KeepsFiveBestModules) {
  std::vector<double> maxima = {0.3, 0.9, 0.1, 0.7, 0.5, 0.8, 0.2};
  std::vector<ScoredSnippet> s;
  for (std::size_t i = 0; i < maxima.size(); ++i) {
    std::string m = "m" + std::to_string(i);
    s.push_back(snippet(m, m + "_top", maxima[i]));
    s.push_back(snippet(m, m + "_low", maxima[i] / 2));
  }
  auto g = context::partition_modules(s);
  ASSERT_EQ(g.size(), 5u);
  std::vector<std::string> order;
  for (const auto& x : g) order.push_back(x.module_id);
  EXPECT_EQ(order, (std::vector<std::string>{"m1", "m5", "m3", "m4", "m0"}));
  EXPECT_TRUE(context::partition_modules({}).empty());
}

TEST(RankLoops, Cases) {
  retrieval::QueryBundle q{"bug", {"bug"}, {1.0}};
  auto scorer = [](std::string_view, std::string_view t) { return t == "A" ? 0.8 : 0.3; };
  EXPECT_FALSE(context::rank_loops({}, q, scorer).has_value());
  context::TrainingLoop a, b;
  a.text = "A";
  b.text = "B";
  b.matched_heuristics = {Heuristic::H1, Heuristic::H2};
  a.matched_heuristics = {Heuristic::H1};
  EXPECT_EQ(context::rank_loops({b}, q, scorer)->text, "B");
  auto best = context::rank_loops({b, a}, q, scorer);
  EXPECT_EQ(best->text, "A");
  EXPECT_DOUBLE_EQ(best->relevance, 0.8);
  auto fallback = context::rank_loops({a, b}, q, [](auto, auto) -> double { throw Error(ErrorKind::ScorerFailure, "x"); });
  EXPECT_EQ(fallback->text, "B");
  EXPECT_FALSE(fallback->scored);
}

namespace {

struct Project {
  test::TempDir tmp;
  index::Corpus corpus;
  Project() {
    tmp.write("p/trainer.py",
              "from helpers import make_batches\n\n"
              "def train(model, data, opt):\n"
              "    for x, y in make_batches(data):\n"
              "        opt.zero_grad()\n"
              "        loss = model.loss(x, y)\n"
              "        loss.backward()\n"
              "        opt.step()\n\n"
              "def evaluate(model, data):\n    return model.score(data)\n\n"
              "def summary(model):\n    return str(model)\n\n"
              "def log_metrics(m):\n    print(m)\n");
    tmp.write("p/helpers.py", "def make_batches(data):\n    return [data]\n\ndef unused():\n    pass\n");
    corpus = index::build_corpus(tmp / "p", {}, mock());
  }
  ScoredSnippet snip(const std::string& symbol, double score) const {
    for (const auto& c : corpus.chunks)
      if (c.symbol == symbol) {
        ScoredSnippet s;
        s.chunk = c;
        s.hybrid = score;
        s.cross_score = score;
        return s;
      }
    throw std::runtime_error("no chunk " + symbol);
  }
};

}  // namespace

TEST(Assemble, LoopSnippetsAndDependenciesOnce) {
  Project p;
  std::vector<ScoredSnippet> s = {p.snip("train", 0.9), p.snip("evaluate", 0.7), p.snip("summary", 0.5),
                                  p.snip("log_metrics", 0.4), p.snip("make_batches", 0.3)};
  auto groups = context::partition_modules(s);
  ASSERT_EQ(groups.size(), 2u);
  std::vector<std::optional<context::TrainingLoop>> loops;
  retrieval::QueryBundle q{"loss", {"loss"}, {1.0}};
  for (const auto& g : groups)
    loops.push_back(context::rank_loops(context::extract_training_loops(g), q, gateway::mock_cross_score));
  ASSERT_TRUE(loops[0].has_value());
  EXPECT_EQ(loops[0]->start_line, 4);
  retrieval::DependencyResolver r(p.corpus);
  auto ctx = context::assemble_contexts(groups, loops, r);
  ASSERT_EQ(ctx.size(), 2u);
  EXPECT_EQ(ctx[0].rank, 1);
  EXPECT_EQ(ctx[0].module_id, "trainer");
  const auto& c = ctx[0];
  EXPECT_EQ(occurrences(c.rendered, loops[0]->text), 1u);
  for (const auto& sn : c.snippets) EXPECT_EQ(occurrences(c.rendered, sn.chunk.text), 1u) << sn.chunk.id;
  // make_batches is a dependency of train; it is rendered once in this context.
  ASSERT_EQ(c.dependencies.size(), 1u);
  EXPECT_EQ(c.dependencies[0].chunk.symbol, "make_batches");
  EXPECT_EQ(occurrences(c.rendered, c.dependencies[0].chunk.text), 1u);
  EXPECT_TRUE(c.evicted.empty());
  EXPECT_LE(c.token_budget_used, context::kDefaultTokenBudget);

  // In the helpers context make_batches is a snippet, so it is not repeated as a dependency.
  EXPECT_EQ(ctx[1].module_id, "helpers");
  EXPECT_EQ(occurrences(ctx[1].rendered, "def make_batches"), 1u);
  EXPECT_FALSE(ctx[1].training_loop.has_value());

  test::TempDir out;
  context::save_contexts(ctx, out / "contexts");
  EXPECT_TRUE(std::filesystem::exists(out / "contexts/context_2.md"));
  auto manifest = nlohmann::json::parse(text::read_file((out / "contexts/manifest.json").string()));
  EXPECT_EQ(manifest.size(), 2u);
}

TEST(Assemble, BudgetEvictionProperty) {
  Project p;
  std::vector<ScoredSnippet> s = {p.snip("train", 0.9), p.snip("evaluate", 0.7), p.snip("summary", 0.5),
                                  p.snip("log_metrics", 0.4)};
  auto groups = context::partition_modules(s);
  retrieval::QueryBundle q{"loss", {"loss"}, {1.0}};
  auto loop = context::rank_loops(context::extract_training_loops(groups[0]), q, gateway::mock_cross_score);
  ASSERT_TRUE(loop);
  retrieval::DependencyResolver r(p.corpus);
  std::size_t loop_alone = 0;
  for (std::size_t budget = 1; budget < 400; budget += 3) {
    context::AssembleOptions opt;
    opt.token_budget = budget;
    auto ctx = context::assemble_contexts(groups, {loop}, r, opt)[0];
    ASSERT_TRUE(ctx.training_loop);
    EXPECT_LE(ctx.snippets.size(), 5u);
    if (!ctx.loop_truncated) {
      EXPECT_NE(ctx.rendered.find(loop->text), std::string::npos) << budget;
      if (!loop_alone && ctx.snippets.size() == 1 && ctx.dependencies.empty()) loop_alone = budget;
    }
    if (ctx.token_budget_used <= budget && ctx.rendered.find(loop->text) == std::string::npos)
      EXPECT_TRUE(ctx.loop_truncated);
    // Snippets leave in ascending score order.
    for (std::size_t i = 1; i < ctx.snippets.size(); ++i)
      EXPECT_GE(ctx.snippets[i - 1].score(), ctx.snippets[i].score());
  }
  EXPECT_GT(loop_alone, 0u);
}

TEST(Assemble, FiveGroupsRankedByPriority) {
  Project p;
  std::vector<ScoredSnippet> s;
  std::vector<double> pr = {0.2, 0.95, 0.5, 0.7, 0.1, 0.6};
  for (std::size_t i = 0; i < pr.size(); ++i) {
    auto sn = p.snip("summary", pr[i]);
    sn.chunk.module_path = "mod" + std::to_string(i);
    sn.chunk.id += std::to_string(i);
    s.push_back(sn);
  }
  auto groups = context::partition_modules(s);
  retrieval::DependencyResolver r(p.corpus);
  auto ctx = context::assemble_contexts(groups, {}, r);
  ASSERT_EQ(ctx.size(), 5u);
  std::vector<std::string> order;
  for (const auto& c : ctx) order.push_back(c.module_id);
  EXPECT_EQ(order, (std::vector<std::string>{"mod1", "mod3", "mod5", "mod2", "mod0"}));
  for (std::size_t i = 0; i < ctx.size(); ++i) EXPECT_EQ(ctx[i].rank, static_cast<int>(i + 1));
}
