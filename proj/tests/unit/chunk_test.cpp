#include <gtest/gtest.h>

#include "dlrepro/index/chunk.hpp"
#include "dlrepro/py/parser.hpp"
#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"
#include "pygen.hpp"

using namespace dlrepro;
using index::ChunkKind;

namespace {

const index::Grammar kPy = index::grammar_for("python");

int line_count(const std::string& s) { return static_cast<int>(text::split_lines(s).size()); }

// Spans sorted, contiguous from 1 to the last line, text equal to the slice.
void expect_cover(const std::vector<index::CodeChunk>& chunks, const std::string& src) {
  int next = 1;
  for (const auto& c : chunks) {
    EXPECT_EQ(c.start_line, next) << c.id;
    EXPECT_LE(c.start_line, c.end_line) << c.id;
    EXPECT_EQ(c.text, text::slice_lines(src, c.start_line, c.end_line)) << c.id;
    next = c.end_line + 1;
  }
  EXPECT_EQ(next - 1, line_count(src));
}

std::string lines_of(const std::string& prefix, int n, int indent) {
  std::string out;
  for (int i = 0; i < n; ++i) out += std::string(static_cast<std::size_t>(indent), ' ') + prefix + std::to_string(i) + " = " + std::to_string(i) + "\n";
  return out;
}

}  // namespace

TEST(ChunkFile, TwoFunctions) {
  std::string src = "def f(x):\n    return x\n\n\ndef g(y):\n    y += 1\n    return y\n";
  auto chunks = index::chunk_file("pkg/mod.py", src, kPy);
  ASSERT_EQ(chunks.size(), 2u);
  EXPECT_EQ(chunks[0].kind, ChunkKind::Function);
  EXPECT_EQ(chunks[0].symbol, "f");
  EXPECT_EQ(chunks[0].start_line, 1);
  EXPECT_EQ(chunks[0].end_line, 4);
  EXPECT_EQ(chunks[1].kind, ChunkKind::Function);
  EXPECT_EQ(chunks[1].start_line, 5);
  EXPECT_EQ(chunks[1].end_line, 7);
  EXPECT_EQ(chunks[0].module_path, "pkg.mod");
  EXPECT_EQ(chunks[0].id, "pkg/mod.py#L000001-L000004");
}

TEST(ChunkFile, EmptyFile) { EXPECT_TRUE(index::chunk_file("a.py", "", kPy).empty()); }

TEST(ChunkFile, UnknownGrammar) {
  try {
    index::grammar_for("rust");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GrammarUnavailable);
    EXPECT_NE(std::string(e.what()).find("rust"), std::string::npos);
  }
}

TEST(ChunkFile, OversizedClassBecomesHeaderPlusMethods) {
  std::string src = "class Trainer:\n" + lines_of("a", 95, 4);
  for (int m = 0; m < 3; ++m) src += "\n    def m" + std::to_string(m) + "(self):\n" + lines_of("v", 100, 8);
  auto parsed = py::parse(src);
  ASSERT_TRUE(parsed.ok);
  const py::Node* cls = parsed.module->all(py::Role::Body)[0];
  ASSERT_GE(cls->end_line - cls->line, 400);

  auto chunks = index::chunk_file("t.py", src, kPy);
  expect_cover(chunks, src);
  ASSERT_EQ(chunks.size(), 4u);
  EXPECT_EQ(chunks[0].kind, ChunkKind::Class);
  // Oracle: one method chunk per FunctionDef child, starting on its def line.
  std::size_t i = 1;
  for (const py::Node* m : cls->all(py::Role::Body)) {
    if (m->kind != py::NodeKind::FunctionDef) continue;
    ASSERT_LT(i, chunks.size());
    EXPECT_EQ(chunks[i].kind, ChunkKind::Method);
    EXPECT_EQ(chunks[i].start_line, m->line);
    EXPECT_EQ(chunks[i].symbol, "Trainer." + m->name);
    ++i;
  }
  EXPECT_EQ(i, 4u);
}

TEST(ChunkFile, OversizedFunctionSplitsAtStatementBoundary) {
  std::string src = "def big():\n" + lines_of("x", 150, 4) + "    for i in range(3):\n" + lines_of("y", 30, 8);
  auto chunks = index::chunk_file("b.py", src, kPy);
  expect_cover(chunks, src);
  ASSERT_EQ(chunks.size(), 2u);
  EXPECT_EQ(chunks[0].end_line - chunks[0].start_line + 1, 120);
  for (const auto& c : chunks) EXPECT_EQ(c.kind, ChunkKind::Function);
}

TEST(ChunkFile, ParseFailureFallsBackToWindows) {
  test::PyGen gen(3);
  auto src = gen.garbage(130);
  auto chunks = index::chunk_file("bad.py", src, kPy);
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(chunks[0].start_line, 1);
  EXPECT_EQ(chunks[0].end_line, 60);
  EXPECT_EQ(chunks[1].start_line, 51);
  EXPECT_EQ(chunks[2].end_line, 130);
  for (const auto& c : chunks) {
    EXPECT_TRUE(c.degraded);
    EXPECT_EQ(c.kind, ChunkKind::TopLevelBlock);
    EXPECT_EQ(c.text, text::slice_lines(src, c.start_line, c.end_line));
  }
}

TEST(ChunkFile, CommentOnlyFile) {
  auto chunks = index::chunk_file("c.py", "# nothing\n\n# here\n", kPy);
  ASSERT_EQ(chunks.size(), 1u);
  EXPECT_EQ(chunks[0].end_line, 3);
}

TEST(ChunkFile, ModulePaths) {
  EXPECT_EQ(index::module_path_for("pkg/__init__.py"), "pkg");
  EXPECT_EQ(index::module_path_for("a/b/c.py"), "a.b.c");
  EXPECT_EQ(index::module_path_for("train.py"), "train");
}

TEST(ChunkProperty, RandomModulesAreCoveredAndBounded) {
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    test::PyGen gen(seed);
    auto src = gen.module(gen.uniform(1, 12));
    auto parsed = py::parse(src);
    ASSERT_TRUE(parsed.ok) << "seed " << seed << ": " << parsed.error.message << " line " << parsed.error.line;
    index::ChunkOptions opt;
    opt.max_chunk_lines = gen.uniform(20, 120);
    auto chunks = index::chunk_file("gen/m.py", src, kPy, opt);
    SCOPED_TRACE("seed " + std::to_string(seed));
    expect_cover(chunks, src);
    for (const auto& c : chunks) {
      EXPECT_LE(c.end_line - c.start_line + 1, opt.max_chunk_lines);
      EXPECT_FALSE(c.degraded);
    }
    // Every top-level def/class starts a chunk.
    for (const py::Node* s : parsed.module->all(py::Role::Body)) {
      if (s->kind != py::NodeKind::FunctionDef && s->kind != py::NodeKind::ClassDef) continue;
      bool starts = false;
      for (const auto& c : chunks) starts |= c.start_line == s->line || (c.start_line == 1 && s->line <= 1);
      EXPECT_TRUE(starts) << s->name;
    }
  }
}

TEST(ChunkProperty, GarbageIsCoveredByWindows) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    test::PyGen gen(seed);
    auto src = gen.garbage(gen.uniform(1, 400));
    auto chunks = index::chunk_file("g.py", src, kPy);
    ASSERT_FALSE(chunks.empty());
    int covered = 0;
    for (const auto& c : chunks) {
      EXPECT_LE(c.start_line, covered + 1);
      covered = std::max(covered, c.end_line);
      EXPECT_EQ(c.text, text::slice_lines(src, c.start_line, c.end_line));
    }
    EXPECT_EQ(covered, line_count(src));
  }
}
