#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "dlrepro/index/corpus.hpp"
#include "dlrepro/index/dense_index.hpp"
#include "dlrepro/index/sparse_index.hpp"
#include "dlrepro/index/tokenizer.hpp"
#include "dlrepro/util/error.hpp"
#include "test_support.hpp"

using namespace dlrepro;
using index::CodeChunk;

namespace {

std::vector<CodeChunk> chunks_from(const std::vector<std::string>& texts) {
  std::vector<CodeChunk> out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    CodeChunk c;
    c.id = "c" + std::to_string(i);
    c.file_path = "f.py";
    c.start_line = c.end_line = static_cast<int>(i + 1);
    c.text = texts[i];
    c.token_counts = index::count_terms(texts[i]);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> g;
  std::vector<double> v(dim);
  for (auto& x : v) x = g(rng);
  index::normalize(v);
  return v;
}

// Embeds "vec:<i>" as the i-th row of a fixed table.
struct TableEmbed {
  std::vector<std::vector<double>> rows;
  std::vector<double> operator()(std::string_view s) const {
    return rows.at(std::stoul(std::string(s.substr(4))));
  }
};

TableEmbed random_table(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TableEmbed t;
  for (std::size_t i = 0; i < n; ++i) t.rows.push_back(random_unit(rng, dim));
  return t;
}

std::vector<std::string> vec_texts(std::size_t n) {
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < n; ++i) texts.push_back("vec:" + std::to_string(i));
  return texts;
}

std::vector<std::size_t> exhaustive_top(const TableEmbed& t, const std::vector<double>& q, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> s;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    double d = 0;
    for (std::size_t j = 0; j < q.size(); ++j) d += q[j] * t.rows[i][j];
    s.emplace_back(-d, i);
  }
  std::sort(s.begin(), s.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k && i < s.size(); ++i) out.push_back(s[i].second);
  return out;
}

}  // namespace

TEST(SparseIndex, TwoDocCounts) {
  auto idx = index::build_sparse_index(chunks_from({"model fit", "optimizer step"}));
  EXPECT_EQ(idx.doc_count, 2u);
  EXPECT_DOUBLE_EQ(idx.avg_doc_length, 2.0);
  EXPECT_DOUBLE_EQ(idx.k1, 1.2);
  EXPECT_DOUBLE_EQ(idx.b, 0.75);
}

TEST(SparseIndex, DottedPostings) {
  auto idx = index::build_sparse_index(chunks_from({"model.fit(x)"}));
  for (const char* t : {"model.fit", "model", "fit"}) EXPECT_TRUE(idx.postings.count(t)) << t;
}

TEST(SparseIndex, RejectsBadInput) {
  EXPECT_THROW(index::build_sparse_index({}), Error);
  EXPECT_THROW(index::build_sparse_index(chunks_from({"a"}), 0.0, 0.75), Error);
  EXPECT_THROW(index::build_sparse_index(chunks_from({"a"}), 1.2, 1.5), Error);
}

TEST(SparseIndex, ConservationAndRoundTrip) {
  test::TempDir tmp;
  std::vector<std::string> texts = {"loss.backward()\noptimizer.step()", "def forward(self, x):\n  return self.fc(x)",
                                    "# only a comment", "x = y = z = 1", ""};
  auto idx = index::build_sparse_index(chunks_from(texts));
  double total = 0;
  for (std::size_t d = 0; d < idx.doc_count; ++d) {
    std::uint64_t sum = 0;
    for (const auto& [term, plist] : idx.postings)
      for (const auto& p : plist)
        if (p.doc == d) sum += p.tf;
    EXPECT_EQ(sum, idx.doc_lengths[d]);
    total += idx.doc_lengths[d];
  }
  EXPECT_DOUBLE_EQ(idx.avg_doc_length, total / static_cast<double>(idx.doc_count));
  for (const auto& [term, plist] : idx.postings)
    for (const auto& p : plist) EXPECT_GT(p.tf, 0u);
  auto blob = idx.serialize();
  EXPECT_EQ(blob, index::build_sparse_index(chunks_from(texts)).serialize());
  auto back = index::SparseIndex::deserialize(blob);
  EXPECT_EQ(back.serialize(), blob);
  EXPECT_EQ(back.find("c3"), 3);
  EXPECT_EQ(back.find("zz"), -1);
}

TEST(DenseIndex, SelfIsNearest) {
  auto table = random_table(3, 16, 1);
  auto idx = index::build_dense_index(chunks_from(vec_texts(3)), table);
  EXPECT_EQ(idx.n_trees, 50);
  for (std::size_t i = 0; i < 3; ++i) {
    double n = 0;
    for (std::size_t j = 0; j < idx.dim; ++j) n += idx.vector(i)[j] * idx.vector(i)[j];
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
    auto top = idx.nearest(table.rows[i], 1);
    ASSERT_EQ(top.size(), 1u);
    EXPECT_EQ(top[0].first, "c" + std::to_string(i));
  }
}

TEST(DenseIndex, StoredVectorSevenMatchesExhaustive) {
  auto table = random_table(100, 32, 7);
  auto idx = index::build_dense_index(chunks_from(vec_texts(100)), table);
  auto top = idx.nearest(table.rows[7], 1);
  EXPECT_EQ(top[0].first, "c" + std::to_string(exhaustive_top(table, table.rows[7], 1)[0]));
}

TEST(DenseIndex, RecallAtTenOverFiftyQueries) {
  auto table = random_table(1000, 32, 11);
  auto idx = index::build_dense_index(chunks_from(vec_texts(1000)), table);
  std::mt19937_64 rng(99);
  double overlap = 0;
  for (int qi = 0; qi < 50; ++qi) {
    auto q = random_unit(rng, 32);
    std::set<std::string> truth;
    for (auto i : exhaustive_top(table, q, 10)) truth.insert("c" + std::to_string(i));
    for (auto& [id, s] : idx.nearest(q, 10)) {
      overlap += truth.count(id);
      EXPECT_TRUE(idx.find(id) >= 0);
    }
  }
  EXPECT_GE(overlap / 50.0, 8.0);
}

TEST(DenseIndex, DimMismatchNamesChunk) {
  auto embed = [](std::string_view s) { return std::vector<double>(s == "b" ? 3 : 4, 1.0); };
  try {
    index::build_dense_index(chunks_from({"a", "b"}), embed);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmbeddingDimMismatch);
    EXPECT_NE(std::string(e.what()).find("c1"), std::string::npos);
  }
}

TEST(DenseIndex, ProviderFailureNamesChunk) {
  auto embed = [](std::string_view s) -> std::vector<double> {
    if (s == "b") throw Error(ErrorKind::ProviderFailure, "HTTP 503");
    return {1.0, 0.0};
  };
  try {
    index::build_dense_index(chunks_from({"a", "b"}), embed);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ProviderFailure);
    EXPECT_NE(std::string(e.what()).find("c1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("503"), std::string::npos);
  }
}

TEST(DenseIndex, SerializationDeterministicAndCopySafe) {
  auto table = random_table(200, 8, 5);
  auto a = index::build_dense_index(chunks_from(vec_texts(200)), table);
  auto b = index::build_dense_index(chunks_from(vec_texts(200)), table);
  EXPECT_EQ(a.serialize(), b.serialize());
  auto back = index::DenseIndex::deserialize(a.serialize());
  index::DenseIndex copy = back;
  back = index::DenseIndex{};
  EXPECT_EQ(copy.nearest(table.rows[3], 5), a.nearest(table.rows[3], 5));
}

TEST(Corpus, BuildPersistReload) {
  test::TempDir tmp;
  tmp.write("proj/pkg/__init__.py", "");
  tmp.write("proj/pkg/model.py", "import torch\n\nclass Net:\n    def forward(self, x):\n        return x\n");
  tmp.write("proj/train.py", "from pkg.model import Net\n\ndef train():\n    net = Net()\n");
  tmp.write("proj/.venv/skip.py", "x = 1\n");
  tmp.write("proj/notes.txt", "ignored\n");
  auto embed = [](std::string_view s) { return std::vector<double>{1.0, static_cast<double>(s.size() % 7)}; };
  index::CorpusOptions opt;
  auto c1 = index::build_corpus(tmp / "proj", opt, embed, tmp / "index");
  EXPECT_FALSE(c1.reused);
  ASSERT_EQ(c1.files.size(), 3u);
  EXPECT_EQ(c1.files[0].path, "pkg/__init__.py");
  EXPECT_EQ(c1.files[1].path, "pkg/model.py");
  EXPECT_TRUE(c1.chunks_in("pkg/__init__.py").empty());
  EXPECT_TRUE(std::filesystem::exists(tmp / "index" / c1.digest / "manifest.json"));
  auto c2 = index::build_corpus(tmp / "proj", opt, embed, tmp / "index");
  EXPECT_TRUE(c2.reused);
  EXPECT_EQ(c2.sparse.serialize(), c1.sparse.serialize());
  EXPECT_EQ(c2.dense.serialize(), c1.dense.serialize());
  ASSERT_NE(c2.chunk(c1.chunks[0].id), nullptr);
  opt.n_trees = 10;
  EXPECT_NE(index::corpus_digest(c1.files, opt), c1.digest);
}

TEST(Corpus, NoSourcesIsAnError) {
  test::TempDir tmp;
  tmp.write("proj/readme.md", "hi\n");
  auto embed = [](std::string_view) { return std::vector<double>{1.0}; };
  try {
    index::build_corpus(tmp / "proj", {}, embed);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoChunks);
  }
}
