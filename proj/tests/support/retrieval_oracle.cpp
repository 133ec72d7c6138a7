#include "retrieval_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "dlrepro/gateway/gateway.hpp"
#include "dlrepro/index/dense_index.hpp"
#include "dlrepro/index/tokenizer.hpp"
#include "pygen.hpp"

namespace dlrepro::test {

index::EmbedFn mock_embedder() {
  return [](std::string_view t) { return gateway::mock_embed(t); };
}

index::Corpus generated_corpus(const TempDir& tmp, std::uint64_t seed, int files) {
  PyGen gen(seed);
  for (int f = 0; f < files; ++f) tmp.write("proj/pkg/m" + std::to_string(f) + ".py", gen.module(gen.uniform(2, 6)));
  return index::build_corpus(tmp / "proj", {}, mock_embedder());
}

std::vector<std::pair<std::string, double>> brute_force_rank(const index::Corpus& c, const std::string& query,
                                                             double alpha) {
  auto qterms = index::tokenize_terms(query);
  std::set<std::string> uq(qterms.begin(), qterms.end());
  double n = static_cast<double>(c.chunks.size());
  double total = 0;
  std::vector<double> len;
  for (const auto& ch : c.chunks) {
    double l = 0;
    for (const auto& [t, f] : ch.token_counts) l += f;
    len.push_back(l);
    total += l;
  }
  double avg = total / n;
  std::vector<double> bm;
  for (std::size_t i = 0; i < c.chunks.size(); ++i) {
    double s = 0;
    for (const auto& t : uq) {
      auto it = c.chunks[i].token_counts.find(t);
      if (it == c.chunks[i].token_counts.end()) continue;
      double nt = 0;
      for (const auto& ch : c.chunks) nt += ch.token_counts.count(t);
      double idf = std::log(1 + (n - nt + 0.5) / (nt + 0.5));
      double f = it->second;
      s += idf * f * 2.2 / (f + 1.2 * (0.25 + 0.75 * len[i] / avg));
    }
    bm.push_back(s);
  }
  double lo = *std::min_element(bm.begin(), bm.end()), hi = *std::max_element(bm.begin(), bm.end());
  auto q = gateway::mock_embed(query);
  index::normalize(q);
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < c.chunks.size(); ++i) {
    auto d = gateway::mock_embed(c.chunks[i].text);
    index::normalize(d);
    double dot = 0;
    for (std::size_t j = 0; j < d.size(); ++j) dot += d[j] * q[j];
    double ang = 1 - std::acos(std::clamp(dot, -1.0, 1.0)) / std::numbers::pi;
    double norm = hi == lo ? (hi > 0 ? 1.0 : 0.0) : (bm[i] - lo) / (hi - lo);
    out.emplace_back(c.chunks[i].id, (1 - alpha) * norm + alpha * ang);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (std::abs(a.second - b.second) > 1e-12) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

}  // namespace dlrepro::test
