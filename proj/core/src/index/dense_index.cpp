#include "dlrepro/index/dense_index.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_set>

#include "dlrepro/util/binary_io.hpp"
#include "dlrepro/util/error.hpp"

namespace dlrepro::index {

namespace {
constexpr std::uint32_t kDenseMagic = 0x444E5358;  // "DNSX"
constexpr int kTwoMeansIterations = 200;
}  // namespace

void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n == 0.0) return;
  for (double& x : v) x /= n;
}

RpForest::RpForest(const std::vector<double>* vectors, std::size_t dim, int n_trees, std::uint64_t seed,
                   std::size_t leaf_size)
    : vectors_(vectors), dim_(dim), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  std::size_t n = dim ? vectors->size() / dim : 0;
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<std::uint32_t>(i);
  for (int t = 0; t < n_trees; ++t) roots_.push_back(build(all, rng));
}

double RpForest::dot(const double* a, const double* b) const {
  double s = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) s += a[i] * b[i];
  return s;
}

std::int32_t RpForest::build(std::vector<std::uint32_t> items, std::mt19937_64& rng) {
  Node node;
  if (items.size() <= leaf_size_) {
    node.items = std::move(items);
    nodes_.push_back(std::move(node));
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }
  const double* base = vectors_->data();
  auto row = [&](std::uint32_t i) { return base + static_cast<std::size_t>(i) * dim_; };

  // Two-means on a sample, seeded by two distinct random points.
  std::size_t n = items.size();
  std::size_t ia = rng() % n;
  std::size_t ib = rng() % (n - 1);
  if (ib >= ia) ++ib;
  std::vector<double> ca(row(items[ia]), row(items[ia]) + dim_);
  std::vector<double> cb(row(items[ib]), row(items[ib]) + dim_);
  double wa = 1.0, wb = 1.0;
  for (int it = 0; it < kTwoMeansIterations; ++it) {
    const double* v = row(items[rng() % n]);
    double da = dot(ca.data(), v), db = dot(cb.data(), v);
    auto& c = da >= db ? ca : cb;
    double& w = da >= db ? wa : wb;
    for (std::size_t k = 0; k < dim_; ++k) c[k] = (c[k] * w + v[k]) / (w + 1.0);
    w += 1.0;
  }
  normalize(ca);
  normalize(cb);
  node.normal.resize(dim_);
  for (std::size_t k = 0; k < dim_; ++k) node.normal[k] = ca[k] - cb[k];
  normalize(node.normal);
  node.offset = 0.0;

  std::vector<std::uint32_t> left, right;
  for (auto i : items) (dot(node.normal.data(), row(i)) > node.offset ? right : left).push_back(i);
  if (left.empty() || right.empty()) {
    // Degenerate split (duplicates): cut the list in half at random.
    std::shuffle(items.begin(), items.end(), rng);
    left.assign(items.begin(), items.begin() + static_cast<long>(n / 2));
    right.assign(items.begin() + static_cast<long>(n / 2), items.end());
    node.normal.clear();
    node.offset = 0.0;
  }
  nodes_.push_back(std::move(node));
  auto self = static_cast<std::int32_t>(nodes_.size() - 1);
  auto l = build(std::move(left), rng);
  auto r = build(std::move(right), rng);
  nodes_[self].left = l;
  nodes_[self].right = r;
  return self;
}

std::vector<std::pair<std::uint32_t, double>> RpForest::query(const std::vector<double>& q, std::size_t n,
                                                              long search_k) const {
  if (search_k < 0) search_k = static_cast<long>(n) * static_cast<long>(std::max<std::size_t>(roots_.size(), 1));
  std::priority_queue<std::pair<double, std::int32_t>> heap;
  for (auto r : roots_) heap.emplace(std::numeric_limits<double>::infinity(), r);
  std::unordered_set<std::uint32_t> seen;
  std::vector<std::uint32_t> candidates;
  while (!heap.empty() && static_cast<long>(candidates.size()) < search_k) {
    auto [margin, idx] = heap.top();
    heap.pop();
    const Node& node = nodes_[static_cast<std::size_t>(idx)];
    if (node.left < 0) {
      for (auto i : node.items)
        if (seen.insert(i).second) candidates.push_back(i);
      continue;
    }
    if (node.normal.empty()) {
      heap.emplace(margin, node.left);
      heap.emplace(margin, node.right);
      continue;
    }
    double m = dot(node.normal.data(), q.data()) - node.offset;
    heap.emplace(std::min(margin, m), node.right);
    heap.emplace(std::min(margin, -m), node.left);
  }
  std::vector<std::pair<std::uint32_t, double>> scored;
  scored.reserve(candidates.size());
  for (auto i : candidates) scored.emplace_back(i, dot(vectors_->data() + static_cast<std::size_t>(i) * dim_, q.data()));
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (scored.size() > n) scored.resize(n);
  return scored;
}

void RpForest::restore(const std::vector<double>* vectors, std::size_t dim, std::vector<Node> nodes,
                       std::vector<std::int32_t> roots) {
  vectors_ = vectors;
  dim_ = dim;
  nodes_ = std::move(nodes);
  roots_ = std::move(roots);
}

DenseIndex::DenseIndex(const DenseIndex& other)
    : ids(other.ids), dim(other.dim), vectors(other.vectors), n_trees(other.n_trees), forest(other.forest),
      positions(other.positions) {
  forest.rebind(&vectors);
}

DenseIndex& DenseIndex::operator=(const DenseIndex& other) {
  if (this != &other) {
    ids = other.ids;
    dim = other.dim;
    vectors = other.vectors;
    n_trees = other.n_trees;
    forest = other.forest;
    positions = other.positions;
    forest.rebind(&vectors);
  }
  return *this;
}

DenseIndex::DenseIndex(DenseIndex&& other) noexcept
    : ids(std::move(other.ids)), dim(other.dim), vectors(std::move(other.vectors)), n_trees(other.n_trees),
      forest(std::move(other.forest)), positions(std::move(other.positions)) {
  forest.rebind(&vectors);
}

DenseIndex& DenseIndex::operator=(DenseIndex&& other) noexcept {
  ids = std::move(other.ids);
  dim = other.dim;
  vectors = std::move(other.vectors);
  n_trees = other.n_trees;
  forest = std::move(other.forest);
  positions = std::move(other.positions);
  forest.rebind(&vectors);
  return *this;
}

long DenseIndex::find(const std::string& chunk_id) const {
  auto it = positions.find(chunk_id);
  return it == positions.end() ? -1 : static_cast<long>(it->second);
}

std::vector<std::pair<std::string, double>> DenseIndex::nearest(const std::vector<double>& q, std::size_t n,
                                                                long search_k) const {
  if (q.size() != dim)
    throw Error(ErrorKind::DimMismatch, "query has dimension " + std::to_string(q.size()) + ", index has " +
                                            std::to_string(dim));
  std::vector<std::pair<std::string, double>> out;
  for (auto& [i, s] : forest.query(q, n, search_k)) out.emplace_back(ids[i], s);
  return out;
}

std::string DenseIndex::serialize() const {
  BinaryWriter w;
  w.u32(kDenseMagic);
  w.u64(dim);
  w.u32(static_cast<std::uint32_t>(n_trees));
  w.u64(ids.size());
  for (const auto& id : ids) w.str(id);
  for (double x : vectors) w.f64(x);
  const auto& nodes = forest.nodes();
  w.u64(nodes.size());
  for (const auto& node : nodes) {
    w.u32(static_cast<std::uint32_t>(node.left));
    w.u32(static_cast<std::uint32_t>(node.right));
    w.f64(node.offset);
    w.u64(node.normal.size());
    for (double x : node.normal) w.f64(x);
    w.u64(node.items.size());
    for (auto i : node.items) w.u32(i);
  }
  w.u64(forest.roots().size());
  for (auto r : forest.roots()) w.u32(static_cast<std::uint32_t>(r));
  return w.bytes();
}

DenseIndex DenseIndex::deserialize(std::string_view bytes) {
  BinaryReader r(bytes);
  if (r.u32() != kDenseMagic) throw Error(ErrorKind::Parse, "not a dense index blob");
  DenseIndex idx;
  idx.dim = r.u64();
  idx.n_trees = static_cast<int>(r.u32());
  auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    idx.ids.push_back(r.str());
    idx.positions[idx.ids.back()] = static_cast<std::uint32_t>(i);
  }
  idx.vectors.resize(n * idx.dim);
  for (auto& x : idx.vectors) x = r.f64();
  std::vector<RpForest::Node> nodes(r.u64());
  for (auto& node : nodes) {
    node.left = static_cast<std::int32_t>(r.u32());
    node.right = static_cast<std::int32_t>(r.u32());
    node.offset = r.f64();
    node.normal.resize(r.u64());
    for (auto& x : node.normal) x = r.f64();
    node.items.resize(r.u64());
    for (auto& i : node.items) i = r.u32();
  }
  std::vector<std::int32_t> roots(r.u64());
  for (auto& root : roots) root = static_cast<std::int32_t>(r.u32());
  idx.forest.restore(&idx.vectors, idx.dim, std::move(nodes), std::move(roots));
  return idx;
}

DenseIndex build_dense_index(const std::vector<CodeChunk>& chunks, const EmbedFn& embed, int n_trees,
                             std::uint64_t seed) {
  if (n_trees < 1) throw Error(ErrorKind::InvalidArgument, "n_trees must be >= 1");
  DenseIndex idx;
  idx.n_trees = n_trees;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& c = chunks[i];
    std::vector<double> v;
    try {
      v = embed(c.text);
    } catch (const Error& e) {
      if (e.is_provider_error())
        throw Error(ErrorKind::ProviderFailure, "embedding chunk " + c.id + " failed: " + e.what());
      throw;
    }
    if (i == 0) idx.dim = v.size();
    if (v.empty() || v.size() != idx.dim)
      throw Error(ErrorKind::EmbeddingDimMismatch, "chunk " + c.id + " embedded to dimension " +
                                                       std::to_string(v.size()) + ", expected " +
                                                       std::to_string(idx.dim));
    normalize(v);
    idx.ids.push_back(c.id);
    idx.positions[c.id] = static_cast<std::uint32_t>(i);
    idx.vectors.insert(idx.vectors.end(), v.begin(), v.end());
  }
  idx.forest = RpForest(&idx.vectors, idx.dim, n_trees, seed);
  return idx;
}

}  // namespace dlrepro::index
