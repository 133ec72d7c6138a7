#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dlrepro/context/context.hpp"
#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"

namespace dlrepro::context {

using retrieval::ScoredSnippet;

namespace {

bool by_score(const ScoredSnippet& a, const ScoredSnippet& b) {
  if (a.score() != b.score()) return a.score() > b.score();
  if (a.hybrid != b.hybrid) return a.hybrid > b.hybrid;
  return a.chunk.id < b.chunk.id;
}

std::string fence(const std::string& code) {
  std::string out = "```python\n" + code;
  if (!code.empty() && code.back() != '\n') out += '\n';
  return out + "```\n";
}

std::string heading(const index::CodeChunk& c) {
  std::string h = "### " + c.file_path + " (lines " + std::to_string(c.start_line) + "-" +
                  std::to_string(c.end_line) + ")";
  if (!c.symbol.empty()) h += " `" + c.symbol + "`";
  return h;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct Draft {
  std::optional<TrainingLoop> loop;
  const index::CodeChunk* owner = nullptr;  // chunk the loop lives in
  bool loop_span_only = false;
  std::string loop_text;  // used when loop_span_only
  std::vector<ScoredSnippet> snippets;
  std::vector<ContextDependency> deps;
  std::vector<std::string> imports;
};

std::string render(int rank, const std::string& module_id, const Draft& d) {
  std::ostringstream out;
  out << "# Context " << rank << ": module " << module_id << "\n\n";
  if (d.loop) {
    const auto& l = *d.loop;
    out << "## Training loop\n\n" << l.file_path << " lines " << l.start_line << "-" << l.end_line << ", heuristics";
    for (auto h : l.matched_heuristics) out << ' ' << to_string(h);
    out << "\n\n";
    if (d.owner && !d.loop_span_only) {
      out << heading(*d.owner) << "\n" << fence(d.owner->text) << "\n";
    } else {
      out << "### " << l.file_path << " (lines " << l.start_line << "-" << l.end_line << ")\n"
          << fence(d.loop_text) << "\n";
    }
  }
  bool header = false;
  for (const auto& s : d.snippets) {
    if (d.owner && s.chunk.id == d.owner->id) continue;
    if (!header) out << "## Relevant snippets\n\n";
    header = true;
    out << heading(s.chunk) << " score " << fmt(s.score()) << "\n" << fence(s.chunk.text) << "\n";
  }
  if (!d.deps.empty()) {
    out << "## Dependencies\n\n";
    for (const auto& dep : d.deps) out << heading(dep.chunk) << " depth " << dep.depth << "\n" << fence(dep.chunk.text) << "\n";
  }
  if (!d.imports.empty()) out << "Imported modules: " << text::join(d.imports, ", ") << "\n";
  return out.str();
}

std::string keep_lines(const std::string& s, std::size_t n) {
  auto lines = text::split_lines(s);
  if (lines.size() > n) lines.resize(n);
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

}  // namespace

std::vector<ModuleGroup> partition_modules(const std::vector<ScoredSnippet>& snippets, std::size_t max_groups) {
  std::map<std::string, ModuleGroup> by_module;
  for (const auto& s : snippets) {
    auto& g = by_module[s.chunk.module_path];
    if (g.members.empty()) {
      g.module_id = s.chunk.module_path;
      g.priority = s.score();
    }
    g.priority = std::max(g.priority, s.score());
    g.members.push_back(s);
  }
  std::vector<ModuleGroup> groups;
  for (auto& [id, g] : by_module) {
    std::stable_sort(g.members.begin(), g.members.end(), by_score);
    groups.push_back(std::move(g));
  }
  std::sort(groups.begin(), groups.end(), [](const ModuleGroup& a, const ModuleGroup& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.module_id < b.module_id;
  });
  if (groups.size() > max_groups) groups.resize(max_groups);
  return groups;
}

std::vector<ModuleGroup> unpartitioned_groups(const std::vector<ScoredSnippet>& snippets, std::size_t max_groups,
                                              std::size_t per_group) {
  std::vector<ModuleGroup> groups;
  for (std::size_t i = 0; i < snippets.size() && groups.size() < max_groups; i += per_group) {
    ModuleGroup g;
    g.module_id = "*";
    for (std::size_t j = i; j < std::min(snippets.size(), i + per_group); ++j) g.members.push_back(snippets[j]);
    g.priority = g.members.front().score();
    for (const auto& m : g.members) g.priority = std::max(g.priority, m.score());
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<ReproductionContext> assemble_contexts(const std::vector<ModuleGroup>& groups,
                                                   const std::vector<std::optional<TrainingLoop>>& loops,
                                                   const retrieval::DependencyResolver& resolver,
                                                   const AssembleOptions& options) {
  if (!loops.empty() && loops.size() != groups.size())
    throw Error(ErrorKind::InvalidArgument, "one loop selection per group expected");
  std::vector<ReproductionContext> out;
  for (std::size_t gi = 0; gi < groups.size() && gi < kMaxModules; ++gi) {
    const auto& g = groups[gi];
    ReproductionContext ctx;
    ctx.rank = static_cast<int>(gi + 1);
    ctx.module_id = g.module_id;
    ctx.priority = g.priority;

    Draft d;
    if (!loops.empty()) d.loop = loops[gi];
    if (d.loop) {
      for (const auto& m : g.members)
        if (m.chunk.id == d.loop->chunk_ref) d.owner = &m.chunk;
      d.loop_text = d.loop->text;
      if (!d.owner) d.loop_span_only = true;
    }
    for (std::size_t i = 0; i < g.members.size() && d.snippets.size() < options.snippets_per_context; ++i)
      d.snippets.push_back(g.members[i]);

    if (options.dependencies) {
      std::set<std::string> present;
      if (d.owner) present.insert(d.owner->id);
      for (const auto& s : d.snippets) present.insert(s.chunk.id);
      std::map<std::string, std::size_t> dep_pos;
      std::vector<const index::CodeChunk*> roots;
      if (d.owner) roots.push_back(d.owner);
      for (const auto& s : d.snippets) roots.push_back(&s.chunk);
      std::set<std::string> rooted;
      for (const auto* root : roots) {
        if (!rooted.insert(root->id).second) continue;
        auto closure = resolver.resolve(*root, options.dependency_depth);
        for (const auto& m : closure.imported_modules)
          if (std::find(d.imports.begin(), d.imports.end(), m) == d.imports.end()) d.imports.push_back(m);
        for (const auto& pulled : closure.pulled_chunks) {
          if (present.count(pulled.id)) continue;
          // Shortest hop count at which the chunk was reached.
          int first_depth = options.dependency_depth;
          for (const auto& r : closure.referenced_symbols)
            if (r.chunk_id == pulled.id) first_depth = std::min(first_depth, r.depth);
          auto it = dep_pos.find(pulled.id);
          if (it == dep_pos.end()) {
            dep_pos[pulled.id] = d.deps.size();
            d.deps.push_back({pulled, first_depth});
          } else {
            d.deps[it->second].depth = std::min(d.deps[it->second].depth, first_depth);
          }
        }
      }
    }

    auto fits = [&] { return text::approx_tokens(render(ctx.rank, ctx.module_id, d)) <= options.token_budget; };
    while (!fits()) {
      // 1. lowest-scored snippet that is not the loop's chunk (keep one if there is no loop)
      long victim = -1;
      std::size_t keep_min = d.loop ? 0 : 1;
      std::size_t removable = 0;
      for (const auto& s : d.snippets)
        if (!(d.owner && s.chunk.id == d.owner->id)) ++removable;
      if (removable > keep_min) {
        for (long i = static_cast<long>(d.snippets.size()) - 1; i >= 0; --i) {
          const auto& s = d.snippets[static_cast<std::size_t>(i)];
          if (d.owner && s.chunk.id == d.owner->id) continue;
          victim = i;
          break;
        }
      }
      if (victim >= 0) {
        ctx.evicted.push_back(d.snippets[static_cast<std::size_t>(victim)].chunk.id);
        d.snippets.erase(d.snippets.begin() + victim);
        continue;
      }
      // 2. deepest dependency, latest first among equals
      if (!d.deps.empty()) {
        std::size_t worst = 0;
        for (std::size_t i = 0; i < d.deps.size(); ++i)
          if (d.deps[i].depth >= d.deps[worst].depth) worst = i;
        ctx.evicted.push_back(d.deps[worst].chunk.id);
        d.deps.erase(d.deps.begin() + static_cast<long>(worst));
        continue;
      }
      // 3. the loop alone does not fit: keep its span, then a prefix of it
      if (d.loop) {
        if (!d.loop_span_only) {
          d.loop_span_only = true;
          ctx.loop_truncated = d.owner && d.loop->text != d.owner->text;
          if (ctx.loop_truncated) continue;
        }
        auto n = text::split_lines(d.loop_text).size();
        if (n <= 1) break;
        d.loop_text = keep_lines(d.loop_text, n - 1);
        ctx.loop_truncated = true;
        continue;
      }
      if (!d.snippets.empty()) {
        auto& top = d.snippets.front().chunk;
        auto n = text::split_lines(top.text).size();
        if (n <= 1) break;
        top.text = keep_lines(top.text, n - 1);
        ctx.snippet_truncated = true;
        continue;
      }
      break;
    }

    ctx.rendered = render(ctx.rank, ctx.module_id, d);
    ctx.token_budget_used = text::approx_tokens(ctx.rendered);
    ctx.training_loop = d.loop;
    if (ctx.training_loop && d.loop_span_only) ctx.training_loop->text = d.loop_text;
    ctx.snippets = std::move(d.snippets);
    ctx.dependencies = std::move(d.deps);
    ctx.imported_modules = std::move(d.imports);
    out.push_back(std::move(ctx));
  }
  return out;
}

void save_contexts(const std::vector<ReproductionContext>& contexts, const std::filesystem::path& dir) {
  using nlohmann::json;
  std::filesystem::create_directories(dir);
  json manifest = json::array();
  for (const auto& c : contexts) {
    auto file = "context_" + std::to_string(c.rank) + ".md";
    text::write_file((dir / file).string(), c.rendered);
    json snippets = json::array();
    for (const auto& s : c.snippets) {
      json j = {{"id", s.chunk.id}, {"bm25_raw", s.bm25_raw}, {"bm25_norm", s.bm25_norm},
                {"angular", s.angular}, {"hybrid", s.hybrid}};
      j["cross_score"] = s.cross_score ? json(*s.cross_score) : json(nullptr);
      snippets.push_back(j);
    }
    json deps = json::array();
    for (const auto& d : c.dependencies) deps.push_back({{"id", d.chunk.id}, {"depth", d.depth}});
    json loop = nullptr;
    if (c.training_loop) {
      const auto& l = *c.training_loop;
      json hs = json::array();
      for (auto h : l.matched_heuristics) hs.push_back(to_string(h));
      loop = {{"chunk", l.chunk_ref},
              {"file", l.file_path},
              {"start_line", l.start_line},
              {"end_line", l.end_line},
              {"heuristics", hs},
              {"components",
               {{"forward_pass", l.components.forward_pass},
                {"backward_pass", l.components.backward_pass},
                {"gradient_step", l.components.gradient_step},
                {"loss_computation", l.components.loss_computation},
                {"data_loader", l.components.data_loader}}},
              {"relevance", l.relevance},
              {"scored", l.scored}};
    }
    manifest.push_back({{"rank", c.rank},
                        {"file", file},
                        {"module", c.module_id},
                        {"priority", c.priority},
                        {"training_loop", loop},
                        {"snippets", snippets},
                        {"dependencies", deps},
                        {"imported_modules", c.imported_modules},
                        {"evicted", c.evicted},
                        {"tokens", c.token_budget_used},
                        {"loop_truncated", c.loop_truncated},
                        {"snippet_truncated", c.snippet_truncated}});
  }
  text::write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

}  // namespace dlrepro::context
