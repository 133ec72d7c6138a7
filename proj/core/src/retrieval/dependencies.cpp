#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <regex>
#include <set>

#include "dlrepro/py/parser.hpp"
#include "dlrepro/py/scope.hpp"
#include "dlrepro/retrieval/retrieval.hpp"
#include "dlrepro/util/text.hpp"

namespace dlrepro::retrieval {

using py::Node;
using py::NodeKind;
using py::Role;

namespace {

struct Binding {
  int line = 0;
  bool is_import = false;
  py::ImportRef import;
};

struct FileInfo {
  bool ok = false;
  std::string module;   // dotted module path
  bool is_package = false;
  std::map<std::string, Binding> bindings;  // module-level names
};

void collect_targets(const Node& t, int line, std::map<std::string, Binding>& out) {
  if (t.kind == NodeKind::Name) {
    out.emplace(t.name, Binding{line, false, {}});
    return;
  }
  if (t.kind == NodeKind::Tuple || t.kind == NodeKind::List || t.kind == NodeKind::Starred)
    for (const auto& c : t.children) collect_targets(*c, line, out);
}

// Module-level bindings, looking through compound statements but not into defs.
void collect_bindings(const Node& block, std::map<std::string, Binding>& out) {
  for (const auto& child : block.children) {
    const Node& s = *child;
    if (!s.is_statement() && s.kind != NodeKind::ExceptHandler) continue;
    switch (s.kind) {
      case NodeKind::FunctionDef:
      case NodeKind::ClassDef:
        out.emplace(s.name, Binding{s.line, false, {}});
        break;
      case NodeKind::Assign:
      case NodeKind::AnnAssign:
      case NodeKind::AugAssign:
        for (const Node* t : s.all(Role::Target)) collect_targets(*t, s.line, out);
        break;
      case NodeKind::Import:
        for (const Node* a : s.all(Role::Name)) {
          std::string bound = a->text.empty() ? a->name.substr(0, a->name.find('.')) : a->text;
          out.emplace(bound, Binding{a->line, true, {a->text.empty() ? bound : a->name, "", bound, 0, a->line}});
        }
        break;
      case NodeKind::ImportFrom:
        for (const Node* a : s.all(Role::Name)) {
          if (a->name == "*") continue;
          std::string bound = a->text.empty() ? a->name : a->text;
          out.emplace(bound, Binding{a->line, true, {s.name, a->name, bound, s.level, a->line}});
        }
        break;
      case NodeKind::For:
        for (const Node* t : s.all(Role::Target)) collect_targets(*t, s.line, out);
        collect_bindings(s, out);
        break;
      case NodeKind::If:
      case NodeKind::While:
      case NodeKind::With:
      case NodeKind::Try:
      case NodeKind::ExceptHandler:
        collect_bindings(s, out);
        break;
      default:
        break;
    }
  }
}

std::unique_ptr<FileInfo> analyze_file(const index::SourceFile& f) {
  auto info = std::make_unique<FileInfo>();
  info->module = index::module_path_for(f.path);
  info->is_package = f.path.size() >= 11 && f.path.compare(f.path.size() - 11, 11, "__init__.py") == 0;
  auto parsed = py::parse(f.text);
  if (!parsed.ok) return info;
  info->ok = true;
  collect_bindings(*parsed.module, info->bindings);
  return info;
}

// Chunk text made parseable on its own: dedented, class headers given a body.
py::ParseResult parse_chunk(const index::CodeChunk& c) {
  std::string src = text::dedent(c.text);
  auto r = py::parse(src);
  if (r.ok) return r;
  if (c.kind == index::ChunkKind::Class) {
    if (!src.empty() && src.back() != '\n') src += '\n';
    auto r2 = py::parse(src + "    pass\n");
    if (r2.ok) return r2;
  }
  return r;
}

std::vector<std::string> scrape_imports(std::string_view text) {
  static const std::regex from_re(R"(^\s*from\s+([.\w]+)\s+import\b)");
  static const std::regex import_re(R"(^\s*import\s+([\w.]+(?:\s+as\s+\w+)?(?:\s*,\s*[\w.]+(?:\s+as\s+\w+)?)*))");
  std::vector<std::string> mods;
  for (const auto& line : text::split_lines(text)) {
    std::smatch m;
    if (std::regex_search(line, m, from_re)) {
      mods.push_back(m[1]);
    } else if (std::regex_search(line, m, import_re)) {
      std::string list = m[1];
      for (auto part : text::split_lines(text::replace_all(list, ",", "\n"))) {
        auto t = std::string(text::trim(part));
        mods.push_back(t.substr(0, t.find(' ')));
      }
    }
  }
  return mods;
}

void add_unique(std::vector<std::string>& v, const std::string& s) {
  if (!s.empty() && std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

}  // namespace

struct DependencyResolver::Impl {
  const index::Corpus& corpus;
  mutable std::mutex mu;
  mutable std::map<std::string, std::unique_ptr<FileInfo>> files;
  std::map<std::string, const index::SourceFile*> by_module;

  explicit Impl(const index::Corpus& c) : corpus(c) {
    for (const auto& f : c.files) by_module.emplace(index::module_path_for(f.path), &f);
  }

  const FileInfo& info(const index::SourceFile& f) const {
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = files[f.path];
    if (!slot) slot = analyze_file(f);
    return *slot;
  }

  const index::SourceFile* module_file(const std::string& dotted) const {
    if (dotted.empty()) return nullptr;
    auto it = by_module.find(dotted);
    if (it != by_module.end()) return it->second;
    // Projects rooted in a subdirectory (src/pkg/...): accept a unique suffix match.
    const index::SourceFile* hit = nullptr;
    std::string suffix = "." + dotted;
    for (const auto& [mod, f] : by_module) {
      if (mod.size() > suffix.size() && mod.compare(mod.size() - suffix.size(), suffix.size(), suffix) == 0) {
        if (hit && hit->path.size() <= f->path.size()) continue;
        hit = f;
      }
    }
    return hit;
  }

  std::string absolute_module(const FileInfo& from, const py::ImportRef& ref) const {
    if (ref.level == 0) return ref.module;
    auto parts = text::split_lines(text::replace_all(from.module, ".", "\n"));
    int drop = ref.level - (from.is_package ? 1 : 0);
    for (int i = 0; i < drop && !parts.empty(); ++i) parts.pop_back();
    if (!ref.module.empty()) parts.push_back(ref.module);
    return text::join(parts, ".");
  }

  const index::CodeChunk* chunk_at(const std::string& path, int line) const {
    for (const auto* c : corpus.chunks_in(path))
      if (c->start_line <= line && line <= c->end_line) return c;
    return nullptr;
  }

  // Where `name` is defined starting from module file `f`, following re-exports.
  struct Site {
    const index::CodeChunk* chunk = nullptr;
    std::string module;
    bool internal_module = false;
  };

  Site locate(const index::SourceFile& f, const std::string& name, int hops) const {
    const FileInfo& fi = info(f);
    auto it = fi.bindings.find(name);
    if (it == fi.bindings.end()) {
      // `from pkg import sub` where sub is a submodule.
      if (fi.is_package && module_file(fi.module + "." + name)) return {nullptr, fi.module + "." + name, true};
      return {nullptr, fi.module, false};
    }
    const Binding& b = it->second;
    if (!b.is_import) return {chunk_at(f.path, b.line), fi.module, false};
    return follow_import(fi, b.import, hops);
  }

  Site follow_import(const FileInfo& fi, const py::ImportRef& ref, int hops) const {
    std::string mod = absolute_module(fi, ref);
    if (ref.name.empty()) {
      // `import a.b [as x]`: the name is the module itself.
      return {nullptr, mod, module_file(mod) != nullptr};
    }
    if (const auto* sub = module_file(mod + "." + ref.name)) {
      (void)sub;
      return {nullptr, mod + "." + ref.name, true};
    }
    const auto* target = module_file(mod);
    if (!target || hops > 4) return {nullptr, mod, false};
    return locate(*target, ref.name, hops + 1);
  }
};

DependencyResolver::DependencyResolver(const index::Corpus& corpus) : impl_(new Impl(corpus)) {}
DependencyResolver::~DependencyResolver() { delete impl_; }

const index::SourceFile* DependencyResolver::module_file(const std::string& dotted) const {
  return impl_->module_file(dotted);
}

DependencyClosure DependencyResolver::resolve(const index::CodeChunk& root, int max_depth) const {
  DependencyClosure out;
  out.root = root.id;
  std::set<std::string> visited{root.id};
  struct Pending {
    const index::CodeChunk* chunk;
    int depth;
  };
  std::vector<Pending> queue{{&root, 0}};

  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const auto [chunk, depth] = queue[qi];
    const index::SourceFile* file = impl_->corpus.file(chunk->file_path);
    auto parsed = parse_chunk(*chunk);
    if (!parsed.ok) {
      if (depth == 0) {
        out.degraded = true;
        for (const auto& m : scrape_imports(chunk->text)) add_unique(out.imported_modules, m);
      }
      continue;
    }
    auto syms = py::analyze(*parsed.module);
    const FileInfo* fi = file ? &impl_->info(*file) : nullptr;

    // Imports written inside the chunk itself.
    std::map<std::string, py::ImportRef> local_imports;
    for (const auto& imp : syms.imports) {
      if (!imp.bound.empty()) local_imports[imp.bound] = imp;
      if (depth == 0 && fi) add_unique(out.imported_modules, impl_->absolute_module(*fi, imp));
    }

    // Attribute chains on names, to follow `module.member` references.
    std::map<std::string, std::vector<std::string>> attrs;
    py::walk(*parsed.module, [&](const Node& n) {
      if (n.kind == NodeKind::Attribute) {
        auto dotted = py::dotted_name(n);
        auto dot = dotted.find('.');
        if (dot != std::string::npos) {
          auto head = dotted.substr(0, dot);
          auto rest = dotted.substr(dot + 1);
          attrs[head].push_back(rest.substr(0, rest.find('.')));
        }
      }
      return true;
    });

    std::set<std::string> names;
    for (const auto& u : syms.free_names)
      if (!py::is_builtin(u.name)) names.insert(u.name);
    for (const auto& [bound, imp] : local_imports) names.insert(bound);

    auto pull = [&](const Impl::Site& site, const std::string& name) {
      ReferencedSymbol ref{name, {}, site.module, depth + 1};
      if (site.chunk && site.chunk->id != chunk->id) {
        ref.chunk_id = site.chunk->id;
        if (visited.insert(site.chunk->id).second) {
          out.pulled_chunks.push_back(*site.chunk);
          if (depth + 1 < max_depth) queue.push_back({site.chunk, depth + 1});
        }
      } else if (site.chunk) {
        return;  // defined in the chunk's own span
      }
      if (depth == 0 || !ref.external()) out.referenced_symbols.push_back(std::move(ref));
    };

    for (const auto& name : names) {
      Impl::Site site;
      auto li = local_imports.find(name);
      if (li != local_imports.end() && fi) {
        site = impl_->follow_import(*fi, li->second, 0);
      } else if (file && fi && fi->ok) {
        auto b = fi->bindings.find(name);
        if (b != fi->bindings.end()) {
          if (b->second.is_import) {
            if (depth == 0) add_unique(out.imported_modules, impl_->absolute_module(*fi, b->second.import));
            site = impl_->follow_import(*fi, b->second.import, 0);
          } else {
            site = {impl_->chunk_at(file->path, b->second.line), fi->module, false};
          }
        }
      }
      if (site.internal_module) {
        // Module object: resolve the members the chunk touches instead.
        const auto* mf = impl_->module_file(site.module);
        auto at = attrs.find(name);
        if (mf && at != attrs.end()) {
          std::set<std::string> members(at->second.begin(), at->second.end());
          for (const auto& m : members) pull(impl_->locate(*mf, m, 0), name + "." + m);
          continue;
        }
      }
      pull(site, name);
    }
  }
  return out;
}

DependencyClosure resolve_dependencies(const ScoredSnippet& snippet, const index::Corpus& corpus, int max_depth) {
  DependencyResolver r(corpus);
  return r.resolve(snippet.chunk, max_depth);
}

}  // namespace dlrepro::retrieval
