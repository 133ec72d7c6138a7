#include "dlrepro/py/scope.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_set>

#include "dlrepro/util/assets.hpp"
#include "dlrepro/util/text.hpp"

namespace dlrepro::py {
namespace {

std::unordered_set<std::string> load_words(std::string_view asset_name) {
  std::unordered_set<std::string> words;
  for (auto& line : text::split_lines(asset(asset_name))) {
    auto w = text::trim(line);
    if (!w.empty()) words.emplace(w);
  }
  return words;
}

// Names the interpreter provides in every module namespace.
const std::unordered_set<std::string> kModuleDunders = {
    "__name__", "__file__", "__doc__", "__builtins__", "__spec__", "__loader__",
    "__package__", "__path__", "__annotations__", "__dict__", "__cached__",
};

enum class ScopeKind { Module, Function, Class, Comprehension };

struct Scope {
  ScopeKind kind;
  Scope* parent = nullptr;
  std::set<std::string> bound;
  std::set<std::string> globals;
  std::set<std::string> nonlocals;
  std::map<std::string, int> bind_count;
};

struct Load {
  Scope* scope;
  NameUse use;
};

struct Signature {
  std::vector<std::string> positional;  // posonly + normal, in order
  std::vector<bool> positional_default;
  std::set<std::string> posonly;
  std::vector<std::string> kwonly;
  std::vector<bool> kwonly_default;
  bool varargs = false;
  bool kwargs = false;
};

Signature signature_of(const Node& args, bool drop_first) {
  Signature sig;
  bool dropped = !drop_first;
  for (const Node* a : args.all(Role::Arg)) {
    switch (a->param_kind) {
      case ParamKind::PosOnly:
      case ParamKind::Normal:
        if (!dropped) {
          dropped = true;
          continue;
        }
        sig.positional.push_back(a->name);
        sig.positional_default.push_back(a->first(Role::Default) != nullptr);
        if (a->param_kind == ParamKind::PosOnly) sig.posonly.insert(a->name);
        break;
      case ParamKind::VarArgs:
        sig.varargs = true;
        break;
      case ParamKind::KwOnly:
        sig.kwonly.push_back(a->name);
        sig.kwonly_default.push_back(a->first(Role::Default) != nullptr);
        break;
      case ParamKind::KwArgs:
        sig.kwargs = true;
        break;
    }
  }
  return sig;
}

class Analyzer {
 public:
  ModuleSymbols run(const Node& module) {
    auto* top = new_scope(ScopeKind::Module, nullptr);
    module_ = top;
    collect_signatures(module);
    for (const auto& c : module.children) visit(*c, top);
    resolve();
    std::sort(out_.defined.begin(), out_.defined.end());
    out_.defined.erase(std::unique(out_.defined.begin(), out_.defined.end()), out_.defined.end());
    return std::move(out_);
  }

 private:
  Scope* new_scope(ScopeKind kind, Scope* parent) {
    scopes_.push_back(std::make_unique<Scope>());
    auto* s = scopes_.back().get();
    s->kind = kind;
    s->parent = parent;
    return s;
  }

  void bind(Scope* s, const std::string& name) {
    if (s->globals.count(name)) {
      module_->bound.insert(name);
      ++module_->bind_count[name];
      return;
    }
    s->bound.insert(name);
    ++s->bind_count[name];
  }

  void collect_signatures(const Node& module) {
    for (const Node* stmt : module.all(Role::Body)) {
      if (stmt->kind == NodeKind::FunctionDef) {
        out_.top_level_defs.push_back(stmt->name);
        if (stmt->all(Role::Decorator).empty())
          signatures_[stmt->name] = signature_of(*stmt->first(Role::Params), false);
      } else if (stmt->kind == NodeKind::ClassDef) {
        out_.top_level_defs.push_back(stmt->name);
        // Constructors are checkable only for plain classes with a local __init__.
        if (!stmt->all(Role::Base).empty() || !stmt->all(Role::Keyword).empty() ||
            !stmt->all(Role::Decorator).empty())
          continue;
        for (const Node* member : stmt->all(Role::Body)) {
          if (member->kind == NodeKind::FunctionDef && member->name == "__init__" &&
              member->all(Role::Decorator).empty()) {
            signatures_[stmt->name] = signature_of(*member->first(Role::Params), true);
          }
        }
      }
    }
  }

  void visit_children(const Node& n, Scope* s) {
    for (const auto& c : n.children) visit(*c, s);
  }

  void visit_params(const Node& params, Scope* outer, Scope* inner) {
    for (const Node* a : params.all(Role::Arg)) {
      for (const auto& c : a->children) visit(*c, outer);  // annotations and defaults
      bind(inner, a->name);
    }
  }

  void visit(const Node& n, Scope* s) {
    switch (n.kind) {
      case NodeKind::FunctionDef: {
        auto* fs = new_scope(ScopeKind::Function, s);
        for (const auto& c : n.children) {
          if (c->role == Role::Params) visit_params(*c, s, fs);
          else if (c->role == Role::Body) continue;
          else visit(*c, s);
        }
        bind(s, n.name);
        prescan_declarations(n, fs);
        for (const Node* b : n.all(Role::Body)) visit(*b, fs);
        return;
      }
      case NodeKind::Lambda: {
        auto* fs = new_scope(ScopeKind::Function, s);
        if (const Node* p = n.first(Role::Params)) visit_params(*p, s, fs);
        if (const Node* b = n.first(Role::Body)) visit(*b, fs);
        return;
      }
      case NodeKind::ClassDef: {
        for (const auto& c : n.children)
          if (c->role != Role::Body) visit(*c, s);
        bind(s, n.name);
        auto* cs = new_scope(ScopeKind::Class, s);
        bind(cs, "__class__");
        bind(cs, "__module__");
        bind(cs, "__qualname__");
        prescan_declarations(n, cs);
        for (const Node* b : n.all(Role::Body)) visit(*b, cs);
        return;
      }
      case NodeKind::ListComp:
      case NodeKind::SetComp:
      case NodeKind::DictComp:
      case NodeKind::GeneratorExp: {
        auto gens = n.all(Role::Generator);
        auto* cs = new_scope(ScopeKind::Comprehension, s);
        for (std::size_t i = 0; i < gens.size(); ++i) {
          const Node* g = gens[i];
          if (const Node* it = g->first(Role::Iter)) visit(*it, i == 0 ? s : cs);
          if (const Node* t = g->first(Role::Target)) visit(*t, cs);
          for (const Node* cond : g->all(Role::Cond)) visit(*cond, cs);
        }
        for (const Node* e : n.all(Role::Elt)) visit(*e, cs);
        return;
      }
      case NodeKind::NamedExpr: {
        Scope* target = s;
        while (target->kind == ScopeKind::Comprehension && target->parent) target = target->parent;
        if (const Node* t = n.first(Role::Target)) bind(target, t->name);
        if (const Node* v = n.first(Role::Value)) visit(*v, s);
        return;
      }
      case NodeKind::Name:
        if (n.ctx == Ctx::Load) {
          loads_.push_back({s, {n.name, n.line, n.col}});
        } else {
          bind(s, n.name);
        }
        return;
      case NodeKind::Import:
        for (const Node* a : n.all(Role::Name)) {
          std::string bound = a->text.empty() ? a->name.substr(0, a->name.find('.')) : a->text;
          bind(s, bound);
          out_.imports.push_back({a->name, "", bound, 0, a->line});
        }
        return;
      case NodeKind::ImportFrom:
        for (const Node* a : n.all(Role::Name)) {
          if (a->name == "*") {
            out_.star_import = true;
            out_.imports.push_back({n.name, "*", "", n.level, n.line});
            continue;
          }
          std::string bound = a->text.empty() ? a->name : a->text;
          bind(s, bound);
          out_.imports.push_back({n.name, a->name, bound, n.level, a->line});
        }
        return;
      case NodeKind::ExceptHandler:
        if (!n.name.empty()) bind(s, n.name);
        visit_children(n, s);
        return;
      case NodeKind::Global:
      case NodeKind::Nonlocal:
        return;  // handled by prescan_declarations
      case NodeKind::Call:
        check_call(n, s);
        visit_children(n, s);
        return;
      default:
        visit_children(n, s);
        return;
    }
  }

  // global/nonlocal apply to the whole scope body regardless of position.
  void prescan_declarations(const Node& owner, Scope* s) {
    std::vector<const Node*> stack;
    for (const Node* b : owner.all(Role::Body)) stack.push_back(b);
    while (!stack.empty()) {
      const Node* n = stack.back();
      stack.pop_back();
      if (n->kind == NodeKind::Global) s->globals.insert(n->names.begin(), n->names.end());
      if (n->kind == NodeKind::Nonlocal) s->nonlocals.insert(n->names.begin(), n->names.end());
      if (n->kind == NodeKind::FunctionDef || n->kind == NodeKind::ClassDef || n->kind == NodeKind::Lambda) continue;
      for (const auto& c : n->children) stack.push_back(c.get());
    }
  }

  void check_call(const Node& call, Scope* s) {
    const Node* func = call.first(Role::Func);
    if (!func || func->kind != NodeKind::Name) return;
    pending_calls_.push_back({&call, s});
  }

  bool resolves(const std::string& name, Scope* s) const {
    if (s->globals.count(name)) return module_->bound.count(name) > 0;
    // Class scopes are visible only to their own body, not to nested functions.
    bool first = true;
    for (Scope* cur = s; cur; cur = cur->parent) {
      if (cur->kind == ScopeKind::Class && !first) continue;
      if (cur->bound.count(name) || cur->nonlocals.count(name)) return true;
      first = false;
    }
    return false;
  }

  // Scope that owns `name` as seen from `s`, or null.
  Scope* owner(const std::string& name, Scope* s) const {
    if (s->globals.count(name)) return module_;
    bool first = true;
    for (Scope* cur = s; cur; cur = cur->parent) {
      if (cur->kind == ScopeKind::Class && !first) continue;
      if (cur->bound.count(name)) return cur;
      first = false;
    }
    return nullptr;
  }

  void resolve() {
    for (const auto& name : module_->bound) out_.defined.push_back(name);
    for (const auto& ld : loads_) {
      if (resolves(ld.use.name, ld.scope)) continue;
      out_.free_names.push_back(ld.use);
      if (!is_builtin(ld.use.name) && !kModuleDunders.count(ld.use.name) && !out_.star_import)
        out_.undefined.push_back(ld.use);
    }
    for (const auto& [call, s] : pending_calls_) {
      const Node* func = call->first(Role::Func);
      if (owner(func->name, s) != module_) continue;
      if (module_->bind_count[func->name] != 1) continue;  // rebound: signature unknown
      auto it = signatures_.find(func->name);
      if (it == signatures_.end()) continue;
      check_arity(*call, func->name, it->second);
    }
    std::stable_sort(out_.arity.begin(), out_.arity.end(),
                     [](const ArityIssue& a, const ArityIssue& b) { return a.line < b.line; });
  }

  void check_arity(const Node& call, const std::string& name, const Signature& sig) {
    std::size_t n_pos = 0;
    std::set<std::string> keywords;
    for (const Node* a : call.all(Role::Arg)) {
      if (a->kind == NodeKind::Starred) return;  // *args: count unknown
      ++n_pos;
    }
    for (const Node* k : call.all(Role::Keyword)) {
      if (k->name.empty()) return;  // **kwargs: names unknown
      keywords.insert(k->name);
    }
    if (n_pos > sig.positional.size() && !sig.varargs) {
      out_.arity.push_back({ArityProblem::TooManyPositional, name, "", call.line, call.col});
    }
    std::set<std::string> accepted(sig.kwonly.begin(), sig.kwonly.end());
    for (const auto& p : sig.positional)
      if (!sig.posonly.count(p)) accepted.insert(p);
    for (const auto& k : keywords) {
      if (!accepted.count(k) && !sig.kwargs)
        out_.arity.push_back({ArityProblem::UnexpectedKeyword, name, k, call.line, call.col});
    }
    for (std::size_t i = n_pos; i < sig.positional.size(); ++i) {
      if (sig.positional_default[i]) continue;
      const auto& p = sig.positional[i];
      if (keywords.count(p) && !sig.posonly.count(p)) continue;
      out_.arity.push_back({ArityProblem::MissingArgument, name, p, call.line, call.col});
    }
    for (std::size_t i = 0; i < sig.kwonly.size(); ++i) {
      if (!sig.kwonly_default[i] && !keywords.count(sig.kwonly[i]))
        out_.arity.push_back({ArityProblem::MissingArgument, name, sig.kwonly[i], call.line, call.col});
    }
  }

  std::vector<std::unique_ptr<Scope>> scopes_;
  Scope* module_ = nullptr;
  std::vector<Load> loads_;
  std::vector<std::pair<const Node*, Scope*>> pending_calls_;
  std::map<std::string, Signature> signatures_;
  ModuleSymbols out_;
};

}  // namespace

ModuleSymbols analyze(const Node& module) { return Analyzer().run(module); }

bool is_builtin(std::string_view name) {
  static const auto words = load_words("python/builtins.txt");
  return words.count(std::string(name)) > 0;
}

bool is_stdlib_module(std::string_view dotted) {
  auto top = dotted.substr(0, dotted.find('.'));
  static const auto words = load_words("python/stdlib_modules.txt");
  return words.count(std::string(top)) > 0;
}

}  // namespace dlrepro::py
