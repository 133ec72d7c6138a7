#include <algorithm>
#include <cctype>
#include <set>

#include "dlrepro/context/context.hpp"
#include "dlrepro/py/parser.hpp"
#include "dlrepro/util/text.hpp"

namespace dlrepro::context {

using py::Node;
using py::NodeKind;
using py::Role;

std::string to_string(Heuristic h) { return "H" + std::to_string(static_cast<int>(h)); }

namespace {

std::string lower(std::string_view s) { return text::to_lower(s); }

std::string last_part(const std::string& dotted) {
  auto dot = dotted.rfind('.');
  return dot == std::string::npos ? dotted : dotted.substr(dot + 1);
}

bool mentions_loss(const std::string& ident) {
  auto l = lower(ident);
  return l.find("loss") != std::string::npos || l.find("criterion") != std::string::npos;
}

bool model_like(const std::string& ident) {
  auto l = lower(ident);
  return l.find("model") != std::string::npos || l.find("net") != std::string::npos || l == "forward";
}

bool loader_like(const std::string& ident) {
  auto l = lower(ident);
  for (const char* w : {"loader", "dataset", "batches", "data_iter", "dataiter", "train_ds", "train_data"})
    if (l.find(w) != std::string::npos) return true;
  return false;
}

// Evidence gathered over a region.
struct Acc {
  std::set<Heuristic> h;
  LoopComponents comp;
  bool loss_ref = false;
  bool model_call = false;
  std::vector<std::pair<std::string, int>> loss_assigns;  // (name, line)
  std::vector<std::pair<std::string, int>> loads;
  int first = 0;
  int last = 0;

  void touch(const Node& stmt) {
    if (first == 0 || stmt.line < first) first = stmt.line;
    last = std::max(last, stmt.end_line);
  }

  bool any() const { return !h.empty(); }

  void finish() {
    for (const auto& [name, line] : loss_assigns)
      for (const auto& [lname, lline] : loads)
        if (lname == name && lline > line) {
          h.insert(Heuristic::H7);
          comp.loss_computation = true;
        }
  }
};

void scan_call(const Node& call, Acc& acc) {
  const Node* func = call.first(Role::Func);
  if (!func) return;
  std::string dotted = py::dotted_name(*func);
  std::string name = dotted.empty() ? (func->kind == NodeKind::Attribute ? func->name : "") : last_part(dotted);
  bool attr = func->kind == NodeKind::Attribute;
  std::string receiver = attr && dotted.size() > name.size() ? dotted.substr(0, dotted.size() - name.size() - 1) : "";

  if (attr && (name == "fit" || name == "fit_generator" || name == "train_on_batch")) {
    acc.h.insert(Heuristic::H1);
    acc.comp.forward_pass = acc.comp.backward_pass = acc.comp.gradient_step = true;
  }
  if (attr && (name == "step" || name == "apply_gradients" || name == "minimize")) {
    acc.h.insert(Heuristic::H2);
    acc.comp.gradient_step = true;
  }
  auto lr = lower(receiver);
  if (name == "zero_grad" || name == "clear_grad" || name == "clear_gradients" ||
      (attr && name == "reset" &&
       (lr.find("tape") != std::string::npos || lr.find("grad") != std::string::npos ||
        lr.find("opt") != std::string::npos))) {
    acc.h.insert(Heuristic::H3);
    acc.comp.gradient_step = true;
  }
  if (attr && name == "backward") {
    acc.h.insert(Heuristic::H4);
    acc.comp.backward_pass = true;
  }
  if (attr && name == "gradient" && lower(receiver).find("tape") != std::string::npos) acc.comp.backward_pass = true;
  if (name == "GradientTape") acc.comp.backward_pass = true;
  if (mentions_loss(name)) {
    acc.loss_ref = true;
    acc.comp.loss_computation = true;
  }
  if (model_like(name) || (!receiver.empty() && model_like(last_part(receiver)) && name == "forward") ||
      (!attr && model_like(name))) {
    acc.model_call = true;
    acc.comp.forward_pass = true;
  }
  if (name == "DataLoader") acc.comp.data_loader = true;
}

void scan(const Node& n, Acc& acc);

void scan_children(const Node& n, Acc& acc) {
  for (const auto& c : n.children) scan(*c, acc);
}

void scan(const Node& n, Acc& acc) {
  switch (n.kind) {
    case NodeKind::Call:
      scan_call(n, acc);
      break;
    case NodeKind::With:
      for (const Node* item : n.all(Role::Item)) {
        const Node* ctx = item->first(Role::ContextExpr);
        if (ctx && ctx->kind == NodeKind::Call) {
          const Node* f = ctx->first(Role::Func);
          if (f && last_part(py::dotted_name(*f)) == "GradientTape") {
            acc.h.insert(Heuristic::H5);
            acc.comp.backward_pass = true;
          }
        }
      }
      break;
    case NodeKind::Assign:
    case NodeKind::AnnAssign: {
      const Node* value = n.first(Role::Value);
      std::string callee;
      if (value && value->kind == NodeKind::Call) {
        if (const Node* f = value->first(Role::Func)) callee = last_part(py::dotted_name(*f));
        for (const Node* t : n.all(Role::Target))
          if (t->kind == NodeKind::Name && (mentions_loss(t->name) || mentions_loss(callee)))
            acc.loss_assigns.emplace_back(t->name, n.line);
      }
      for (const Node* t : n.all(Role::Target))
        if (t->kind == NodeKind::Attribute && t->name == "grad" && value && value->kind == NodeKind::Constant &&
            value->text == "None") {
          acc.h.insert(Heuristic::H3);
          acc.comp.gradient_step = true;
        }
      break;
    }
    case NodeKind::Name:
      if (n.ctx == py::Ctx::Load) {
        acc.loads.emplace_back(n.name, n.line);
        if (mentions_loss(n.name)) {
          acc.loss_ref = true;
          acc.comp.loss_computation = true;
        }
      }
      break;
    case NodeKind::Attribute:
      if (mentions_loss(n.name)) {
        acc.loss_ref = true;
        acc.comp.loss_computation = true;
      }
      break;
    default:
      break;
  }
  scan_children(n, acc);
}

struct Region {
  const Node* node;  // loop / function / class; null for module-level statements
  Acc acc;
};

Region loop_region(const Node& loop) {
  Region r{&loop, {}};
  scan_children(loop, r.acc);
  r.acc.finish();
  if (r.acc.loss_ref) r.acc.h.insert(Heuristic::H6);
  // The loader may drive the outer loop or any loop nested inside it.
  bool loader = false;
  py::walk(loop, [&](const Node& l) {
    if (l.kind != NodeKind::For) return true;
    if (const Node* it = l.first(Role::Iter)) {
      py::walk(*it, [&](const Node& x) {
        if ((x.kind == NodeKind::Name || x.kind == NodeKind::Attribute) && loader_like(x.name)) loader = true;
        if (x.kind == NodeKind::Call)
          if (const Node* f = x.first(Role::Func); f && loader_like(last_part(py::dotted_name(*f)))) loader = true;
        return true;
      });
    }
    return true;
  });
  if (loader) r.acc.comp.data_loader = true;
  if (loader && r.acc.model_call) r.acc.h.insert(Heuristic::H8);
  return r;
}

// Splits `block`'s statements into loop regions and the evidence left
// outside loops, which accumulates into `outer`.
void collect(const Node& block, Acc& outer, std::vector<Region>& regions) {
  for (const auto& child : block.children) {
    const Node& s = *child;
    if (s.kind == NodeKind::For || s.kind == NodeKind::While) {
      auto r = loop_region(s);
      if (r.acc.any()) regions.push_back(std::move(r));
      continue;
    }
    if (s.kind == NodeKind::FunctionDef || s.kind == NodeKind::ClassDef) {
      Region fr{&s, {}};
      std::vector<Region> inner;
      collect(s, fr.acc, inner);
      fr.acc.finish();
      if (fr.acc.any()) regions.push_back(std::move(fr));
      for (auto& r : inner) regions.push_back(std::move(r));
      continue;
    }
    if (s.is_statement() || s.kind == NodeKind::ExceptHandler) {
      Acc local;
      // Expression parts of this statement, then nested statement blocks.
      for (const auto& c : s.children) {
        if (c->is_statement() || c->kind == NodeKind::ExceptHandler) continue;
        scan(*c, local);
      }
      if (s.kind == NodeKind::With) {
        Acc with_acc;
        scan(s, with_acc);  // only for the GradientTape check; children rescanned below
        if (with_acc.h.count(Heuristic::H5)) {
          local.h.insert(Heuristic::H5);
          local.comp.backward_pass = true;
        }
      }
      if (s.kind == NodeKind::Assign || s.kind == NodeKind::AnnAssign) {
        const Node* value = s.first(Role::Value);
        std::string callee;
        if (value && value->kind == NodeKind::Call)
          if (const Node* f = value->first(Role::Func)) callee = last_part(py::dotted_name(*f));
        if (value && value->kind == NodeKind::Call)
          for (const Node* t : s.all(Role::Target))
            if (t->kind == NodeKind::Name && (mentions_loss(t->name) || mentions_loss(callee)))
              local.loss_assigns.emplace_back(t->name, s.line);
      }
      bool matched = !local.h.empty();
      outer.h.insert(local.h.begin(), local.h.end());
      auto& oc = outer.comp;
      oc.forward_pass |= local.comp.forward_pass;
      oc.backward_pass |= local.comp.backward_pass;
      oc.gradient_step |= local.comp.gradient_step;
      oc.loss_computation |= local.comp.loss_computation;
      oc.data_loader |= local.comp.data_loader;
      outer.loss_ref |= local.loss_ref;
      outer.model_call |= local.model_call;
      outer.loss_assigns.insert(outer.loss_assigns.end(), local.loss_assigns.begin(), local.loss_assigns.end());
      outer.loads.insert(outer.loads.end(), local.loads.begin(), local.loads.end());
      if (matched || !local.loss_assigns.empty()) outer.touch(s);
      collect(s, outer, regions);
    }
  }
}

}  // namespace

std::vector<TrainingLoop> detect_loops(std::string_view source) {
  auto parsed = py::parse(source);
  if (!parsed.ok) return {};
  Acc module_acc;
  std::vector<Region> regions;
  collect(*parsed.module, module_acc, regions);
  module_acc.finish();

  std::vector<TrainingLoop> out;
  auto emit = [&](int a, int b, const Acc& acc) {
    TrainingLoop l;
    l.start_line = a;
    l.end_line = b;
    l.matched_heuristics.assign(acc.h.begin(), acc.h.end());
    l.components = acc.comp;
    l.text = text::slice_lines(source, a, b);
    out.push_back(std::move(l));
  };
  for (const auto& r : regions) emit(r.node->line, r.node->end_line, r.acc);
  if (module_acc.any()) emit(module_acc.first, module_acc.last, module_acc);
  std::sort(out.begin(), out.end(), [](const TrainingLoop& a, const TrainingLoop& b) {
    return std::tie(a.start_line, a.end_line) < std::tie(b.start_line, b.end_line);
  });
  return out;
}

std::vector<TrainingLoop> extract_training_loops(const ModuleGroup& group) {
  std::vector<TrainingLoop> out;
  std::set<std::tuple<std::string, int, int>> seen;
  for (const auto& m : group.members) {
    const auto& c = m.chunk;
    if (c.degraded) continue;
    std::string src = text::dedent(c.text);
    auto loops = detect_loops(src);
    if (loops.empty() && c.kind == index::ChunkKind::Class) {
      if (!src.empty() && src.back() != '\n') src += '\n';
      loops = detect_loops(src + "    pass\n");
    }
    for (auto& l : loops) {
      l.chunk_ref = c.id;
      l.file_path = c.file_path;
      l.text = text::slice_lines(c.text, l.start_line, std::min(l.end_line, c.end_line - c.start_line + 1));
      l.start_line += c.start_line - 1;
      l.end_line = std::min(l.end_line + c.start_line - 1, c.end_line);
      if (seen.insert({l.file_path, l.start_line, l.end_line}).second) out.push_back(std::move(l));
    }
  }
  return out;
}

std::optional<TrainingLoop> rank_loops(std::vector<TrainingLoop> loops, const retrieval::QueryBundle& query,
                                       const retrieval::CrossScorer& scorer) {
  if (loops.empty()) return std::nullopt;
  bool any = false;
  for (auto& l : loops) {
    try {
      double s = scorer(query.raw_text, l.text);
      if (s >= 0.0 && s <= 1.0) {
        l.relevance = s;
        l.scored = true;
        any = true;
      }
    } catch (const std::exception&) {
    }
  }
  if (!any) {
    auto best = std::max_element(loops.begin(), loops.end(), [](const TrainingLoop& a, const TrainingLoop& b) {
      return a.matched_heuristics.size() < b.matched_heuristics.size();
    });
    return *best;
  }
  const TrainingLoop* best = nullptr;
  for (const auto& l : loops)
    if (l.scored && (!best || l.relevance > best->relevance)) best = &l;
  return *best;
}

}  // namespace dlrepro::context
