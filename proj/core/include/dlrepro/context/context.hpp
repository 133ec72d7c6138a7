#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dlrepro/retrieval/retrieval.hpp"

namespace dlrepro::context {

inline constexpr std::size_t kMaxModules = 5;
inline constexpr std::size_t kSnippetsPerContext = 5;
inline constexpr std::size_t kDefaultTokenBudget = 6000;

struct ModuleGroup {
  std::string module_id;
  std::vector<retrieval::ScoredSnippet> members;  // best first
  double priority = 0.0;                          // max member score
};

/// Groups snippets by module, priority = best member score, top `max_groups`
/// by priority (ties by module id).
std::vector<ModuleGroup> partition_modules(const std::vector<retrieval::ScoredSnippet>& snippets,
                                           std::size_t max_groups = kMaxModules);

/// Pass-through used when partitioning is disabled: consecutive runs of
/// `per_group` snippets in ranked order, module id "*".
std::vector<ModuleGroup> unpartitioned_groups(const std::vector<retrieval::ScoredSnippet>& snippets,
                                              std::size_t max_groups = kMaxModules,
                                              std::size_t per_group = kSnippetsPerContext);

enum class Heuristic { H1 = 1, H2, H3, H4, H5, H6, H7, H8 };
std::string to_string(Heuristic h);

struct LoopComponents {
  bool forward_pass = false;
  bool backward_pass = false;
  bool gradient_step = false;
  bool loss_computation = false;
  bool data_loader = false;
};

struct TrainingLoop {
  std::string chunk_ref;
  std::string file_path;
  int start_line = 0;  // file coordinates
  int end_line = 0;
  std::vector<Heuristic> matched_heuristics;  // ascending
  LoopComponents components;
  std::string text;
  double relevance = 0.0;
  bool scored = false;  // relevance came from the scorer
};

/// Heuristic matches over a piece of source (line numbers relative to it).
std::vector<TrainingLoop> detect_loops(std::string_view source);

/// Loops in the group's members, in member order; unparseable members skipped.
std::vector<TrainingLoop> extract_training_loops(const ModuleGroup& group);

/// Highest-relevance loop. If every scorer call fails, the loop with the most
/// heuristics wins (first on ties) and is left unscored.
std::optional<TrainingLoop> rank_loops(std::vector<TrainingLoop> loops, const retrieval::QueryBundle& query,
                                       const retrieval::CrossScorer& scorer);

struct ContextDependency {
  index::CodeChunk chunk;
  int depth = 1;
};

struct ReproductionContext {
  int rank = 0;
  std::string module_id;
  double priority = 0.0;
  std::optional<TrainingLoop> training_loop;
  std::vector<retrieval::ScoredSnippet> snippets;
  std::vector<ContextDependency> dependencies;
  std::vector<std::string> imported_modules;
  std::vector<std::string> evicted;  // chunk ids dropped for budget
  std::string rendered;
  std::size_t token_budget_used = 0;
  bool loop_truncated = false;     // only the loop span (or a prefix of it) fit the budget
  bool snippet_truncated = false;  // loop-less context whose best snippet alone overflowed
};

struct AssembleOptions {
  std::size_t token_budget = kDefaultTokenBudget;
  std::size_t snippets_per_context = kSnippetsPerContext;
  bool dependencies = true;
  int dependency_depth = retrieval::kDefaultDependencyDepth;
};

/// One context per group, in group order. `loops[i]` is the loop chosen for groups[i].
std::vector<ReproductionContext> assemble_contexts(const std::vector<ModuleGroup>& groups,
                                                   const std::vector<std::optional<TrainingLoop>>& loops,
                                                   const retrieval::DependencyResolver& resolver,
                                                   const AssembleOptions& options = {});

/// contexts/context_<rank>.md plus contexts/manifest.json.
void save_contexts(const std::vector<ReproductionContext>& contexts, const std::filesystem::path& dir);

}  // namespace dlrepro::context
