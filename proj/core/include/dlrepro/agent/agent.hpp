#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dlrepro/context/context.hpp"
#include "dlrepro/gateway/gateway.hpp"
#include "dlrepro/oracle/oracle.hpp"
#include "dlrepro/plan/plan.hpp"
#include "dlrepro/report/report.hpp"

namespace dlrepro::agent {

// Generation is not a feedback stage proper; a failed generation is recorded
// with it so the next attempt's prompt can mention it.
enum class StageName { Generation, Structural, Static, Relevance, Runtime };
enum class Verdict { Pass, Regenerate, SwitchContext };
std::string_view to_string(StageName s);
std::string_view to_string(Verdict v);

struct Finding {
  std::string kind;  // e.g. "syntax", "undefined name", "unresolved import", "invalid call arity"
  std::string message;
  int line = 0;
  int col = 0;
};

struct FeedbackRecord {
  StageName stage = StageName::Structural;
  Verdict verdict = Verdict::Pass;
  std::vector<Finding> details;
  std::string note;  // warnings on a pass, analyzer fallbacks
  std::string timestamp;
};

struct CandidateScript {
  int attempt = 1;
  int context_rank = 1;
  std::string text;
  std::vector<FeedbackRecord> lineage;
};

struct TraceEvent {
  std::string event;  // context_start | attempt_start | generation | feedback | context_switch | outcome
  int context_rank = 0;
  int attempt = 0;
  std::optional<StageName> stage;
  std::optional<Verdict> verdict;
  std::vector<Finding> details;
  std::string note;
  std::string script_sha256;
  std::string timestamp;
};

std::string to_jsonl(const TraceEvent& e);

enum class Status { Reproduced, Exhausted };
std::string_view to_string(Status s);

struct AgentOutcome {
  Status status = Status::Exhausted;
  std::optional<CandidateScript> final_script;
  int attempts_total = 0;
  int contexts_tried = 0;
  std::vector<TraceEvent> trace;
};

struct AttemptInput {
  const context::ReproductionContext& context;
  const plan::ReproductionPlan& plan;
  int attempt;
  int max_attempts;
  const std::vector<FeedbackRecord>& prior;  // this context's non-pass feedback so far
};

/// Returns the script, or nullopt with `failure` filled when no usable script came back.
using GenerateFn = std::function<std::optional<std::string>(const AttemptInput&, std::string* failure)>;
using CheckFn = std::function<FeedbackRecord(const CandidateScript&, const context::ReproductionContext&)>;

struct Stages {
  GenerateFn generate;
  CheckFn structural;
  CheckFn static_check;
  CheckFn relevance;
  CheckFn runtime;
};

struct AgentOptions {
  int max_attempts = 5;
  int max_contexts = 5;
  std::set<StageName> disabled;  // disabled checks pass unconditionally and leave no trace
  std::function<std::string()> clock;  // timestamps; UTC ISO-8601 when unset
};

using TraceSink = std::function<void(const TraceEvent&)>;

/// Contexts in rank order; for each, up to max_attempts of generate then
/// structural, static, relevance and runtime checks.
AgentOutcome run_agent(const std::vector<context::ReproductionContext>& contexts,
                       const std::vector<plan::ReproductionPlan>& plans, const Stages& stages,
                       const AgentOptions& options = {}, const TraceSink& sink = {});

// Default stage implementations.

/// Non-pass findings rendered for the next prompt.
std::string render_feedback(const std::vector<FeedbackRecord>& prior);

std::optional<std::string> generate_candidate(const AttemptInput& in, const report::RestructuredReport& report,
                                              const gateway::CompleteFn& generate,
                                              const gateway::CompleteFn& refine, std::string* failure);

FeedbackRecord structural_check(std::string_view script);

struct StaticConfig {
  /// External analyzer; the script path is appended. Empty = built-in checks only.
  std::vector<std::string> command = {"python3", "-m", "pyflakes"};
  std::chrono::milliseconds timeout{60000};
  /// Top-level module names the script may import besides the standard library.
  std::set<std::string> allowed_modules;
};

/// Findings of one analyzer run, already classified.
struct LintReport {
  std::vector<Finding> blocking;
  std::vector<Finding> advisory;
  bool analyzer_available = true;
  std::string analyzer_note;
};

/// Parses pyflakes text ("path:line:col: message") or pylint JSON output.
LintReport parse_lint_output(std::string_view output);

/// Built-in checks: undefined names (scope walk), imports outside the standard
/// library and allowlist, call arity against module-level definitions.
LintReport builtin_lint(std::string_view script, const std::set<std::string>& allowed_modules,
                        bool undefined_names = true);

FeedbackRecord static_check(std::string_view script, const StaticConfig& config);

FeedbackRecord relevance_check(std::string_view script, const report::RestructuredReport& report,
                               const gateway::CompleteFn& complete);

FeedbackRecord runtime_check(std::string_view script, const context::ReproductionContext& context,
                             const report::RestructuredReport& report,
                             const std::vector<oracle::TaxonomyEntry>& taxonomy, double threshold,
                             const gateway::CompleteFn& complete);

/// Top-level names a script may import given the contexts (their imports and the corpus modules).
std::set<std::string> allowed_modules_for(const std::vector<context::ReproductionContext>& contexts,
                                          const std::vector<std::string>& corpus_modules);

}  // namespace dlrepro::agent
