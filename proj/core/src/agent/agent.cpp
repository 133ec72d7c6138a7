#include "dlrepro/agent/agent.hpp"

#include <chrono>
#include <ctime>

#include <json.hpp>

#include "dlrepro/util/digest.hpp"
#include "dlrepro/util/error.hpp"

namespace dlrepro::agent {
namespace {

std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  auto t = std::chrono::system_clock::to_time_t(now);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

}  // namespace

std::string_view to_string(StageName s) {
  switch (s) {
    case StageName::Generation: return "generation";
    case StageName::Structural: return "structural";
    case StageName::Static: return "static";
    case StageName::Relevance: return "relevance";
    case StageName::Runtime: return "runtime";
  }
  return "generation";
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Regenerate: return "regenerate";
    case Verdict::SwitchContext: return "switch_context";
  }
  return "pass";
}

std::string_view to_string(Status s) { return s == Status::Reproduced ? "reproduced" : "exhausted"; }

std::string to_jsonl(const TraceEvent& e) {
  nlohmann::ordered_json j;
  j["ts"] = e.timestamp;
  j["event"] = e.event;
  j["context"] = e.context_rank;
  j["attempt"] = e.attempt;
  if (e.stage) j["stage"] = to_string(*e.stage);
  if (e.verdict) j["verdict"] = to_string(*e.verdict);
  if (!e.details.empty()) {
    auto d = nlohmann::ordered_json::array();
    for (const auto& f : e.details) d.push_back({{"kind", f.kind}, {"message", f.message}, {"line", f.line}, {"col", f.col}});
    j["details"] = d;
  }
  if (!e.note.empty()) j["note"] = e.note;
  if (!e.script_sha256.empty()) j["script_sha256"] = e.script_sha256;
  return j.dump();
}

AgentOutcome run_agent(const std::vector<context::ReproductionContext>& contexts,
                       const std::vector<plan::ReproductionPlan>& plans, const Stages& stages,
                       const AgentOptions& options, const TraceSink& sink) {
  if (contexts.empty() || contexts.size() != plans.size())
    throw Error(ErrorKind::InvalidArgument, "run_agent needs one plan per context and at least one context");
  if (options.max_attempts < 1 || options.max_contexts < 1)
    throw Error(ErrorKind::InvalidArgument, "attempt and context budgets must be positive");
  auto clock = options.clock ? options.clock : utc_now;

  AgentOutcome out;
  auto emit = [&](TraceEvent e) {
    e.timestamp = clock();
    if (sink) sink(e);
    out.trace.push_back(std::move(e));
  };

  const std::vector<std::pair<StageName, const CheckFn*>> checks = {
      {StageName::Structural, &stages.structural},
      {StageName::Static, &stages.static_check},
      {StageName::Relevance, &stages.relevance},
      {StageName::Runtime, &stages.runtime},
  };

  std::size_t n_contexts = std::min(contexts.size(), static_cast<std::size_t>(options.max_contexts));
  for (std::size_t ci = 0; ci < n_contexts; ++ci) {
    const auto& ctx = contexts[ci];
    ++out.contexts_tried;
    emit({"context_start", ctx.rank, 0, {}, {}, {}, ctx.module_id, "", ""});
    std::vector<FeedbackRecord> lineage;
    bool switched = false;
    for (int attempt = 1; attempt <= options.max_attempts && !switched; ++attempt) {
      ++out.attempts_total;
      emit({"attempt_start", ctx.rank, attempt, {}, {}, {}, "", "", ""});

      std::string failure;
      AttemptInput in{ctx, plans[ci], attempt, options.max_attempts, lineage};
      auto script = stages.generate(in, &failure);
      if (!script) {
        FeedbackRecord fb{StageName::Generation, Verdict::Regenerate, {{"generation", failure, 0, 0}}, "", clock()};
        emit({"generation", ctx.rank, attempt, StageName::Generation, Verdict::Regenerate, fb.details, "", "", ""});
        lineage.push_back(std::move(fb));
        continue;
      }
      CandidateScript cand{attempt, ctx.rank, *script, lineage};
      emit({"generation", ctx.rank, attempt, StageName::Generation, Verdict::Pass, {}, "", sha256_hex(*script), ""});

      bool all_pass = true;
      for (const auto& [name, fn] : checks) {
        if (options.disabled.count(name)) continue;
        FeedbackRecord fb = (*fn)(cand, ctx);
        fb.stage = name;
        // Only relevance may abandon a context.
        if (fb.verdict == Verdict::SwitchContext && name != StageName::Relevance) fb.verdict = Verdict::Regenerate;
        fb.timestamp = clock();
        emit({"feedback", ctx.rank, attempt, name, fb.verdict, fb.details, fb.note, "", ""});
        if (fb.verdict == Verdict::Pass) continue;
        all_pass = false;
        switched = fb.verdict == Verdict::SwitchContext;
        lineage.push_back(std::move(fb));
        break;
      }
      if (all_pass) {
        out.status = Status::Reproduced;
        out.final_script = std::move(cand);
        emit({"outcome", ctx.rank, attempt, {}, {}, {}, "reproduced", sha256_hex(*script), ""});
        return out;
      }
    }
    if (ci + 1 < n_contexts)
      emit({"context_switch", ctx.rank, 0, {}, {}, {}, switched ? "relevance" : "attempt budget exhausted", "", ""});
  }
  out.status = Status::Exhausted;
  emit({"outcome", 0, 0, {}, {}, {}, "exhausted", "", ""});
  return out;
}

}  // namespace dlrepro::agent
