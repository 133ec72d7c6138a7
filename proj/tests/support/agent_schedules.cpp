#include "agent_schedules.hpp"

#include <map>
#include <random>

namespace dlrepro::test::schedules {
namespace {

using agent::StageName;
using agent::Verdict;

const StageName kStages[] = {StageName::Structural, StageName::Static, StageName::Relevance, StageName::Runtime};

int stage_index(StageName s) {
  for (int i = 0; i < 4; ++i)
    if (kStages[i] == s) return i;
  return -1;
}

}  // namespace

Schedule random_schedule(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto coin = [&](double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; };
  Schedule s;
  s.contexts = 1 + static_cast<int>(rng() % 6);
  s.max_attempts = coin(0.8) ? 5 : 1 + static_cast<int>(rng() % 5);
  s.max_contexts = coin(0.8) ? 5 : 1 + static_cast<int>(rng() % 5);
  double pass_p = std::uniform_real_distribution<double>(0.5, 0.97)(rng);
  for (int c = 0; c < s.contexts; ++c) {
    s.generation_ok.emplace_back();
    s.verdicts.emplace_back();
    for (int a = 0; a < s.max_attempts; ++a) {
      s.generation_ok[c].push_back(!coin(0.05));
      std::vector<Verdict> v;
      for (int k = 0; k < 4; ++k) {
        if (coin(pass_p)) v.push_back(Verdict::Pass);
        else v.push_back(coin(0.7) ? Verdict::Regenerate : Verdict::SwitchContext);
      }
      s.verdicts[c].push_back(v);
    }
  }
  for (auto st : kStages)
    if (coin(0.1)) s.disabled.insert(st);
  return s;
}

Run run(const Schedule& s) {
  std::vector<context::ReproductionContext> ctxs(s.contexts);
  std::vector<plan::ReproductionPlan> plans(s.contexts);
  for (int c = 0; c < s.contexts; ++c) {
    ctxs[c].rank = c + 1;
    plans[c].context_rank = c + 1;
  }
  Run out;
  agent::Stages st;
  st.generate = [&](const agent::AttemptInput& in, std::string* failure) -> std::optional<std::string> {
    out.priors.emplace_back(in.context.rank, in.attempt, in.prior);
    if (!s.generation_ok[in.context.rank - 1][in.attempt - 1]) {
      *failure = "no code block";
      return std::nullopt;
    }
    return "# ctx " + std::to_string(in.context.rank) + " attempt " + std::to_string(in.attempt) + "\n";
  };
  auto stage = [&](int k) {
    return [&, k](const agent::CandidateScript& cand, const context::ReproductionContext&) {
      agent::FeedbackRecord fb;
      fb.verdict = s.verdicts[cand.context_rank - 1][cand.attempt - 1][k];
      if (fb.verdict != Verdict::Pass)
        fb.details.push_back({"finding", "ctx " + std::to_string(cand.context_rank) + " attempt " +
                                             std::to_string(cand.attempt) + " stage " + std::to_string(k),
                              k + 1, 0});
      return fb;
    };
  };
  st.structural = stage(0);
  st.static_check = stage(1);
  st.relevance = stage(2);
  st.runtime = stage(3);
  agent::AgentOptions opt;
  opt.max_attempts = s.max_attempts;
  opt.max_contexts = s.max_contexts;
  opt.disabled = s.disabled;
  opt.clock = [] { return std::string("t"); };
  out.outcome = agent::run_agent(ctxs, plans, st, opt);
  return out;
}

Expected simulate(const Schedule& s) {
  Expected e{agent::Status::Exhausted, 0, 0};
  int n = std::min(s.contexts, s.max_contexts);
  for (int c = 0; c < n; ++c) {
    ++e.contexts_tried;
    for (int a = 0; a < s.max_attempts; ++a) {
      ++e.attempts_total;
      if (!s.generation_ok[c][a]) continue;
      bool all = true, leave = false;
      for (int k = 0; k < 4 && all; ++k) {
        if (s.disabled.count(kStages[k])) continue;
        auto v = s.verdicts[c][a][k];
        if (v == Verdict::Pass) continue;
        all = false;
        leave = k == 2 && v == Verdict::SwitchContext;
      }
      if (all) {
        e.status = agent::Status::Reproduced;
        return e;
      }
      if (leave) break;
    }
  }
  return e;
}

std::vector<std::string> check(const Schedule& s, const Run& r) {
  std::vector<std::string> bad;
  auto fail = [&](const std::string& m) { bad.push_back(m); };
  const auto& o = r.outcome;
  auto exp = simulate(s);
  if (o.attempts_total > 25) fail("attempts_total above 25");
  if (o.attempts_total > s.max_attempts * s.max_contexts) fail("attempts_total above the configured budget");
  if (o.attempts_total != exp.attempts_total) fail("attempts_total differs from the loop rules");
  if (o.contexts_tried != exp.contexts_tried) fail("contexts_tried differs from the loop rules");
  if (o.status != exp.status) fail("status differs from the loop rules");
  if ((o.status == agent::Status::Reproduced) != o.final_script.has_value()) fail("final_script presence");

  int last_ctx = 0, attempt_starts = 0, stage_pos = -1;
  bool stopped = false, switched = false;
  std::map<std::pair<int, int>, std::vector<agent::Finding>> nonpass;  // (ctx, attempt) -> details
  for (std::size_t i = 0; i < o.trace.size(); ++i) {
    const auto& e = o.trace[i];
    if (e.event == "context_start") {
      if (e.context_rank <= last_ctx) fail("context ranks not increasing");
      last_ctx = e.context_rank;
      switched = false;
    } else if (e.event == "attempt_start") {
      if (switched) fail("attempt after a relevance switch");
      ++attempt_starts;
      stage_pos = -1;
      stopped = false;
    } else if (e.event == "feedback") {
      int k = stage_index(*e.stage);
      if (s.disabled.count(*e.stage)) fail("event from a disabled stage");
      if (k <= stage_pos) fail("stage order violated");
      if (stopped) fail("stage ran after a non-pass");
      stage_pos = k;
      if (*e.verdict != Verdict::Pass) {
        stopped = true;
        nonpass[{e.context_rank, e.attempt}] = e.details;
      }
      if (*e.verdict == Verdict::SwitchContext) {
        if (*e.stage != StageName::Relevance) fail("switch_context from a stage other than relevance");
        switched = true;
        if (i + 1 < o.trace.size() && o.trace[i + 1].event != "context_switch" && o.trace[i + 1].event != "outcome")
          fail("relevance switch not followed by a context switch");
      }
    } else if (e.event == "generation" && *e.verdict != Verdict::Pass) {
      nonpass[{e.context_rank, e.attempt}] = e.details;
    }
  }
  if (attempt_starts != o.attempts_total) fail("attempt_start events differ from attempts_total");
  if (o.trace.empty() || o.trace.back().event != "outcome") fail("trace does not end with outcome");

  // Attempt n sees every non-pass finding of attempt n-1 in the same context.
  for (const auto& [ctx, attempt, prior] : r.priors) {
    if (attempt == 1 && !prior.empty()) fail("first attempt has lineage");
    auto it = nonpass.find({ctx, attempt - 1});
    if (it == nonpass.end()) continue;
    bool found = false;
    for (const auto& fb : prior)
      if (fb.details.size() == it->second.size() &&
          std::equal(fb.details.begin(), fb.details.end(), it->second.begin(),
                     [](const auto& a, const auto& b) { return a.kind == b.kind && a.message == b.message; }))
        found = true;
    if (!found) fail("feedback of the previous attempt not threaded");
  }
  return bad;
}

}  // namespace dlrepro::test::schedules
