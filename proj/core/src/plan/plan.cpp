#include "dlrepro/plan/plan.hpp"

#include <regex>
#include <set>

#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"

namespace dlrepro::plan {
namespace {

StageKind stage_kind_from(std::string_view s) {
  if (s == "environment_setup") return StageKind::EnvironmentSetup;
  if (s == "data_preparation") return StageKind::DataPreparation;
  if (s == "model_construction") return StageKind::ModelConstruction;
  if (s == "execution") return StageKind::Execution;
  if (s == "verification") return StageKind::Verification;
  throw Error(ErrorKind::Parse, "unknown stage kind: " + std::string(s));
}

CheckKind check_kind_from(std::string_view s) {
  if (s == "output_assertion") return CheckKind::OutputAssertion;
  if (s == "resource_monitor") return CheckKind::ResourceMonitor;
  if (s == "error_verification") return CheckKind::ErrorVerification;
  throw Error(ErrorKind::Parse, "unknown check kind: " + std::string(s));
}

StageKind guess_stage(std::string_view title) {
  auto t = text::to_lower(title);
  auto has = [&](const char* w) { return t.find(w) != std::string::npos; };
  if (has("setup") || has("set up") || has("environment") || has("install")) return StageKind::EnvironmentSetup;
  if (has("verif") || has("check") || has("confirm") || has("compare")) return StageKind::Verification;
  if (has("data")) return StageKind::DataPreparation;
  if (has("model")) return StageKind::ModelConstruction;
  return StageKind::Execution;
}

CheckKind guess_check(std::string_view desc) {
  auto t = text::to_lower(desc);
  auto has = [&](const char* w) { return t.find(w) != std::string::npos; };
  if (has("error") || has("exception") || has("raise") || has("traceback")) return CheckKind::ErrorVerification;
  if (has("memory") || has("time") || has("gpu") || has("resource")) return CheckKind::ResourceMonitor;
  return CheckKind::OutputAssertion;
}

}  // namespace

std::string_view to_string(StageKind k) {
  switch (k) {
    case StageKind::EnvironmentSetup: return "environment_setup";
    case StageKind::DataPreparation: return "data_preparation";
    case StageKind::ModelConstruction: return "model_construction";
    case StageKind::Execution: return "execution";
    case StageKind::Verification: return "verification";
  }
  return "execution";
}

std::string_view to_string(CheckKind k) {
  switch (k) {
    case CheckKind::OutputAssertion: return "output_assertion";
    case CheckKind::ResourceMonitor: return "resource_monitor";
    case CheckKind::ErrorVerification: return "error_verification";
  }
  return "output_assertion";
}

std::vector<std::string> step_parameters(const report::RestructuredReport& report) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : report.reproduction_steps)
    for (auto& n : text::numeric_literals(s.text))
      if (seen.insert(n).second) out.push_back(n);
  return out;
}

std::vector<std::string> validate(const ReproductionPlan& plan) {
  std::vector<std::string> problems;
  if (plan.stages.size() < 3) problems.push_back("plan needs at least 3 stages");
  std::set<StageKind> kinds;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const auto& s = plan.stages[i];
    kinds.insert(s.kind);
    if (s.actions.empty()) problems.push_back("stage " + std::to_string(i + 1) + " has no actions");
    if (s.checks.empty()) problems.push_back("stage " + std::to_string(i + 1) + " has no checks");
  }
  for (auto k : {StageKind::EnvironmentSetup, StageKind::Execution, StageKind::Verification})
    if (!kinds.count(k)) problems.push_back("no " + std::string(to_string(k)) + " stage");
  return problems;
}

std::string render_plan(const ReproductionPlan& plan) {
  std::string out = "# Reproduction plan " + std::to_string(plan.context_rank) + "\n";
  out += "Parameters: " + (plan.params_echo.empty() ? std::string("(none)") : text::join(plan.params_echo, ", ")) +
         "\n";
  if (plan.degraded) out += "Degraded: yes\n";
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const auto& s = plan.stages[i];
    out += "\n## Stage " + std::to_string(i + 1) + ": " + s.title + " [" + std::string(to_string(s.kind)) + "]\n";
    out += "Actions:\n";
    for (std::size_t j = 0; j < s.actions.size(); ++j) out += std::to_string(j + 1) + ". " + s.actions[j] + "\n";
    out += "Checks:\n";
    for (const auto& c : s.checks) out += "- [" + std::string(to_string(c.kind)) + "] " + c.description + "\n";
  }
  return out;
}

ReproductionPlan parse_plan(std::string_view raw, int context_rank) {
  static const std::regex kStage(R"(^\s*#{1,4}\s*Stage\s+\d+\s*[:.-]\s*(.*?)\s*(?:\[([a-z_]+)\])?\s*$)",
                                 std::regex::icase);
  static const std::regex kAction(R"(^\s*\d+[.)]\s+(.*\S)\s*$)");
  static const std::regex kCheck(R"(^\s*[-*]\s+(?:\[([a-z_]+)\]\s*)?(.*\S)\s*$)");
  static const std::regex kParams(R"(^\s*Parameters:\s*(.*?)\s*$)");
  static const std::regex kRank(R"(^\s*#\s*Reproduction plan\s+(\d+)\s*$)");
  ReproductionPlan plan;
  plan.context_rank = context_rank;
  enum { None, Actions, Checks } mode = None;
  for (const auto& line : text::split_lines(raw)) {
    std::smatch m;
    auto t = text::trim(line);
    if (std::regex_match(line, m, kRank)) {
      plan.context_rank = std::stoi(m[1].str());
    } else if (std::regex_match(line, m, kParams)) {
      if (m[1].str() != "(none)")
        for (const auto& p : text::split_lines(text::replace_all(m[1].str(), ", ", "\n"))) plan.params_echo.push_back(p);
    } else if (t == "Degraded: yes") {
      plan.degraded = true;
    } else if (std::regex_match(line, m, kStage)) {
      PlanStage s;
      s.title = m[1].str();
      s.kind = m[2].matched ? stage_kind_from(m[2].str()) : guess_stage(s.title);
      plan.stages.push_back(std::move(s));
      mode = None;
    } else if (plan.stages.empty()) {
      continue;
    } else if (text::to_lower(t) == "actions:") {
      mode = Actions;
    } else if (text::to_lower(t) == "checks:") {
      mode = Checks;
    } else if (mode == Actions && std::regex_match(line, m, kAction)) {
      plan.stages.back().actions.push_back(m[1].str());
    } else if (mode == Checks && std::regex_match(line, m, kCheck)) {
      PlanCheck c;
      c.description = m[2].str();
      c.kind = m[1].matched ? check_kind_from(m[1].str()) : guess_check(c.description);
      plan.stages.back().checks.push_back(std::move(c));
    }
  }
  if (plan.stages.empty()) throw Error(ErrorKind::Parse, "no '## Stage N: ...' headings found");
  return plan;
}

ReproductionPlan skeleton_plan(int context_rank, const report::RestructuredReport& report) {
  ReproductionPlan p;
  p.context_rank = context_rank;
  p.degraded = true;
  p.params_echo = step_parameters(report);
  auto first_line = [](const std::string& s) {
    auto lines = text::split_lines(s);
    for (const auto& l : lines)
      if (!text::trim(l).empty()) return std::string(text::trim(l));
    return std::string("the reported behaviour");
  };

  PlanStage setup{"Set up environment", StageKind::EnvironmentSetup, {}, {}};
  setup.actions.push_back("Import the libraries used by the code context.");
  setup.actions.push_back("Seed every random generator from --seed or REPRO_SEED.");
  setup.checks.push_back({CheckKind::OutputAssertion, "The script prints PHASE setup without errors."});

  PlanStage run{"Run the reported steps", StageKind::Execution, {}, {}};
  for (const auto& s : report.reproduction_steps) run.actions.push_back(s.text);
  if (run.actions.empty()) run.actions.push_back("Run the code shown in the report.");
  run.checks.push_back({CheckKind::ResourceMonitor, "Record wall time and memory while the steps run."});

  PlanStage verify{"Verify the symptom", StageKind::Verification, {}, {}};
  verify.actions.push_back("Compare the program output with the observed behaviour.");
  verify.checks.push_back({CheckKind::ErrorVerification, "Output shows: " + first_line(report.observed_behaviour)});

  p.stages = {setup, run, verify};
  return p;
}

ReproductionPlan generate_plan(const context::ReproductionContext& context, const report::RestructuredReport& report,
                               const gateway::CompleteFn& complete) {
  auto params = step_parameters(report);
  auto msgs = gateway::prompt_messages(
      "prompts/plan.v1.txt", {{"report", report::render_sections(report)},
                              {"params", params.empty() ? std::string("(none)") : text::join(params, ", ")},
                              {"rank", std::to_string(context.rank)},
                              {"module", context.module_id},
                              {"context", context.rendered}});
  auto attempt = [&](const std::string& answer, std::string* problem) -> std::optional<ReproductionPlan> {
    try {
      auto p = parse_plan(answer, context.rank);
      p.context_rank = context.rank;
      p.params_echo = params;
      p.degraded = false;
      auto problems = validate(p);
      if (problems.empty()) return p;
      *problem = text::join(problems, "; ");
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Parse) throw;
      *problem = e.what();
    }
    return std::nullopt;
  };
  try {
    std::string problem;
    auto answer = complete(msgs);
    auto plan = attempt(answer, &problem);
    if (!plan) {
      msgs.push_back({"assistant", answer});
      msgs.push_back(gateway::prompt_messages("prompts/repair.v1.txt", {{"problem", problem}}).back());
      plan = attempt(complete(msgs), &problem);
    }
    if (plan) return *plan;
  } catch (const Error& e) {
    if (!e.is_provider_error()) throw;
  }
  return skeleton_plan(context.rank, report);
}

void save_plans(const std::vector<ReproductionPlan>& plans, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& p : plans)
    text::write_file((dir / ("plan_" + std::to_string(p.context_rank) + ".md")).string(), render_plan(p));
}

}  // namespace dlrepro::plan
