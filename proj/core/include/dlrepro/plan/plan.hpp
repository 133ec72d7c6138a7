#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dlrepro/context/context.hpp"
#include "dlrepro/gateway/gateway.hpp"
#include "dlrepro/report/report.hpp"

namespace dlrepro::plan {

enum class StageKind { EnvironmentSetup, DataPreparation, ModelConstruction, Execution, Verification };
enum class CheckKind { OutputAssertion, ResourceMonitor, ErrorVerification };

std::string_view to_string(StageKind k);
std::string_view to_string(CheckKind k);

struct PlanCheck {
  CheckKind kind = CheckKind::OutputAssertion;
  std::string description;
  bool operator==(const PlanCheck&) const = default;
};

struct PlanStage {
  std::string title;
  StageKind kind = StageKind::Execution;
  std::vector<std::string> actions;
  std::vector<PlanCheck> checks;
  bool operator==(const PlanStage&) const = default;
};

struct ReproductionPlan {
  int context_rank = 1;
  std::vector<PlanStage> stages;
  std::vector<std::string> params_echo;
  bool degraded = false;
  bool operator==(const ReproductionPlan&) const = default;
};

/// Numeric literals of the reproduction steps, first occurrence order.
std::vector<std::string> step_parameters(const report::RestructuredReport& report);

/// Human-readable problems; empty when the plan is valid.
std::vector<std::string> validate(const ReproductionPlan& plan);

/// Numbered-stage text. `parse_plan(render_plan(p))` reproduces `p`.
std::string render_plan(const ReproductionPlan& plan);

/// Parses the stage format (with or without the header lines render_plan adds).
/// Throws Error(Parse) on text that is not a plan.
ReproductionPlan parse_plan(std::string_view text, int context_rank = 1);

/// Setup / run / verify plan built from the report alone.
ReproductionPlan skeleton_plan(int context_rank, const report::RestructuredReport& report);

/// One completion, one repair re-prompt, then the skeleton (flagged degraded).
ReproductionPlan generate_plan(const context::ReproductionContext& context, const report::RestructuredReport& report,
                               const gateway::CompleteFn& complete);

/// plans/plan_<rank>.md for each plan.
void save_plans(const std::vector<ReproductionPlan>& plans, const std::filesystem::path& dir);

}  // namespace dlrepro::plan
