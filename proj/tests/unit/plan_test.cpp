#include <gtest/gtest.h>

#include <random>

#include "dlrepro/plan/plan.hpp"
#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"
#include "test_support.hpp"

using namespace dlrepro;
using plan::CheckKind;
using plan::StageKind;

namespace {

report::RestructuredReport structured(std::vector<std::string> steps) {
  report::RestructuredReport r;
  r.core_problem = "Loss becomes NaN.";
  r.observed_behaviour = "loss: nan after epoch 3";
  r.expected_behaviour = "Loss decreases.";
  for (auto& s : steps) r.reproduction_steps.push_back({s, report::Provenance::Extracted});
  return r;
}

context::ReproductionContext ctx(int rank) {
  context::ReproductionContext c;
  c.rank = rank;
  c.module_id = "pkg.mod" + std::to_string(rank);
  c.rendered = "def train():\n    pass\n";
  return c;
}

const char* kFourStage =
    "Key components: the training loop and the optimizer.\n\n"
    "## Stage 1: Install dependencies [environment_setup]\n"
    "Actions:\n"
    "1. pip install torch\n"
    "Checks:\n"
    "- [output_assertion] import succeeds\n\n"
    "## Stage 2: Build the model [model_construction]\n"
    "Actions:\n"
    "1. Create the MLP\n"
    "2. Use Adam with lr 0.1\n"
    "Checks:\n"
    "- [output_assertion] parameters are printed\n"
    "- [resource_monitor] memory stays under 1 GB\n\n"
    "## Stage 3: Train [execution]\n"
    "Actions:\n"
    "1. Train with batch_size=32\n"
    "Checks:\n"
    "- [output_assertion] loss is printed each epoch\n\n"
    "## Stage 4: Confirm NaN [verification]\n"
    "Actions:\n"
    "1. Inspect the loss\n"
    "Checks:\n"
    "- [error_verification] loss is nan\n";

gateway::CompleteFn answers(std::vector<std::string> a, int* calls) {
  auto shared = std::make_shared<std::vector<std::string>>(std::move(a));
  return [shared, calls](const std::vector<gateway::Message>&) {
    auto i = static_cast<std::size_t>((*calls)++);
    return (*shared)[std::min(i, shared->size() - 1)];
  };
}

}  // namespace

TEST(PlanParams, NumericLiteralsOfStepsEchoed) {
  auto r = structured({"Set batch_size=32", "Train for 10 epochs with lr 1e-3", "Use batch size 32 again"});
  EXPECT_EQ(plan::step_parameters(r), (std::vector<std::string>{"32", "10", "1e-3"}));
}

TEST(PlanParse, FixedFourStagePlan) {
  auto p = plan::parse_plan(kFourStage, 2);
  EXPECT_EQ(p.context_rank, 2);
  ASSERT_EQ(p.stages.size(), 4u);
  for (const auto& s : p.stages) EXPECT_FALSE(s.checks.empty());
  EXPECT_EQ(p.stages[1].kind, StageKind::ModelConstruction);
  EXPECT_EQ(p.stages[1].actions.size(), 2u);
  EXPECT_EQ(p.stages[1].checks[1].kind, CheckKind::ResourceMonitor);
  EXPECT_TRUE(plan::validate(p).empty());
}

TEST(PlanParse, NotAPlanThrows) { EXPECT_THROW(plan::parse_plan("just prose, no stages"), Error); }

TEST(PlanValidate, StructuralRules) {
  auto p = plan::parse_plan(kFourStage);
  auto two = p;
  two.stages.resize(2);
  EXPECT_FALSE(plan::validate(two).empty());
  auto no_verify = p;
  no_verify.stages[3].kind = StageKind::Execution;
  EXPECT_FALSE(plan::validate(no_verify).empty());
  auto no_checks = p;
  no_checks.stages[0].checks.clear();
  EXPECT_FALSE(plan::validate(no_checks).empty());
  auto no_actions = p;
  no_actions.stages[2].actions.clear();
  EXPECT_FALSE(plan::validate(no_actions).empty());
}

TEST(PlanGenerate, ParsesAndEchoesParameters) {
  int calls = 0;
  auto r = structured({"Train with batch_size=32 and lr 0.1"});
  auto p = plan::generate_plan(ctx(3), r, answers({kFourStage}, &calls));
  EXPECT_EQ(calls, 1);
  EXPECT_FALSE(p.degraded);
  EXPECT_EQ(p.context_rank, 3);
  EXPECT_EQ(p.stages.size(), 4u);
  EXPECT_EQ(p.params_echo, (std::vector<std::string>{"32", "0.1"}));
}

TEST(PlanGenerate, RepairThenSkeleton) {
  auto r = structured({"Run with batch_size=32"});
  int calls = 0;
  auto p = plan::generate_plan(ctx(1), r, answers({"nonsense", kFourStage}, &calls));
  EXPECT_EQ(calls, 2);
  EXPECT_FALSE(p.degraded);

  calls = 0;
  p = plan::generate_plan(ctx(1), r, answers({"nonsense"}, &calls));
  EXPECT_EQ(calls, 2);
  EXPECT_TRUE(p.degraded);
  EXPECT_TRUE(plan::validate(p).empty());
  EXPECT_EQ(p.params_echo, std::vector<std::string>{"32"});
  EXPECT_EQ(p, plan::skeleton_plan(1, r));
}

TEST(PlanGenerate, ProviderFailureGivesSkeleton) {
  auto fail = [](const std::vector<gateway::Message>&) -> std::string {
    throw Error(ErrorKind::ProviderFailure, "timeout");
  };
  auto p = plan::generate_plan(ctx(4), structured({"step 7"}), fail);
  EXPECT_TRUE(p.degraded);
  EXPECT_EQ(p.context_rank, 4);
  EXPECT_EQ(p.stages.size(), 3u);
}

TEST(PlanSave, OnePlanPerContextRoundTrips) {
  test::TempDir dir("plans");
  auto r = structured({"Use batch_size=32"});
  std::vector<plan::ReproductionPlan> plans;
  for (int rank = 1; rank <= 5; ++rank) {
    int calls = 0;
    plans.push_back(plan::generate_plan(ctx(rank), r, answers({kFourStage}, &calls)));
  }
  plan::save_plans(plans, dir.path());
  for (int rank = 1; rank <= 5; ++rank) {
    auto file = dir / ("plan_" + std::to_string(rank) + ".md");
    ASSERT_TRUE(std::filesystem::exists(file));
    auto back = plan::parse_plan(text::read_file(file.string()), rank);
    EXPECT_EQ(back, plans[rank - 1]);
  }
}

// Property: any valid random plan survives render -> parse unchanged.
TEST(PlanRoundTrip, RandomPlans) {
  std::mt19937 rng(5);
  const StageKind kinds[] = {StageKind::EnvironmentSetup, StageKind::DataPreparation, StageKind::ModelConstruction,
                             StageKind::Execution, StageKind::Verification};
  const CheckKind checks[] = {CheckKind::OutputAssertion, CheckKind::ResourceMonitor, CheckKind::ErrorVerification};
  for (int i = 0; i < 300; ++i) {
    plan::ReproductionPlan p;
    p.context_rank = 1 + static_cast<int>(rng() % 5);
    p.degraded = rng() % 2;
    int n = 3 + static_cast<int>(rng() % 4);
    for (int s = 0; s < n; ++s) {
      plan::PlanStage st;
      st.title = "stage " + std::to_string(s) + " do thing " + std::to_string(rng() % 100);
      st.kind = kinds[rng() % 5];
      for (int a = 0, na = 1 + static_cast<int>(rng() % 3); a < na; ++a)
        st.actions.push_back("action " + std::to_string(a) + " with value " + std::to_string(rng() % 1000));
      for (int c = 0, nc = 1 + static_cast<int>(rng() % 3); c < nc; ++c)
        st.checks.push_back({checks[rng() % 3], "check " + std::to_string(c)});
      p.stages.push_back(std::move(st));
    }
    int np = static_cast<int>(rng() % 3);
    for (int k = 0; k < np; ++k) p.params_echo.push_back(std::to_string(rng() % 500));
    auto back = plan::parse_plan(plan::render_plan(p), p.context_rank);
    EXPECT_EQ(back, p) << plan::render_plan(p);
  }
}
