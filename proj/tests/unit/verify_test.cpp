#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include <json.hpp>

#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"
#include "dlrepro/verify/verify.hpp"
#include "test_support.hpp"
#include "verify_fixtures.hpp"

using namespace dlrepro;
namespace vf = test::verify_fixtures;
using verify::Phase;
using verify::TrialResult;

namespace {

verify::SandboxConfig sandbox(const test::TempDir& dir) {
  verify::SandboxConfig s;
  s.interpreter = {test::python_executable()};
  s.timeout = std::chrono::seconds(30);
  s.work_dir = dir.path();
  return s;
}

TrialResult trial(std::uint64_t seed, std::string err, std::string out = "") {
  TrialResult t;
  t.seed = seed;
  t.exit_code = err.empty() ? 0 : 1;
  t.stdout_tail = std::move(out);
  t.stderr_tail = std::move(err);
  verify::parse_trial_output(t);
  return t;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

TrialResult metric_trial(std::uint64_t seed, std::map<std::string, std::vector<double>> series) {
  std::string out;
  for (const auto& [k, vals] : series)
    for (double v : vals) out += "METRIC " + k + " " + num(v) + "\n";
  return trial(seed, "", out);
}

}  // namespace

TEST(Signature, ParseAndValidate) {
  auto s = verify::parse_signature(R"({"kind": "explicit", "error_type": "ValueError", "diagnostics": ["shape"], "phase": "training"})");
  EXPECT_EQ(s.error_type, "ValueError");
  EXPECT_EQ(s.phase, Phase::Training);
  EXPECT_EQ(verify::parse_signature(verify::signature_to_json(s)).diagnostics, s.diagnostics);
  EXPECT_THROW(verify::parse_signature(R"({"kind": "explicit"})"), Error);
  EXPECT_THROW(verify::parse_signature(R"({"kind": "silent"})"), Error);
  EXPECT_THROW(verify::parse_signature(R"({"kind": "sideways", "error_type": "E"})"), Error);
}

TEST(TrialOutput, ProtocolAndFallback) {
  auto t = trial(0,
                 "Traceback (most recent call last):\n  File \"x.py\", line 3, in <module>\n"
                 "torch.nn.modules.module.ModuleAttributeError: boom\n",
                 "PHASE setup\nPHASE training\nMETRIC loss 0.5\nMETRIC loss 0.25\nepoch 1 accuracy: 0.75\n");
  EXPECT_EQ(t.error_type, "ModuleAttributeError");
  EXPECT_EQ(t.phase_reached, Phase::Training);
  EXPECT_DOUBLE_EQ(t.parsed_metrics.at("loss"), 0.25);
  EXPECT_EQ(t.metric_series.at("loss").size(), 2u);
  EXPECT_DOUBLE_EQ(t.parsed_metrics.at("accuracy"), 0.75);

  auto nan = trial(0, "", "loss: nan\n");
  EXPECT_TRUE(std::isnan(nan.parsed_metrics.at("loss")));
}

TEST(TrialOutput, PhaseInferredFromFramesWithoutMarkers) {
  auto t = trial(0,
                 "Traceback (most recent call last):\n  File \"a.py\", line 9, in <module>\n"
                 "  File \"a.py\", line 4, in train_step\nRuntimeError: x\n");
  EXPECT_EQ(t.phase_reached, Phase::Training);
}

TEST(Sandbox, SeedsInjectedIntoFreshProcesses) {
  test::TempDir dir("seeds");
  auto trials = verify::execute_trials(vf::seed_echo_script(), verify::default_seeds(), sandbox(dir));
  ASSERT_EQ(trials.size(), 5u);
  std::set<double> seen;
  for (const auto& t : trials) {
    seen.insert(t.parsed_metrics.at("seed"));
    EXPECT_NE(t.stdout_tail.find("argv --seed " + std::to_string(t.seed)), std::string::npos);
    EXPECT_NE(t.stdout_tail.find("hashseed " + std::to_string(t.seed)), std::string::npos);
  }
  EXPECT_EQ(seen, (std::set<double>{0, 1, 2, 3, 4}));
}

TEST(Sandbox, TimeoutKillsEveryTrial) {
  test::TempDir dir("timeout");
  auto cfg = sandbox(dir);
  cfg.timeout = std::chrono::seconds(2);
  cfg.parallel = true;
  auto start = std::chrono::steady_clock::now();
  auto trials = verify::execute_trials(vf::busy_loop_script(), verify::default_seeds(), cfg);
  auto elapsed = std::chrono::steady_clock::now() - start;
  for (const auto& t : trials) {
    EXPECT_EQ(t.status, verify::TrialStatus::Timeout);
    EXPECT_GE(t.wall_time, std::chrono::milliseconds(1900));
  }
  EXPECT_LT(elapsed, std::chrono::seconds(8));
}

TEST(Sandbox, TrialsDoNotShareFiles) {
  test::TempDir dir("iso");
  auto trials = verify::execute_trials(vf::isolation_script(), verify::default_seeds(), sandbox(dir));
  std::set<std::filesystem::path> dirs;
  for (const auto& t : trials) {
    EXPECT_EQ(t.exit_code, 0) << t.stderr_tail;
    dirs.insert(t.work_dir);
    EXPECT_EQ(text::read_file((t.work_dir / "marker.txt").string()), std::to_string(t.seed));
  }
  EXPECT_EQ(dirs.size(), 5u);
}

TEST(Sandbox, MissingInterpreterIsSandboxFailure) {
  test::TempDir dir("noint");
  auto cfg = sandbox(dir);
  cfg.interpreter = {"/nonexistent/python"};
  try {
    verify::execute_trials("print(1)\n", {0}, cfg);
    FAIL() << "expected SandboxFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SandboxFailure);
  }
}

class ExplicitMatrix : public ::testing::TestWithParam<vf::ExplicitCase> {};

TEST_P(ExplicitMatrix, MatchesHandDerivedTruth) {
  const auto& c = GetParam();
  test::TempDir dir("explicit");
  auto trials = verify::execute_trials(vf::explicit_script(c), verify::default_seeds(), sandbox(dir));
  auto v = verify::verify(trials, vf::explicit_signature());
  EXPECT_EQ(v.reproduced, c.reproduced);
  EXPECT_EQ(v.evidence.at("error_type"), c.type_matches);
  EXPECT_EQ(v.evidence.at("diagnostic"), c.diagnostic_matches);
  EXPECT_EQ(v.evidence.at("phase"), c.phase_matches);
}

INSTANTIATE_TEST_SUITE_P(AllCombinations, ExplicitMatrix, ::testing::ValuesIn(vf::explicit_matrix()),
                         [](const auto& info) { return info.param.name; });

TEST(ExplicitVerdict, ErrorTypeMustHoldOnEveryTrial) {
  test::TempDir dir("flaky");
  auto trials = verify::execute_trials(vf::flaky_script(), verify::default_seeds(), sandbox(dir));
  auto v = verify::verify(trials, vf::explicit_signature());
  EXPECT_FALSE(v.reproduced);
  EXPECT_TRUE(v.evidence.at("single_trial_match"));
  EXPECT_FALSE(v.evidence.at("error_type_all_trials"));
}

TEST(SilentVerdict, MarginBoundaryWithSeededTrials) {
  for (auto [rel, expect] : {std::pair{0.049, true}, std::pair{0.051, false}}) {
    test::TempDir dir("silent");
    auto trials = verify::execute_trials(vf::silent_script(rel), verify::default_seeds(), sandbox(dir));
    auto v = verify::verify(trials, vf::silent_signature(), 0.05);
    EXPECT_NEAR(v.relative_errors.at("loss"), rel, 1e-9);
    EXPECT_EQ(v.reproduced, expect) << rel;
    EXPECT_TRUE(v.evidence.at("failure_pattern"));
  }
}

TEST(SilentVerdict, HandArithmetic) {
  verify::BugSignature s;
  s.kind = verify::BugKind::Silent;
  s.metrics = {{"loss", 2.0}};
  std::vector<TrialResult> trials;
  for (double v : {2.0, 2.05, 2.06, 2.07, 2.12}) trials.push_back(metric_trial(0, {{"loss", {v}}}));
  auto v = verify::verify_silent(trials, s);
  EXPECT_NEAR(v.mean_metrics.at("loss"), 2.06, 1e-12);
  EXPECT_NEAR(v.relative_errors.at("loss"), 0.03, 1e-12);
  EXPECT_TRUE(v.reproduced);

  s.metrics = {{"accuracy", 0.90}};
  trials.assign(5, metric_trial(0, {{"accuracy", {0.80}}}));
  v = verify::verify_silent(trials, s);
  EXPECT_NEAR(v.relative_errors.at("accuracy"), 0.1 / 0.9, 1e-12);
  EXPECT_FALSE(v.reproduced);
}

TEST(SilentVerdict, ZeroAndNanReportedValues) {
  verify::BugSignature s;
  s.kind = verify::BugKind::Silent;
  s.metrics = {{"grad", 0.0}};
  std::vector<TrialResult> trials(5, metric_trial(0, {{"grad", {5e-7}}}));
  EXPECT_TRUE(verify::verify_silent(trials, s).reproduced);
  trials.assign(5, metric_trial(0, {{"grad", {2e-6}}}));
  EXPECT_FALSE(verify::verify_silent(trials, s).reproduced);

  s.metrics = {{"loss", std::nan("")}};
  trials.assign(5, trial(0, "", "loss: nan\n"));
  EXPECT_TRUE(verify::verify_silent(trials, s).reproduced);
}

TEST(SilentVerdict, PatternsAndMissingMetrics) {
  auto s = vf::silent_signature();
  std::vector<TrialResult> flat(5, metric_trial(0, {{"loss", {2.0, 2.0}}}));
  auto v = verify::verify_silent(flat, s);
  EXPECT_FALSE(v.evidence.at("failure_pattern"));
  EXPECT_FALSE(v.reproduced);

  std::vector<TrialResult> none(5, metric_trial(0, {{"acc", {0.5}}}));
  v = verify::verify_silent(none, s);
  EXPECT_FALSE(v.reproduced);

  verify::register_pattern("Plateau Detected", [](const TrialResult& t) { return t.stdout_tail.find("plateau") != std::string::npos; });
  EXPECT_TRUE(verify::pattern_observed("plateau_detected", trial(0, "", "plateau\n")));
  EXPECT_TRUE(verify::pattern_observed("exploding gradient", trial(0, "", "warning: Exploding Gradient at step 3\n")));
}

// Property: verdict is deterministic and monotone in the margin.
TEST(SilentVerdict, MarginMonotonicity) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (int i = 0; i < 300; ++i) {
    verify::BugSignature s;
    s.kind = verify::BugKind::Silent;
    s.metrics = {{"loss", u(rng)}, {"acc", u(rng)}};
    std::vector<TrialResult> trials;
    for (int k = 0; k < 5; ++k) trials.push_back(metric_trial(k, {{"loss", {u(rng)}}, {"acc", {u(rng)}}}));
    bool before = false;
    for (double m = 0.0; m <= 1.0; m += 0.02) {
      auto v = verify::verify_silent(trials, s, m);
      EXPECT_EQ(v.reproduced, verify::verify_silent(trials, s, m).reproduced);
      if (before) {
        EXPECT_TRUE(v.reproduced) << m;
      }
      before = v.reproduced;
    }
  }
}

TEST(VerdictJson, CarriesSeedsAndTrials) {
  std::vector<TrialResult> trials(5, metric_trial(0, {{"loss", {2.0}}}));
  for (std::size_t i = 0; i < trials.size(); ++i) trials[i].seed = i;
  auto v = verify::verify(trials, vf::silent_signature());
  auto j = nlohmann::json::parse(verify::verdict_to_json(v, trials));
  EXPECT_EQ(j["seeds"].size(), 5u);
  EXPECT_EQ(j["trials"].size(), 5u);
  EXPECT_EQ(j["margin"].get<double>(), 0.05);
}
