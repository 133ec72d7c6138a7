#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dlrepro::verify {

enum class BugKind { Explicit, Silent };
enum class Phase { Setup, Training, Inference, Unknown };
std::string_view to_string(BugKind k);
std::string_view to_string(Phase p);
Phase phase_from(std::string_view s);

struct BugSignature {
  BugKind kind = BugKind::Explicit;
  std::string error_type;                  // explicit
  std::vector<std::string> diagnostics;    // explicit: case-insensitive substrings of stderr
  Phase phase = Phase::Training;
  std::map<std::string, double> metrics;   // silent: reported values
  std::vector<std::string> failure_patterns;
};

/// JSON: {"kind", "error_type", "diagnostics", "phase", "metrics", "failure_patterns"}.
BugSignature parse_signature(std::string_view json_text);
std::string signature_to_json(const BugSignature& s);

inline const std::vector<std::uint64_t>& default_seeds() {
  static const std::vector<std::uint64_t> s = {0, 1, 2, 3, 4};
  return s;
}
inline constexpr double kDefaultMargin = 0.05;

struct SandboxConfig {
  std::vector<std::string> interpreter = {"python3"};
  std::chrono::milliseconds timeout{300000};
  std::filesystem::path work_dir;               // trials run in work_dir/trial_<i>; temp dir when empty
  std::map<std::string, std::string> env;       // added to each trial's environment
  bool parallel = false;
  std::size_t tail_bytes = 8192;
};

enum class TrialStatus { Exited, Timeout, Signaled };

struct TrialResult {
  std::uint64_t seed = 0;
  TrialStatus status = TrialStatus::Exited;
  int exit_code = 0;
  std::string stdout_tail;
  std::string stderr_tail;
  std::string error_type;  // last exception type in stderr, module prefix removed
  std::map<std::string, std::vector<double>> metric_series;  // every reported value in order
  std::map<std::string, double> parsed_metrics;               // last value per metric
  std::chrono::milliseconds wall_time{0};
  Phase phase_reached = Phase::Unknown;
  std::filesystem::path work_dir;
};

/// Fills error type, phase and metrics from the captured output. Lines
/// "PHASE <name>" and "METRIC <name> <value>" are the protocol; "loss: x" and
/// "accuracy: x" are accepted as a fallback.
void parse_trial_output(TrialResult& t);

/// One fresh process per seed, seed passed as REPRO_SEED and --seed.
/// Throws Error(SandboxFailure) when the interpreter cannot be started.
std::vector<TrialResult> execute_trials(std::string_view script, const std::vector<std::uint64_t>& seeds,
                                        const SandboxConfig& sandbox);

struct VerificationVerdict {
  bool reproduced = false;
  BugKind kind = BugKind::Explicit;
  std::map<std::string, bool> evidence;
  std::map<std::string, double> mean_metrics;
  std::map<std::string, double> relative_errors;
  std::vector<std::string> observed_patterns;
  std::vector<std::uint64_t> seeds;
  double margin = kDefaultMargin;
};

VerificationVerdict verify_explicit(const std::vector<TrialResult>& trials, const BugSignature& signature);
VerificationVerdict verify_silent(const std::vector<TrialResult>& trials, const BugSignature& signature,
                                  double margin = kDefaultMargin);
VerificationVerdict verify(const std::vector<TrialResult>& trials, const BugSignature& signature,
                           double margin = kDefaultMargin);

/// Failure-pattern matchers by normalised name ("nan_loss", "memory_growth",
/// "degradation"). Unknown names fall back to a case-insensitive substring search.
using PatternMatcher = std::function<bool(const TrialResult&)>;
void register_pattern(const std::string& name, PatternMatcher matcher);
bool pattern_observed(const std::string& pattern, const TrialResult& trial);

/// Structured verdict including per-trial summaries.
std::string verdict_to_json(const VerificationVerdict& v, const std::vector<TrialResult>& trials);

}  // namespace dlrepro::verify
