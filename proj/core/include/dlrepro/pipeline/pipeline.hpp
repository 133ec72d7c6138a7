#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "dlrepro/agent/agent.hpp"
#include "dlrepro/gateway/gateway.hpp"
#include "dlrepro/verify/verify.hpp"

namespace dlrepro::pipeline {

/// Names accepted in RunConfig::disabled and by `ablate`.
const std::set<std::string>& ablatable_components();

struct RunConfig {
  std::filesystem::path repo;
  std::filesystem::path report;
  std::filesystem::path out_dir;
  std::filesystem::path index_dir;  // <out_dir>/index when empty
  std::filesystem::path signature;  // verify
  std::filesystem::path script;     // verify; <out_dir>/repro.py when empty

  double alpha = 0.55;
  std::size_t top_k = 20;
  std::size_t max_modules = 5;
  int max_attempts = 5;
  int max_contexts = 5;
  double margin = 0.05;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::set<std::string> disabled;

  gateway::ProviderConfig provider;
  std::string provider_mode = "replay";  // replay | record | live
  std::filesystem::path exchanges;       // replay log
  bool strict_replay = true;
  bool remote_embed = false;
  bool remote_cross = false;
  std::string grammar = "python";

  double similarity_threshold = 0.7;
  std::size_t token_budget = 6000;
  int dependency_depth = 2;
  std::vector<std::string> lint_command = {"python3", "-m", "pyflakes"};
  std::vector<std::string> interpreter = {"python3"};
  std::chrono::milliseconds trial_timeout{300000};

  std::filesystem::path effective_index_dir() const;
  std::filesystem::path effective_script() const;
};

/// Throws Error(InvalidArgument) naming the offending field.
void validate(const RunConfig& config);

std::string config_to_json(const RunConfig& config);
/// Applies the keys present in `json_text` on top of `base`.
RunConfig apply_config_json(RunConfig base, std::string_view json_text);

/// Exclusive use of an out-dir. A lock left by a dead process is taken over.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& out_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Transport for the configured provider mode.
std::shared_ptr<gateway::Transport> make_transport(const RunConfig& config);

struct IndexSummary {
  std::string digest;
  std::size_t files = 0;
  std::size_t chunks = 0;
  bool reused = false;
};

struct ReproduceResult {
  agent::AgentOutcome outcome;
  std::size_t contexts = 0;
  bool index_reused = false;
  std::vector<std::string> warnings;
};

IndexSummary cmd_index(const RunConfig& config, std::shared_ptr<gateway::Transport> transport = nullptr);

/// Restructure, index and retrieve, build contexts, plan, run the agent.
/// Every intermediate artifact is written below out_dir.
ReproduceResult cmd_reproduce(const RunConfig& config, std::shared_ptr<gateway::Transport> transport = nullptr);

/// Runs the script under every seed and writes <out_dir>/verdict.json.
verify::VerificationVerdict cmd_verify(const RunConfig& config);

/// cmd_reproduce with `component` disabled as well.
ReproduceResult cmd_ablate(const RunConfig& config, const std::string& component,
                           std::shared_ptr<gateway::Transport> transport = nullptr);

}  // namespace dlrepro::pipeline
