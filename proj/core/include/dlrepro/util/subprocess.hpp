#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dlrepro {

struct ProcessSpec {
  std::vector<std::string> argv;
  std::filesystem::path cwd;  // empty = inherit
  std::map<std::string, std::string> env;  // added to the inherited environment
  std::chrono::milliseconds timeout{0};    // 0 = no limit
  std::string stdin_data;
};

struct ProcessResult {
  int exit_code = -1;      // valid when exited normally
  int term_signal = 0;     // nonzero when killed by a signal
  bool timed_out = false;
  bool spawn_failed = false;  // exec failed (e.g. command not found)
  std::string out;
  std::string err;
  std::chrono::milliseconds wall{0};
};

/// Runs a child in its own process group; on timeout the whole group is killed.
ProcessResult run_process(const ProcessSpec& spec);

}  // namespace dlrepro
