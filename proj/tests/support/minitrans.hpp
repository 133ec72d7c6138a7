#pragma once

// End-to-end fixture: a small numpy project with a seeded shape bug, a
// scripted model author, and the exchanges it was recorded with.

#include <filesystem>
#include <string>
#include <vector>

#include "dlrepro/gateway/gateway.hpp"
#include "dlrepro/pipeline/pipeline.hpp"

namespace dlrepro::test::minitrans {

std::filesystem::path root();  // fixtures/minitrans

/// Replay run against the committed exchanges, artifacts under `out`.
pipeline::RunConfig run_config(const std::filesystem::path& out);

/// Answers completions the way a model following the prompts would, with two
/// planted traps: context 1 always gets an off-target script that fools the
/// runtime oracle, and the first script for any later context runs cleanly.
gateway::ScriptedTransport::Handler author();

/// Records the full run and the relevance and runtime ablations through the
/// author. Returns the deduplicated exchange log, sorted by digest.
std::string record(const std::filesystem::path& work);

/// Every record cut in half, so no line parses.
std::string corrupt(const std::string& log);

}  // namespace dlrepro::test::minitrans
