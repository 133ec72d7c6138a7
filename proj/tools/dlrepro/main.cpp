// dlrepro: reproduce deep-learning bugs from a report and a repository.
//
//   dlrepro index     --repo R --out O
//   dlrepro reproduce --repo R --report B --out O [--exchanges log.jsonl]
//   dlrepro verify    --out O --signature S [--script repro.py]
//   dlrepro ablate    <component> --repo R --report B --out O
//
// Exit codes: 0 success (reproduced), 1 not reproduced, 2 bad arguments or
// config, 3 unreadable input, 4 provider failure, 5 out-dir locked,
// 6 sandbox failure, 7 anything else.

#include <CLI11.hpp>

#include <iostream>

#include "dlrepro/pipeline/pipeline.hpp"
#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"

namespace {

using dlrepro::Error;
using dlrepro::ErrorKind;
namespace pipeline = dlrepro::pipeline;

struct Flags {
  pipeline::RunConfig config;
  std::vector<std::string> disabled;
  std::vector<std::string> model_map;
  std::string config_file;
  double trial_timeout_s = 300.0;
  bool quiet = false;
};

void add_paths(CLI::App* sub, Flags& f, bool needs_report) {
  auto* repo = sub->add_option("--repo", f.config.repo, "Repository to search")->check(CLI::ExistingDirectory);
  if (needs_report) {
    repo->required();
    sub->add_option("--report", f.config.report, "Bug report (markdown)")->required()->check(CLI::ExistingFile);
  }
  sub->add_option("--out", f.config.out_dir, "Output directory for artifacts")->required();
  sub->add_option("--index-dir", f.config.index_dir, "Index directory (default <out>/index)");
}

void add_provider(CLI::App* sub, Flags& f) {
  auto& c = f.config;
  sub->add_option("--provider", c.provider_mode, "replay, record or live")
      ->check(CLI::IsMember({"replay", "record", "live"}));
  sub->add_option("--exchanges", c.exchanges, "Recorded exchanges (JSONL) for replay mode");
  sub->add_option("--provider-url", c.provider.endpoint, "OpenAI-compatible endpoint");
  sub->add_option("--model", c.provider.model, "Fallback model for roles without a mapping");
  sub->add_option("--model-map", f.model_map, "role=model pairs")->delimiter(',');
  sub->add_option("--embed-model", c.provider.embed_model);
  sub->add_option("--cross-model", c.provider.cross_model);
  sub->add_flag("--remote-embed", c.remote_embed, "Use the provider for embeddings");
  sub->add_flag("--remote-cross", c.remote_cross, "Use the provider for cross-encoder scores");
  sub->add_option("--temperature", c.provider.params.temperature);
  sub->add_option("--max-tokens", c.provider.params.max_tokens);
  sub->add_option("--api-key-env", c.provider.api_key_env, "Environment variable holding the API key");
}

void add_retrieval(CLI::App* sub, Flags& f) {
  auto& c = f.config;
  sub->add_option("--grammar", c.grammar, "Source grammar");
  sub->add_option("--alpha", c.alpha, "Weight of the dense score in the hybrid")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--top-k", c.top_k, "Snippets kept after hybrid ranking");
  sub->add_option("--max-modules", c.max_modules, "Contexts built (one per module)");
  sub->add_option("--token-budget", c.token_budget, "Tokens per context");
  sub->add_option("--dependency-depth", c.dependency_depth);
}

void add_agent(CLI::App* sub, Flags& f) {
  auto& c = f.config;
  sub->add_option("--max-attempts", c.max_attempts, "Attempts per context");
  sub->add_option("--max-contexts", c.max_contexts, "Contexts tried");
  sub->add_option("--similarity-threshold", c.similarity_threshold, "Runtime symptom match threshold");
  sub->add_option("--lint-command", c.lint_command, "External analyzer; the script path is appended")
      ->delimiter(',');
  sub->add_option("--disable", f.disabled, "Component to disable (repeatable)")->delimiter(',');
}

void add_verify(CLI::App* sub, Flags& f) {
  auto& c = f.config;
  sub->add_option("--signature", c.signature, "Bug signature (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--script", c.script, "Script to verify (default <out>/repro.py)");
  sub->add_option("--margin", c.margin, "Relative error margin for silent bugs");
  sub->add_option("--seeds", c.seeds, "Trial seeds")->delimiter(',');
  sub->add_option("--interpreter", c.interpreter, "Interpreter command")->delimiter(',');
  sub->add_option("--trial-timeout", f.trial_timeout_s, "Seconds per trial");
}

pipeline::RunConfig finish(Flags& f) {
  auto c = f.config;
  for (const auto& d : f.disabled) c.disabled.insert(d);
  for (const auto& kv : f.model_map) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error(ErrorKind::InvalidArgument, "--model-map expects role=model, got '" + kv + "'");
    c.provider.model_map[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  c.trial_timeout = std::chrono::milliseconds(static_cast<long>(f.trial_timeout_s * 1000));
  if (!f.config_file.empty()) {
    if (!std::filesystem::is_regular_file(f.config_file))
      throw Error(ErrorKind::Io, "cannot read config file '" + f.config_file + "'");
    c = pipeline::apply_config_json(std::move(c), dlrepro::text::read_file(f.config_file));
  }
  pipeline::validate(c);
  return c;
}

int exit_code_for(const Error& e) {
  if (e.is_provider_error()) return 4;
  switch (e.kind()) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::Parse: return 2;
    case ErrorKind::Io:
    case ErrorKind::GrammarUnavailable:
    case ErrorKind::NoChunks: return 3;
    case ErrorKind::LockHeld: return 5;
    case ErrorKind::SandboxFailure: return 6;
    default: return 7;
  }
}

std::string hint_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::ReplayMiss: return "record the missing exchanges with --provider record";
    case ErrorKind::ProviderFailure: return "check --provider-url and that the model server is running";
    case ErrorKind::GrammarUnavailable: return "only the python grammar is built in";
    case ErrorKind::LockHeld: return "use a different --out or wait for the other run";
    case ErrorKind::NoChunks: return "point --repo at a directory with source files";
    default: return "";
  }
}

int report_outcome(const pipeline::ReproduceResult& r, const pipeline::RunConfig& c, bool quiet) {
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  if (!quiet) {
    std::cout << "status: " << dlrepro::agent::to_string(r.outcome.status) << '\n'
              << "attempts: " << r.outcome.attempts_total << '\n'
              << "contexts tried: " << r.outcome.contexts_tried << " of " << r.contexts << '\n'
              << "index reused: " << (r.index_reused ? "yes" : "no") << '\n';
    if (r.outcome.final_script) std::cout << "script: " << (c.out_dir / "repro.py").string() << '\n';
  }
  return r.outcome.status == dlrepro::agent::Status::Reproduced ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reproduce deep-learning bugs from a report and a repository"};
  app.require_subcommand(1);
  Flags f;
  std::string component;

  auto* index = app.add_subcommand("index", "Chunk and index a repository");
  auto* reproduce = app.add_subcommand("reproduce", "Generate a reproduction script for a bug report");
  auto* verify = app.add_subcommand("verify", "Run a script under several seeds and judge it");
  auto* ablate = app.add_subcommand("ablate", "reproduce with one component disabled");
  ablate->add_option("component", component, "Component to disable")
      ->required()
      ->check(CLI::IsMember(std::vector<std::string>(pipeline::ablatable_components().begin(),
                                                     pipeline::ablatable_components().end())));

  add_paths(index, f, false);
  index->get_option("--repo")->required();
  add_provider(index, f);
  add_retrieval(index, f);
  for (auto* sub : {reproduce, ablate}) {
    add_paths(sub, f, true);
    add_provider(sub, f);
    add_retrieval(sub, f);
    add_agent(sub, f);
  }
  verify->add_option("--out", f.config.out_dir, "Output directory for artifacts")->required();
  add_verify(verify, f);
  for (auto* sub : {index, reproduce, verify, ablate}) {
    sub->add_option("--config", f.config_file, "JSON config; its keys override flags");
    sub->add_flag("-q,--quiet", f.quiet, "Print nothing on success");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    auto config = finish(f);
    if (index->parsed()) {
      auto s = pipeline::cmd_index(config);
      if (!f.quiet)
        std::cout << "digest: " << s.digest << '\n'
                  << "files: " << s.files << '\n'
                  << "chunks: " << s.chunks << '\n'
                  << "reused: " << (s.reused ? "yes" : "no") << '\n';
      return 0;
    }
    if (reproduce->parsed()) return report_outcome(pipeline::cmd_reproduce(config), config, f.quiet);
    if (ablate->parsed()) return report_outcome(pipeline::cmd_ablate(config, component), config, f.quiet);
    auto v = pipeline::cmd_verify(config);
    if (!f.quiet) {
      std::cout << "reproduced: " << (v.reproduced ? "true" : "false") << '\n';
      for (const auto& [k, ok] : v.evidence) std::cout << "  " << k << ": " << (ok ? "yes" : "no") << '\n';
      std::cout << "verdict: " << (config.out_dir / "verdict.json").string() << '\n';
    }
    return v.reproduced ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (auto hint = hint_for(e); !hint.empty()) std::cerr << "hint: " << hint << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 7;
  }
}
