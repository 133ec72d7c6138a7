#include "dlrepro/pipeline/pipeline.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "dlrepro/context/context.hpp"
#include "dlrepro/index/corpus.hpp"
#include "dlrepro/oracle/oracle.hpp"
#include "dlrepro/plan/plan.hpp"
#include "dlrepro/report/report.hpp"
#include "dlrepro/retrieval/retrieval.hpp"
#include "dlrepro/util/digest.hpp"
#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"

namespace dlrepro::pipeline {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

bool off(const RunConfig& c, const char* component) { return c.disabled.count(component) > 0; }

std::string read_input(const fs::path& p, const char* what) {
  if (p.empty()) throw Error(ErrorKind::InvalidArgument, std::string("no ") + what + " given");
  if (!fs::is_regular_file(p)) throw Error(ErrorKind::Io, std::string("cannot read ") + what + " '" + p.string() + "'");
  return text::read_file(p.string());
}

index::CorpusOptions corpus_options(const RunConfig& c, const gateway::Gateway& gw) {
  index::CorpusOptions o;
  o.grammar = c.grammar;
  o.embedder_id = gw.embedder_id();
  return o;
}

std::string outcome_json(const agent::AgentOutcome& o) {
  json j;
  j["status"] = agent::to_string(o.status);
  j["attempts_total"] = o.attempts_total;
  j["contexts_tried"] = o.contexts_tried;
  if (o.final_script) {
    j["final_context"] = o.final_script->context_rank;
    j["final_attempt"] = o.final_script->attempt;
    j["script_sha256"] = sha256_hex(o.final_script->text);
  }
  return j.dump(2) + "\n";
}

}  // namespace

const std::set<std::string>& ablatable_components() {
  static const std::set<std::string> s = {"restructuring", "planning", "structural",  "static",     "relevance",
                                          "runtime",       "ann",      "bm25",        "reranker",   "dependency",
                                          "partitioning",  "loop_extraction", "loop_ranking"};
  return s;
}

fs::path RunConfig::effective_index_dir() const { return index_dir.empty() ? out_dir / "index" : index_dir; }
fs::path RunConfig::effective_script() const { return script.empty() ? out_dir / "repro.py" : script; }

void validate(const RunConfig& c) {
  for (const auto& d : c.disabled)
    if (!ablatable_components().count(d))
      throw Error(ErrorKind::InvalidArgument,
                  "unknown component '" + d + "' (choose from: " +
                      text::join({ablatable_components().begin(), ablatable_components().end()}, ", ") + ")");
  if (c.alpha < 0.0 || c.alpha > 1.0) throw Error(ErrorKind::InvalidArgument, "alpha must lie in [0, 1]");
  if (c.top_k == 0) throw Error(ErrorKind::InvalidArgument, "top_k must be positive");
  if (c.max_modules == 0) throw Error(ErrorKind::InvalidArgument, "max_modules must be positive");
  if (c.max_attempts < 1 || c.max_contexts < 1)
    throw Error(ErrorKind::InvalidArgument, "max_attempts and max_contexts must be positive");
  if (c.margin < 0.0) throw Error(ErrorKind::InvalidArgument, "margin must be non-negative");
  if (c.seeds.empty()) throw Error(ErrorKind::InvalidArgument, "at least one seed is needed");
  if (c.provider_mode != "replay" && c.provider_mode != "record" && c.provider_mode != "live")
    throw Error(ErrorKind::InvalidArgument, "provider mode must be replay, record or live");
  index::grammar_for(c.grammar);
}

std::string config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["repo"] = c.repo.string();
  j["report"] = c.report.string();
  j["out_dir"] = c.out_dir.string();
  j["index_dir"] = c.effective_index_dir().string();
  j["signature"] = c.signature.string();
  j["script"] = c.effective_script().string();
  j["alpha"] = c.alpha;
  j["top_k"] = c.top_k;
  j["max_modules"] = c.max_modules;
  j["max_attempts"] = c.max_attempts;
  j["max_contexts"] = c.max_contexts;
  j["margin"] = c.margin;
  j["seeds"] = c.seeds;
  j["disabled_components"] = std::vector<std::string>(c.disabled.begin(), c.disabled.end());
  j["grammar"] = c.grammar;
  j["similarity_threshold"] = c.similarity_threshold;
  j["token_budget"] = c.token_budget;
  j["dependency_depth"] = c.dependency_depth;
  j["lint_command"] = c.lint_command;
  j["interpreter"] = c.interpreter;
  j["trial_timeout_ms"] = c.trial_timeout.count();
  auto& p = j["provider"];
  p["mode"] = c.provider_mode;
  p["exchanges"] = c.exchanges.string();
  p["strict_replay"] = c.strict_replay;
  p["remote_embed"] = c.remote_embed;
  p["remote_cross"] = c.remote_cross;
  p["endpoint"] = c.provider.endpoint;
  p["model"] = c.provider.model;
  p["model_map"] = c.provider.model_map;
  p["embed_model"] = c.provider.embed_model;
  p["cross_model"] = c.provider.cross_model;
  p["temperature"] = c.provider.params.temperature;
  p["top_p"] = c.provider.params.top_p;
  p["top_k"] = c.provider.params.top_k;
  p["repetition_penalty"] = c.provider.params.repetition_penalty;
  p["max_tokens"] = c.provider.params.max_tokens;
  p["timeout_ms"] = c.provider.timeout.count();
  p["max_retries"] = c.provider.max_retries;
  p["api_key_env"] = c.provider.api_key_env;
  return j.dump(2) + "\n";
}

RunConfig apply_config_json(RunConfig c, std::string_view json_text) {
  auto j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::Parse, "config file must hold a JSON object");
  try {
    auto path = [&](const char* k, fs::path& dst) {
      if (j.contains(k)) dst = j[k].get<std::string>();
    };
    path("repo", c.repo);
    path("report", c.report);
    path("out_dir", c.out_dir);
    path("index_dir", c.index_dir);
    path("signature", c.signature);
    path("script", c.script);
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("top_k")) c.top_k = j["top_k"].get<std::size_t>();
    if (j.contains("max_modules")) c.max_modules = j["max_modules"].get<std::size_t>();
    if (j.contains("max_attempts")) c.max_attempts = j["max_attempts"].get<int>();
    if (j.contains("max_contexts")) c.max_contexts = j["max_contexts"].get<int>();
    if (j.contains("margin")) c.margin = j["margin"].get<double>();
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("disabled_components")) {
      auto v = j["disabled_components"].get<std::vector<std::string>>();
      c.disabled = {v.begin(), v.end()};
    }
    if (j.contains("grammar")) c.grammar = j["grammar"].get<std::string>();
    if (j.contains("similarity_threshold")) c.similarity_threshold = j["similarity_threshold"].get<double>();
    if (j.contains("token_budget")) c.token_budget = j["token_budget"].get<std::size_t>();
    if (j.contains("dependency_depth")) c.dependency_depth = j["dependency_depth"].get<int>();
    if (j.contains("lint_command")) c.lint_command = j["lint_command"].get<std::vector<std::string>>();
    if (j.contains("interpreter")) c.interpreter = j["interpreter"].get<std::vector<std::string>>();
    if (j.contains("trial_timeout_ms")) c.trial_timeout = std::chrono::milliseconds(j["trial_timeout_ms"].get<long>());
    if (j.contains("provider")) {
      const auto& p = j["provider"];
      if (p.contains("mode")) c.provider_mode = p["mode"].get<std::string>();
      if (p.contains("exchanges")) c.exchanges = p["exchanges"].get<std::string>();
      if (p.contains("strict_replay")) c.strict_replay = p["strict_replay"].get<bool>();
      if (p.contains("remote_embed")) c.remote_embed = p["remote_embed"].get<bool>();
      if (p.contains("remote_cross")) c.remote_cross = p["remote_cross"].get<bool>();
      if (p.contains("endpoint")) c.provider.endpoint = p["endpoint"].get<std::string>();
      if (p.contains("model")) c.provider.model = p["model"].get<std::string>();
      if (p.contains("model_map"))
        for (auto& [role, model] : p["model_map"].items()) c.provider.model_map[role] = model.get<std::string>();
      if (p.contains("embed_model")) c.provider.embed_model = p["embed_model"].get<std::string>();
      if (p.contains("cross_model")) c.provider.cross_model = p["cross_model"].get<std::string>();
      if (p.contains("temperature")) c.provider.params.temperature = p["temperature"].get<double>();
      if (p.contains("top_p")) c.provider.params.top_p = p["top_p"].get<double>();
      if (p.contains("top_k")) c.provider.params.top_k = p["top_k"].get<int>();
      if (p.contains("repetition_penalty")) c.provider.params.repetition_penalty = p["repetition_penalty"].get<double>();
      if (p.contains("max_tokens")) c.provider.params.max_tokens = p["max_tokens"].get<int>();
      if (p.contains("timeout_ms")) c.provider.timeout = std::chrono::milliseconds(p["timeout_ms"].get<long>());
      if (p.contains("max_retries")) c.provider.max_retries = p["max_retries"].get<int>();
      if (p.contains("api_key_env")) c.provider.api_key_env = p["api_key_env"].get<std::string>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("config file: ") + e.what());
  }
  return c;
}

RunLock::RunLock(const fs::path& out_dir) : path_(out_dir / ".dlrepro.lock") {
  fs::create_directories(out_dir);
  for (int tries = 0; tries < 2; ++tries) {
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY | O_CLOEXEC, 0644);
    if (fd >= 0) {
      auto pid = std::to_string(::getpid()) + "\n";
      (void)!::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) throw Error(ErrorKind::Io, "cannot create lock " + path_.string() + ": " + std::strerror(errno));
    long holder = 0;
    std::ifstream(path_) >> holder;
    if (holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM))
      throw Error(ErrorKind::LockHeld, "out-dir " + out_dir.string() + " is in use by process " +
                                           std::to_string(holder) + " (lock file " + path_.string() + ")");
    fs::remove(path_);  // stale
  }
  throw Error(ErrorKind::LockHeld, "could not acquire lock " + path_.string());
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::shared_ptr<gateway::Transport> make_transport(const RunConfig& c) {
  if (c.provider_mode == "replay") {
    if (c.exchanges.empty())
      throw Error(ErrorKind::InvalidArgument, "replay mode needs an exchange log (--exchanges <file.jsonl>)");
    if (!fs::is_regular_file(c.exchanges))
      throw Error(ErrorKind::Io, "cannot read exchange log '" + c.exchanges.string() + "'");
    return std::make_shared<gateway::ReplayTransport>(c.exchanges, c.strict_replay);
  }
  auto http = std::make_shared<gateway::HttpTransport>(c.provider);
  if (c.provider_mode == "live") return http;
  return std::make_shared<gateway::RecordingTransport>(http, c.out_dir / "exchanges" / "exchanges.jsonl");
}

IndexSummary cmd_index(const RunConfig& config, std::shared_ptr<gateway::Transport> transport) {
  validate(config);
  if (!fs::is_directory(config.repo))
    throw Error(ErrorKind::Io, "repository path '" + config.repo.string() + "' is not a directory");
  RunLock lock(config.out_dir);
  gateway::Gateway gw(config.provider, transport ? transport : make_transport(config), config.remote_embed,
                      config.remote_cross);
  auto corpus = index::build_corpus(config.repo, corpus_options(config, gw), gw.embedder(), config.effective_index_dir());
  return {corpus.digest, corpus.files.size(), corpus.chunks.size(), corpus.reused};
}

ReproduceResult cmd_reproduce(const RunConfig& config, std::shared_ptr<gateway::Transport> transport) {
  validate(config);
  auto raw_text = read_input(config.report, "bug report");
  if (!fs::is_directory(config.repo))
    throw Error(ErrorKind::Io, "repository path '" + config.repo.string() + "' is not a directory");
  RunLock lock(config.out_dir);
  const auto& out = config.out_dir;
  text::write_file((out / "run_config.json").string(), config_to_json(config));

  ReproduceResult result;
  gateway::Gateway gw(config.provider, transport ? transport : make_transport(config), config.remote_embed,
                      config.remote_cross);

  // Step 1b: restructure the report.
  auto raw = report::parse_bug_report(raw_text, config.report.stem().string());
  auto structured = off(config, "restructuring") ? report::passthrough(raw)
                                                 : report::restructure(raw, gw.completer("restructure"));
  text::write_file((out / "report.structured.md").string(), report::render_markdown(structured));
  for (const auto& w : structured.warnings) result.warnings.push_back("report: " + w);

  // Step 1a: retrieval and context construction.
  auto corpus =
      index::build_corpus(config.repo, corpus_options(config, gw), gw.embedder(), config.effective_index_dir());
  result.index_reused = corpus.reused;
  auto query = retrieval::make_query(structured.query_text(), gw.embedder());
  retrieval::HybridOptions hopt;
  hopt.alpha = off(config, "ann") ? 0.0 : off(config, "bm25") ? 1.0 : config.alpha;
  hopt.k = config.top_k;
  auto snippets = retrieval::hybrid_rank(query, corpus, hopt);
  if (!off(config, "reranker")) {
    try {
      snippets = retrieval::rerank(query, std::move(snippets), gw.scorer());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ScorerFailure && !e.is_provider_error()) throw;
      result.warnings.push_back(std::string("reranker unavailable, hybrid order kept: ") + e.what());
      snippets = retrieval::hybrid_rank(query, corpus, hopt);
    }
  }
  auto groups = off(config, "partitioning") ? context::unpartitioned_groups(snippets, config.max_modules)
                                            : context::partition_modules(snippets, config.max_modules);
  std::vector<std::optional<context::TrainingLoop>> loops;
  for (const auto& g : groups) {
    if (off(config, "loop_extraction")) {
      loops.emplace_back();
      continue;
    }
    auto found = context::extract_training_loops(g);
    if (off(config, "loop_ranking")) loops.push_back(found.empty() ? std::nullopt : std::optional(found.front()));
    else loops.push_back(context::rank_loops(std::move(found), query, gw.scorer()));
  }
  retrieval::DependencyResolver resolver(corpus);
  context::AssembleOptions aopt;
  aopt.token_budget = config.token_budget;
  aopt.dependencies = !off(config, "dependency");
  aopt.dependency_depth = config.dependency_depth;
  auto contexts = context::assemble_contexts(groups, loops, resolver, aopt);
  context::save_contexts(contexts, out / "contexts");
  result.contexts = contexts.size();
  if (contexts.empty()) throw Error(ErrorKind::NoChunks, "retrieval produced no contexts");

  // Step 2: one plan per context.
  std::vector<plan::ReproductionPlan> plans;
  for (const auto& ctx : contexts)
    plans.push_back(off(config, "planning") ? plan::skeleton_plan(ctx.rank, structured)
                                            : plan::generate_plan(ctx, structured, gw.completer("plan")));
  plan::save_plans(plans, out / "plans");

  // Step 3: generate, validate, refine.
  std::vector<std::string> modules;
  for (const auto& c : corpus.chunks) modules.push_back(c.module_path);
  agent::StaticConfig scfg;
  scfg.command = config.lint_command;
  scfg.allowed_modules = agent::allowed_modules_for(contexts, modules);
  const auto& taxonomy = oracle::bundled_taxonomy();
  agent::Stages stages;
  auto gen = gw.completer("generate"), refine = gw.completer("refine");
  auto relevance = gw.completer("relevance"), runtime = gw.completer("runtime");
  stages.generate = [&](const agent::AttemptInput& in, std::string* failure) {
    return agent::generate_candidate(in, structured, gen, refine, failure);
  };
  stages.structural = [](const agent::CandidateScript& s, const context::ReproductionContext&) {
    return agent::structural_check(s.text);
  };
  stages.static_check = [&](const agent::CandidateScript& s, const context::ReproductionContext&) {
    return agent::static_check(s.text, scfg);
  };
  stages.relevance = [&](const agent::CandidateScript& s, const context::ReproductionContext&) {
    return agent::relevance_check(s.text, structured, relevance);
  };
  stages.runtime = [&](const agent::CandidateScript& s, const context::ReproductionContext& ctx) {
    return agent::runtime_check(s.text, ctx, structured, taxonomy, config.similarity_threshold, runtime);
  };
  agent::AgentOptions opts;
  opts.max_attempts = config.max_attempts;
  opts.max_contexts = config.max_contexts;
  const std::pair<const char*, agent::StageName> switches[] = {{"structural", agent::StageName::Structural},
                                                               {"static", agent::StageName::Static},
                                                               {"relevance", agent::StageName::Relevance},
                                                               {"runtime", agent::StageName::Runtime}};
  for (const auto& [name, stage] : switches)
    if (off(config, name)) opts.disabled.insert(stage);

  std::ofstream trace(out / "trace.jsonl", std::ios::trunc);
  if (!trace) throw Error(ErrorKind::Io, "cannot write " + (out / "trace.jsonl").string());
  auto sink = [&](const agent::TraceEvent& e) { trace << agent::to_jsonl(e) << '\n' << std::flush; };
  result.outcome = agent::run_agent(contexts, plans, stages, opts, sink);

  fs::remove(out / "repro.py");
  if (result.outcome.final_script) text::write_file((out / "repro.py").string(), result.outcome.final_script->text);
  text::write_file((out / "outcome.json").string(), outcome_json(result.outcome));
  return result;
}

verify::VerificationVerdict cmd_verify(const RunConfig& config) {
  validate(config);
  auto script = read_input(config.effective_script(), "script");
  auto signature = verify::parse_signature(read_input(config.signature, "bug signature"));
  RunLock lock(config.out_dir);
  verify::SandboxConfig sandbox;
  sandbox.interpreter = config.interpreter;
  sandbox.timeout = config.trial_timeout;
  sandbox.work_dir = config.out_dir / "trials";
  auto trials = verify::execute_trials(script, config.seeds, sandbox);
  auto verdict = verify::verify(trials, signature, config.margin);
  auto j = json::parse(verify::verdict_to_json(verdict, trials));
  j["signature"] = json::parse(verify::signature_to_json(signature));
  j["config"] = json::parse(config_to_json(config));
  text::write_file((config.out_dir / "verdict.json").string(), j.dump(2) + "\n");
  return verdict;
}

ReproduceResult cmd_ablate(const RunConfig& config, const std::string& component,
                           std::shared_ptr<gateway::Transport> transport) {
  if (!ablatable_components().count(component))
    throw Error(ErrorKind::InvalidArgument, "unknown component '" + component + "'");
  auto c = config;
  c.disabled.insert(component);
  return cmd_reproduce(c, std::move(transport));
}

}  // namespace dlrepro::pipeline
