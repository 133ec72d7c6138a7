#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <regex>
#include <tuple>

#include <json.hpp>

#include "dlrepro/agent/agent.hpp"
#include "dlrepro/py/parser.hpp"
#include "dlrepro/py/scope.hpp"
#include "dlrepro/util/assets.hpp"
#include "dlrepro/util/error.hpp"
#include "dlrepro/util/subprocess.hpp"
#include "dlrepro/util/text.hpp"

namespace dlrepro::agent {
namespace {

const char* const kUndefined = "undefined name";
const char* const kImport = "unresolved import";
const char* const kArity = "invalid call arity";

std::string top_level(const std::string& dotted) { return dotted.substr(0, dotted.find('.')); }

std::string fmt2(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

bool same_finding(const Finding& a, const Finding& b) { return a.kind == b.kind && a.line == b.line; }

}  // namespace

std::string render_feedback(const std::vector<FeedbackRecord>& prior) {
  std::string out;
  for (const auto& fb : prior) {
    if (fb.verdict == Verdict::Pass) continue;
    for (const auto& f : fb.details) {
      out += "- [" + std::string(to_string(fb.stage)) + "] " + f.kind;
      if (f.line > 0) out += " (line " + std::to_string(f.line) + ")";
      out += ": " + f.message + "\n";
    }
    if (fb.details.empty()) out += "- [" + std::string(to_string(fb.stage)) + "] " + fb.note + "\n";
  }
  if (out.empty()) return "";
  return "Feedback on earlier attempts with this context (fix all of it):\n" + out;
}

std::optional<std::string> generate_candidate(const AttemptInput& in, const report::RestructuredReport& report,
                                              const gateway::CompleteFn& generate,
                                              const gateway::CompleteFn& refine, std::string* failure) {
  const auto& complete = in.attempt == 1 ? generate : refine;
  auto msgs = gateway::prompt_messages("prompts/generate.v1.txt",
                                       {{"report", report::render_sections(report)},
                                        {"rank", std::to_string(in.context.rank)},
                                        {"context", in.context.rendered},
                                        {"plan", plan::render_plan(in.plan)},
                                        {"attempt", std::to_string(in.attempt)},
                                        {"max_attempts", std::to_string(in.max_attempts)},
                                        {"feedback", render_feedback(in.prior)}});
  try {
    auto answer = complete(msgs);
    auto code = gateway::extract_code_block(answer);
    if (!code || text::trim(*code).empty()) {
      msgs.push_back({"assistant", answer});
      msgs.push_back({"user", std::string(text::trim(asset("prompts/extract_code.v1.txt")))});
      code = gateway::extract_code_block(complete(msgs));
    }
    if (code && !text::trim(*code).empty()) return code;
    *failure = "no fenced code block in the completion after one re-prompt";
  } catch (const Error& e) {
    if (!e.is_provider_error()) throw;
    *failure = std::string("provider failure: ") + e.what();
  }
  return std::nullopt;
}

FeedbackRecord structural_check(std::string_view script) {
  FeedbackRecord fb;
  fb.stage = StageName::Structural;
  auto parsed = py::parse(script);
  if (parsed.ok) return fb;
  fb.verdict = Verdict::Regenerate;
  fb.details.push_back({"syntax", parsed.error.kind + ": " + parsed.error.message, parsed.error.line, parsed.error.col});
  return fb;
}

LintReport parse_lint_output(std::string_view output) {
  LintReport r;
  auto trimmed = text::trim(output);
  if (!trimmed.empty() && trimmed.front() == '[') {
    auto j = nlohmann::json::parse(trimmed, nullptr, false);
    if (!j.is_discarded() && j.is_array()) {
      for (const auto& m : j) {
        auto symbol = m.value("symbol", "");
        Finding f{"", m.value("message", ""), m.value("line", 0), m.value("column", 0)};
        if (symbol == "undefined-variable") f.kind = kUndefined;
        else if (symbol == "import-error" || symbol == "no-name-in-module") f.kind = kImport;
        else if (symbol == "no-value-for-parameter" || symbol == "too-many-function-args" ||
                 symbol == "unexpected-keyword-arg" || symbol == "redundant-keyword-arg")
          f.kind = kArity;
        if (f.kind.empty()) {
          f.kind = symbol;
          r.advisory.push_back(std::move(f));
        } else {
          r.blocking.push_back(std::move(f));
        }
      }
      return r;
    }
  }
  static const std::regex kLine(R"(^.*?:(\d+):(?:(\d+):)?\s*(.*)$)");
  for (const auto& line : text::split_lines(output)) {
    std::smatch m;
    if (!std::regex_match(line, m, kLine)) continue;
    Finding f{"", m[3].str(), std::stoi(m[1].str()), m[2].matched ? std::stoi(m[2].str()) : 0};
    if (f.message.rfind("undefined name", 0) == 0) {
      f.kind = kUndefined;
      r.blocking.push_back(std::move(f));
    } else {
      f.kind = "style";
      r.advisory.push_back(std::move(f));
    }
  }
  return r;
}

LintReport builtin_lint(std::string_view script, const std::set<std::string>& allowed_modules, bool undefined_names) {
  LintReport r;
  auto parsed = py::parse(script);
  if (!parsed.ok) {
    r.blocking.push_back({"syntax", parsed.error.message, parsed.error.line, parsed.error.col});
    return r;
  }
  auto sym = py::analyze(*parsed.module);
  if (undefined_names)
    for (const auto& u : sym.undefined) r.blocking.push_back({kUndefined, "undefined name '" + u.name + "'", u.line, u.col});
  for (const auto& imp : sym.imports) {
    std::string shown = std::string(imp.level, '.') + imp.module;
    if (imp.level > 0) {
      r.blocking.push_back({kImport, "relative import '" + shown + "' in a standalone script", imp.line, 0});
      continue;
    }
    auto top = top_level(imp.module);
    if (py::is_stdlib_module(imp.module) || allowed_modules.count(top)) continue;
    r.blocking.push_back({kImport, "cannot resolve module '" + imp.module + "'", imp.line, 0});
  }
  for (const auto& a : sym.arity) {
    std::string msg;
    switch (a.problem) {
      case py::ArityProblem::TooManyPositional: msg = "too many positional arguments for " + a.function + "()"; break;
      case py::ArityProblem::MissingArgument:
        msg = a.function + "() missing required argument '" + a.argument + "'";
        break;
      case py::ArityProblem::UnexpectedKeyword:
        msg = a.function + "() got an unexpected keyword argument '" + a.argument + "'";
        break;
    }
    r.blocking.push_back({kArity, msg, a.line, a.col});
  }
  return r;
}

FeedbackRecord static_check(std::string_view script, const StaticConfig& config) {
  FeedbackRecord fb;
  fb.stage = StageName::Static;
  LintReport external;
  external.analyzer_available = false;
  if (!config.command.empty()) {
    auto dir = std::filesystem::temp_directory_path() / ("dlrepro-lint-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    auto file = dir / ("candidate_" + std::to_string(std::hash<std::string_view>{}(script)) + ".py");
    text::write_file(file.string(), script);
    ProcessSpec spec;
    spec.argv = config.command;
    spec.argv.push_back(file.string());
    spec.timeout = config.timeout;
    auto res = run_process(spec);
    std::filesystem::remove(file);
    bool missing = res.spawn_failed || res.err.find("No module named") != std::string::npos;
    bool crashed = !missing && (res.timed_out || res.term_signal != 0 || res.exit_code > 2 ||
                                res.err.find("Traceback (most recent call last)") != std::string::npos);
    if (missing) {
      fb.note = "analyzer unavailable; built-in checks used";
    } else if (crashed) {
      fb.note = "analyzer crashed; built-in checks used";
    } else {
      external = parse_lint_output(res.out);
      external.analyzer_available = true;
    }
  } else {
    fb.note = "built-in checks only";
  }

  auto builtin = builtin_lint(script, config.allowed_modules, !external.analyzer_available);
  std::vector<Finding> blocking = external.blocking;
  for (auto& f : builtin.blocking) {
    bool dup = false;
    for (const auto& g : blocking) dup = dup || same_finding(f, g);
    if (!dup) blocking.push_back(std::move(f));
  }
  std::sort(blocking.begin(), blocking.end(),
            [](const Finding& a, const Finding& b) { return std::tie(a.line, a.col, a.kind) < std::tie(b.line, b.col, b.kind); });
  if (!blocking.empty()) {
    fb.verdict = Verdict::Regenerate;
    fb.details = std::move(blocking);
    return fb;
  }
  if (!external.advisory.empty()) {
    std::string notes;
    for (const auto& a : external.advisory) notes += (notes.empty() ? "" : "; ") + a.message;
    fb.note = fb.note.empty() ? "advisory: " + notes : fb.note + "; advisory: " + notes;
  }
  return fb;
}

FeedbackRecord relevance_check(std::string_view script, const report::RestructuredReport& report,
                               const gateway::CompleteFn& complete) {
  FeedbackRecord fb;
  fb.stage = StageName::Relevance;
  auto msgs = gateway::prompt_messages("prompts/relevance.v1.txt",
                                       {{"report", report::render_sections(report)}, {"script", std::string(script)}});
  auto judge = [](const std::string& answer, std::string* rationale) -> std::optional<bool> {
    if (auto obj = gateway::extract_json_object(answer)) {
      auto j = nlohmann::json::parse(*obj);
      if (j.contains("rationale") && j["rationale"].is_string()) *rationale = j["rationale"].get<std::string>();
      if (j.contains("relevant") && j["relevant"].is_boolean()) return j["relevant"].get<bool>();
    }
    auto t = text::to_lower(text::trim(answer));
    if (t.rfind("irrelevant", 0) == 0 || t.rfind("not relevant", 0) == 0) return false;
    if (t.rfind("relevant", 0) == 0) return true;
    return std::nullopt;
  };
  try {
    std::string rationale;
    auto answer = complete(msgs);
    auto verdict = judge(answer, &rationale);
    if (!verdict) {
      msgs.push_back({"assistant", answer});
      msgs.push_back(gateway::prompt_messages(
                         "prompts/repair.v1.txt",
                         {{"problem", "expected a JSON object with a boolean \"relevant\" field"}})
                         .back());
      verdict = judge(complete(msgs), &rationale);
    }
    if (!verdict) {
      fb.note = "warning: relevance judgement unparseable twice; treated as pass";
      return fb;
    }
    if (!*verdict) {
      fb.verdict = Verdict::SwitchContext;
      fb.details.push_back({"irrelevant", rationale.empty() ? "script judged unrelated to the report" : rationale, 0, 0});
    } else {
      fb.note = rationale;
    }
  } catch (const Error& e) {
    if (!e.is_provider_error()) throw;
    fb.note = std::string("warning: relevance provider failure; treated as pass: ") + e.what();
  }
  return fb;
}

FeedbackRecord runtime_check(std::string_view script, const context::ReproductionContext& context,
                             const report::RestructuredReport& report,
                             const std::vector<oracle::TaxonomyEntry>& taxonomy, double threshold,
                             const gateway::CompleteFn& complete) {
  FeedbackRecord fb;
  fb.stage = StageName::Runtime;
  auto j = oracle::judge(script, context.rendered, report, taxonomy, threshold, complete);
  std::string summary = std::string(oracle::to_string(j.state.predicted_outcome)) + "; category " +
                        j.entry.category_id + "; similarity " + fmt2(j.match.similarity) + " vs threshold " +
                        fmt2(j.match.threshold);
  if (j.pass()) {
    fb.note = summary;
    return fb;
  }
  fb.verdict = Verdict::Regenerate;
  fb.details.push_back({"symptom mismatch", summary, 0, 0});
  if (j.state.low_confidence) fb.details.push_back({"low confidence", j.state.rationale, 0, 0});
  for (const auto& m : j.match.missing()) fb.details.push_back({"missing symptom", m, 0, 0});
  for (const auto& u : j.match.unexpected()) fb.details.push_back({"unexpected symptom", u, 0, 0});
  return fb;
}

std::set<std::string> allowed_modules_for(const std::vector<context::ReproductionContext>& contexts,
                                          const std::vector<std::string>& corpus_modules) {
  std::set<std::string> out;
  for (const auto& c : contexts)
    for (const auto& m : c.imported_modules) out.insert(top_level(m));
  for (const auto& m : corpus_modules) out.insert(top_level(m));
  return out;
}

}  // namespace dlrepro::agent
