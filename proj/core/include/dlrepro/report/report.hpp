#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dlrepro/gateway/gateway.hpp"

namespace dlrepro::report {

struct SourceMeta {
  std::string project;
  std::string framework;
  std::string url;
};

struct CodeBlock {
  std::string lang;
  std::string text;         // byte-exact substring of the body
  std::size_t offset = 0;   // position of `text` in the body
};

struct BugReport {
  std::string id;
  std::string title;
  std::string body;
  std::vector<CodeBlock> attachments;
  SourceMeta meta;
};

/// Reads a markdown report. Optional leading "key: value" lines (id, project,
/// framework, url) before the first "# " title line become metadata.
BugReport parse_bug_report(std::string_view markdown, std::string default_id = "");

std::vector<CodeBlock> extract_code_blocks(std::string_view body);

/// Python tracebacks ("Traceback (most recent call last):" through the exception line).
std::vector<std::string> extract_tracebacks(std::string_view body);

/// Steps listed under a "steps to reproduce" style heading, marker stripped.
std::vector<std::string> explicit_steps(std::string_view body);

enum class Provenance { Extracted, Inferred };
std::string_view to_string(Provenance p);

struct Step {
  std::string text;
  Provenance provenance = Provenance::Inferred;
  bool operator==(const Step&) const = default;
};

struct RestructuredReport {
  std::string core_problem;
  std::string observed_behaviour;
  std::string expected_behaviour;
  std::vector<Step> reproduction_steps;
  Provenance core_provenance = Provenance::Extracted;
  Provenance observed_provenance = Provenance::Extracted;
  Provenance expected_provenance = Provenance::Extracted;
  bool degraded = false;
  std::vector<std::string> warnings;

  /// Observed behaviour, core problem and steps joined: the retrieval query.
  std::string query_text() const;
  std::string steps_text() const;
};

bool same_sections(const RestructuredReport& a, const RestructuredReport& b);

/// The labeled-section format the model is asked to produce.
std::string render_sections(const RestructuredReport& r);

/// Parses labeled sections. Returns nullopt and sets `problem` when the text
/// does not follow the format or a section is empty.
std::optional<RestructuredReport> parse_sections(std::string_view text, std::string* problem = nullptr);

/// Enforces the invariants against the raw report: tracebacks preserved
/// verbatim, explicit steps marked extracted, unsupported numbers marked inferred.
void reconcile(RestructuredReport& r, const BugReport& raw);

/// Title to core problem, fenced error blocks to observed behaviour, the rest
/// to expected behaviour. Recognises the headings that `render_as_report` writes.
RestructuredReport fallback_restructure(const BugReport& report);

/// One completion, one repair re-prompt, then the deterministic fallback.
RestructuredReport restructure(const BugReport& report, const gateway::CompleteFn& complete);

/// Used when restructuring is disabled: the raw report as-is, steps extracted if listed.
RestructuredReport passthrough(const BugReport& report);

/// Plain report text for a structured report (input to idempotence checks).
BugReport render_as_report(const RestructuredReport& r, const std::string& id, const std::string& title);

/// Persisted form with provenance annotations.
std::string render_markdown(const RestructuredReport& r);

}  // namespace dlrepro::report
