#include "dlrepro/report/report.hpp"

#include <algorithm>
#include <map>
#include <regex>
#include <set>

#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"

namespace dlrepro::report {
namespace {

const char* const kPrompt = "prompts/restructure.v1.txt";

bool is_fence(std::string_view line) { return text::trim(line).substr(0, 3) == "```"; }

std::string strip_marker(std::string_view line, bool* is_item) {
  static const std::regex kItem(R"(^\s*(?:\d+[.)]|[-*+])\s+(.*\S)\s*$)");
  std::string s(line);
  std::smatch m;
  *is_item = std::regex_match(s, m, kItem);
  return *is_item ? m[1].str() : s;
}

std::string heading_key(std::string_view line) {
  auto t = text::trim(line);
  bool hashed = !t.empty() && t.front() == '#';
  while (!t.empty() && (t.front() == '#' || t.front() == ' ')) t.remove_prefix(1);
  bool colon = !t.empty() && t.back() == ':';
  if (colon) t.remove_suffix(1);
  if (!hashed && !colon) return "";
  if (t.size() > 40) return "";
  return text::to_lower(text::normalize_ws(t));
}

bool steps_heading(const std::string& key) {
  return key == "steps to reproduce" || key == "to reproduce" || key == "reproduction steps" ||
         key == "how to reproduce" || key == "reproduce" || key == "steps";
}

enum class Sec { None, Core, Observed, Expected, Steps, Other };

Sec classify(const std::string& key) {
  if (key.empty()) return Sec::None;
  if (key == "core problem" || key == "problem" || key == "summary") return Sec::Core;
  if (key == "observed behaviour" || key == "observed behavior" || key == "actual behaviour" ||
      key == "actual behavior" || key == "current behaviour" || key == "current behavior" || key == "observed")
    return Sec::Observed;
  if (key == "expected behaviour" || key == "expected behavior" || key == "expected") return Sec::Expected;
  if (steps_heading(key)) return Sec::Steps;
  return Sec::Other;
}

std::string trim_block(const std::vector<std::string>& lines) {
  std::size_t a = 0, b = lines.size();
  while (a < b && text::trim(lines[a]).empty()) ++a;
  while (b > a && text::trim(lines[b - 1]).empty()) --b;
  std::vector<std::string> kept(lines.begin() + a, lines.begin() + b);
  return text::join(kept, "\n");
}

struct Sections {
  std::map<Sec, std::string> named;
  std::string untitled;  // text before the first heading plus unrecognised sections
  std::set<std::size_t> heading_lines;
};

Sections split_sections(std::string_view body) {
  Sections out;
  auto lines = text::split_lines(body);
  std::map<Sec, std::vector<std::string>> acc;
  std::vector<std::string> other;
  Sec cur = Sec::Other;
  bool fenced = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& l = lines[i];
    if (is_fence(l)) fenced = !fenced;
    Sec s = fenced || is_fence(l) ? Sec::None : classify(heading_key(l));
    // "Something:" lines count as headings only when they name a known section.
    if (s == Sec::Other && text::trim(l).front() != '#') s = Sec::None;
    if (s != Sec::None) {
      cur = s;
      out.heading_lines.insert(i);
      continue;
    }
    (cur == Sec::Other ? other : acc[cur]).push_back(l);
  }
  for (auto& [k, v] : acc) out.named[k] = trim_block(v);
  out.untitled = trim_block(other);
  return out;
}

bool looks_like_error(std::string_view block) {
  static const std::regex kErr(R"((Traceback \(most recent call last\)|\b[A-Z]\w*(Error|Exception)\b|out of memory))");
  return std::regex_search(std::string(block), kErr);
}

std::vector<std::string> paragraphs(std::string_view body, std::size_t limit) {
  std::vector<std::string> out, cur;
  for (const auto& l : text::split_lines(body)) {
    if (text::trim(l).empty()) {
      if (!cur.empty()) out.push_back(text::join(cur, "\n"));
      cur.clear();
      if (out.size() == limit) return out;
    } else {
      cur.push_back(l);
    }
  }
  if (!cur.empty() && out.size() < limit) out.push_back(text::join(cur, "\n"));
  return out;
}

std::string norm(std::string_view s) { return text::to_lower(text::normalize_ws(s)); }

}  // namespace

std::string_view to_string(Provenance p) { return p == Provenance::Extracted ? "extracted" : "inferred"; }

std::vector<CodeBlock> extract_code_blocks(std::string_view body) {
  std::vector<CodeBlock> out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto eol = body.find('\n', pos);
    std::size_t next = eol == std::string_view::npos ? body.size() : eol + 1;
    auto line = body.substr(pos, next - pos);
    if (is_fence(line)) {
      std::string lang(text::trim(text::trim(line).substr(3)));
      std::size_t start = next, p = next;
      bool closed = false;
      while (p < body.size()) {
        auto e = body.find('\n', p);
        std::size_t n = e == std::string_view::npos ? body.size() : e + 1;
        if (is_fence(body.substr(p, n - p))) {
          out.push_back({lang, std::string(body.substr(start, p - start)), start});
          next = n;
          closed = true;
          break;
        }
        p = n;
      }
      if (!closed) break;
    }
    pos = next;
  }
  return out;
}

std::vector<std::string> extract_tracebacks(std::string_view body) {
  static const std::string kHead = "Traceback (most recent call last):";
  static const std::regex kFinal(R"(^[A-Za-z_][\w.]*(:.*)?$)");
  std::vector<std::string> out;
  for (auto at = body.find(kHead); at != std::string_view::npos; at = body.find(kHead, at + 1)) {
    std::size_t pos = body.find('\n', at);
    if (pos == std::string_view::npos) break;
    ++pos;
    std::size_t end = std::string_view::npos;
    while (pos < body.size()) {
      auto e = body.find('\n', pos);
      std::size_t n = e == std::string_view::npos ? body.size() : e;
      std::string line(body.substr(pos, n - pos));
      if (!line.empty() && line[0] != ' ' && line[0] != '\t') {
        if (std::regex_match(line, kFinal)) end = n;
        break;
      }
      pos = n + 1;
    }
    if (end != std::string_view::npos) out.emplace_back(body.substr(at, end - at));
  }
  return out;
}

std::vector<std::string> explicit_steps(std::string_view body) {
  std::vector<std::string> out;
  auto lines = text::split_lines(body);
  bool fenced = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_fence(lines[i])) fenced = !fenced;
    if (fenced || !steps_heading(heading_key(lines[i]))) continue;
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      if (text::trim(lines[j]).empty()) continue;
      bool item = false;
      auto s = strip_marker(lines[j], &item);
      if (!item) break;
      out.push_back(s);
    }
    if (!out.empty()) break;
  }
  return out;
}

BugReport parse_bug_report(std::string_view markdown, std::string default_id) {
  BugReport r;
  r.id = std::move(default_id);
  auto lines = text::split_lines(markdown);
  static const std::regex kMeta(R"(^(id|project|framework|url)\s*:\s*(.*\S)\s*$)");
  std::size_t i = 0;
  std::size_t offset = 0;
  for (; i < lines.size(); ++i) {
    std::smatch m;
    const auto& l = lines[i];
    if (text::trim(l).empty()) {
      offset += l.size() + 1;
      continue;
    }
    if (!std::regex_match(l, m, kMeta)) break;
    auto key = m[1].str();
    if (key == "id") r.id = m[2].str();
    if (key == "project") r.meta.project = m[2].str();
    if (key == "framework") r.meta.framework = m[2].str();
    if (key == "url") r.meta.url = m[2].str();
    offset += l.size() + 1;
  }
  std::string_view rest = markdown.substr(std::min(offset, markdown.size()));
  if (i < lines.size() && lines[i].rfind("# ", 0) == 0) {
    r.title = std::string(text::trim(std::string_view(lines[i]).substr(2)));
    auto nl = rest.find('\n');
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
  } else if (i < lines.size()) {
    r.title = std::string(text::trim(lines[i]));
  }
  while (!rest.empty() && rest.front() == '\n') rest.remove_prefix(1);
  r.body = std::string(rest);
  if (text::trim(r.body).empty()) throw Error(ErrorKind::InvalidArgument, "bug report body is empty");
  r.attachments = extract_code_blocks(r.body);
  return r;
}

std::string RestructuredReport::steps_text() const {
  std::string out;
  for (std::size_t i = 0; i < reproduction_steps.size(); ++i)
    out += std::to_string(i + 1) + ". " + reproduction_steps[i].text + "\n";
  return out;
}

std::string RestructuredReport::query_text() const {
  return core_problem + "\n" + observed_behaviour + "\n" + steps_text();
}

bool same_sections(const RestructuredReport& a, const RestructuredReport& b) {
  if (a.core_problem != b.core_problem || a.observed_behaviour != b.observed_behaviour ||
      a.expected_behaviour != b.expected_behaviour || a.reproduction_steps.size() != b.reproduction_steps.size())
    return false;
  for (std::size_t i = 0; i < a.reproduction_steps.size(); ++i)
    if (a.reproduction_steps[i].text != b.reproduction_steps[i].text) return false;
  return true;
}

std::string render_sections(const RestructuredReport& r) {
  std::string out;
  out += "=== CORE_PROBLEM [" + std::string(to_string(r.core_provenance)) + "] ===\n" + r.core_problem + "\n";
  out += "=== OBSERVED_BEHAVIOUR [" + std::string(to_string(r.observed_provenance)) + "] ===\n" +
         r.observed_behaviour + "\n";
  out += "=== EXPECTED_BEHAVIOUR [" + std::string(to_string(r.expected_provenance)) + "] ===\n" +
         r.expected_behaviour + "\n";
  out += "=== REPRODUCTION_STEPS ===\n";
  for (std::size_t i = 0; i < r.reproduction_steps.size(); ++i)
    out += std::to_string(i + 1) + ". [" + std::string(to_string(r.reproduction_steps[i].provenance)) + "] " +
           r.reproduction_steps[i].text + "\n";
  out += "=== END ===\n";
  return out;
}

std::optional<RestructuredReport> parse_sections(std::string_view raw, std::string* problem) {
  static const std::regex kHeader(R"(^\s*===\s*([A-Z_]+)\s*(?:\[(extracted|inferred)\])?\s*===\s*$)");
  static const std::regex kStep(R"(^\s*\d+[.)]\s*(?:\[(extracted|inferred)\]\s*)?(.*\S)\s*$)");
  auto fail = [&](const std::string& why) -> std::optional<RestructuredReport> {
    if (problem) *problem = why;
    return std::nullopt;
  };
  std::map<std::string, std::vector<std::string>> body;
  std::map<std::string, Provenance> prov;
  std::string cur;
  for (const auto& line : text::split_lines(raw)) {
    std::smatch m;
    if (std::regex_match(line, m, kHeader)) {
      cur = m[1].str();
      if (cur == "END") break;
      if (body.count(cur)) return fail("section " + cur + " appears twice");
      body[cur];
      prov[cur] = m[2].matched && m[2].str() == "extracted" ? Provenance::Extracted : Provenance::Inferred;
      continue;
    }
    if (!cur.empty()) body[cur].push_back(line);
  }
  RestructuredReport r;
  for (const char* name : {"CORE_PROBLEM", "OBSERVED_BEHAVIOUR", "EXPECTED_BEHAVIOUR", "REPRODUCTION_STEPS"}) {
    if (!body.count(name)) return fail(std::string("missing section ") + name);
    if (trim_block(body[name]).empty()) return fail(std::string("section ") + name + " is empty");
  }
  r.core_problem = trim_block(body["CORE_PROBLEM"]);
  r.observed_behaviour = trim_block(body["OBSERVED_BEHAVIOUR"]);
  r.expected_behaviour = trim_block(body["EXPECTED_BEHAVIOUR"]);
  r.core_provenance = prov["CORE_PROBLEM"];
  r.observed_provenance = prov["OBSERVED_BEHAVIOUR"];
  r.expected_provenance = prov["EXPECTED_BEHAVIOUR"];
  for (const auto& line : body["REPRODUCTION_STEPS"]) {
    if (text::trim(line).empty()) continue;
    std::smatch m;
    if (std::regex_match(line, m, kStep)) {
      Step s;
      s.text = m[2].str();
      s.provenance = m[1].matched && m[1].str() == "extracted" ? Provenance::Extracted : Provenance::Inferred;
      r.reproduction_steps.push_back(std::move(s));
    } else if (!r.reproduction_steps.empty()) {
      r.reproduction_steps.back().text += " " + std::string(text::trim(line));
    } else {
      return fail("REPRODUCTION_STEPS must be a numbered list");
    }
  }
  if (r.reproduction_steps.empty()) return fail("section REPRODUCTION_STEPS is empty");
  return r;
}

void reconcile(RestructuredReport& r, const BugReport& raw) {
  for (const auto& tb : extract_tracebacks(raw.body)) {
    if (r.observed_behaviour.find(tb) != std::string::npos) continue;
    r.observed_behaviour += "\n\n" + tb;
    r.warnings.push_back("traceback restored verbatim in observed behaviour");
  }

  auto explicit_list = explicit_steps(raw.body);
  std::vector<std::string> explicit_norm;
  for (const auto& s : explicit_list) explicit_norm.push_back(norm(s));
  auto explicit_index = [&](const std::string& t) -> int {
    auto n = norm(t);
    for (std::size_t i = 0; i < explicit_norm.size(); ++i)
      if (explicit_norm[i] == n) return static_cast<int>(i);
    return -1;
  };

  std::vector<bool> seen(explicit_list.size(), false);
  for (auto& s : r.reproduction_steps) {
    int k = explicit_index(s.text);
    if (k >= 0) {
      s.text = explicit_list[k];
      s.provenance = Provenance::Extracted;
      seen[k] = true;
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    std::vector<Step> rebuilt;
    for (const auto& e : explicit_list) rebuilt.push_back({e, Provenance::Extracted});
    for (const auto& s : r.reproduction_steps)
      if (explicit_index(s.text) < 0) rebuilt.push_back(s);
    r.reproduction_steps = std::move(rebuilt);
    r.warnings.push_back("explicit reproduction steps restored");
  }

  auto raw_numbers = text::numeric_literals(raw.title + "\n" + raw.body);
  std::set<std::string> known(raw_numbers.begin(), raw_numbers.end());
  auto raw_norm = norm(raw.body);
  for (auto& s : r.reproduction_steps) {
    if (s.provenance != Provenance::Extracted) continue;
    bool supported = explicit_index(s.text) >= 0 || raw_norm.find(norm(s.text)) != std::string::npos;
    for (const auto& n : text::numeric_literals(s.text))
      if (!known.count(n)) supported = false;
    if (!supported) s.provenance = Provenance::Inferred;
  }
}

RestructuredReport fallback_restructure(const BugReport& report) {
  RestructuredReport r;
  r.degraded = true;
  auto secs = split_sections(report.body);

  if (secs.named.count(Sec::Core) && !secs.named[Sec::Core].empty()) {
    r.core_problem = secs.named[Sec::Core];
  } else if (!report.title.empty()) {
    r.core_problem = report.title;
  } else {
    auto p = paragraphs(report.body, 1);
    r.core_problem = p.empty() ? "" : text::normalize_ws(p[0]);
    r.core_provenance = Provenance::Inferred;
  }

  std::string remainder = secs.untitled;
  if (secs.named.count(Sec::Observed) && !secs.named[Sec::Observed].empty()) {
    r.observed_behaviour = secs.named[Sec::Observed];
  } else {
    std::vector<std::string> errors;
    for (const auto& b : report.attachments)
      if (looks_like_error(b.text)) {
        errors.push_back(trim_block(text::split_lines(b.text)));
        remainder = text::replace_all(remainder, b.text, "");
      }
    for (const auto& tb : extract_tracebacks(report.body)) {
      bool inside = false;
      for (const auto& e : errors)
        if (e.find(tb) != std::string::npos) inside = true;
      if (!inside) {
        errors.push_back(tb);
        remainder = text::replace_all(remainder, tb, "");
      }
    }
    r.observed_behaviour = text::join(errors, "\n\n");
  }
  if (r.observed_behaviour.empty()) {
    r.observed_behaviour = "No error output is given in the report.";
    r.observed_provenance = Provenance::Inferred;
  }

  if (secs.named.count(Sec::Expected) && !secs.named[Sec::Expected].empty()) {
    r.expected_behaviour = secs.named[Sec::Expected];
  } else {
    std::vector<std::string> kept;
    bool fenced = false;
    for (const auto& l : text::split_lines(remainder)) {
      if (is_fence(l)) {
        fenced = !fenced;
        continue;
      }
      if (!fenced) kept.push_back(l);
    }
    r.expected_behaviour = trim_block(kept);
    if (r.expected_behaviour.empty()) {
      r.expected_behaviour = "The program runs without the reported failure.";
      r.expected_provenance = Provenance::Inferred;
    }
  }

  for (const auto& s : explicit_steps(report.body)) r.reproduction_steps.push_back({s, Provenance::Extracted});
  if (r.reproduction_steps.empty())
    r.reproduction_steps.push_back({"Run the code shown in the report.", Provenance::Inferred});
  return r;
}

RestructuredReport restructure(const BugReport& report, const gateway::CompleteFn& complete) {
  auto opening = paragraphs(report.body, 2);
  auto msgs = gateway::prompt_messages(kPrompt, {{"id", report.id},
                                                 {"title", report.title},
                                                 {"opening", text::join(opening, "\n\n")},
                                                 {"body", report.body}});
  auto degrade = [&](const std::string& why) {
    auto r = fallback_restructure(report);
    r.warnings.insert(r.warnings.begin(), why);
    return r;
  };
  std::string problem;
  try {
    auto answer = complete(msgs);
    auto parsed = parse_sections(answer, &problem);
    if (!parsed) {
      msgs.push_back({"assistant", answer});
      auto repair = gateway::prompt_messages("prompts/repair.v1.txt", {{"problem", problem}});
      msgs.push_back(repair.back());
      parsed = parse_sections(complete(msgs), &problem);
    }
    if (!parsed) return degrade("model output unusable after repair: " + problem);
    reconcile(*parsed, report);
    return *parsed;
  } catch (const Error& e) {
    if (!e.is_provider_error()) throw;
    return degrade(std::string("provider failure: ") + e.what());
  }
}

RestructuredReport passthrough(const BugReport& report) {
  RestructuredReport r;
  r.core_problem = report.title;
  r.observed_behaviour = report.body;
  for (const auto& s : explicit_steps(report.body)) r.reproduction_steps.push_back({s, Provenance::Extracted});
  r.warnings.push_back("restructuring disabled; raw report used");
  return r;
}

BugReport render_as_report(const RestructuredReport& r, const std::string& id, const std::string& title) {
  BugReport b;
  b.id = id;
  b.title = title;
  b.body = "## Core problem\n" + r.core_problem + "\n\n## Observed behaviour\n" + r.observed_behaviour +
           "\n\n## Expected behaviour\n" + r.expected_behaviour + "\n\n## Steps to reproduce\n" + r.steps_text();
  b.attachments = extract_code_blocks(b.body);
  return b;
}

std::string render_markdown(const RestructuredReport& r) {
  std::string out = "# Restructured report\n\n";
  if (r.degraded) out += "_degraded: deterministic fallback used_\n\n";
  out += "## Core problem (" + std::string(to_string(r.core_provenance)) + ")\n\n" + r.core_problem + "\n\n";
  out += "## Observed behaviour (" + std::string(to_string(r.observed_provenance)) + ")\n\n" +
         r.observed_behaviour + "\n\n";
  out += "## Expected behaviour (" + std::string(to_string(r.expected_provenance)) + ")\n\n" +
         r.expected_behaviour + "\n\n";
  out += "## Reproduction steps\n\n";
  for (std::size_t i = 0; i < r.reproduction_steps.size(); ++i)
    out += std::to_string(i + 1) + ". " + r.reproduction_steps[i].text + " _(" +
           std::string(to_string(r.reproduction_steps[i].provenance)) + ")_\n";
  if (!r.warnings.empty()) {
    out += "\n## Warnings\n\n";
    for (const auto& w : r.warnings) out += "- " + w + "\n";
  }
  return out;
}

}  // namespace dlrepro::report
