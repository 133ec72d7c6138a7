#include "dlrepro/oracle/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

#include <json.hpp>

#include "dlrepro/index/tokenizer.hpp"
#include "dlrepro/util/assets.hpp"
#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"

namespace dlrepro::oracle {
namespace {

using nlohmann::json;

std::optional<json> answer_json(const std::string& answer) {
  auto obj = gateway::extract_json_object(answer);
  if (!obj) return std::nullopt;
  return json::parse(*obj);
}

std::vector<std::string> string_list(const json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key) || !j[key].is_array()) return out;
  for (const auto& v : j[key])
    if (v.is_string() && !text::trim(v.get<std::string>()).empty()) out.emplace_back(text::trim(v.get<std::string>()));
  return out;
}

// Runs `prompt`, then once more with a repair message when `accept` rejects
// the answer. Provider failures propagate.
template <typename T, typename Accept>
std::optional<T> ask_twice(std::vector<gateway::Message> msgs, const gateway::CompleteFn& complete, Accept accept) {
  std::string problem;
  auto answer = complete(msgs);
  if (auto v = accept(answer, &problem)) return v;
  msgs.push_back({"assistant", answer});
  msgs.push_back(gateway::prompt_messages("prompts/repair.v1.txt", {{"problem", problem}}).back());
  return accept(complete(msgs), &problem);
}

std::string slug(std::string_view s) {
  std::string out;
  for (char c : text::to_lower(s)) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += c;
    else if (!out.empty() && out.back() != '_') out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

bool symptom_matches(const std::string& a, const std::string& b) {
  auto x = text::to_lower(text::normalize_ws(a)), y = text::to_lower(text::normalize_ws(b));
  return x.find(y) != std::string::npos || y.find(x) != std::string::npos;
}

std::vector<std::string> unmatched(const std::vector<std::string>& from, const std::vector<std::string>& against) {
  std::vector<std::string> out;
  for (const auto& s : from) {
    bool hit = false;
    for (const auto& t : against) hit = hit || symptom_matches(s, t);
    if (!hit) out.push_back(s);
  }
  return out;
}

}  // namespace

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Crash: return "crash";
    case Outcome::SilentDegradation: return "silent_degradation";
    case Outcome::Clean: return "clean";
  }
  return "clean";
}

bool is_exception_signal(std::string_view s) {
  static const std::regex kExc(
      R"(\b[A-Z]\w*(Error|Exception|Interrupt)\b|StopIteration|out of memory|\bOOM\b|[Ss]egmentation fault)");
  return std::regex_search(std::string(s), kExc);
}

bool is_metric_signal(std::string_view s) {
  auto t = text::to_lower(s);
  for (const char* w : {"loss", "accuracy", "acc", "metric", "memory", "nan", "inf", "diverg", "gradient",
                        "precision", "recall", "f1", "perplexity", "score", "converge"})
    if (t.find(w) != std::string::npos) return true;
  return false;
}

std::vector<std::string> SymptomMatch::missing() const { return unmatched(report_symptoms, script_symptoms); }
std::vector<std::string> SymptomMatch::unexpected() const { return unmatched(script_symptoms, report_symptoms); }

std::vector<TaxonomyEntry> load_taxonomy(std::string_view json_text) {
  auto j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("categories") || !j["categories"].is_array())
    throw Error(ErrorKind::Parse, "taxonomy must be an object with a 'categories' array");
  const auto& families = taxonomy_families();
  std::vector<TaxonomyEntry> out;
  std::set<std::string> ids;
  for (const auto& c : j["categories"]) {
    TaxonomyEntry e;
    e.category_id = c.value("id", "");
    e.family = c.value("family", "");
    e.name = c.value("name", "");
    e.typical_symptoms = string_list(c, "symptoms");
    if (e.category_id.empty() || e.name.empty()) throw Error(ErrorKind::Parse, "taxonomy entry without id or name");
    if (std::find(families.begin(), families.end(), e.family) == families.end())
      throw Error(ErrorKind::Parse, "taxonomy entry " + e.category_id + " has unknown family '" + e.family + "'");
    if (!ids.insert(e.category_id).second) throw Error(ErrorKind::Parse, "duplicate taxonomy id " + e.category_id);
    out.push_back(std::move(e));
  }
  if (out.empty()) throw Error(ErrorKind::Parse, "taxonomy has no categories");
  return out;
}

std::string taxonomy_to_json(const std::vector<TaxonomyEntry>& entries) {
  json cats = json::array();
  for (const auto& e : entries)
    cats.push_back({{"id", e.category_id}, {"family", e.family}, {"name", e.name}, {"symptoms", e.typical_symptoms}});
  return json{{"version", 1}, {"families", taxonomy_families()}, {"categories", cats}}.dump(2) + "\n";
}

const std::vector<TaxonomyEntry>& bundled_taxonomy() {
  static const std::vector<TaxonomyEntry> t = load_taxonomy(asset("taxonomy.json"));
  return t;
}

StateApproximation approximate_runtime(std::string_view script, std::string_view context,
                                       const gateway::CompleteFn& complete) {
  StateApproximation low;
  low.low_confidence = true;
  if (text::trim(script).empty()) {
    low.rationale = "empty script";
    return low;
  }
  auto msgs = gateway::prompt_messages("prompts/runtime_state.v1.txt",
                                       {{"script", std::string(script)}, {"context", std::string(context)}});
  auto accept = [](const std::string& answer, std::string* problem) -> std::optional<StateApproximation> {
    auto j = answer_json(answer);
    if (!j) {
      *problem = "no JSON object found";
      return std::nullopt;
    }
    StateApproximation s;
    auto outcome = j->value("outcome", "");
    if (outcome == "crash") s.predicted_outcome = Outcome::Crash;
    else if (outcome == "silent_degradation") s.predicted_outcome = Outcome::SilentDegradation;
    else if (outcome == "clean") s.predicted_outcome = Outcome::Clean;
    else {
      *problem = "outcome must be crash, silent_degradation or clean";
      return std::nullopt;
    }
    s.predicted_signals = string_list(*j, "signals");
    s.rationale = j->contains("rationale") && (*j)["rationale"].is_string() ? (*j)["rationale"].get<std::string>() : "";
    auto any = [&](bool (*pred)(std::string_view)) {
      return std::any_of(s.predicted_signals.begin(), s.predicted_signals.end(),
                         [&](const std::string& x) { return pred(x); });
    };
    if (s.predicted_outcome == Outcome::Crash && !any(is_exception_signal)) {
      *problem = "a crash needs an exception type among the signals";
      return std::nullopt;
    }
    if (s.predicted_outcome == Outcome::SilentDegradation && !any(is_metric_signal)) {
      *problem = "a silent degradation needs a metric signal";
      return std::nullopt;
    }
    return s;
  };
  try {
    if (auto s = ask_twice<StateApproximation>(msgs, complete, accept)) return *s;
    low.rationale = "runtime approximation unparseable after repair";
  } catch (const Error& e) {
    if (!e.is_provider_error()) throw;
    low.rationale = std::string("provider failure: ") + e.what();
  }
  return low;
}

const TaxonomyEntry& nearest_entry(const StateApproximation& state, const std::vector<TaxonomyEntry>& taxonomy) {
  if (taxonomy.empty()) throw Error(ErrorKind::InvalidArgument, "taxonomy is empty");
  std::set<std::string> want;
  for (const auto& s : state.predicted_signals)
    for (auto& t : index::tokenize_terms(text::to_lower(s))) want.insert(t);
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < taxonomy.size(); ++i) {
    std::set<std::string> have;
    std::string all = taxonomy[i].name + " " + text::join(taxonomy[i].typical_symptoms, " ");
    for (auto& t : index::tokenize_terms(text::to_lower(all))) have.insert(t);
    std::size_t inter = 0;
    for (const auto& t : want) inter += have.count(t);
    std::size_t uni = want.size() + have.size() - inter;
    double score = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return taxonomy[best];
}

TaxonomyEntry map_to_taxonomy(const StateApproximation& state, const std::vector<TaxonomyEntry>& taxonomy,
                              const gateway::CompleteFn& complete) {
  if (taxonomy.empty()) throw Error(ErrorKind::InvalidArgument, "taxonomy is empty");
  std::string cats;
  for (const auto& e : taxonomy)
    cats += e.category_id + ": " + e.name + " | " + text::join(e.typical_symptoms, ", ") + "\n";
  auto msgs = gateway::prompt_messages("prompts/runtime_taxonomy.v1.txt",
                                       {{"outcome", std::string(to_string(state.predicted_outcome))},
                                        {"signals", text::join(state.predicted_signals, "; ")},
                                        {"categories", cats}});
  auto accept = [&](const std::string& answer, std::string* problem) -> std::optional<TaxonomyEntry> {
    auto j = answer_json(answer);
    if (!j) {
      *problem = "no JSON object found";
      return std::nullopt;
    }
    if (j->contains("category_id") && (*j)["category_id"].is_string()) {
      auto id = (*j)["category_id"].get<std::string>();
      for (const auto& e : taxonomy)
        if (e.category_id == id) return e;
      *problem = "unknown category id '" + id + "'";
      return std::nullopt;
    }
    if (j->contains("new_category") && (*j)["new_category"].is_object()) {
      const auto& n = (*j)["new_category"];
      TaxonomyEntry e;
      e.name = n.value("name", "");
      if (text::trim(e.name).empty()) {
        *problem = "new_category needs a name";
        return std::nullopt;
      }
      e.category_id = "approx." + slug(e.name);
      e.typical_symptoms = string_list(n, "symptoms");
      e.source = EntrySource::ModelApproximated;
      return e;
    }
    *problem = "answer needs category_id or new_category";
    return std::nullopt;
  };
  try {
    if (auto e = ask_twice<TaxonomyEntry>(msgs, complete, accept)) return *e;
  } catch (const Error& e) {
    if (!e.is_provider_error()) throw;
  }
  auto e = nearest_entry(state, taxonomy);
  e.fallback = true;
  return e;
}

SymptomMatch derive_and_match(const TaxonomyEntry& entry, const StateApproximation& state, std::string_view script,
                              const report::RestructuredReport& report, double threshold,
                              const gateway::CompleteFn& complete) {
  SymptomMatch fail;
  fail.threshold = threshold;
  fail.script_symptoms = state.predicted_signals;
  fail.report_symptoms = {std::string(text::trim(text::split_lines(report.observed_behaviour + "\n").front()))};
  fail.low_confidence = true;

  auto msgs = gateway::prompt_messages("prompts/runtime_match.v1.txt",
                                       {{"category", entry.name},
                                        {"category_symptoms", text::join(entry.typical_symptoms, ", ")},
                                        {"signals", text::join(state.predicted_signals, "; ")},
                                        {"script", std::string(script)},
                                        {"observed", report.observed_behaviour}});
  auto accept = [&](const std::string& answer, std::string* problem) -> std::optional<SymptomMatch> {
    auto j = answer_json(answer);
    if (!j || !j->contains("similarity")) {
      *problem = "answer needs a numeric similarity";
      return std::nullopt;
    }
    double sim = std::nan("");
    const auto& v = (*j)["similarity"];
    if (v.is_number()) sim = v.get<double>();
    else if (v.is_string()) {
      try {
        sim = std::stod(v.get<std::string>());
      } catch (const std::exception&) {
      }
    }
    if (!std::isfinite(sim)) {
      *problem = "similarity is not a number";
      return std::nullopt;
    }
    SymptomMatch m;
    m.threshold = threshold;
    m.similarity = std::clamp(sim, 0.0, 1.0);
    m.script_symptoms = string_list(*j, "script_symptoms");
    m.report_symptoms = string_list(*j, "report_symptoms");
    if (m.script_symptoms.empty()) m.script_symptoms = fail.script_symptoms;
    if (m.report_symptoms.empty()) m.report_symptoms = fail.report_symptoms;
    return m;
  };
  try {
    if (auto m = ask_twice<SymptomMatch>(msgs, complete, accept)) return *m;
  } catch (const Error& e) {
    if (!e.is_provider_error()) throw;
  }
  return fail;
}

RuntimeJudgement judge(std::string_view script, std::string_view context, const report::RestructuredReport& report,
                       const std::vector<TaxonomyEntry>& taxonomy, double threshold,
                       const gateway::CompleteFn& complete) {
  RuntimeJudgement j;
  j.state = approximate_runtime(script, context, complete);
  j.entry = map_to_taxonomy(j.state, taxonomy, complete);
  j.match = derive_and_match(j.entry, j.state, script, report, threshold, complete);
  return j;
}

}  // namespace dlrepro::oracle
