#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dlrepro/gateway/gateway.hpp"
#include "dlrepro/report/report.hpp"

namespace dlrepro::oracle {

enum class Outcome { Crash, SilentDegradation, Clean };
std::string_view to_string(Outcome o);

struct StateApproximation {
  Outcome predicted_outcome = Outcome::Clean;
  std::vector<std::string> predicted_signals;
  std::string rationale;
  bool low_confidence = false;
};

enum class EntrySource { BundledTaxonomy, ModelApproximated };

struct TaxonomyEntry {
  std::string category_id;
  std::string family;
  std::string name;
  std::vector<std::string> typical_symptoms;
  EntrySource source = EntrySource::BundledTaxonomy;
  bool fallback = false;  // picked by keyword overlap after invalid model answers
  bool operator==(const TaxonomyEntry& o) const {
    return category_id == o.category_id && family == o.family && name == o.name &&
           typical_symptoms == o.typical_symptoms && source == o.source;
  }
};

inline const std::vector<std::string>& taxonomy_families() {
  static const std::vector<std::string> f = {"training", "model", "tensor_api", "data", "environment"};
  return f;
}

/// Taxonomy file: {"version", "families", "categories": [{id, family, name, symptoms}]}.
std::vector<TaxonomyEntry> load_taxonomy(std::string_view json_text);
std::string taxonomy_to_json(const std::vector<TaxonomyEntry>& entries);
/// The taxonomy shipped with the library.
const std::vector<TaxonomyEntry>& bundled_taxonomy();

inline constexpr double kDefaultThreshold = 0.7;

struct SymptomMatch {
  std::vector<std::string> script_symptoms;
  std::vector<std::string> report_symptoms;
  double similarity = 0.0;
  double threshold = kDefaultThreshold;
  bool low_confidence = false;
  bool pass() const { return !low_confidence && similarity >= threshold; }
  /// Report symptoms the script does not show, then script symptoms the report does not mention.
  std::vector<std::string> missing() const;
  std::vector<std::string> unexpected() const;
};

/// True for signals that name an exception type ("ValueError", "CUDA out of memory", ...).
bool is_exception_signal(std::string_view s);
/// True for signals about metrics ("high loss values", "accuracy 0.1", "memory growth", ...).
bool is_metric_signal(std::string_view s);

StateApproximation approximate_runtime(std::string_view script, std::string_view context,
                                       const gateway::CompleteFn& complete);

TaxonomyEntry map_to_taxonomy(const StateApproximation& state, const std::vector<TaxonomyEntry>& taxonomy,
                              const gateway::CompleteFn& complete);

/// Bundled entry with the largest term overlap with the state's signals (first on ties).
const TaxonomyEntry& nearest_entry(const StateApproximation& state, const std::vector<TaxonomyEntry>& taxonomy);

SymptomMatch derive_and_match(const TaxonomyEntry& entry, const StateApproximation& state, std::string_view script,
                              const report::RestructuredReport& report, double threshold,
                              const gateway::CompleteFn& complete);

struct RuntimeJudgement {
  StateApproximation state;
  TaxonomyEntry entry;
  SymptomMatch match;
  bool pass() const { return !state.low_confidence && match.pass(); }
};

/// approximate_runtime -> map_to_taxonomy -> derive_and_match.
RuntimeJudgement judge(std::string_view script, std::string_view context, const report::RestructuredReport& report,
                       const std::vector<TaxonomyEntry>& taxonomy, double threshold,
                       const gateway::CompleteFn& complete);

}  // namespace dlrepro::oracle
