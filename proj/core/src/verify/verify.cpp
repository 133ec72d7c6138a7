#include "dlrepro/verify/verify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <mutex>
#include <regex>

#include <unistd.h>

#include <json.hpp>

#include "dlrepro/util/error.hpp"
#include "dlrepro/util/subprocess.hpp"
#include "dlrepro/util/text.hpp"

namespace dlrepro::verify {
namespace {

using nlohmann::json;

std::string normalise_pattern(std::string_view name) {
  std::string out;
  for (char c : text::to_lower(name)) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += c;
    else if (!out.empty() && out.back() != '_') out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

std::string strip_module(std::string_view type) {
  auto dot = type.rfind('.');
  return std::string(dot == std::string_view::npos ? type : type.substr(dot + 1));
}

std::string tail(const std::string& s, std::size_t n) { return s.size() <= n ? s : s.substr(s.size() - n); }

bool series_where(const TrialResult& t, const char* name_part, const std::function<bool(const std::vector<double>&)>& f) {
  for (const auto& [name, values] : t.metric_series)
    if (text::to_lower(name).find(name_part) != std::string::npos && !values.empty() && f(values)) return true;
  return false;
}

struct Registry {
  std::mutex mu;
  std::map<std::string, PatternMatcher> matchers;
  Registry() {
    matchers["nan_loss"] = [](const TrialResult& t) {
      if (series_where(t, "loss", [](const std::vector<double>& v) {
            return std::any_of(v.begin(), v.end(), [](double x) { return std::isnan(x); });
          }))
        return true;
      static const std::regex kNanLoss(R"(loss[^\n]*\bnan\b)", std::regex::icase);
      return std::regex_search(t.stdout_tail, kNanLoss) || std::regex_search(t.stderr_tail, kNanLoss);
    };
    matchers["memory_growth"] = [](const TrialResult& t) {
      return series_where(t, "mem", [](const std::vector<double>& v) {
        return v.size() >= 2 && std::is_sorted(v.begin(), v.end()) && v.back() > v.front();
      });
    };
    matchers["degradation"] = [](const TrialResult& t) {
      bool acc = series_where(t, "acc", [](const std::vector<double>& v) { return v.size() >= 2 && v.back() < v.front(); });
      bool loss =
          series_where(t, "loss", [](const std::vector<double>& v) { return v.size() >= 2 && v.back() > v.front(); });
      return acc || loss;
    };
    matchers["performance_degradation"] = matchers["degradation"];
  }
};

Registry& registry() {
  static Registry r;
  return r;
}

bool close_to(double mean, double reported, double margin, double* rel) {
  if (std::isnan(reported)) {
    *rel = std::isnan(mean) ? 0.0 : INFINITY;
    return std::isnan(mean);
  }
  if (reported == 0.0) {
    *rel = std::fabs(mean);
    return std::fabs(mean) <= 1e-6;
  }
  *rel = std::fabs(mean - reported) / std::fabs(reported);
  return *rel <= margin;
}

std::filesystem::path fresh_root() {
  static std::atomic<int> counter{0};
  auto p = std::filesystem::temp_directory_path() /
           ("dlrepro-trials-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

std::string_view to_string(BugKind k) { return k == BugKind::Explicit ? "explicit" : "silent"; }

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Setup: return "setup";
    case Phase::Training: return "training";
    case Phase::Inference: return "inference";
    case Phase::Unknown: return "unknown";
  }
  return "unknown";
}

Phase phase_from(std::string_view s) {
  auto t = text::to_lower(s);
  if (t == "setup") return Phase::Setup;
  if (t == "training" || t == "train") return Phase::Training;
  if (t == "inference" || t == "eval" || t == "evaluation") return Phase::Inference;
  return Phase::Unknown;
}

BugSignature parse_signature(std::string_view json_text) {
  auto j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::Parse, "signature must be a JSON object");
  BugSignature s;
  auto kind = j.value("kind", "explicit");
  if (kind == "explicit") s.kind = BugKind::Explicit;
  else if (kind == "silent") s.kind = BugKind::Silent;
  else throw Error(ErrorKind::Parse, "signature kind must be explicit or silent");
  s.error_type = j.value("error_type", "");
  s.diagnostics = j.value("diagnostics", std::vector<std::string>{});
  s.phase = phase_from(j.value("phase", "unknown"));
  if (j.contains("metrics"))
    for (auto& [k, v] : j["metrics"].items()) s.metrics[k] = v.is_number() ? v.get<double>() : std::nan("");
  s.failure_patterns = j.value("failure_patterns", std::vector<std::string>{});
  if (s.kind == BugKind::Explicit && s.error_type.empty())
    throw Error(ErrorKind::Parse, "explicit signature needs error_type");
  if (s.kind == BugKind::Silent && s.metrics.empty()) throw Error(ErrorKind::Parse, "silent signature needs metrics");
  return s;
}

std::string signature_to_json(const BugSignature& s) {
  json metrics = json::object();
  for (const auto& [k, v] : s.metrics) metrics[k] = v;
  return json{{"kind", to_string(s.kind)},
              {"error_type", s.error_type},
              {"diagnostics", s.diagnostics},
              {"phase", to_string(s.phase)},
              {"metrics", metrics},
              {"failure_patterns", s.failure_patterns}}
      .dump(2);
}

void parse_trial_output(TrialResult& t) {
  static const std::regex kPhase(R"(^PHASE\s+(\w+)\s*$)");
  static const std::regex kMetric(R"(^METRIC\s+(\S+)\s+(\S+)\s*$)");
  static const std::regex kFree(R"(\b(loss|accuracy|acc)\s*[:=]\s*([-+]?(?:nan|inf|\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)))",
                                std::regex::icase);
  static const std::regex kFrame(R"re(^\s*File ".*", line \d+, in (\S+))re");
  static const std::regex kFinal(R"(^([A-Za-z_][\w.]*)(?::\s.*|:)?\s*$)");

  t.metric_series.clear();
  t.parsed_metrics.clear();
  t.phase_reached = Phase::Unknown;
  t.error_type.clear();

  for (const auto* stream : {&t.stdout_tail, &t.stderr_tail})
    for (const auto& line : text::split_lines(*stream)) {
      std::smatch m;
      if (std::regex_match(line, m, kPhase)) t.phase_reached = phase_from(m[1].str());
      if (std::regex_match(line, m, kMetric))
        t.metric_series[m[1].str()].push_back(std::strtod(m[2].str().c_str(), nullptr));
    }
  // Free text only for metrics the protocol lines do not report.
  std::map<std::string, std::vector<double>> free;
  for (const auto& line : text::split_lines(t.stdout_tail))
    for (auto it = std::sregex_iterator(line.begin(), line.end(), kFree); it != std::sregex_iterator(); ++it) {
      auto name = text::to_lower((*it)[1].str());
      if (name == "acc") name = "accuracy";
      free[name].push_back(std::strtod((*it)[2].str().c_str(), nullptr));
    }
  for (auto& [k, v] : free) t.metric_series.try_emplace(k, std::move(v));
  for (const auto& [k, v] : t.metric_series) t.parsed_metrics[k] = v.back();

  const std::string head = "Traceback (most recent call last):";
  auto at = t.stderr_tail.rfind(head);
  if (at != std::string::npos) {
    std::vector<std::string> frames;
    for (const auto& line : text::split_lines(std::string_view(t.stderr_tail).substr(at + head.size()))) {
      std::smatch m;
      if (std::regex_search(line, m, kFrame)) frames.push_back(m[1].str());
      if (!line.empty() && line[0] != ' ' && line[0] != '\t' && std::regex_match(line, m, kFinal)) {
        t.error_type = strip_module(m[1].str());
        break;
      }
    }
    if (t.phase_reached == Phase::Unknown) {
      t.phase_reached = Phase::Setup;
      for (const auto& f : frames) {
        auto n = text::to_lower(f);
        if (n.find("train") != std::string::npos || n.find("fit") != std::string::npos ||
            n.find("backward") != std::string::npos || n.find("step") != std::string::npos)
          t.phase_reached = Phase::Training;
        else if (n.find("predict") != std::string::npos || n.find("infer") != std::string::npos ||
                 n.find("eval") != std::string::npos)
          t.phase_reached = Phase::Inference;
      }
    }
  }
}

std::vector<TrialResult> execute_trials(std::string_view script, const std::vector<std::uint64_t>& seeds,
                                        const SandboxConfig& sandbox) {
  if (seeds.empty()) throw Error(ErrorKind::InvalidArgument, "execute_trials needs at least one seed");
  if (sandbox.interpreter.empty()) throw Error(ErrorKind::InvalidArgument, "sandbox interpreter is empty");
  auto root = sandbox.work_dir.empty() ? fresh_root() : sandbox.work_dir;
  std::filesystem::create_directories(root);

  auto run_one = [&](std::size_t i) {
    TrialResult t;
    t.seed = seeds[i];
    t.work_dir = root / ("trial_" + std::to_string(i) + "_seed" + std::to_string(seeds[i]));
    std::filesystem::remove_all(t.work_dir);
    std::filesystem::create_directories(t.work_dir);
    text::write_file((t.work_dir / "repro.py").string(), script);

    ProcessSpec spec;
    spec.argv = sandbox.interpreter;
    spec.argv.push_back("repro.py");
    spec.argv.push_back("--seed");
    spec.argv.push_back(std::to_string(t.seed));
    spec.cwd = t.work_dir;
    spec.env = sandbox.env;
    spec.env["REPRO_SEED"] = std::to_string(t.seed);
    spec.env["PYTHONHASHSEED"] = std::to_string(t.seed);
    spec.env["PYTHONUNBUFFERED"] = "1";
    spec.env["PYTHONDONTWRITEBYTECODE"] = "1";
    spec.timeout = sandbox.timeout;
    auto r = run_process(spec);
    if (r.spawn_failed)
      throw Error(ErrorKind::SandboxFailure, "cannot start '" + sandbox.interpreter.front() + "': " + r.err);
    t.status = r.timed_out ? TrialStatus::Timeout : r.term_signal ? TrialStatus::Signaled : TrialStatus::Exited;
    t.exit_code = r.exit_code;
    t.wall_time = r.wall;
    t.stdout_tail = std::move(r.out);
    t.stderr_tail = std::move(r.err);
    parse_trial_output(t);
    t.stdout_tail = tail(t.stdout_tail, sandbox.tail_bytes);
    t.stderr_tail = tail(t.stderr_tail, sandbox.tail_bytes);
    return t;
  };

  std::vector<TrialResult> out;
  if (sandbox.parallel) {
    std::vector<std::future<TrialResult>> futures;
    for (std::size_t i = 0; i < seeds.size(); ++i) futures.push_back(std::async(std::launch::async, run_one, i));
    for (auto& f : futures) out.push_back(f.get());
  } else {
    for (std::size_t i = 0; i < seeds.size(); ++i) out.push_back(run_one(i));
  }
  return out;
}

void register_pattern(const std::string& name, PatternMatcher matcher) {
  auto& r = registry();
  std::lock_guard<std::mutex> lock(r.mu);
  r.matchers[normalise_pattern(name)] = std::move(matcher);
}

bool pattern_observed(const std::string& pattern, const TrialResult& trial) {
  PatternMatcher m;
  {
    auto& r = registry();
    std::lock_guard<std::mutex> lock(r.mu);
    auto it = r.matchers.find(normalise_pattern(pattern));
    if (it != r.matchers.end()) m = it->second;
  }
  if (m) return m(trial);
  return text::icontains(trial.stdout_tail, pattern) || text::icontains(trial.stderr_tail, pattern);
}

VerificationVerdict verify_explicit(const std::vector<TrialResult>& trials, const BugSignature& sig) {
  if (sig.kind != BugKind::Explicit) throw Error(ErrorKind::InvalidArgument, "verify_explicit needs an explicit signature");
  VerificationVerdict v;
  v.kind = BugKind::Explicit;
  for (const auto& t : trials) v.seeds.push_back(t.seed);
  auto want = strip_module(sig.error_type);
  bool all_type = !trials.empty(), any_type = false, any_diag = false, any_phase = false, any_full = false;
  for (const auto& t : trials) {
    bool type = t.error_type == want;
    bool diag = sig.diagnostics.empty();
    for (const auto& d : sig.diagnostics) diag = diag || text::icontains(t.stderr_tail, d);
    bool phase = sig.phase == Phase::Unknown || t.phase_reached == sig.phase;
    all_type = all_type && type;
    any_type = any_type || type;
    any_diag = any_diag || diag;
    any_phase = any_phase || phase;
    any_full = any_full || (type && diag && phase);
  }
  v.evidence["error_type"] = any_type;
  v.evidence["error_type_all_trials"] = all_type;
  v.evidence["diagnostic"] = any_diag;
  v.evidence["phase"] = any_phase;
  v.evidence["single_trial_match"] = any_full;
  v.reproduced = all_type && any_full;
  return v;
}

VerificationVerdict verify_silent(const std::vector<TrialResult>& trials, const BugSignature& sig, double margin) {
  if (sig.kind != BugKind::Silent) throw Error(ErrorKind::InvalidArgument, "verify_silent needs a silent signature");
  VerificationVerdict v;
  v.kind = BugKind::Silent;
  v.margin = margin;
  for (const auto& t : trials) v.seeds.push_back(t.seed);
  bool metrics_ok = true, missing = false;
  for (const auto& [name, reported] : sig.metrics) {
    std::vector<double> values;
    for (const auto& t : trials) {
      auto it = t.parsed_metrics.find(name);
      if (it != t.parsed_metrics.end()) values.push_back(it->second);
    }
    if (values.empty()) {
      missing = true;
      metrics_ok = false;
      v.evidence["metric:" + name] = false;
      continue;
    }
    double sum = 0.0;
    for (double x : values) sum += x;
    double mean = sum / static_cast<double>(values.size());
    double rel = 0.0;
    bool ok = close_to(mean, reported, margin, &rel);
    v.mean_metrics[name] = mean;
    v.relative_errors[name] = rel;
    v.evidence["metric:" + name] = ok;
    metrics_ok = metrics_ok && ok;
  }
  bool pattern = sig.failure_patterns.empty();
  for (const auto& p : sig.failure_patterns) {
    bool seen = std::any_of(trials.begin(), trials.end(), [&](const TrialResult& t) { return pattern_observed(p, t); });
    if (seen) v.observed_patterns.push_back(p);
    pattern = pattern || seen;
  }
  v.evidence["metrics_within_margin"] = metrics_ok;
  v.evidence["missing_metric"] = missing;
  v.evidence["failure_pattern"] = pattern;
  v.reproduced = metrics_ok && pattern && !trials.empty();
  return v;
}

VerificationVerdict verify(const std::vector<TrialResult>& trials, const BugSignature& sig, double margin) {
  return sig.kind == BugKind::Explicit ? verify_explicit(trials, sig) : verify_silent(trials, sig, margin);
}

std::string verdict_to_json(const VerificationVerdict& v, const std::vector<TrialResult>& trials) {
  json j;
  j["reproduced"] = v.reproduced;
  j["kind"] = to_string(v.kind);
  j["evidence"] = v.evidence;
  j["mean_metrics"] = v.mean_metrics;
  j["relative_errors"] = v.relative_errors;
  j["observed_patterns"] = v.observed_patterns;
  j["seeds"] = v.seeds;
  j["margin"] = v.margin;
  json ts = json::array();
  for (const auto& t : trials) {
    ts.push_back({{"seed", t.seed},
                  {"status", t.status == TrialStatus::Exited    ? "exited"
                             : t.status == TrialStatus::Timeout ? "timeout"
                                                                : "signaled"},
                  {"exit_code", t.exit_code},
                  {"error_type", t.error_type},
                  {"phase_reached", to_string(t.phase_reached)},
                  {"parsed_metrics", t.parsed_metrics},
                  {"wall_time_ms", t.wall_time.count()},
                  {"stderr_tail", tail(t.stderr_tail, 2000)}});
  }
  j["trials"] = ts;
  return j.dump(2);
}

}  // namespace dlrepro::verify
