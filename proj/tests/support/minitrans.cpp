#include "minitrans.hpp"

#include <map>
#include <memory>
#include <regex>

#include <json.hpp>

#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"
#include "test_support.hpp"

namespace dlrepro::test::minitrans {
namespace {

using nlohmann::json;

std::string author_file(const std::string& name) { return read_fixture("minitrans/author/" + name); }

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

enum class Script { OffTarget, Clean, Buggy, Unknown };

Script which(const std::string& prompt) {
  static const std::string off = first_line(author_file("offtarget.py"));
  static const std::string clean = first_line(author_file("clean.py"));
  static const std::string buggy = first_line(author_file("buggy.py"));
  if (prompt.find(off) != std::string::npos) return Script::OffTarget;
  if (prompt.find(clean) != std::string::npos) return Script::Clean;
  if (prompt.find(buggy) != std::string::npos) return Script::Buggy;
  return Script::Unknown;
}

std::string text_response(const std::string& text) { return json{{"text", text}}.dump(); }

std::string answer_runtime(const std::string& prompt) {
  auto s = which(prompt);
  if (prompt.find("TASK approximate_runtime") != std::string::npos) {
    if (s == Script::Clean)
      return json{{"outcome", "clean"},
                  {"signals", {"loss decreases over 2 epochs", "accuracy printed each epoch"}},
                  {"rationale", "the head is sized by the single hidden size, so every matmul lines up"}}
          .dump();
    // The off-target script is misjudged as hitting the reported crash.
    return json{{"outcome", "crash"},
                {"signals", {"ValueError", "shape mismatch: Linear expects last dim 32, got 64"}},
                {"rationale", "the head expects embed_dim inputs but receives hidden_dim activations"}}
        .dump();
  }
  if (prompt.find("TASK map_to_taxonomy") != std::string::npos) {
    bool crash = prompt.find("Predicted outcome: crash") != std::string::npos;
    return json{{"category_id", crash ? "model.layer_shape" : "training.loss_function"}}.dump();
  }
  if (prompt.find("TASK derive_and_match") != std::string::npos) {
    json report = {"ValueError", "shape mismatch in the classifier head", "crash during training"};
    if (s == Script::Clean)
      return json{{"script_symptoms", {"training completes", "loss and accuracy printed"}},
                  {"report_symptoms", report},
                  {"similarity", 0.1}}
          .dump();
    return json{{"script_symptoms", {"ValueError", "shape mismatch in the classifier head", "crash during training"}},
                {"report_symptoms", report},
                {"similarity", 0.95}}
        .dump();
  }
  throw Error(ErrorKind::ProviderFailure, "author: unknown runtime task");
}

}  // namespace

std::filesystem::path root() { return fixture("minitrans"); }

pipeline::RunConfig run_config(const std::filesystem::path& out) {
  pipeline::RunConfig c;
  c.repo = root() / "project";
  c.report = root() / "report.md";
  c.signature = root() / "signature.json";
  c.out_dir = out;
  c.exchanges = root() / "exchanges.jsonl";
  c.lint_command = {python_executable(), "-m", "pyflakes"};
  c.interpreter = {python_executable()};
  c.trial_timeout = std::chrono::milliseconds(60000);
  return c;
}

gateway::ScriptedTransport::Handler author() {
  return [](const gateway::Request& r) -> std::string {
    if (r.kind != gateway::ExchangeKind::Complete)
      throw Error(ErrorKind::ProviderFailure, "author only answers completions");
    auto payload = json::parse(r.payload);
    std::string all;
    for (const auto& m : payload["messages"]) all += m["content"].get<std::string>() + "\n";
    if (r.role == "restructure") return text_response(author_file("restructure.txt"));
    if (r.role == "plan") return text_response(author_file("plan.txt"));
    if (r.role == "generate" || r.role == "refine") {
      static const std::regex kRank(R"(Code context (\d+):)");
      std::smatch m;
      int rank = std::regex_search(all, m, kRank) ? std::stoi(m[1]) : 0;
      std::string file = rank == 1                                          ? "offtarget.py"
                         : all.find("missing symptom") != std::string::npos ? "buggy.py"
                                                                            : "clean.py";
      return text_response("```python\n" + author_file(file) + "```\n");
    }
    if (r.role == "relevance") {
      bool relevant = which(all) != Script::OffTarget;
      return text_response(json{{"relevant", relevant},
                                {"rationale", relevant ? "builds the classifier with the reported sizes"
                                                       : "only checks batch coverage and never runs the model"}}
                               .dump());
    }
    if (r.role == "runtime") return text_response(answer_runtime(all));
    throw Error(ErrorKind::ProviderFailure, "author: unexpected role " + r.role);
  };
}

std::string record(const std::filesystem::path& work) {
  std::map<std::string, std::string> lines;
  auto scripted = std::make_shared<gateway::ScriptedTransport>(author());
  auto recorder = std::make_shared<gateway::ScriptedTransport>([&](const gateway::Request& r) {
    auto response = scripted->send(r);
    lines[r.digest] = gateway::to_jsonl({r.digest, r.kind, r.role, r.payload, response});
    return response;
  });
  auto base = run_config(work / "full");
  base.index_dir = work / "index";
  pipeline::cmd_reproduce(base, recorder);
  for (const char* component : {"relevance", "runtime"}) {
    auto c = base;
    c.out_dir = work / component;
    pipeline::cmd_ablate(c, component, recorder);
  }
  std::string out;
  for (const auto& [digest, line] : lines) out += line;
  return out;
}

std::string corrupt(const std::string& log) {
  std::string out;
  for (const auto& line : text::split_lines(log)) {
    if (line.empty()) continue;
    out += line.substr(0, line.size() / 2) + "\n";
  }
  return out;
}

}  // namespace dlrepro::test::minitrans
