#include "dlrepro/gateway/gateway.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <thread>

#include <json.hpp>

#include "dlrepro/index/tokenizer.hpp"
#include "dlrepro/util/assets.hpp"
#include "dlrepro/util/digest.hpp"
#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"

namespace dlrepro::gateway {

using nlohmann::json;

std::string ProviderConfig::model_for(const std::string& role) const {
  auto it = model_map.find(role);
  return it == model_map.end() ? model : it->second;
}

std::string_view to_string(ExchangeKind kind) {
  switch (kind) {
    case ExchangeKind::Complete: return "complete";
    case ExchangeKind::Embed: return "embed";
    case ExchangeKind::CrossScore: return "cross_score";
  }
  return "complete";
}

ExchangeKind exchange_kind_from(std::string_view s) {
  if (s == "complete") return ExchangeKind::Complete;
  if (s == "embed") return ExchangeKind::Embed;
  if (s == "cross_score") return ExchangeKind::CrossScore;
  throw Error(ErrorKind::Parse, "unknown exchange kind: " + std::string(s));
}

namespace {

Request finish(ExchangeKind kind, const std::string& role, const json& payload) {
  Request r;
  r.kind = kind;
  r.role = role;
  r.payload = payload.dump();
  json envelope = {{"kind", to_string(kind)}, {"role", role}, {"payload", payload}};
  r.digest = sha256_hex(envelope.dump());
  return r;
}

json params_json(const GenerationParams& p) {
  return {{"temperature", p.temperature},
          {"top_p", p.top_p},
          {"top_k", p.top_k},
          {"repetition_penalty", p.repetition_penalty},
          {"max_tokens", p.max_tokens}};
}

}  // namespace

Request make_complete_request(const std::string& role, const std::vector<Message>& messages,
                              const ProviderConfig& config) {
  if (messages.empty()) throw Error(ErrorKind::InvalidArgument, "completion needs at least one message");
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return finish(ExchangeKind::Complete, role,
                {{"model", config.model_for(role)}, {"messages", msgs}, {"params", params_json(config.params)}});
}

Request make_embed_request(std::string_view text, const ProviderConfig& config) {
  return finish(ExchangeKind::Embed, "embed", {{"model", config.embed_model}, {"input", std::string(text)}});
}

Request make_cross_request(std::string_view query, std::string_view doc, const ProviderConfig& config) {
  return finish(ExchangeKind::CrossScore, "cross_score",
                {{"model", config.cross_model}, {"query", std::string(query)}, {"document", std::string(doc)}});
}

std::string to_jsonl(const ExchangeRecord& r) {
  json j = {{"digest", r.digest},
            {"kind", to_string(r.kind)},
            {"role", r.role},
            {"request", json::parse(r.request)},
            {"response", json::parse(r.response)}};
  return j.dump() + "\n";
}

ExchangeRecord record_from_jsonl(std::string_view line) {
  auto j = json::parse(line);
  ExchangeRecord r;
  r.digest = j.at("digest").get<std::string>();
  r.kind = exchange_kind_from(j.at("kind").get<std::string>());
  r.role = j.value("role", "");
  r.request = j.contains("request") ? j["request"].dump() : "{}";
  r.response = j.at("response").dump();
  return r;
}

// ---- HTTP ----

HttpTransport::HttpTransport(ProviderConfig config) : config_(std::move(config)) {}

void HttpTransport::throttle() {
  if (config_.max_requests_per_second <= 0) return;
  std::lock_guard<std::mutex> lock(mu_);
  auto gap = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / config_.max_requests_per_second));
  auto now = std::chrono::steady_clock::now();
  if (last_.time_since_epoch().count() != 0 && now < last_ + gap) {
    std::this_thread::sleep_until(last_ + gap);
    now = last_ + gap;
  }
  last_ = now;
}

std::string HttpTransport::send(const Request& request) {
  std::string last;
  auto delay = config_.backoff;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    try {
      throttle();
      return send_once(request);
    } catch (const Error& e) {
      last = e.what();
    }
  }
  throw Error(ErrorKind::ProviderFailure, "request " + request.digest.substr(0, 12) + " failed after " +
                                              std::to_string(config_.max_retries + 1) + " attempts: " + last);
}

std::string HttpTransport::send_once(const Request& request) {
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url_re))
    throw Error(ErrorKind::InvalidArgument, "bad provider URL: " + config_.endpoint);
  std::string base = m[1];
  std::string prefix = m[2].matched ? std::string(m[2]) : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  auto payload = json::parse(request.payload);
  json body;
  std::string path;
  switch (request.kind) {
    case ExchangeKind::Complete: {
      path = "/v1/chat/completions";
      body = payload["params"];
      body["model"] = payload["model"];
      body["messages"] = payload["messages"];
      break;
    }
    case ExchangeKind::Embed:
      path = "/v1/embeddings";
      body = {{"model", payload["model"]}, {"input", payload["input"]}};
      break;
    case ExchangeKind::CrossScore:
      path = "/v1/rerank";
      body = {{"model", payload["model"]}, {"query", payload["query"]}, {"documents", {payload["document"]}}};
      break;
  }

  httplib::Client cli(base);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count();
  cli.set_connection_timeout(std::max<long>(1, secs));
  cli.set_read_timeout(std::max<long>(1, secs));
  cli.set_write_timeout(std::max<long>(1, secs));
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  auto res = cli.Post(prefix + path, headers, body.dump(), "application/json");
  if (!res) throw Error(ErrorKind::ProviderFailure, "HTTP error: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw Error(ErrorKind::ProviderFailure,
                "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  json reply;
  try {
    reply = json::parse(res->body);
    switch (request.kind) {
      case ExchangeKind::Complete:
        return json{{"text", reply.at("choices").at(0).at("message").at("content").get<std::string>()}}.dump();
      case ExchangeKind::Embed:
        return json{{"embedding", reply.at("data").at(0).at("embedding")}}.dump();
      case ExchangeKind::CrossScore:
        return json{{"score", reply.at("results").at(0).at("relevance_score").get<double>()}}.dump();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ProviderFailure, std::string("malformed provider reply: ") + e.what());
  }
  return {};
}

// ---- replay / record ----

namespace {
// Malformed lines are skipped; their requests then miss like unrecorded ones.
std::vector<ExchangeRecord> load_log(const std::filesystem::path& log, std::size_t* skipped) {
  std::vector<ExchangeRecord> out;
  std::ifstream in(log);
  if (!in) throw Error(ErrorKind::Io, "cannot read exchange log " + log.string());
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(record_from_jsonl(line));
    } catch (const std::exception&) {
      ++*skipped;
    }
  }
  return out;
}
}  // namespace

ReplayTransport::ReplayTransport(const std::filesystem::path& log, bool strict, std::shared_ptr<Transport> fallback)
    : ReplayTransport(std::vector<ExchangeRecord>{}, strict, std::move(fallback)) {
  for (auto& r : load_log(log, &skipped_)) store_.emplace(r.digest, std::move(r.response));
}

ReplayTransport::ReplayTransport(std::vector<ExchangeRecord> records, bool strict,
                                 std::shared_ptr<Transport> fallback)
    : strict_(strict), fallback_(std::move(fallback)) {
  for (auto& r : records) store_.emplace(r.digest, std::move(r.response));
}

std::string ReplayTransport::send(const Request& request) {
  auto it = store_.find(request.digest);
  if (it != store_.end()) return it->second;
  if (strict_ || !fallback_)
    throw Error(ErrorKind::ReplayMiss, "no recorded exchange for " + std::string(to_string(request.kind)) +
                                           " request " + request.digest + " (role " + request.role + ")");
  return fallback_->send(request);
}

RecordingTransport::RecordingTransport(std::shared_ptr<Transport> inner, std::filesystem::path log)
    : inner_(std::move(inner)), log_(std::move(log)) {
  if (log_.has_parent_path()) std::filesystem::create_directories(log_.parent_path());
}

std::string RecordingTransport::send(const Request& request) {
  auto response = inner_->send(request);
  ExchangeRecord r{request.digest, request.kind, request.role, request.payload, response};
  std::lock_guard<std::mutex> lock(mu_);
  std::ofstream out(log_, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot append to " + log_.string());
  out << to_jsonl(r);
  return response;
}

// ---- mocks ----

std::uint64_t fnv1a64(std::string_view s, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<double> mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  std::vector<double> v(dim, 0.0);
  auto counts = index::count_terms(text);
  if (counts.empty()) counts[std::string(text)] = 1;
  constexpr double two_pi = 6.283185307179586;
  for (const auto& [term, count] : counts) {
    std::mt19937_64 rng(fnv1a64(term, 0xcbf29ce484222325ULL ^ seed));
    // Box-Muller on raw engine output keeps the values identical across standard libraries.
    for (std::size_t i = 0; i < dim; i += 2) {
      double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
      double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      double r = std::sqrt(-2.0 * std::log(u1));
      v[i] += count * r * std::cos(two_pi * u2);
      if (i + 1 < dim) v[i + 1] += count * r * std::sin(two_pi * u2);
    }
  }
  return v;
}

double mock_cross_score(std::string_view query, std::string_view doc) {
  auto a = index::tokenize_terms(query);
  auto b = index::tokenize_terms(doc);
  std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return query == doc ? 1.0 : 0.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

// ---- gateway ----

Gateway::Gateway(ProviderConfig config, std::shared_ptr<Transport> transport, bool remote_embed, bool remote_cross)
    : config_(std::move(config)), transport_(std::move(transport)), remote_embed_(remote_embed),
      remote_cross_(remote_cross) {}

std::string Gateway::call(const Request& r) {
  if (!transport_) throw Error(ErrorKind::ProviderFailure, "no provider configured for request " + r.digest);
  try {
    return transport_->send(r);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ProviderFailure && std::string(e.what()).find(r.digest) == std::string::npos)
      throw Error(ErrorKind::ProviderFailure, std::string(e.what()) + " [digest " + r.digest + "]");
    throw;
  }
}

std::string Gateway::complete(const std::string& role, const std::vector<Message>& messages) {
  auto r = make_complete_request(role, messages, config_);
  {
    std::lock_guard<std::mutex> lock(mu_);
    ++stats_.completions_by_role[role];
  }
  auto reply = call(r);
  try {
    return json::parse(reply).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ProviderFailure, "bad completion payload for " + r.digest + ": " + e.what());
  }
}

std::vector<double> Gateway::embed(std::string_view text) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    ++stats_.embeds;
  }
  if (!remote_embed_) return mock_embed(text);
  auto r = make_embed_request(text, config_);
  auto reply = call(r);
  try {
    return json::parse(reply).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ProviderFailure, "bad embedding payload for " + r.digest + ": " + e.what());
  }
}

double Gateway::cross_score(std::string_view query, std::string_view doc) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    ++stats_.cross_scores;
  }
  if (!remote_cross_) return mock_cross_score(query, doc);
  auto r = make_cross_request(query, doc, config_);
  auto reply = call(r);
  double s;
  try {
    s = json::parse(reply).at("score").get<double>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ScorerFailure, "bad cross-score payload for " + r.digest + ": " + e.what());
  }
  if (std::isnan(s)) throw Error(ErrorKind::ScorerFailure, "cross score is NaN for " + r.digest);
  return std::clamp(s, 0.0, 1.0);
}

std::function<std::vector<double>(std::string_view)> Gateway::embedder() {
  return [this](std::string_view t) { return embed(t); };
}

std::function<double(std::string_view, std::string_view)> Gateway::scorer() {
  return [this](std::string_view q, std::string_view d) { return cross_score(q, d); };
}

CompleteFn Gateway::completer(const std::string& role) {
  return [this, role](const std::vector<Message>& msgs) { return complete(role, msgs); };
}

GatewayStats Gateway::stats() const {
  std::lock_guard<std::mutex> lock(mu_);
  return stats_;
}

std::string Gateway::embedder_id() const {
  return remote_embed_ ? "remote:" + config_.embed_model : "mock-hash-" + std::to_string(kMockEmbedDim);
}

std::vector<Message> prompt_messages(std::string_view asset_name,
                                     const std::vector<std::pair<std::string, std::string>>& vars) {
  std::string body = text::render_template(asset(asset_name), vars);
  auto cut = body.find("@@user\n");
  if (cut == std::string::npos) return {{"user", body}};
  std::string system(text::trim(body.substr(0, cut)));
  return {{"system", system}, {"user", body.substr(cut + 7)}};
}

std::optional<std::string> extract_json_object(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_str = false, esc = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_str) {
        if (esc) esc = false;
        else if (c == '\\') esc = true;
        else if (c == '"') in_str = false;
        continue;
      }
      if (c == '"') in_str = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        auto parsed = json::parse(text.substr(start, i - start + 1), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) return parsed.dump();
        break;
      }
    }
  }
  return std::nullopt;
}

std::optional<std::string> extract_code_block(std::string_view text, std::string_view lang) {
  struct Block {
    std::string tag, body;
  };
  std::vector<Block> blocks;
  auto lines = text::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto t = text::trim(lines[i]);
    if (t.substr(0, 3) != "```") continue;
    Block b{std::string(text::trim(t.substr(3))), ""};
    std::size_t j = i + 1;
    for (; j < lines.size() && text::trim(lines[j]).substr(0, 3) != "```"; ++j) b.body += lines[j] + "\n";
    if (j == lines.size()) break;  // unterminated fence
    blocks.push_back(std::move(b));
    i = j;
  }
  for (const auto& b : blocks)
    if (text::to_lower(b.tag) == lang || (lang == "python" && text::to_lower(b.tag) == "py")) return b.body;
  for (const auto& b : blocks)
    if (b.tag.empty()) return b.body;
  if (!blocks.empty()) return blocks.front().body;
  return std::nullopt;
}

}  // namespace dlrepro::gateway
