#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dlrepro::gateway {

struct Message {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

// Sampling defaults recommended for the Qwen2.5 instruct/coder models.
struct GenerationParams {
  double temperature = 0.7;
  double top_p = 0.8;
  int top_k = 20;
  double repetition_penalty = 1.05;
  int max_tokens = 2048;
};

inline const char* const kTextModel = "qwen2.5-7b-instruct";
inline const char* const kCodeModel = "qwen2.5-coder-7b-instruct";

/// Pipeline roles that issue completions.
inline const std::vector<std::string>& completion_roles() {
  static const std::vector<std::string> roles = {"restructure", "plan", "generate", "refine", "relevance", "runtime"};
  return roles;
}

struct ProviderConfig {
  std::string endpoint = "http://127.0.0.1:8000";
  std::string model = kCodeModel;  // fallback for roles missing from model_map
  std::map<std::string, std::string> model_map = {
      {"restructure", kTextModel}, {"plan", kTextModel},         {"generate", kCodeModel},
      {"refine", kCodeModel},      {"relevance", kCodeModel},    {"runtime", kCodeModel},
  };
  std::string embed_model = "text-embedding";
  std::string cross_model = "cross-encoder";
  GenerationParams params;
  std::chrono::milliseconds timeout{120000};
  int max_retries = 3;
  std::chrono::milliseconds backoff{500};  // doubled after each failed attempt
  double max_requests_per_second = 0.0;    // 0 = unlimited
  std::string api_key_env = "DLREPRO_API_KEY";

  std::string model_for(const std::string& role) const;
};

enum class ExchangeKind { Complete, Embed, CrossScore };
std::string_view to_string(ExchangeKind kind);
ExchangeKind exchange_kind_from(std::string_view s);

/// A provider request in canonical form. `payload` is compact JSON with
/// sorted keys; the digest covers kind, role and payload.
struct Request {
  ExchangeKind kind = ExchangeKind::Complete;
  std::string role;
  std::string payload;
  std::string digest;
};

Request make_complete_request(const std::string& role, const std::vector<Message>& messages,
                              const ProviderConfig& config);
Request make_embed_request(std::string_view text, const ProviderConfig& config);
Request make_cross_request(std::string_view query, std::string_view doc, const ProviderConfig& config);

/// Response payloads are JSON: {"text": ...}, {"embedding": [...]}, {"score": x}.
struct ExchangeRecord {
  std::string digest;
  ExchangeKind kind = ExchangeKind::Complete;
  std::string role;
  std::string request;   // payload JSON
  std::string response;  // response JSON
};

std::string to_jsonl(const ExchangeRecord& r);
ExchangeRecord record_from_jsonl(std::string_view line);

class Transport {
 public:
  virtual ~Transport() = default;
  /// Returns the response payload JSON or throws Error(ProviderFailure/ReplayMiss).
  virtual std::string send(const Request& request) = 0;
};

/// OpenAI-compatible HTTP provider: /v1/chat/completions, /v1/embeddings, /v1/rerank.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(ProviderConfig config);
  std::string send(const Request& request) override;

 private:
  std::string send_once(const Request& request);
  void throttle();
  ProviderConfig config_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point last_{};
};

/// Answers from recorded exchanges. A miss is a ReplayMiss error in strict
/// mode and is delegated to `fallback` otherwise.
class ReplayTransport : public Transport {
 public:
  explicit ReplayTransport(const std::filesystem::path& log, bool strict = true,
                           std::shared_ptr<Transport> fallback = nullptr);
  ReplayTransport(std::vector<ExchangeRecord> records, bool strict = true,
                  std::shared_ptr<Transport> fallback = nullptr);
  std::string send(const Request& request) override;
  std::size_t size() const { return store_.size(); }
  /// Log lines that could not be parsed.
  std::size_t skipped() const { return skipped_; }

 private:
  std::map<std::string, std::string> store_;
  std::size_t skipped_ = 0;
  bool strict_;
  std::shared_ptr<Transport> fallback_;
};

/// Appends every exchange that passes through to a JSONL log.
class RecordingTransport : public Transport {
 public:
  RecordingTransport(std::shared_ptr<Transport> inner, std::filesystem::path log);
  std::string send(const Request& request) override;

 private:
  std::shared_ptr<Transport> inner_;
  std::filesystem::path log_;
  std::mutex mu_;
};

/// Test double that answers through a callback.
class ScriptedTransport : public Transport {
 public:
  using Handler = std::function<std::string(const Request&)>;
  explicit ScriptedTransport(Handler handler) : handler_(std::move(handler)) {}
  std::string send(const Request& request) override { return handler_(request); }

 private:
  Handler handler_;
};

inline constexpr std::size_t kMockEmbedDim = 256;

/// Feature-hashed bag of terms: each term maps to a seeded Gaussian vector.
std::vector<double> mock_embed(std::string_view text, std::size_t dim = kMockEmbedDim, std::uint64_t seed = 0);

/// Jaccard overlap of the two term sets.
double mock_cross_score(std::string_view query, std::string_view doc);

/// Portable 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t basis = 0xcbf29ce484222325ULL);

struct GatewayStats {
  std::map<std::string, int> completions_by_role;
  int embeds = 0;
  int cross_scores = 0;
};

/// Uniform entry point for completion, embedding and cross scoring. Embedding
/// and cross scoring use the local mocks unless told to use the transport.
class Gateway {
 public:
  Gateway(ProviderConfig config, std::shared_ptr<Transport> transport, bool remote_embed = false,
          bool remote_cross = false);

  std::string complete(const std::string& role, const std::vector<Message>& messages);
  std::vector<double> embed(std::string_view text);
  double cross_score(std::string_view query, std::string_view doc);

  std::function<std::vector<double>(std::string_view)> embedder();
  std::function<double(std::string_view, std::string_view)> scorer();
  /// Completion bound to one pipeline role.
  std::function<std::string(const std::vector<Message>&)> completer(const std::string& role);

  const ProviderConfig& config() const { return config_; }
  GatewayStats stats() const;
  std::string embedder_id() const;

 private:
  std::string call(const Request& r);
  ProviderConfig config_;
  std::shared_ptr<Transport> transport_;
  bool remote_embed_;
  bool remote_cross_;
  mutable std::mutex mu_;
  GatewayStats stats_;
};

using CompleteFn = std::function<std::string(const std::vector<Message>&)>;

/// Builds messages from a prompt asset. Text before a line "@@user" is the
/// system message; the rest is the user message.
std::vector<Message> prompt_messages(std::string_view asset_name,
                                     const std::vector<std::pair<std::string, std::string>>& vars);

/// First balanced top-level JSON object in `text` that parses, as compact JSON.
std::optional<std::string> extract_json_object(std::string_view text);

/// Body of the first fenced block tagged `lang` (or untagged, or any block as a last resort).
std::optional<std::string> extract_code_block(std::string_view text, std::string_view lang = "python");

}  // namespace dlrepro::gateway
