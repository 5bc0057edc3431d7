#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simarena/error.hpp"

namespace simarena {

enum class ProviderKind {
  OpenAiCompatible,
  AnthropicCompatible,
  GoogleCompatible,
  Mock,
};

std::string to_string(ProviderKind k);
ProviderKind provider_kind_from_string(const std::string& s);

struct SamplingParams {
  double temperature = 0.7;
  double top_p = 1.0;
};

SamplingParams simulator_sampling();  // 0.7 / 1.0
SamplingParams assistant_sampling();  // 0.0 / 1.0
SamplingParams rater_sampling();      // 0.7 / 1.0

struct ChatMessage {
  std::string role;  // "user" | "assistant"
  std::string text;
};

struct ChatRequest {
  std::optional<std::string> system;
  std::vector<ChatMessage> messages;  // alternate, starting from user
};

struct ChatResponse {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  bool from_cache = false;
};

// ---------------------------------------------------------------------------
// Deterministic mock
// ---------------------------------------------------------------------------

struct MockReply {
  std::string text;
  std::int64_t prompt_tokens = 3;
  std::int64_t completion_tokens = 7;
};

/// Substring rule for file-configured mocks: the first rule whose needles all
/// occur in the flattened request wins.
struct MockRule {
  std::vector<std::string> contains;
  MockReply reply;
};

class MockScript {
 public:
  static std::shared_ptr<MockScript> queue(std::vector<MockReply> replies);
  static std::shared_ptr<MockScript> fingerprint_map(
      std::map<std::string, MockReply> by_fingerprint);
  static std::shared_ptr<MockScript> rules(std::vector<MockRule> rules,
                                           std::optional<MockReply> fallback);
  static std::shared_ptr<MockScript> from_json(const nlohmann::json& spec);

  MockReply next(const ChatRequest& req);

  /// Every request served, in order; lets tests assert on what a role saw.
  std::vector<ChatRequest> served() const;

 private:
  MockScript() = default;

  mutable std::mutex mutex_;
  std::deque<MockReply> queue_;
  std::map<std::string, MockReply> by_fingerprint_;
  std::vector<MockRule> rules_;
  std::optional<MockReply> fallback_;
  enum class Mode { Queue, Map, Rules } mode_ = Mode::Queue;
  std::vector<ChatRequest> served_;
};

// ---------------------------------------------------------------------------
// Provider specification
// ---------------------------------------------------------------------------

struct ProviderSpec {
  ProviderKind kind = ProviderKind::Mock;
  std::string model_id;
  std::string endpoint;             // base URL for remote kinds
  std::string auth_env;             // env var holding the key; never printed
  bool fixed_temperature = false;   // model rejects temperature overrides
  std::shared_ptr<MockScript> mock; // required iff kind == Mock
};

/// A mock-backed spec; `script` must be non-empty (enforced by MockScript
/// constructors).
ProviderSpec mock_provider(std::shared_ptr<MockScript> script,
                           std::string model_id = "mock-model");

void validate_provider_spec(const ProviderSpec& spec);

// ---------------------------------------------------------------------------
// Pricing
// ---------------------------------------------------------------------------

struct ModelPrice {
  double in_per_million = 0.0;
  double out_per_million = 0.0;
};

using PriceTable = std::map<std::string, ModelPrice>;

PriceTable load_price_table(const std::filesystem::path& file);

struct UsageCounts {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

/// prompt * in + completion * out, both per 1M tokens. Unknown model throws.
double estimate_cost(const UsageCounts& usage, const std::string& model_id,
                     const PriceTable& prices);

// ---------------------------------------------------------------------------
// Fingerprints
// ---------------------------------------------------------------------------

/// Cache key over (model, params, full message list); any byte change in any
/// message changes the key.
std::string request_fingerprint(const std::string& model_id,
                                const SamplingParams& params,
                                const ChatRequest& req);

/// Map-mode mock key over (system, messages) only.
std::string prompt_fingerprint(const ChatRequest& req);

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct HttpRequest {
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
};

struct HttpResponse {
  int status = 0;
  std::string body;
  bool transport_failed = false;  // connection-level failure
};

using HttpSend = std::function<HttpResponse(const HttpRequest&)>;

struct GatewayOptions {
  std::filesystem::path cache_dir;  // empty disables the cache
  bool offline = false;             // forbid non-mock providers
  int max_attempts = 5;
  int backoff_base_ms = 1000;       // 1s/2s/4s/8s/16s with jitter
  int max_inflight_per_provider = 4;
  HttpSend http;                    // injectable transport; default real HTTP
};

struct CallOptions {
  bool refresh = false;  // bypass the cache for this call (re-ask)
};

/// Uniform chat-completion access with caching, retries, and accounting.
/// Thread-safe; a per-provider token bucket bounds in-flight requests.
class Gateway {
 public:
  explicit Gateway(GatewayOptions options = {});

  ChatResponse complete(const ProviderSpec& spec, const SamplingParams& params,
                        const ChatRequest& req, const CallOptions& call = {});

  struct Audit {
    std::int64_t calls = 0;
    std::int64_t cache_hits = 0;
    std::int64_t network_requests = 0;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    double cost_usd = 0.0;  // priced calls only; cache hits cost 0
  };
  Audit audit() const;

  void set_price_table(PriceTable prices);

 private:
  ChatResponse call_provider(const ProviderSpec& spec,
                             const SamplingParams& params,
                             const ChatRequest& req);
  ChatResponse call_remote(const ProviderSpec& spec,
                           const SamplingParams& params,
                           const ChatRequest& req);
  std::optional<ChatResponse> cache_read(const std::string& fingerprint) const;
  void cache_write(const std::string& fingerprint, const ChatResponse& reply,
                   const nlohmann::json& request_echo);

  GatewayOptions options_;
  PriceTable prices_;
  mutable std::mutex mutex_;
  Audit audit_;
  std::map<std::string, int> inflight_;
  std::condition_variable inflight_cv_;
};

}  // namespace simarena
