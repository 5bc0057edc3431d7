#include "simarena/gateway.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>

namespace simarena {

using nlohmann::json;

std::string to_string(ProviderKind k) {
  switch (k) {
    case ProviderKind::OpenAiCompatible: return "openai-compatible";
    case ProviderKind::AnthropicCompatible: return "anthropic-compatible";
    case ProviderKind::GoogleCompatible: return "google-compatible";
    case ProviderKind::Mock: return "mock";
  }
  return "mock";
}

ProviderKind provider_kind_from_string(const std::string& s) {
  if (s == "openai-compatible") return ProviderKind::OpenAiCompatible;
  if (s == "anthropic-compatible") return ProviderKind::AnthropicCompatible;
  if (s == "google-compatible") return ProviderKind::GoogleCompatible;
  if (s == "mock") return ProviderKind::Mock;
  throw Error(ErrorKind::Config, "unknown provider kind: '" + s + "'");
}

SamplingParams simulator_sampling() { return {0.7, 1.0}; }
SamplingParams assistant_sampling() { return {0.0, 1.0}; }
SamplingParams rater_sampling() { return {0.7, 1.0}; }

// ---------------------------------------------------------------------------
// Mock
// ---------------------------------------------------------------------------

std::shared_ptr<MockScript> MockScript::queue(std::vector<MockReply> replies) {
  if (replies.empty())
    throw Error(ErrorKind::Argument, "mock queue script must be non-empty");
  auto s = std::shared_ptr<MockScript>(new MockScript());
  s->mode_ = Mode::Queue;
  s->queue_.assign(replies.begin(), replies.end());
  return s;
}

std::shared_ptr<MockScript> MockScript::fingerprint_map(
    std::map<std::string, MockReply> by_fingerprint) {
  if (by_fingerprint.empty())
    throw Error(ErrorKind::Argument, "mock map script must be non-empty");
  auto s = std::shared_ptr<MockScript>(new MockScript());
  s->mode_ = Mode::Map;
  s->by_fingerprint_ = std::move(by_fingerprint);
  return s;
}

std::shared_ptr<MockScript> MockScript::rules(
    std::vector<MockRule> rules, std::optional<MockReply> fallback) {
  if (rules.empty() && !fallback)
    throw Error(ErrorKind::Argument, "mock rules script must be non-empty");
  auto s = std::shared_ptr<MockScript>(new MockScript());
  s->mode_ = Mode::Rules;
  s->rules_ = std::move(rules);
  s->fallback_ = std::move(fallback);
  return s;
}

std::shared_ptr<MockScript> MockScript::from_json(const json& spec) {
  const auto mode = spec.value("mode", std::string("queue"));
  auto reply_of = [](const json& j) {
    MockReply r;
    if (j.is_string()) {
      r.text = j.get<std::string>();
    } else {
      r.text = j.value("text", std::string{});
      r.prompt_tokens = j.value("prompt_tokens", std::int64_t{3});
      r.completion_tokens = j.value("completion_tokens", std::int64_t{7});
    }
    return r;
  };
  if (mode == "queue") {
    std::vector<MockReply> replies;
    for (const auto& j : spec.at("responses")) replies.push_back(reply_of(j));
    return queue(std::move(replies));
  }
  if (mode == "map") {
    std::map<std::string, MockReply> by_fp;
    for (const auto& [fp, j] : spec.at("responses").items())
      by_fp[fp] = reply_of(j);
    return fingerprint_map(std::move(by_fp));
  }
  if (mode == "rules") {
    std::vector<MockRule> rules;
    for (const auto& j : spec.at("rules")) {
      MockRule r;
      if (j.at("contains").is_string())
        r.contains.push_back(j.at("contains").get<std::string>());
      else
        for (const auto& needle : j.at("contains"))
          r.contains.push_back(needle.get<std::string>());
      r.reply = reply_of(j.at("reply"));
      rules.push_back(std::move(r));
    }
    std::optional<MockReply> fallback;
    if (spec.contains("fallback")) fallback = reply_of(spec.at("fallback"));
    return MockScript::rules(std::move(rules), std::move(fallback));
  }
  throw Error(ErrorKind::Config, "unknown mock script mode: '" + mode + "'");
}

namespace {

std::string flatten_request(const ChatRequest& req) {
  std::string flat;
  if (req.system) flat += *req.system + "\n";
  for (const auto& m : req.messages) flat += m.role + ": " + m.text + "\n";
  return flat;
}

}  // namespace

MockReply MockScript::next(const ChatRequest& req) {
  std::lock_guard<std::mutex> lock(mutex_);
  served_.push_back(req);
  switch (mode_) {
    case Mode::Queue: {
      if (queue_.empty())
        throw Error(ErrorKind::ScriptedGap,
                    "mock queue exhausted; unscripted request began: '" +
                        flatten_request(req).substr(0, 120) + "'");
      MockReply r = queue_.front();
      queue_.pop_front();
      return r;
    }
    case Mode::Map: {
      const auto fp = prompt_fingerprint(req);
      auto it = by_fingerprint_.find(fp);
      if (it == by_fingerprint_.end())
        throw Error(ErrorKind::ScriptedGap,
                    "no scripted response for fingerprint " + fp +
                        "; request began: '" +
                        flatten_request(req).substr(0, 120) + "'");
      return it->second;
    }
    case Mode::Rules: {
      const std::string flat = flatten_request(req);
      for (const auto& rule : rules_) {
        bool all = true;
        for (const auto& needle : rule.contains)
          if (flat.find(needle) == std::string::npos) {
            all = false;
            break;
          }
        if (all) return rule.reply;
      }
      if (fallback_) return *fallback_;
      throw Error(ErrorKind::ScriptedGap,
                  "no mock rule matched; request began: '" +
                      flat.substr(0, 120) + "'");
    }
  }
  throw Error(ErrorKind::ScriptedGap, "unreachable mock mode");
}

std::vector<ChatRequest> MockScript::served() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return served_;
}

ProviderSpec mock_provider(std::shared_ptr<MockScript> script,
                           std::string model_id) {
  ProviderSpec spec;
  spec.kind = ProviderKind::Mock;
  spec.model_id = std::move(model_id);
  spec.mock = std::move(script);
  validate_provider_spec(spec);
  return spec;
}

void validate_provider_spec(const ProviderSpec& spec) {
  if (spec.model_id.empty())
    throw Error(ErrorKind::Config, "provider spec needs a model_id");
  if (spec.kind == ProviderKind::Mock) {
    if (!spec.auth_env.empty())
      throw Error(ErrorKind::Config, "mock provider takes no auth_env");
    if (!spec.mock)
      throw Error(ErrorKind::Config, "mock provider needs a script");
    return;
  }
  if (spec.endpoint.empty())
    throw Error(ErrorKind::Config,
                "remote provider '" + spec.model_id + "' needs an endpoint");
  if (spec.auth_env.empty())
    throw Error(ErrorKind::Config,
                "remote provider '" + spec.model_id + "' needs an auth_env");
}

// ---------------------------------------------------------------------------
// Pricing
// ---------------------------------------------------------------------------

PriceTable load_price_table(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in)
    throw Error(ErrorKind::Io, "cannot open price table '" + file.string() + "'");
  json j;
  in >> j;
  PriceTable table;
  for (const auto& [model, entry] : j.items())
    table[model] = {entry.at("in_per_million").get<double>(),
                    entry.at("out_per_million").get<double>()};
  return table;
}

double estimate_cost(const UsageCounts& usage, const std::string& model_id,
                     const PriceTable& prices) {
  auto it = prices.find(model_id);
  if (it == prices.end())
    throw Error(ErrorKind::Argument,
                "no price entry for model '" + model_id + "'");
  return double(usage.prompt_tokens) * it->second.in_per_million / 1e6 +
         double(usage.completion_tokens) * it->second.out_per_million / 1e6;
}

// ---------------------------------------------------------------------------
// Fingerprints
// ---------------------------------------------------------------------------

namespace {

std::string fnv128_hex(const std::string& data) {
  auto fnv = [&](std::uint64_t h) {
    for (unsigned char c : data) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  };
  const std::uint64_t a = fnv(1469598103934665603ull);
  const std::uint64_t b = fnv(0x9e3779b97f4a7c15ull);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", (unsigned long long)a,
                (unsigned long long)b);
  return buf;
}

json request_json(const ChatRequest& req) {
  json j;
  if (req.system) j["system"] = *req.system;
  json msgs = json::array();
  for (const auto& m : req.messages)
    msgs.push_back({{"role", m.role}, {"text", m.text}});
  j["messages"] = std::move(msgs);
  return j;
}

void validate_request(const ChatRequest& req) {
  if (req.messages.empty())
    throw Error(ErrorKind::Argument, "chat request needs at least one message");
  std::string expected = "user";
  for (const auto& m : req.messages) {
    if (m.role != expected)
      throw Error(ErrorKind::Argument,
                  "messages must alternate user/assistant starting from user");
    expected = expected == "user" ? "assistant" : "user";
  }
}

}  // namespace

std::string request_fingerprint(const std::string& model_id,
                                const SamplingParams& params,
                                const ChatRequest& req) {
  json j = request_json(req);
  j["model"] = model_id;
  j["temperature"] = params.temperature;
  j["top_p"] = params.top_p;
  return fnv128_hex(j.dump());
}

std::string prompt_fingerprint(const ChatRequest& req) {
  return fnv128_hex(request_json(req).dump());
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

namespace {

HttpResponse real_http_send(const HttpRequest& req) {
  const auto scheme_end = req.url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorKind::Config, "endpoint URL needs a scheme: " + req.url);
  const auto host_start = scheme_end + 3;
  const auto path_start = req.url.find('/', host_start);
  const std::string origin = path_start == std::string::npos
                                 ? req.url
                                 : req.url.substr(0, path_start);
  const std::string path =
      path_start == std::string::npos ? "/" : req.url.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(30);
  client.set_read_timeout(120);
  httplib::Headers headers;
  for (const auto& [k, v] : req.headers) headers.emplace(k, v);
  auto res = client.Post(path, headers, req.body, "application/json");
  HttpResponse out;
  if (!res) {
    out.transport_failed = true;
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

int jitter_ms(int base) {
  thread_local std::mt19937 engine{std::random_device{}()};
  if (base <= 0) return 0;
  return base * 3 / 4 + int(engine() % (unsigned(base) / 2 + 1));
}

bool retryable_status(int status) {
  return status == 408 || status == 429 || status == 500 || status == 502 ||
         status == 503 || status == 529;
}

std::string require_key(const ProviderSpec& spec) {
  const char* key = std::getenv(spec.auth_env.c_str());
  if (!key || !*key)
    throw Error(ErrorKind::Config,
                "auth variable " + spec.auth_env + " is not set");
  return key;
}

}  // namespace

Gateway::Gateway(GatewayOptions options) : options_(std::move(options)) {
  if (!options_.http) options_.http = real_http_send;
  if (!options_.cache_dir.empty())
    std::filesystem::create_directories(options_.cache_dir);
}

void Gateway::set_price_table(PriceTable prices) {
  std::lock_guard<std::mutex> lock(mutex_);
  prices_ = std::move(prices);
}

Gateway::Audit Gateway::audit() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return audit_;
}

std::optional<ChatResponse> Gateway::cache_read(
    const std::string& fingerprint) const {
  if (options_.cache_dir.empty()) return std::nullopt;
  const auto file = options_.cache_dir / (fingerprint + ".json");
  std::ifstream in(file);
  if (!in) return std::nullopt;
  try {
    json j;
    in >> j;
    ChatResponse r;
    r.text = j.at("response").at("text").get<std::string>();
    r.prompt_tokens = j.at("response").value("prompt_tokens", std::int64_t{0});
    r.completion_tokens =
        j.at("response").value("completion_tokens", std::int64_t{0});
    r.from_cache = true;
    return r;
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable entries are treated as misses
  }
}

void Gateway::cache_write(const std::string& fingerprint,
                          const ChatResponse& reply,
                          const json& request_echo) {
  if (options_.cache_dir.empty()) return;
  static std::mutex write_mutex;  // writers serialized, readers lock-free
  std::lock_guard<std::mutex> lock(write_mutex);

  json j;
  j["request"] = request_echo;
  j["response"] = {{"text", reply.text},
                   {"prompt_tokens", reply.prompt_tokens},
                   {"completion_tokens", reply.completion_tokens}};
  const auto file = options_.cache_dir / (fingerprint + ".json");
  const auto tmp = options_.cache_dir / (fingerprint + ".tmp");
  {
    std::ofstream out(tmp);
    out << j.dump();
  }
  std::filesystem::rename(tmp, file);
}

ChatResponse Gateway::complete(const ProviderSpec& spec,
                               const SamplingParams& params,
                               const ChatRequest& req,
                               const CallOptions& call) {
  validate_provider_spec(spec);
  validate_request(req);
  if (params.temperature < 0.0 || params.top_p <= 0.0 || params.top_p > 1.0)
    throw Error(ErrorKind::Argument,
                "sampling params out of range (temperature >= 0, top_p in (0,1])");
  if (options_.offline && spec.kind != ProviderKind::Mock)
    throw Error(ErrorKind::Config,
                "offline mode forbids non-mock provider '" + spec.model_id + "'");

  const auto fingerprint = request_fingerprint(spec.model_id, params, req);
  if (!call.refresh) {
    if (auto cached = cache_read(fingerprint)) {
      std::lock_guard<std::mutex> lock(mutex_);
      ++audit_.calls;
      ++audit_.cache_hits;
      return *cached;
    }
  }

  ChatResponse reply = call_provider(spec, params, req);
  cache_write(fingerprint, reply, request_json(req));

  std::lock_guard<std::mutex> lock(mutex_);
  ++audit_.calls;
  audit_.prompt_tokens += reply.prompt_tokens;
  audit_.completion_tokens += reply.completion_tokens;
  auto priced = prices_.find(spec.model_id);
  if (priced != prices_.end())
    audit_.cost_usd +=
        estimate_cost({reply.prompt_tokens, reply.completion_tokens},
                      spec.model_id, prices_);
  return reply;
}

ChatResponse Gateway::call_provider(const ProviderSpec& spec,
                                    const SamplingParams& params,
                                    const ChatRequest& req) {
  if (spec.kind == ProviderKind::Mock) {
    const MockReply r = spec.mock->next(req);
    ChatResponse out;
    out.text = r.text;
    out.prompt_tokens = r.prompt_tokens;
    out.completion_tokens = r.completion_tokens;
    return out;
  }
  return call_remote(spec, params, req);
}

ChatResponse Gateway::call_remote(const ProviderSpec& spec,
                                  const SamplingParams& params,
                                  const ChatRequest& req) {
  const std::string key = require_key(spec);

  HttpRequest http;
  json body;
  switch (spec.kind) {
    case ProviderKind::OpenAiCompatible: {
      http.url = spec.endpoint + "/chat/completions";
      http.headers.emplace_back("Authorization", "Bearer " + key);
      json msgs = json::array();
      if (req.system)
        msgs.push_back({{"role", "system"}, {"content", *req.system}});
      for (const auto& m : req.messages)
        msgs.push_back({{"role", m.role}, {"content", m.text}});
      body["model"] = spec.model_id;
      body["messages"] = std::move(msgs);
      if (!spec.fixed_temperature) body["temperature"] = params.temperature;
      body["top_p"] = params.top_p;
      break;
    }
    case ProviderKind::AnthropicCompatible: {
      http.url = spec.endpoint + "/v1/messages";
      http.headers.emplace_back("x-api-key", key);
      http.headers.emplace_back("anthropic-version", "2023-06-01");
      body["model"] = spec.model_id;
      body["max_tokens"] = 4096;
      if (req.system) body["system"] = *req.system;
      json msgs = json::array();
      for (const auto& m : req.messages)
        msgs.push_back({{"role", m.role}, {"content", m.text}});
      body["messages"] = std::move(msgs);
      if (!spec.fixed_temperature) body["temperature"] = params.temperature;
      body["top_p"] = params.top_p;
      break;
    }
    case ProviderKind::GoogleCompatible: {
      http.url = spec.endpoint + "/v1beta/models/" + spec.model_id +
                 ":generateContent";
      http.headers.emplace_back("x-goog-api-key", key);
      if (req.system)
        body["systemInstruction"] = {{"parts", {{{"text", *req.system}}}}};
      json contents = json::array();
      for (const auto& m : req.messages)
        contents.push_back({{"role", m.role == "assistant" ? "model" : "user"},
                            {"parts", {{{"text", m.text}}}}});
      body["contents"] = std::move(contents);
      json gen;
      if (!spec.fixed_temperature) gen["temperature"] = params.temperature;
      gen["topP"] = params.top_p;
      body["generationConfig"] = std::move(gen);
      break;
    }
    case ProviderKind::Mock:
      break;  // handled by the caller
  }
  http.body = body.dump();

  // Token bucket: bound in-flight requests per provider.
  const std::string bucket = spec.endpoint + "|" + spec.model_id;
  {
    std::unique_lock<std::mutex> lock(mutex_);
    inflight_cv_.wait(lock, [&] {
      return inflight_[bucket] < options_.max_inflight_per_provider;
    });
    ++inflight_[bucket];
  }
  struct Release {
    Gateway* gw;
    const std::string& bucket;
    ~Release() {
      {
        std::lock_guard<std::mutex> lock(gw->mutex_);
        --gw->inflight_[bucket];
      }
      gw->inflight_cv_.notify_all();
    }
  } release{this, bucket};

  HttpResponse last;
  for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
    if (attempt > 0) {
      const int base = options_.backoff_base_ms << (attempt - 1);
      std::this_thread::sleep_for(std::chrono::milliseconds(jitter_ms(base)));
    }
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++audit_.network_requests;
    }
    last = options_.http(http);  // byte-identical payload on every attempt
    if (last.transport_failed || retryable_status(last.status)) continue;
    break;
  }
  if (last.transport_failed)
    throw Error(ErrorKind::Transport,
                "transport failed after " +
                    std::to_string(options_.max_attempts) + " attempts to " +
                    http.url);
  if (retryable_status(last.status))
    throw Error(ErrorKind::Transport,
                "provider kept returning " + std::to_string(last.status) +
                    " after " + std::to_string(options_.max_attempts) +
                    " attempts");
  if (last.status != 200)
    throw Error(ErrorKind::Provider,
                "provider returned " + std::to_string(last.status) + ": " +
                    last.body);

  ChatResponse out;
  try {
    const json j = json::parse(last.body);
    switch (spec.kind) {
      case ProviderKind::OpenAiCompatible:
        out.text = j.at("choices").at(0).at("message").at("content")
                       .get<std::string>();
        if (j.contains("usage")) {
          out.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
          out.completion_tokens =
              j["usage"].value("completion_tokens", std::int64_t{0});
        }
        break;
      case ProviderKind::AnthropicCompatible:
        for (const auto& block : j.at("content"))
          if (block.value("type", std::string("text")) == "text")
            out.text += block.at("text").get<std::string>();
        if (j.contains("usage")) {
          out.prompt_tokens = j["usage"].value("input_tokens", std::int64_t{0});
          out.completion_tokens =
              j["usage"].value("output_tokens", std::int64_t{0});
        }
        break;
      case ProviderKind::GoogleCompatible:
        for (const auto& part :
             j.at("candidates").at(0).at("content").at("parts"))
          if (part.contains("text")) out.text += part["text"].get<std::string>();
        if (j.contains("usageMetadata")) {
          out.prompt_tokens =
              j["usageMetadata"].value("promptTokenCount", std::int64_t{0});
          out.completion_tokens =
              j["usageMetadata"].value("candidatesTokenCount", std::int64_t{0});
        }
        break;
      case ProviderKind::Mock:
        break;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Provider,
                std::string("unparseable provider response: ") + e.what() +
                    "; body: " + last.body);
  }
  if (out.text.empty())
    throw Error(ErrorKind::Provider,
                "provider returned empty text; body: " + last.body);
  return out;
}

}  // namespace simarena

