#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "ifboost/core.hpp"

namespace ifboost {

struct GenerationRequest {
  std::string system;
  std::string user;
  double temperature = 0.0;
  int max_tokens = 1024;
  int n = 1;
  std::vector<std::string> stop;
  std::string role = "generate";  // accounting label only; not sent
};

struct GenerationResult {
  std::vector<std::string> texts;
  long long prompt_tokens = 0;
  long long completion_tokens = 0;  // summed over texts
  std::string backend_id;
};

struct CostRecord {
  long long calls = 0;
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
  double est_flops = 0.0;

  CostRecord& operator+=(const CostRecord& other);
  bool operator==(const CostRecord&) const = default;
};

CostRecord operator+(CostRecord a, const CostRecord& b);
Json to_json(const CostRecord& c);
CostRecord cost_from_json(const Json& j);

/// 2 * model_params * completion_tokens. Throws for model_params <= 0.
double estimate_flops(const CostRecord& c, double model_params);

/// Thread-safe accumulator with a per-role breakdown.
class CostTracker {
 public:
  void add(const std::string& role, const CostRecord& delta);
  CostRecord total() const;
  std::map<std::string, CostRecord> by_role() const;
  void reset();

 private:
  mutable std::mutex mu_;
  CostRecord total_;
  std::map<std::string, CostRecord> roles_;
};

/// Raised by backends for failures worth retrying (5xx, 429, timeouts).
class TransientError : public Error {
 public:
  using Error::Error;
};

/// Permanent failure, including retries exhausted and malformed replies.
class GatewayError : public Error {
 public:
  using Error::Error;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual GenerationResult generate(const GenerationRequest& request) = 0;
  virtual std::string id() const = 0;
};

/// Deterministic scripted backend. Script format:
///
///   { "id": "mock-name",
///     "rules": [ { "match": { "contains": "text" | ["a", "b"],
///                             "role": "judge",
///                             "fingerprint": "<16 hex>",
///                             "ordinal": 3 },
///                  "completions": ["A", "B"],
///                  "prompt_tokens": 10,
///                  "completion_tokens": 5 | [5, 7],
///                  "errors": ["transient", "permanent", "malformed"] } ] }
///
/// The first rule whose every `match` field holds is used (an empty match is
/// a catch-all). Each (rule, fingerprint) keeps a cursor: queued `errors` are
/// raised first, then completions are served in order, wrapping around.
/// Token counts default to an estimate of one token per four bytes.
class MockBackend : public Backend {
 public:
  explicit MockBackend(Json script);
  static std::unique_ptr<MockBackend> load(const std::filesystem::path& path);

  GenerationResult generate(const GenerationRequest& request) override;
  std::string id() const override { return id_; }
  long long calls() const { return ordinal_.load(); }

 private:
  struct Rule {
    std::vector<std::string> contains;
    std::string role;
    std::string fingerprint;
    long long ordinal = -1;
    std::vector<std::string> completions;
    long long prompt_tokens = -1;
    std::vector<long long> completion_tokens;
    std::vector<std::string> errors;
  };
  struct Cursor {
    std::size_t errors = 0;
    std::size_t next = 0;
  };

  std::string id_;
  std::vector<Rule> rules_;
  std::mutex mu_;
  std::map<std::pair<std::size_t, std::string>, Cursor> cursors_;
  std::atomic<long long> ordinal_{0};
};

/// Adapter over a callable, used by tests to script arbitrary behavior.
class FunctionBackend : public Backend {
 public:
  using Fn = std::function<GenerationResult(const GenerationRequest&)>;
  FunctionBackend(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
  GenerationResult generate(const GenerationRequest& r) override { return fn_(r); }
  std::string id() const override { return id_; }

 private:
  std::string id_;
  Fn fn_;
};

struct HttpConfig {
  std::string base_url;
  std::string path;             // default chosen from `api`
  std::string model;
  std::string api = "chat";     // "chat" or "completions"
  std::string api_key_env = "IFBOOST_API_KEY";
  int timeout_s = 120;
  std::optional<std::uint64_t> seed;  // forwarded as the request "seed" field
};

/// OpenAI-compatible HTTP endpoint. Prompt templates already carry their chat
/// markers, so the text is passed through unchanged.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpConfig config);
  GenerationResult generate(const GenerationRequest& request) override;
  std::string id() const override;

  static Json request_body(const HttpConfig& config, const GenerationRequest& request);
  static GenerationResult parse_reply(const std::string& body, int expected_n,
                                      const std::string& api);

 private:
  HttpConfig config_;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};
};

struct BackendConfig {
  std::string kind = "mock";  // "mock" or "http"
  HttpConfig http;
  std::filesystem::path mock_script;
  double model_params = 70e9;
  RetryPolicy retry;
  std::size_t max_in_flight = 4;

  static BackendConfig from_json(const Json& j);
  static BackendConfig load(const std::filesystem::path& path);
  Json to_json() const;
};

/// Throws ifboost::Error for an incomplete configuration.
std::unique_ptr<Backend> make_backend(const BackendConfig& config);

/// Stable identifier for a request's prompt text (first 16 hex of SHA-256).
std::string request_fingerprint(const GenerationRequest& request);

/// Rough token estimate used when a backend reports no usage.
long long approx_tokens(std::string_view text);

/// Retrying, concurrency-limited front end over a backend. Every attempt
/// counts as a call; usage is recorded on success.
class Gateway {
 public:
  Gateway(std::unique_ptr<Backend> backend, RetryPolicy retry = {},
          std::size_t max_in_flight = 4, double model_params = 70e9);

  /// Usage is added to the run totals and, when given, to `sink` too.
  GenerationResult generate(const GenerationRequest& request,
                            CostTracker* sink = nullptr);

  const CostTracker& costs() const { return costs_; }
  std::string backend_id() const { return backend_->id(); }
  double model_params() const { return model_params_; }
  std::size_t max_in_flight() const { return max_in_flight_; }

 private:
  std::unique_ptr<Backend> backend_;
  RetryPolicy retry_;
  std::size_t max_in_flight_;
  double model_params_;
  std::counting_semaphore<1024> slots_;
  CostTracker costs_;
};

std::unique_ptr<Gateway> make_gateway(const BackendConfig& config);

}  // namespace ifboost
