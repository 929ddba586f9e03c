#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "ifboost/gateway.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "ifboost/templates.hpp"

namespace ifboost {

CostRecord& CostRecord::operator+=(const CostRecord& o) {
  calls += o.calls;
  prompt_tokens += o.prompt_tokens;
  completion_tokens += o.completion_tokens;
  est_flops += o.est_flops;
  return *this;
}

CostRecord operator+(CostRecord a, const CostRecord& b) { return a += b; }

Json to_json(const CostRecord& c) {
  return Json{{"calls", c.calls},
              {"prompt_tokens", c.prompt_tokens},
              {"completion_tokens", c.completion_tokens},
              {"est_flops", c.est_flops}};
}

CostRecord cost_from_json(const Json& j) {
  CostRecord c;
  c.calls = j.value("calls", 0LL);
  c.prompt_tokens = j.value("prompt_tokens", 0LL);
  c.completion_tokens = j.value("completion_tokens", 0LL);
  c.est_flops = j.value("est_flops", 0.0);
  return c;
}

double estimate_flops(const CostRecord& c, double model_params) {
  if (!(model_params > 0)) throw Error("model_params must be positive");
  return 2.0 * model_params * static_cast<double>(c.completion_tokens);
}

void CostTracker::add(const std::string& role, const CostRecord& delta) {
  std::lock_guard lock(mu_);
  total_ += delta;
  roles_[role] += delta;
}

CostRecord CostTracker::total() const {
  std::lock_guard lock(mu_);
  return total_;
}

std::map<std::string, CostRecord> CostTracker::by_role() const {
  std::lock_guard lock(mu_);
  return roles_;
}

void CostTracker::reset() {
  std::lock_guard lock(mu_);
  total_ = {};
  roles_.clear();
}

std::string request_fingerprint(const GenerationRequest& r) {
  return templates::sha256_hex(r.system + "\x1e" + r.user).substr(0, 16);
}

long long approx_tokens(std::string_view text) {
  return static_cast<long long>((text.size() + 3) / 4);
}

// ---------------------------------------------------------------------------
// Mock

namespace {

std::vector<std::string> string_or_list(const Json& j) {
  if (j.is_string()) return {j.get<std::string>()};
  return j.get<std::vector<std::string>>();
}

}  // namespace

MockBackend::MockBackend(Json script) {
  try {
    id_ = script.value("id", std::string("mock"));
    for (const auto& r : script.at("rules")) {
      Rule rule;
      if (r.contains("match")) {
        const Json& m = r.at("match");
        if (m.contains("contains")) rule.contains = string_or_list(m.at("contains"));
        rule.role = m.value("role", std::string());
        rule.fingerprint = m.value("fingerprint", std::string());
        rule.ordinal = m.value("ordinal", -1LL);
      }
      if (r.contains("completions")) rule.completions = string_or_list(r.at("completions"));
      rule.prompt_tokens = r.value("prompt_tokens", -1LL);
      if (r.contains("completion_tokens")) {
        const Json& ct = r.at("completion_tokens");
        if (ct.is_number()) {
          rule.completion_tokens = {ct.get<long long>()};
        } else {
          rule.completion_tokens = ct.get<std::vector<long long>>();
        }
      }
      if (r.contains("errors")) rule.errors = r.at("errors").get<std::vector<std::string>>();
      for (const auto& e : rule.errors) {
        if (e != "transient" && e != "permanent" && e != "malformed") {
          throw Error("mock script: unknown error kind '" + e + "'");
        }
      }
      if (rule.completions.empty() && rule.errors.empty()) {
        throw Error("mock script: rule without completions or errors");
      }
      rules_.push_back(std::move(rule));
    }
  } catch (const Json::exception& e) {
    throw Error(std::string("mock script: ") + e.what());
  }
}

std::unique_ptr<MockBackend> MockBackend::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mock script " + path.string());
  try {
    return std::make_unique<MockBackend>(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw Error("mock script " + path.string() + ": " + e.what());
  }
}

GenerationResult MockBackend::generate(const GenerationRequest& request) {
  const long long ordinal = ordinal_.fetch_add(1);
  const std::string prompt = request.system + request.user;
  const std::string fp = request_fingerprint(request);

  std::size_t idx = rules_.size();
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const Rule& r = rules_[i];
    if (!r.role.empty() && r.role != request.role) continue;
    if (!r.fingerprint.empty() && r.fingerprint != fp) continue;
    if (r.ordinal >= 0 && r.ordinal != ordinal) continue;
    if (!std::all_of(r.contains.begin(), r.contains.end(), [&](const std::string& s) {
          return prompt.find(s) != std::string::npos;
        })) {
      continue;
    }
    idx = i;
    break;
  }
  if (idx == rules_.size()) {
    throw GatewayError("mock script has no rule for request " + fp + " (role " +
                       request.role + ")");
  }
  const Rule& rule = rules_[idx];

  GenerationResult out;
  out.backend_id = id_;
  {
    std::lock_guard lock(mu_);
    Cursor& cur = cursors_[{idx, fp}];
    if (cur.errors < rule.errors.size()) {
      const std::string& kind = rule.errors[cur.errors++];
      if (kind == "transient") throw TransientError("mock: scripted transient failure");
      if (kind == "permanent") throw GatewayError("mock: scripted permanent failure");
      throw GatewayError("mock: scripted malformed reply");
    }
    if (rule.completions.empty()) {
      throw GatewayError("mock: rule " + std::to_string(idx) + " has no completions left");
    }
    for (int k = 0; k < request.n; ++k) {
      const std::size_t pos = cur.next++;
      const std::string& text = rule.completions[pos % rule.completions.size()];
      out.texts.push_back(text);
      out.completion_tokens +=
          rule.completion_tokens.empty()
              ? approx_tokens(text)
              : rule.completion_tokens[pos % rule.completion_tokens.size()];
    }
  }
  out.prompt_tokens = rule.prompt_tokens >= 0 ? rule.prompt_tokens : approx_tokens(prompt);
  return out;
}

// ---------------------------------------------------------------------------
// HTTP

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw Error("http backend: base_url is required");
  if (config_.model.empty()) throw Error("http backend: model is required");
  if (config_.api != "chat" && config_.api != "completions") {
    throw Error("http backend: api must be 'chat' or 'completions'");
  }
  if (config_.path.empty()) {
    config_.path = config_.api == "chat" ? "/v1/chat/completions" : "/v1/completions";
  }
}

std::string HttpBackend::id() const { return "http:" + config_.model; }

Json HttpBackend::request_body(const HttpConfig& config, const GenerationRequest& r) {
  Json body{{"model", config.model},
            {"temperature", r.temperature},
            {"max_tokens", r.max_tokens},
            {"n", r.n}};
  if (!r.stop.empty()) body["stop"] = r.stop;
  if (config.seed) body["seed"] = *config.seed;
  if (config.api == "chat") {
    Json messages = Json::array();
    if (!r.system.empty()) messages.push_back({{"role", "system"}, {"content", r.system}});
    messages.push_back({{"role", "user"}, {"content", r.user}});
    body["messages"] = std::move(messages);
  } else {
    body["prompt"] = r.system + r.user;
  }
  return body;
}

GenerationResult HttpBackend::parse_reply(const std::string& body, int expected_n,
                                          const std::string& api) {
  GenerationResult out;
  try {
    Json j = Json::parse(body);
    const Json& choices = j.at("choices");
    std::vector<std::pair<long long, std::string>> indexed;
    for (std::size_t i = 0; i < choices.size(); ++i) {
      const Json& c = choices[i];
      long long index = c.value("index", static_cast<long long>(i));
      std::string text = api == "chat" ? c.at("message").at("content").get<std::string>()
                                       : c.at("text").get<std::string>();
      indexed.emplace_back(index, std::move(text));
    }
    std::stable_sort(indexed.begin(), indexed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [_, t] : indexed) out.texts.push_back(std::move(t));
    if (j.contains("usage") && j.at("usage").is_object()) {
      out.prompt_tokens = j.at("usage").value("prompt_tokens", 0LL);
      out.completion_tokens = j.at("usage").value("completion_tokens", 0LL);
    } else {
      for (const auto& t : out.texts) out.completion_tokens += approx_tokens(t);
    }
  } catch (const Json::exception& e) {
    throw GatewayError(std::string("malformed backend reply: ") + e.what());
  }
  if (static_cast<int>(out.texts.size()) != expected_n) {
    throw GatewayError("backend returned " + std::to_string(out.texts.size()) +
                       " completions; expected " + std::to_string(expected_n));
  }
  return out;
}

GenerationResult HttpBackend::generate(const GenerationRequest& request) {
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout_s, 0);
  client.set_read_timeout(config_.timeout_s, 0);
  client.set_write_timeout(config_.timeout_s, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = request_body(config_, request).dump();
  auto res = client.Post(config_.path, headers, body, "application/json");
  if (!res) {
    throw TransientError("http request failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw TransientError("http status " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw GatewayError("http status " + std::to_string(res->status) + ": " +
                       res->body.substr(0, 200));
  }
  GenerationResult out = parse_reply(res->body, request.n, config_.api);
  out.backend_id = id();
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

BackendConfig BackendConfig::from_json(const Json& j) {
  BackendConfig c;
  try {
    c.kind = j.value("kind", c.kind);
    c.http.base_url = j.value("base_url", std::string());
    c.http.path = j.value("path", std::string());
    c.http.model = j.value("model", std::string());
    c.http.api = j.value("api", c.http.api);
    c.http.api_key_env = j.value("api_key_env", c.http.api_key_env);
    c.http.timeout_s = j.value("timeout_s", c.http.timeout_s);
    if (j.contains("seed")) c.http.seed = j.at("seed").get<std::uint64_t>();
    c.mock_script = j.value("script", std::string());
    c.model_params = j.value("model_params", c.model_params);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    if (j.contains("retry")) {
      const Json& r = j.at("retry");
      c.retry.max_retries = r.value("max_retries", c.retry.max_retries);
      c.retry.initial_backoff = std::chrono::milliseconds(
          r.value("initial_backoff_ms", static_cast<long long>(c.retry.initial_backoff.count())));
      c.retry.multiplier = r.value("multiplier", c.retry.multiplier);
      c.retry.max_backoff = std::chrono::milliseconds(
          r.value("max_backoff_ms", static_cast<long long>(c.retry.max_backoff.count())));
    }
  } catch (const Json::exception& e) {
    throw Error(std::string("backend config: ") + e.what());
  }
  if (c.kind != "mock" && c.kind != "http") {
    throw Error("backend config: kind must be 'mock' or 'http'");
  }
  if (!(c.model_params > 0)) throw Error("backend config: model_params must be positive");
  if (c.max_in_flight < 1) throw Error("backend config: max_in_flight must be >= 1");
  if (c.retry.max_retries < 0) throw Error("backend config: max_retries must be >= 0");
  return c;
}

BackendConfig BackendConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open backend config " + path.string());
  try {
    return from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw Error("backend config " + path.string() + ": " + e.what());
  }
}

Json BackendConfig::to_json() const {
  Json j{{"kind", kind},
         {"model_params", model_params},
         {"max_in_flight", max_in_flight},
         {"retry",
          {{"max_retries", retry.max_retries},
           {"initial_backoff_ms", retry.initial_backoff.count()},
           {"multiplier", retry.multiplier},
           {"max_backoff_ms", retry.max_backoff.count()}}}};
  if (kind == "http") {
    j["base_url"] = http.base_url;
    j["path"] = http.path;
    j["model"] = http.model;
    j["api"] = http.api;
    j["api_key_env"] = http.api_key_env;
    j["timeout_s"] = http.timeout_s;
    if (http.seed) j["seed"] = *http.seed;
  } else {
    j["script"] = mock_script.string();
  }
  return j;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
  if (config.kind == "mock") {
    if (config.mock_script.empty()) throw Error("mock backend needs a script file");
    return MockBackend::load(config.mock_script);
  }
  return std::make_unique<HttpBackend>(config.http);
}

std::unique_ptr<Gateway> make_gateway(const BackendConfig& config) {
  return std::make_unique<Gateway>(make_backend(config), config.retry,
                                   config.max_in_flight, config.model_params);
}

// ---------------------------------------------------------------------------

Gateway::Gateway(std::unique_ptr<Backend> backend, RetryPolicy retry,
                 std::size_t max_in_flight, double model_params)
    : backend_(std::move(backend)),
      retry_(retry),
      max_in_flight_(std::clamp<std::size_t>(max_in_flight, 1, 1024)),
      model_params_(model_params),
      slots_(static_cast<std::ptrdiff_t>(max_in_flight_)) {
  if (!backend_) throw Error("gateway needs a backend");
  if (!(model_params_ > 0)) throw Error("model_params must be positive");
}

GenerationResult Gateway::generate(const GenerationRequest& request, CostTracker* sink) {
  if (request.n < 1) throw Error("generation request needs n >= 1");
  if (request.temperature < 0) throw Error("temperature must be >= 0");

  auto record = [&](const CostRecord& delta) {
    costs_.add(request.role, delta);
    if (sink) sink->add(request.role, delta);
  };

  auto backoff = retry_.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    std::string failure;
    {
      slots_.acquire();
      struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
      } release{slots_};
      try {
        GenerationResult res = backend_->generate(request);
        if (static_cast<int>(res.texts.size()) != request.n) {
          throw GatewayError("backend returned " + std::to_string(res.texts.size()) +
                             " completions; expected " + std::to_string(request.n));
        }
        CostRecord delta{1, res.prompt_tokens, res.completion_tokens, 0.0};
        delta.est_flops = estimate_flops(delta, model_params_);
        record(delta);
        return res;
      } catch (const TransientError& e) {
        record({1, 0, 0, 0.0});
        failure = e.what();
      } catch (const std::exception&) {
        record({1, 0, 0, 0.0});
        throw;
      }
    }
    if (attempt >= retry_.max_retries) {
      throw GatewayError("backend failed after " + std::to_string(attempt + 1) +
                         " attempt(s): " + failure);
    }
    if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
    backoff = std::min(retry_.max_backoff,
                       std::chrono::milliseconds(static_cast<long long>(
                           static_cast<double>(backoff.count()) * retry_.multiplier)));
  }
}

}  // namespace ifboost
