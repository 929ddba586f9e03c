#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

#include "ifboost/gateway.hpp"
#include "support.hpp"

using namespace ifboost;
using namespace std::chrono_literals;

namespace {

RetryPolicy no_wait(int retries = 3) {
  RetryPolicy p;
  p.max_retries = retries;
  p.initial_backoff = 0ms;
  return p;
}

Json five_way_script() {
  return Json{{"id", "mock-five"},
              {"rules",
               {{{"match", {{"role", "generate"}}},
                 {"completions", {"one", "two", "three", "four", "five"}},
                 {"prompt_tokens", 12},
                 {"completion_tokens", {3, 4, 5, 6, 7}}}}}};
}

// Local OpenAI-style endpoint that fails a configurable number of times.
class FlakyServer {
 public:
  explicit FlakyServer(int failures, int fail_status = 500) : failures_(failures) {
    server_.Post("/v1/chat/completions", [this, fail_status](const httplib::Request& req,
                                                             httplib::Response& res) {
      last_body_ = req.body;
      if (hits_++ < failures_) {
        res.status = fail_status;
        res.set_content("busy", "text/plain");
        return;
      }
      Json reply{{"choices",
                  {{{"index", 1}, {"message", {{"role", "assistant"}, {"content", "second"}}}},
                   {{"index", 0}, {"message", {{"role", "assistant"}, {"content", "first"}}}}}},
                 {"usage", {{"prompt_tokens", 21}, {"completion_tokens", 8}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FlakyServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int hits() const { return hits_.load(); }
  std::string last_body() const { return last_body_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  int failures_;
  std::atomic<int> hits_{0};
  std::string last_body_;
};

}  // namespace

TEST_CASE("mock returns n distinct completions in order with scripted usage") {
  Gateway gw(std::make_unique<MockBackend>(five_way_script()), no_wait());
  GenerationRequest req;
  req.user = "hello";
  req.n = 5;
  auto res = gw.generate(req);
  CHECK(res.texts == std::vector<std::string>{"one", "two", "three", "four", "five"});
  CHECK(res.prompt_tokens == 12);
  CHECK(res.completion_tokens == 3 + 4 + 5 + 6 + 7);
  CHECK(res.backend_id == "mock-five");
  CostRecord total = gw.costs().total();
  CHECK(total.calls == 1);
  CHECK(total.prompt_tokens == 12);
  CHECK(total.completion_tokens == 25);
}

TEST_CASE("mock cursors are per request fingerprint") {
  Json script{{"rules", {{{"match", Json::object()}, {"completions", {"A", "B"}}}}}};
  MockBackend mock(script);
  GenerationRequest a, b;
  a.user = "first prompt";
  b.user = "second prompt";
  CHECK(mock.generate(a).texts[0] == "A");
  CHECK(mock.generate(b).texts[0] == "A");
  CHECK(mock.generate(a).texts[0] == "B");
  CHECK(mock.generate(a).texts[0] == "A");
  CHECK(mock.calls() == 4);
}

TEST_CASE("mock rule matching") {
  GenerationRequest judge;
  judge.user = "please judge this";
  judge.role = "judge";
  Json script{{"rules",
               {{{"match", {{"contains", {"judge", "this"}}, {"role", "judge"}}}, {"completions", {"J"}}},
                {{"match", {{"fingerprint", request_fingerprint(judge)}}}, {"completions", {"F"}}},
                {{"match", {{"contains", "zzz"}}}, {"completions", {"Z"}}}}}};
  MockBackend mock(script);
  CHECK(mock.generate(judge).texts[0] == "J");
  judge.role = "other";
  CHECK(mock.generate(judge).texts[0] == "F");
  GenerationRequest none;
  none.user = "unmatched";
  CHECK_THROWS_AS(mock.generate(none), GatewayError);
  CHECK(request_fingerprint(none).size() == 16);
}

TEST_CASE("flops estimate") {
  CostRecord c{1, 50, 100, 0.0};
  CHECK(estimate_flops(c, 70e9) == doctest::Approx(1.4e13));
  CHECK_THROWS_AS(estimate_flops(c, 0.0), Error);
}

TEST_CASE("cost records are additive") {
  Gateway gw(std::make_unique<MockBackend>(five_way_script()), no_wait(), 4, 70e9);
  CostTracker sink;
  GenerationRequest req;
  req.n = 2;
  req.user = "x";
  gw.generate(req, &sink);  // tokens 3 + 4
  gw.generate(req, &sink);  // tokens 5 + 6
  CostRecord t = sink.total();
  CHECK(t.calls == 2);
  CHECK(t.completion_tokens == 18);
  CHECK(t.prompt_tokens == 24);
  CHECK(t.est_flops == doctest::Approx(2 * 70e9 * 18));
  CHECK(sink.by_role().at("generate") == t);
  CHECK(gw.costs().total() == t);

  CostRecord a{1, 2, 3, 4.0}, b{10, 20, 30, 40.0};
  CHECK((a + b) == CostRecord{11, 22, 33, 44.0});
  CHECK(cost_from_json(to_json(a + b)) == a + b);
}

TEST_CASE("transient failures are retried and every attempt is a call") {
  Json script{{"rules",
               {{{"match", Json::object()},
                 {"errors", {"transient", "transient"}},
                 {"completions", {"ok"}},
                 {"completion_tokens", 2}}}}};
  Gateway gw(std::make_unique<MockBackend>(script), no_wait());
  GenerationRequest req;
  req.user = "x";
  CHECK(gw.generate(req).texts[0] == "ok");
  CostRecord t = gw.costs().total();
  CHECK(t.calls == 3);
  CHECK(t.completion_tokens == 2);
}

TEST_CASE("retries are bounded and permanent failures are not retried") {
  Json flaky{{"rules",
              {{{"match", Json::object()},
                {"errors", {"transient", "transient", "transient"}},
                {"completions", {"late"}}}}}};
  Gateway gw(std::make_unique<MockBackend>(flaky), no_wait(1));
  GenerationRequest req;
  req.user = "x";
  CHECK_THROWS_AS(gw.generate(req), GatewayError);
  CHECK(gw.costs().total().calls == 2);

  Json broken{{"rules", {{{"match", Json::object()}, {"errors", {"permanent"}}, {"completions", {"x"}}}}}};
  Gateway gw2(std::make_unique<MockBackend>(broken), no_wait());
  CHECK_THROWS_AS(gw2.generate(req), GatewayError);
  CHECK(gw2.costs().total().calls == 1);
  CHECK(gw2.costs().total().completion_tokens == 0);
}

TEST_CASE("request validation") {
  Gateway gw(std::make_unique<MockBackend>(five_way_script()), no_wait());
  GenerationRequest req;
  req.n = 0;
  CHECK_THROWS_AS(gw.generate(req), Error);
  req.n = 1;
  req.temperature = -0.5;
  CHECK_THROWS_AS(gw.generate(req), Error);
  CHECK(gw.costs().total().calls == 0);
}

TEST_CASE("concurrency never exceeds the in-flight limit") {
  std::atomic<int> current{0}, peak{0};
  auto fn = [&](const GenerationRequest&) {
    int now = ++current;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(5ms);
    --current;
    GenerationResult r;
    r.texts = {"x"};
    r.completion_tokens = 1;
    return r;
  };
  Gateway gw(std::make_unique<FunctionBackend>("fn", fn), no_wait(), 3);
  std::vector<std::jthread> workers;
  for (int t = 0; t < 12; ++t) {
    workers.emplace_back([&] {
      for (int k = 0; k < 4; ++k) gw.generate(GenerationRequest{});
    });
  }
  workers.clear();
  CHECK(peak.load() <= 3);
  CHECK(peak.load() >= 2);
  CHECK(gw.costs().total().calls == 48);
}

TEST_CASE("http backend retries 5xx and parses an OpenAI-style reply") {
  FlakyServer server(3);
  HttpConfig cfg;
  cfg.base_url = server.url();
  cfg.model = "test-model";
  cfg.seed = 42;
  Gateway gw(std::make_unique<HttpBackend>(cfg), no_wait(3));
  GenerationRequest req;
  req.system = "sys";
  req.user = "hi";
  req.n = 2;
  auto res = gw.generate(req);
  CHECK(res.texts == std::vector<std::string>{"first", "second"});
  CHECK(res.prompt_tokens == 21);
  CHECK(res.completion_tokens == 8);
  CHECK(server.hits() == 4);
  CHECK(gw.costs().total().calls == 4);
  CHECK(gw.costs().total().completion_tokens == 8);

  Json sent = Json::parse(server.last_body());
  CHECK(sent.at("model") == "test-model");
  CHECK(sent.at("n") == 2);
  CHECK(sent.at("seed") == 42);
  CHECK(sent.at("messages").size() == 2);
}

TEST_CASE("http client errors are permanent") {
  FlakyServer server(1, 400);
  HttpConfig cfg;
  cfg.base_url = server.url();
  cfg.model = "m";
  Gateway gw(std::make_unique<HttpBackend>(cfg), no_wait(3));
  CHECK_THROWS_AS(gw.generate(GenerationRequest{}), GatewayError);
  CHECK(server.hits() == 1);
}

TEST_CASE("reply parsing rejects malformed bodies") {
  CHECK_THROWS_AS(HttpBackend::parse_reply("not json", 1, "chat"), GatewayError);
  CHECK_THROWS_AS(HttpBackend::parse_reply(R"({"choices": []})", 1, "chat"), GatewayError);
  auto r = HttpBackend::parse_reply(R"({"choices": [{"text": "abcdefgh"}]})", 1, "completions");
  CHECK(r.texts[0] == "abcdefgh");
  CHECK(r.completion_tokens == 2);
}

TEST_CASE("backend configuration") {
  BackendConfig c = BackendConfig::from_json(
      {{"kind", "http"}, {"base_url", "http://localhost:1"}, {"model", "m"},
       {"max_in_flight", 2}, {"retry", {{"max_retries", 5}, {"initial_backoff_ms", 10}}}});
  CHECK(c.kind == "http");
  CHECK(c.max_in_flight == 2);
  CHECK(c.retry.max_retries == 5);
  CHECK(c.retry.initial_backoff == 10ms);
  CHECK(BackendConfig::from_json(c.to_json()).to_json() == c.to_json());
  BackendConfig missing;
  missing.kind = "http";
  CHECK_THROWS_AS(make_backend(missing), Error);
}
