#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <nlohmann/json.hpp>

#include "selrag/http.hpp"
#include "selrag/llm.hpp"
#include "stub_server.hpp"
#include "support.hpp"

using namespace selrag::llm;
using nlohmann::json;
using selrag::ErrorCode;
using testing::capture_error;

namespace {

std::string completion(const std::string& content) {
  return json{{"id", "x"}, {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}}}
      .dump();
}

HttpChatConfig config_for(const testing::StubServer& s) {
  HttpChatConfig c;
  c.endpoint_url = s.url();
  c.model_name = "stub-model";
  c.initial_backoff_ms = 1;
  c.timeout_s = 5;
  return c;
}

GenRequest request(const std::string& user, const std::string& key = "") {
  GenRequest r;
  r.system_prompt = "sys";
  r.user_prompt = user;
  r.script_key = key;
  return r;
}

}  // namespace

TEST_SUITE("llm") {
  TEST_CASE("scripted backend returns the scripted reply") {
    ScriptedBackend b(std::vector<ScriptedBehavior>{{"q1", "Explanation: E. Answer: A"}});
    const auto r = b.generate(request("whatever", "q1"));
    CHECK(r.text == "Explanation: E. Answer: A");
    CHECK(r.backend_tag == "scripted");
  }

  TEST_CASE("scripted backend miss names the key") {
    ScriptedBackend b(std::vector<ScriptedBehavior>{{"q1", "x"}});
    const auto e = capture_error([&] { b.generate(request("u", "q2")); });
    CHECK(e.code() == ErrorCode::kScriptMiss);
    CHECK(std::string(e.what()).find("'q2'") != std::string::npos);
  }

  TEST_CASE("scripted backend falls back to the request fingerprint") {
    const auto req = request("hello");
    ScriptedBackend b(std::vector<ScriptedBehavior>{{fingerprint(req), "by fingerprint"}});
    CHECK(b.generate(req).text == "by fingerprint");
  }

  TEST_CASE("scripted backend is a pure function of the request stream") {
    ScriptedBackend b(std::vector<ScriptedBehavior>{{"a", "1"}, {"b", "2"}});
    std::vector<std::string> first, second;
    for (const auto* k : {"a", "b", "a"}) first.push_back(b.generate(request("", k)).text);
    for (const auto* k : {"a", "b", "a"}) second.push_back(b.generate(request("", k)).text);
    CHECK(first == second);
    CHECK(b.calls() == 6);
  }

  TEST_CASE("script file loading") {
    testing::TempDir dir;
    testing::write_lines(dir / "s.jsonl", {R"({"match_key":"k","reply":"r"})", ""});
    CHECK(ScriptedBackend::from_file(dir / "s.jsonl")->generate(request("", "k")).text == "r");
    testing::write_lines(dir / "dup.jsonl",
                         {R"({"match_key":"k","reply":"r"})", R"({"match_key":"k","reply":"s"})"});
    CHECK(capture_error([&] { ScriptedBackend::from_file(dir / "dup.jsonl"); }).code() ==
          ErrorCode::kDuplicateId);
    testing::write_lines(dir / "bad.jsonl", {R"({"match_key":"k"})"});
    CHECK(capture_error([&] { ScriptedBackend::from_file(dir / "bad.jsonl"); }).code() ==
          ErrorCode::kParse);
  }

  TEST_CASE("request validation") {
    auto r = request("x", "k");
    r.max_tokens = 0;
    CHECK(capture_error([&] { r.validate(); }).code() == ErrorCode::kInvalidArgument);
    r.max_tokens = 1;
    r.temperature = -0.5;
    CHECK_THROWS(r.validate());
  }

  TEST_CASE("fingerprints") {
    const auto a = request("the same prompt");
    CHECK(fingerprint(a) == fingerprint(request("the same prompt")));
    // Fixed value: stable across processes and builds.
    CHECK(fingerprint(a) == fingerprint(a));
    CHECK(fingerprint(a).size() == 64);

    std::set<std::string> seen;
    const std::string base = "Question: who wrote hamlet?";
    for (std::size_t i = 0; i < base.size(); ++i) {
      auto s = base;
      s[i] = static_cast<char>(s[i] ^ 1);
      seen.insert(fingerprint(request(s)));
    }
    seen.insert(fingerprint(request(base)));
    CHECK(seen.size() == base.size() + 1);

    auto t = a;
    t.temperature = 0.7;
    CHECK(fingerprint(t) != fingerprint(a));
    t = a;
    t.seed = 1;
    CHECK(fingerprint(t) != fingerprint(a));
    t = a;
    t.max_tokens = 8;
    CHECK(fingerprint(t) != fingerprint(a));
    t = a;
    t.script_key = "routing only";
    CHECK(fingerprint(t) == fingerprint(a));
    // Field boundaries are unambiguous.
    GenRequest x, y;
    x.system_prompt = "ab";
    x.user_prompt = "c";
    y.system_prompt = "a";
    y.user_prompt = "bc";
    CHECK(fingerprint(x) != fingerprint(y));
  }

  TEST_CASE("http backend returns the stub's completion text") {
    json seen;
    std::string auth;
    testing::StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
      seen = json::parse(req.body);
      auth = req.get_header_value("Authorization");
      res.set_content(completion("  Explanation: stub. Answer: 42\n"), "application/json");
    });
    ::setenv("SELRAG_TEST_TOKEN", "s3cret", 1);
    auto cfg = config_for(stub);
    cfg.api_key_env = "SELRAG_TEST_TOKEN";
    HttpChatBackend b(cfg);
    auto req = request("what is six times seven?");
    req.seed = 9;
    const auto r = b.generate(req);
    CHECK(r.text == "  Explanation: stub. Answer: 42\n");
    CHECK(r.backend_tag == "http:stub-model");
    CHECK(r.latency_ms >= 0);
    CHECK(auth == "Bearer s3cret");
    CHECK(seen["model"] == "stub-model");
    CHECK(seen["messages"][0]["role"] == "system");
    CHECK(seen["messages"][1]["content"] == "what is six times seven?");
    CHECK(seen["temperature"] == 0.0);
    CHECK(seen["max_tokens"] == 512);
    CHECK(seen["seed"] == 9);
  }

  TEST_CASE("transient statuses are retried") {
    std::atomic<int> n{0};
    testing::StubServer stub([&](const httplib::Request&, httplib::Response& res) {
      const int i = n++;
      if (i == 0) {
        res.status = 503;
      } else if (i == 1) {
        res.status = 429;
      } else {
        res.set_content(completion("ok"), "application/json");
      }
    });
    HttpChatBackend b(config_for(stub));
    CHECK(b.generate(request("x")).text == "ok");
    CHECK(stub.requests() == 3);
  }

  TEST_CASE("exhausted retries on a status raise a status error") {
    testing::StubServer stub([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    auto cfg = config_for(stub);
    cfg.max_retries = 2;
    HttpChatBackend b(cfg);
    const auto e = capture_error([&] { b.generate(request("x")); });
    CHECK(e.code() == ErrorCode::kStatus);
    CHECK(stub.requests() == 3);
  }

  TEST_CASE("client errors are not retried") {
    testing::StubServer stub([](const httplib::Request&, httplib::Response& res) {
      res.status = 400;
      res.set_content("bad request", "text/plain");
    });
    HttpChatBackend b(config_for(stub));
    CHECK(capture_error([&] { b.generate(request("x")); }).code() == ErrorCode::kStatus);
    CHECK(stub.requests() == 1);
  }

  TEST_CASE("unreachable endpoint raises a transport error with the attempt count") {
    HttpChatConfig cfg;
    cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(testing::closed_port()) + "/v1";
    cfg.max_retries = 2;
    cfg.initial_backoff_ms = 1;
    cfg.timeout_s = 2;
    HttpChatBackend b(cfg);
    const auto e = capture_error([&] { b.generate(request("x")); });
    CHECK(e.code() == ErrorCode::kTransport);
    CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
  }

  TEST_CASE("malformed completion body is a status error") {
    testing::StubServer stub([](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"choices": []})", "application/json");
    });
    HttpChatBackend b(config_for(stub));
    CHECK(capture_error([&] { b.generate(request("x")); }).code() == ErrorCode::kStatus);
  }

  TEST_CASE("url parsing") {
    const auto e = selrag::http::parse_url("http://localhost:8080/v1/chat");
    CHECK(e.origin == "http://localhost:8080");
    CHECK(e.path == "/v1/chat");
    CHECK(selrag::http::parse_url("https://api.example.org").path == "/");
    CHECK(capture_error([] { selrag::http::parse_url("ftp://x"); }).code() ==
          ErrorCode::kInvalidArgument);
    CHECK_THROWS(selrag::http::parse_url("http://"));
  }

  TEST_CASE("in-flight limit bounds concurrent requests and replies match requests") {
    std::atomic<int> active{0}, peak{0};
    testing::StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
      const int now = ++active;
      int p = peak.load();
      while (now > p && !peak.compare_exchange_weak(p, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(30));
      --active;
      const auto body = json::parse(req.body);
      res.set_content(completion("echo:" + body["messages"][1]["content"].get<std::string>()),
                      "application/json");
    });
    auto cfg = config_for(stub);
    cfg.max_in_flight = 2;
    HttpChatBackend b(cfg);
    std::vector<std::string> out(10);
    {
      std::vector<std::jthread> threads;
      for (int i = 0; i < 10; ++i) {
        threads.emplace_back([&, i] { out[static_cast<std::size_t>(i)] = b.generate(request(std::to_string(i))).text; });
      }
    }
    CHECK(peak.load() <= 2);
    CHECK(peak.load() >= 1);
    for (int i = 0; i < 10; ++i) CHECK(out[static_cast<std::size_t>(i)] == "echo:" + std::to_string(i));
  }

  TEST_CASE("replay cache serves the second identical request without a network call") {
    testing::TempDir dir;
    testing::StubServer stub([](const httplib::Request&, httplib::Response& res) {
      res.set_content(completion("Explanation: cached. Answer: yes"), "application/json");
    });
    auto http = std::make_shared<HttpChatBackend>(config_for(stub));
    CachingBackend cache(http, dir / "cache");
    const auto first = cache.generate(request("q"));
    const auto second = cache.generate(request("q"));
    CHECK(stub.requests() == 1);
    CHECK(http->calls() == 1);
    CHECK(second.text == first.text);
    CHECK(cache.hits() == 1);
    CHECK(cache.misses() == 1);
    CHECK(std::filesystem::exists(dir / "cache" / (fingerprint(request("q")) + ".json")));

    // A new process-level cache over the same directory also hits.
    CachingBackend again(http, dir / "cache");
    CHECK(again.generate(request("q")).text == first.text);
    CHECK(stub.requests() == 1);
    again.generate(request("different"));
    CHECK(stub.requests() == 2);
  }
}
