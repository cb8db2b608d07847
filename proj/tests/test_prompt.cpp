#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "pkil/prompt.hpp"
#include "support.hpp"

using namespace pkil;

namespace {

// Completion endpoint on a background thread.
class StubServer {
 public:
  explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/completions"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

// Answers from a fixed table keyed on substrings of the prompt.
class ScriptedClient final : public CompletionClient {
 public:
  using Rules = std::vector<std::pair<std::string, std::string>>;
  explicit ScriptedClient(Rules rules) : rules_(std::move(rules)) {}
  std::string complete(const std::string& prompt) override {
    prompts.push_back(prompt);
    for (const auto& [needle, answer] : rules_) {
      if (prompt.find(needle) != std::string::npos) return answer;
    }
    return "No.";
  }
  std::vector<std::string> prompts;

 private:
  std::vector<std::pair<std::string, std::string>> rules_;
};

HttpClientConfig fast_config(const std::string& url, std::vector<std::chrono::milliseconds>* sleeps = nullptr) {
  HttpClientConfig cfg;
  cfg.url = url;
  cfg.timeout = std::chrono::milliseconds(2000);
  cfg.token_env = "PKIL_TEST_COMPLETION_TOKEN";
  cfg.sleep = [sleeps](std::chrono::milliseconds d) {
    if (sleeps) sleeps->push_back(d);
  };
  return cfg;
}

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST_CASE("templates") {
  const PromptTemplate t("Q: {question}\nP: {post}");
  CHECK(t.render("Wish to be dead", "I am tired.") == "Q: Wish to be dead\nP: I am tired.");
  // Substituted text is not re-scanned.
  CHECK(t.render("{post}", "{question}") == "Q: {post}\nP: {question}");
  CHECK(error_code([] { PromptTemplate("no placeholders"); }) == "invalid-template");
  CHECK(error_code([] { PromptTemplate("{question} {question} {post}"); }) == "invalid-template");
  CHECK(error_code([] { PromptTemplate("{question}"); }) == "invalid-template");
  CHECK_NOTHROW(PromptTemplate::default_template());
  const auto shipped = PromptTemplate::load(testing::data_path("prompt_template.txt"));
  CHECK(shipped.text() == PromptTemplate::default_template().text());
}

TEST_CASE("response parsing") {
  CHECK(parse_response("Yes.") == Verdict::satisfied);
  CHECK(parse_response("  yes, clearly") == Verdict::satisfied);
  CHECK(parse_response("YES") == Verdict::satisfied);
  CHECK(parse_response("No") == Verdict::unsatisfied);
  CHECK(parse_response("\n- no.") == Verdict::unsatisfied);
  CHECK(parse_response("Maybe") == Verdict::abstain);
  CHECK(parse_response("Yesterday was hard") == Verdict::abstain);
  CHECK(parse_response("Not sure") == Verdict::abstain);
  CHECK(parse_response("") == Verdict::abstain);
  CHECK(parse_response("42") == Verdict::abstain);
}

TEST_CASE("prompt labels go through the rule engine") {
  const auto pk = load_pk(testing::data_path("cssrs.pk").string());
  const auto tmpl = PromptTemplate::default_template();
  ScriptedClient client(ScriptedClient::Rules{{"express: Wish to be dead?", "Yes"}});
  std::vector<std::string> logged;
  const auto p = prompt_predict(client, tmpl, pk, "x", "Some post.", [&](const std::string& m) { logged.push_back(m); });
  CHECK(p.decision.label == "indication");
  CHECK(client.prompts.size() == 7);  // six conditions plus the sentiment probe
  CHECK(client.prompts.back().find(kSentimentQuestion) != std::string::npos);
  CHECK(p.abstained.empty());
  CHECK(logged.empty());

  ScriptedClient all(ScriptedClient::Rules{{"express:", "yes"}});
  CHECK(prompt_predict(all, tmpl, pk, "x", "Some post.").decision.label == "attempt");

  ScriptedClient unsure(ScriptedClient::Rules{{"express: Wish to be dead?", "I cannot tell"}, {"express:", "yes"}});
  const auto u = prompt_predict(unsure, tmpl, pk, "x", "Some post.", [&](const std::string& m) { logged.push_back(m); });
  CHECK(u.abstained == std::vector<std::string>{"C1"});
  CHECK(u.decision.no_match());  // abstain counts as unsatisfied; every rule needs C1
  REQUIRE(logged.size() == 1);
  CHECK(logged[0].find("C1") != std::string::npos);
  CHECK(logged[0].find("I cannot tell") != std::string::npos);

  CHECK(error_code([&] { prompt_predict(client, tmpl, pk, "x", "  "); }) == "empty-text");
  const auto j = prompt_prediction_to_json(p);
  CHECK(j.at("label") == "indication");
  CHECK(j.at("verdicts").size() == 6);
}

TEST_CASE("replay fixtures reproduce the label mapping offline") {
  const auto tmpl = PromptTemplate::load(testing::data_path("prompt_template.txt"));
  struct Case {
    const char* pk;
    const char* replay;
    const char* posts;
  };
  for (const Case& c : {Case{"cssrs.pk", "fixtures/cssrs_replay.jsonl", "fixtures/cssrs_prompt_posts.jsonl"},
                        Case{"phq9.pk", "fixtures/phq9_replay.jsonl", "fixtures/phq9_prompt_posts.jsonl"}}) {
    const auto pk = load_pk(testing::data_path(c.pk).string());
    ReplayClient client(testing::data_path(c.replay));
    CHECK(client.size() > 0);
    std::size_t checked = 0;
    for_each_json_line(testing::data_path(c.posts), [&](std::size_t, const Json& rec) {
      const auto p = prompt_predict(client, tmpl, pk, rec.at("id").get<std::string>(), rec.at("text").get<std::string>());
      if (rec.contains("label")) {
        CHECK(p.decision.label == rec.at("label").get<std::string>());
        CHECK(p.abstained.empty());
      } else {
        CHECK(p.decision.no_match());
        CHECK(p.abstained.size() == pk.condition_count());
      }
      ++checked;
    });
    CHECK(checked >= 3);
  }
}

TEST_CASE("replay misses and bad fixtures") {
  testing::TempDir dir;
  write_file(dir / "r.jsonl", "{\"key\":\"" + prompt_key("hello") + "\",\"prompt\":\"hello\",\"response\":\"yes\"}\n");
  ReplayClient client(dir / "r.jsonl");
  CHECK(client.complete("hello") == "yes");
  CHECK(error_code([&] { client.complete("hello!"); }) == "replay-miss");
  write_file(dir / "bad.jsonl", "{\"key\":\"0000\",\"prompt\":\"hello\",\"response\":\"yes\"}\n");
  CHECK(error_code([&] { ReplayClient bad(dir / "bad.jsonl"); }) == "malformed-record");
  CHECK(prompt_key("hello") == hex64(fnv1a64("hello")));
}

TEST_CASE("recording then replaying gives the same answers") {
  testing::TempDir dir;
  ScriptedClient inner(ScriptedClient::Rules{{"alpha", "Yes"}, {"beta", "No"}});
  {
    RecordingClient rec(inner, dir / "rec.jsonl");
    CHECK(rec.complete("alpha prompt") == "Yes");
    CHECK(rec.complete("beta prompt") == "No");
  }
  ReplayClient replay(dir / "rec.jsonl");
  CHECK(replay.size() == 2);
  CHECK(replay.complete("alpha prompt") == "Yes");
  CHECK(replay.complete("beta prompt") == "No");
}

TEST_CASE("rate limiter with a fake clock") {
  double now = 0.0;
  std::vector<double> sleeps;
  RateLimiter lim(2.0, 3.0, [&] { return now; }, [&](double s) {
    sleeps.push_back(s);
    now += s;
  });
  CHECK(lim.try_acquire());
  CHECK(lim.try_acquire());
  CHECK(lim.try_acquire());
  CHECK_FALSE(lim.try_acquire());
  now += 0.5;  // one token at 2/s
  CHECK(lim.try_acquire());
  CHECK_FALSE(lim.try_acquire());
  now += 100.0;  // capped at burst
  for (int i = 0; i < 3; ++i) CHECK(lim.try_acquire());
  CHECK_FALSE(lim.try_acquire());
  lim.acquire();
  REQUIRE(sleeps.size() == 1);
  CHECK(sleeps[0] == doctest::Approx(0.5));
  CHECK_THROWS(RateLimiter(0.0, 1.0));
  CHECK_THROWS(RateLimiter(1.0, 0.5));
}

TEST_CASE("http client: text and choices replies, bearer token") {
  std::atomic<int> calls{0};
  std::string seen_auth;
  std::string seen_prompt;
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    const int n = ++calls;
    seen_auth = req.get_header_value("Authorization");
    seen_prompt = Json::parse(req.body).at("prompt").get<std::string>();
    if (n == 1) {
      res.set_content(R"({"text":" Yes."})", "application/json");
    } else {
      res.set_content(R"({"choices":[{"text":"no"}]})", "application/json");
    }
  });
  ::setenv("PKIL_TEST_COMPLETION_TOKEN", "s3cret-token", 1);
  HttpCompletionClient client(fast_config(server.url()));
  CHECK(client.complete("first") == " Yes.");
  CHECK(seen_auth == "Bearer s3cret-token");
  CHECK(seen_prompt == "first");
  CHECK(client.complete("second") == "no");
  ::unsetenv("PKIL_TEST_COMPLETION_TOKEN");
  CHECK(client.complete("third") == "no");
  CHECK(seen_auth.empty());
}

TEST_CASE("http client retries 429 and 5xx with backoff") {
  std::atomic<int> calls{0};
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    const int n = ++calls;
    if (n == 1) {
      res.status = 429;
    } else if (n == 2) {
      res.status = 503;
    } else {
      res.set_content(R"({"text":"yes"})", "application/json");
    }
  });
  std::vector<std::chrono::milliseconds> sleeps;
  HttpCompletionClient client(fast_config(server.url(), &sleeps));
  CHECK(client.complete("p") == "yes");
  CHECK(calls == 3);
  REQUIRE(sleeps.size() == 2);
  CHECK(sleeps[0].count() == 250);
  CHECK(sleeps[1].count() == 500);
}

TEST_CASE("http client gives up and never leaks the token") {
  StubServer server([&](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  ::setenv("PKIL_TEST_COMPLETION_TOKEN", "very-private-value", 1);
  std::vector<std::chrono::milliseconds> sleeps;
  HttpCompletionClient client(fast_config(server.url(), &sleeps));
  try {
    client.complete("p");
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.code() == "transport-failure");
    CHECK(std::string(e.what()).find("very-private-value") == std::string::npos);
    CHECK(std::string(e.what()).find("500") != std::string::npos);
  }
  CHECK(sleeps.size() == 2);
  ::unsetenv("PKIL_TEST_COMPLETION_TOKEN");
}

TEST_CASE("http client: client errors are not retried; bad bodies fail") {
  std::atomic<int> calls{0};
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    if (Json::parse(req.body).at("prompt") == "bad") {
      res.set_content(R"({"nothing":1})", "application/json");
    } else {
      res.status = 401;
    }
  });
  HttpCompletionClient client(fast_config(server.url()));
  CHECK(error_code([&] { client.complete("p"); }) == "completion-failed");
  CHECK(calls == 1);
  CHECK(error_code([&] { client.complete("bad"); }) == "completion-failed");
}

TEST_CASE("http client: unreachable endpoint is a transport failure") {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto cfg = fast_config("http://127.0.0.1:" + std::to_string(port) + "/v1/completions");
  cfg.retry.max_attempts = 2;
  HttpCompletionClient client(cfg);
  CHECK(error_code([&] { client.complete("p"); }) == "transport-failure");
  HttpClientConfig bad_cfg;
  bad_cfg.url = "not a url";
  CHECK(error_code([&] { HttpCompletionClient bad(bad_cfg); }) == "invalid-argument");
}

TEST_CASE("http client honours the rate limiter") {
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"text":"yes"})", "application/json");
  });
  double now = 0.0;
  std::vector<double> waits;
  auto cfg = fast_config(server.url());
  cfg.limiter = std::make_shared<RateLimiter>(1.0, 1.0, [&] { return now; }, [&](double s) {
    waits.push_back(s);
    now += s;
  });
  HttpCompletionClient client(cfg);
  client.complete("a");
  client.complete("b");
  client.complete("c");
  CHECK(waits.size() == 2);
}
