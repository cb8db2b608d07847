#include "pkil/prompt.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

namespace pkil {
namespace {

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

double steady_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

}  // namespace

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
  for (const char* placeholder : {"{question}", "{post}"}) {
    const auto n = count_occurrences(text_, placeholder);
    if (n != 1) {
      throw Error("invalid-template", std::string("template must contain ") + placeholder + " exactly once (found " +
                                          std::to_string(n) + ")");
    }
  }
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  std::string text = read_file(path);
  if (!text.empty() && text.back() == '\n') text.pop_back();
  return PromptTemplate(std::move(text));
}

PromptTemplate PromptTemplate::default_template() {
  return PromptTemplate("Read the following post. Does it express: {question}? Answer yes or no.\nPost: {post}");
}

std::string PromptTemplate::render(std::string_view question, std::string_view post) const {
  // Substitute both placeholders in one left-to-right pass so that text
  // inserted for one is never scanned for the other.
  std::string out;
  std::size_t i = 0;
  while (i < text_.size()) {
    if (text_.compare(i, 10, "{question}") == 0) {
      out += question;
      i += 10;
    } else if (text_.compare(i, 6, "{post}") == 0) {
      out += post;
      i += 6;
    } else {
      out += text_[i++];
    }
  }
  return out;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::satisfied: return "satisfied";
    case Verdict::unsatisfied: return "unsatisfied";
    case Verdict::abstain: return "abstain";
  }
  return "abstain";
}

Verdict parse_response(std::string_view response) {
  std::size_t i = 0;
  while (i < response.size() && std::isalpha(static_cast<unsigned char>(response[i])) == 0) ++i;
  std::size_t j = i;
  while (j < response.size() && std::isalpha(static_cast<unsigned char>(response[j])) != 0) ++j;
  const std::string token = to_lower(response.substr(i, j - i));
  if (token == "yes") return Verdict::satisfied;
  if (token == "no") return Verdict::unsatisfied;
  return Verdict::abstain;
}

std::string prompt_key(std::string_view prompt) { return hex64(fnv1a64(prompt)); }

ReplayClient::ReplayClient(const std::filesystem::path& fixture) {
  for_each_json_line(fixture, [&](std::size_t line, const Json& rec) {
    try {
      const auto key = rec.at("key").get<std::string>();
      if (rec.contains("prompt") && prompt_key(rec.at("prompt").get<std::string>()) != key) {
        throw Error("malformed-record", fixture.string() + ":" + std::to_string(line) + ": key does not match prompt");
      }
      responses_[key] = rec.at("response").get<std::string>();
    } catch (const Json::exception& e) {
      throw Error("malformed-record", fixture.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
}

std::string ReplayClient::complete(const std::string& prompt) {
  const auto key = prompt_key(prompt);
  const auto it = responses_.find(key);
  if (it == responses_.end()) throw Error("replay-miss", "no recorded response for prompt " + key);
  return it->second;
}

RecordingClient::RecordingClient(CompletionClient& inner, std::filesystem::path fixture)
    : inner_(inner), fixture_(std::move(fixture)) {}

std::string RecordingClient::complete(const std::string& prompt) {
  std::string response = inner_.complete(prompt);
  const Json rec{{"key", prompt_key(prompt)}, {"prompt", prompt}, {"response", response}};
  std::lock_guard lock(mutex_);
  std::ofstream out(fixture_, std::ios::app | std::ios::binary);
  if (!out) throw Error("io-error", "cannot append to " + fixture_.string());
  out << rec.dump() << '\n';
  return response;
}

RateLimiter::RateLimiter(double rate, double burst)
    : RateLimiter(rate, burst, steady_seconds, [](double s) {
        std::this_thread::sleep_for(std::chrono::duration<double>(s));
      }) {}

RateLimiter::RateLimiter(double rate, double burst, Clock clock, Sleeper sleep)
    : rate_(rate), burst_(burst), tokens_(burst), clock_(std::move(clock)), sleep_(std::move(sleep)) {
  if (!(rate > 0.0) || !(burst >= 1.0)) {
    throw Error("invalid-argument", "rate limiter needs rate > 0 and burst >= 1");
  }
  last_ = clock_();
}

void RateLimiter::refill() {
  const double now = clock_();
  tokens_ = std::min(burst_, tokens_ + (now - last_) * rate_);
  last_ = now;
}

bool RateLimiter::try_acquire() {
  std::lock_guard lock(mutex_);
  refill();
  if (tokens_ < 1.0) return false;
  tokens_ -= 1.0;
  return true;
}

void RateLimiter::acquire() {
  std::unique_lock lock(mutex_);
  for (;;) {
    refill();
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const double wait = (1.0 - tokens_) / rate_;
    lock.unlock();
    sleep_(wait);
    lock.lock();
  }
}

HttpCompletionClient::HttpCompletionClient(HttpClientConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error("invalid-argument", "completion endpoint must be an absolute URL: " + config_.url);
  }
  const auto path_start = config_.url.find('/', scheme_end + 3);
  base_ = config_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.url.substr(path_start);
  if (config_.retry.max_attempts < 1) throw Error("invalid-argument", "max_attempts must be at least 1");
  if (!config_.sleep) config_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string HttpCompletionClient::complete(const std::string& prompt) {
  httplib::Client client(base_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (const char* token = std::getenv(config_.token_env.c_str()); token != nullptr && *token != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  const std::string body = Json{{"prompt", prompt}}.dump();

  std::string last_problem;
  auto backoff = config_.retry.initial_backoff;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      config_.sleep(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * config_.retry.multiplier));
    }
    if (config_.limiter) config_.limiter->acquire();
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_problem = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_problem = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error("completion-failed", "completion endpoint returned HTTP " + std::to_string(res->status));
    }
    try {
      const Json reply = Json::parse(res->body);
      if (reply.contains("text")) return reply.at("text").get<std::string>();
      return reply.at("choices").at(0).at("text").get<std::string>();
    } catch (const Json::exception&) {
      throw Error("completion-failed", "completion reply lacks a \"text\" field");
    }
  }
  throw Error("transport-failure", "completion endpoint " + base_ + path_ + " failed after " +
                                       std::to_string(config_.retry.max_attempts) + " attempts (" + last_problem +
                                       ")");
}

Verdict evaluate_condition_by_prompt(CompletionClient& client, const PromptTemplate& tmpl,
                                     const Condition& condition, std::string_view post, const PromptLogger& log) {
  if (trim(post).empty()) throw Error("empty-text", "cannot prompt about an empty post");
  const std::string response = client.complete(tmpl.render(condition.text, post));
  const Verdict v = parse_response(response);
  if (v == Verdict::abstain && log) log("abstain on " + condition.id + ": " + response);
  return v;
}

PromptPrediction prompt_predict(CompletionClient& client, const PromptTemplate& tmpl, const ProcessKnowledge& pk,
                                std::string_view post_id, std::string_view post, const PromptLogger& log) {
  if (trim(post).empty()) throw Error("empty-text", "cannot prompt about an empty post");
  PromptPrediction out;
  out.post_id = std::string(post_id);
  std::vector<bool> truths;
  for (const auto& c : pk.conditions()) {
    ConditionVerdict cv;
    cv.condition_id = c.id;
    cv.response = client.complete(tmpl.render(c.text, post));
    cv.verdict = parse_response(cv.response);
    if (cv.verdict == Verdict::abstain) {
      out.abstained.push_back(c.id);
      if (log) log("abstain on " + std::string(post_id) + "/" + c.id + ": " + cv.response);
    }
    truths.push_back(cv.verdict == Verdict::satisfied);
    out.verdicts.push_back(std::move(cv));
  }
  out.decision = hard_label(pk, truths);
  out.sentiment_response = client.complete(tmpl.render(kSentimentQuestion, post));
  out.sentiment = parse_response(out.sentiment_response);
  if (out.sentiment == Verdict::abstain && log) {
    log("abstain on " + std::string(post_id) + "/sentiment: " + out.sentiment_response);
  }
  return out;
}

Json prompt_prediction_to_json(const PromptPrediction& p) {
  Json verdicts = Json::array();
  for (const auto& v : p.verdicts) {
    verdicts.push_back({{"id", v.condition_id}, {"verdict", to_string(v.verdict)}, {"response", v.response}});
  }
  return {{"id", p.post_id},
          {"label", p.decision.label},
          {"rule_index", p.decision.rule_index ? Json(*p.decision.rule_index) : Json(nullptr)},
          {"fallback", p.decision.fallback},
          {"verdicts", verdicts},
          {"abstained", p.abstained},
          {"sentiment", to_string(p.sentiment)},
          {"sentiment_response", p.sentiment_response}};
}

}  // namespace pkil
