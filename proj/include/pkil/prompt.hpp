#pragma once

// Evaluating conditions by asking a text-completion endpoint yes/no questions,
// then labelling through the same rule engine used for embeddings.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "pkil/rule_engine.hpp"

namespace pkil {

inline constexpr const char* kCompletionTokenEnv = "PKIL_COMPLETION_TOKEN";
inline constexpr const char* kSentimentQuestion = "positive sentiment";

class PromptTemplate {
 public:
  /// Throws `Error{"invalid-template"}` unless {question} and {post} each
  /// occur exactly once.
  explicit PromptTemplate(std::string text);

  /// Reads a template file; one trailing newline is dropped.
  static PromptTemplate load(const std::filesystem::path& path);
  static PromptTemplate default_template();

  const std::string& text() const noexcept { return text_; }
  std::string render(std::string_view question, std::string_view post) const;

 private:
  std::string text_;
};

enum class Verdict { satisfied, unsatisfied, abstain };
std::string to_string(Verdict v);

/// First alphabetic token, case-insensitive: "yes" -> satisfied, "no" ->
/// unsatisfied, anything else (including no token) -> abstain.
Verdict parse_response(std::string_view response);

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

/// Fixture key of a prompt: hex FNV-1a of its exact bytes.
std::string prompt_key(std::string_view prompt);

/// Serves responses from a fixture of {"key", "prompt", "response"} lines.
/// Throws `Error{"replay-miss"}` for an unrecorded prompt.
class ReplayClient final : public CompletionClient {
 public:
  explicit ReplayClient(const std::filesystem::path& fixture);
  std::string complete(const std::string& prompt) override;
  std::size_t size() const noexcept { return responses_.size(); }

 private:
  std::map<std::string, std::string> responses_;
};

/// Forwards to `inner` and appends each exchange to a fixture file.
class RecordingClient final : public CompletionClient {
 public:
  RecordingClient(CompletionClient& inner, std::filesystem::path fixture);
  std::string complete(const std::string& prompt) override;

 private:
  CompletionClient& inner_;
  std::filesystem::path fixture_;
  std::mutex mutex_;
};

/// Token bucket: `rate` tokens per second, holding at most `burst`. Starts full.
class RateLimiter {
 public:
  using Clock = std::function<double()>;          // seconds, monotonic
  using Sleeper = std::function<void(double)>;    // seconds

  RateLimiter(double rate, double burst);
  RateLimiter(double rate, double burst, Clock clock, Sleeper sleep);

  bool try_acquire();
  /// Blocks (through the sleeper) until a token is available.
  void acquire();

 private:
  void refill();

  double rate_;
  double burst_;
  double tokens_;
  double last_;
  Clock clock_;
  Sleeper sleep_;
  std::mutex mutex_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  double multiplier = 2.0;
};

struct HttpClientConfig {
  std::string url;  // e.g. http://127.0.0.1:8080/v1/completions
  std::string token_env = kCompletionTokenEnv;
  std::chrono::milliseconds timeout{30000};
  RetryPolicy retry;
  std::shared_ptr<RateLimiter> limiter;  // optional
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to a real sleep
};

/// POSTs {"prompt": ...} and reads "text" (or choices[0].text) from the JSON
/// reply. Sends "Authorization: Bearer <token>" when the token variable is
/// set; the token never appears in errors or logs. Retries transport errors,
/// 429 and 5xx with exponential backoff.
class HttpCompletionClient final : public CompletionClient {
 public:
  explicit HttpCompletionClient(HttpClientConfig config);
  std::string complete(const std::string& prompt) override;

 private:
  HttpClientConfig config_;
  std::string base_;  // scheme://host:port
  std::string path_;
};

using PromptLogger = std::function<void(const std::string&)>;

struct ConditionVerdict {
  std::string condition_id;
  Verdict verdict = Verdict::abstain;
  std::string response;
};

struct PromptPrediction {
  std::string post_id;
  LabelDecision decision;
  std::vector<ConditionVerdict> verdicts;
  std::vector<std::string> abstained;  // condition ids counted as unsatisfied
  Verdict sentiment = Verdict::abstain;
  std::string sentiment_response;
};

/// Abstentions are reported through `log` with the raw response.
Verdict evaluate_condition_by_prompt(CompletionClient& client, const PromptTemplate& tmpl,
                                     const Condition& condition, std::string_view post,
                                     const PromptLogger& log = {});

/// Asks every condition plus the sentiment probe; abstain counts as
/// unsatisfied. Throws `Error{"empty-text"}` for a blank post.
PromptPrediction prompt_predict(CompletionClient& client, const PromptTemplate& tmpl, const ProcessKnowledge& pk,
                                std::string_view post_id, std::string_view post, const PromptLogger& log = {});

Json prompt_prediction_to_json(const PromptPrediction& p);

}  // namespace pkil
