#pragma once

#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sled/dataset.hpp"
#include "sled/oracles.hpp"
#include "sled/parse.hpp"

namespace sled {

enum class mcqa_type { factuality, faithfulness, other, none };
const char* mcqa_type_name(mcqa_type t);

enum class verdict_kind { mcqa, freeform };

// Outcome of one judge call. A parse failure is its own state: it is never
// folded into "Other" or any score, so downstream tallies can keep it apart
// from real verdicts.
struct JudgeVerdict {
  verdict_kind kind = verdict_kind::mcqa;
  bool parse_failed = true;
  mcqa_type type = mcqa_type::other;  // meaningful when kind == mcqa and !parse_failed
  int score = 0;                      // meaningful when kind == freeform and !parse_failed
  std::string raw_text;
  parse_path path = parse_path::failed;
};

struct ScoreParse {
  std::optional<int> value;  // empty on parse failure
  parse_path path = parse_path::failed;
};

// Pure parsers over raw model output. The ops below retry the chat call when
// these fail; they never throw on malformed text.
JudgeVerdict parse_mcqa_verdict(const std::string& raw);
JudgeVerdict parse_freeform_verdict(const std::string& raw);
ScoreParse parse_se_score(const std::string& raw);
ScoreParse parse_sc_score(const std::string& raw);
ScoreParse parse_editability_score(const std::string& raw);

// One chat completion: prompt in, model text out. Throws oracle_error on
// transport-level failure.
using ChatFn = std::function<std::string(const std::string&)>;

// Each op renders its role template, calls the chat endpoint, and parses the
// reply, re-asking up to max_retries extra times on parse failure. Transport
// errors propagate to the caller's skip/flag path.
JudgeVerdict judge_mcqa(const std::string& query, const std::string& response,
                        const ChatFn& chat, int max_retries = 2);
JudgeVerdict judge_freeform(const std::string& query, const std::string& response,
                            const std::string& ground_truth, const ChatFn& chat,
                            int max_retries = 2);
SeVerdict check_se(const QuestionRecord& x0, const std::string& x, const ChatFn& chat,
                   int max_retries = 2);
// Fluency score in {1,2,3}; empty means persistent parse failure.
std::optional<int> check_sc(const std::string& x, const ChatFn& chat, int max_retries = 2);
// Editability score in 1..5; empty means the concept should be dropped, with
// the reason written to diagnostic when provided.
std::optional<int> score_editability(const std::string& concept_keyword, const ChatFn& chat,
                                     int max_retries = 2, std::string* diagnostic = nullptr);

struct RetryPolicy {
  int max_retries = 3;  // extra attempts after the first, transient failures only
  double initial_backoff_s = 0.2;
  double backoff_multiplier = 2.0;
  double max_backoff_s = 5.0;
};

struct RateLimit {
  double requests_per_second = 0.0;  // <= 0 disables limiting
  double burst = 1.0;                // token bucket capacity
};

struct ChatEndpointConfig {
  std::string host = "127.0.0.1";
  int port = 443;
  std::string path = "/v1/chat/completions";
  std::string model = "judge";
  double temperature = 0.0;
  // Name of the environment variable holding the bearer token; the value is
  // read at request time and never logged.
  std::string credential_env = "SLED_API_KEY";
  RetryPolicy retry;
  RateLimit rate;
  int timeout_ms = 30000;
};

// Log record for one complete() call: the full request and final response,
// with the credential replaced by a fixed marker.
struct ChatExchange {
  std::string request_body;
  std::string auth_header;  // "Bearer ***" when a credential was attached
  int status = 0;           // 0 when no HTTP response arrived
  std::string response_body;
  int attempts = 1;
  int backoffs = 0;
  double backoff_total_s = 0.0;
};

// OpenAI-compatible chat-completion client with exponential backoff on
// transient failures (429, 5xx, transport) and a token-bucket rate limiter.
// Shareable across threads.
class ChatClient {
 public:
  explicit ChatClient(ChatEndpointConfig config);

  std::string complete(const std::string& prompt);
  ChatFn as_fn();

  std::vector<ChatExchange> exchanges() const;
  const ChatEndpointConfig& config() const { return config_; }

 private:
  void rate_acquire();

  ChatEndpointConfig config_;
  mutable std::mutex mu_;
  double tokens_;
  std::chrono::steady_clock::time_point last_refill_;
  std::vector<ChatExchange> log_;
};

} // namespace sled
