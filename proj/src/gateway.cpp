#include "sled/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "sled/templates.hpp"

namespace sled {

const char* mcqa_type_name(mcqa_type t) {
  switch (t) {
    case mcqa_type::factuality: return "Factuality";
    case mcqa_type::faithfulness: return "Faithfulness";
    case mcqa_type::other: return "Other";
    case mcqa_type::none: return "None";
  }
  return "unknown";
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  size_t begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  size_t end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::optional<int> to_int(const std::string& text) {
  std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  size_t pos = 0;
  if (t[0] == '-' || t[0] == '+') pos = 1;
  if (pos == t.size()) return std::nullopt;
  for (size_t i = pos; i < t.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(t[i]))) return std::nullopt;
  }
  try {
    return std::stoi(t);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

} // namespace

JudgeVerdict parse_mcqa_verdict(const std::string& raw) {
  JudgeVerdict verdict;
  verdict.kind = verdict_kind::mcqa;
  verdict.raw_text = raw;
  ExtractedField field = extract_field(
      raw, "Hallucination Type",
      R"re(["']?Hallucination[ _]Type["']?\s*[:=]\s*["']?([A-Za-z]+)["']?)re");
  verdict.path = field.path;
  if (field.path == parse_path::failed) return verdict;
  std::string value = lower(trim(field.value));
  if (value == "factuality") verdict.type = mcqa_type::factuality;
  else if (value == "faithfulness") verdict.type = mcqa_type::faithfulness;
  else if (value == "other") verdict.type = mcqa_type::other;
  else if (value == "none") verdict.type = mcqa_type::none;
  else {
    verdict.path = parse_path::failed;
    return verdict;
  }
  verdict.parse_failed = false;
  return verdict;
}

JudgeVerdict parse_freeform_verdict(const std::string& raw) {
  JudgeVerdict verdict;
  verdict.kind = verdict_kind::freeform;
  verdict.raw_text = raw;
  ExtractedField field =
      extract_field(raw, "score", R"re(["']?score["']?\s*[:=]\s*["']?([0-9]+)["']?)re");
  verdict.path = field.path;
  if (field.path == parse_path::failed) return verdict;
  std::optional<int> value = to_int(field.value);
  if (!value || *value < 1 || *value > 5) {
    verdict.path = parse_path::failed;
    return verdict;
  }
  verdict.score = *value;
  verdict.parse_failed = false;
  return verdict;
}

namespace {

ScoreParse parse_ranged_score(const std::string& raw, const std::string& key, int lo, int hi) {
  ScoreParse result;
  ExtractedField field =
      extract_field(raw, key, R"re("?)re" + key + R"re("?\s*[:=]\s*"?([0-9]+)"?)re");
  result.path = field.path;
  if (field.path == parse_path::failed) return result;
  std::optional<int> value = to_int(field.value);
  if (!value || *value < lo || *value > hi) {
    result.path = parse_path::failed;
    return result;
  }
  result.value = *value;
  return result;
}

} // namespace

ScoreParse parse_se_score(const std::string& raw) {
  return parse_ranged_score(raw, "equivalence_score", 0, 1);
}

ScoreParse parse_sc_score(const std::string& raw) {
  return parse_ranged_score(raw, "fluency_score", 1, 3);
}

ScoreParse parse_editability_score(const std::string& raw) {
  ScoreParse result;
  // The template demands a bare integer; accept that first.
  std::optional<int> strict = to_int(raw);
  if (strict && *strict >= 1 && *strict <= 5) {
    result.value = *strict;
    result.path = parse_path::strict_json;
    return result;
  }
  // Fallback: first standalone integer token in range.
  static const std::regex token(R"((?:^|[^0-9])([1-5])(?:[^0-9]|$))");
  std::smatch m;
  if (std::regex_search(raw, m, token)) {
    result.value = std::stoi(m[1].str());
    result.path = parse_path::regex_fallback;
    return result;
  }
  result.path = parse_path::failed;
  return result;
}

namespace {

// Runs one render-call-parse cycle, re-asking on parse failure. Transport
// exceptions from `chat` propagate.
template <typename Parse>
auto ask_until_parsed(const std::string& prompt, const ChatFn& chat, int max_retries,
                      const Parse& parse) {
  auto result = parse(chat(prompt));
  for (int retry = 0; retry < max_retries; ++retry) {
    bool failed;
    if constexpr (std::is_same_v<decltype(result), JudgeVerdict>) {
      failed = result.parse_failed;
    } else {
      failed = !result.value.has_value();
    }
    if (!failed) break;
    result = parse(chat(prompt));
  }
  return result;
}

} // namespace

JudgeVerdict judge_mcqa(const std::string& query, const std::string& response,
                        const ChatFn& chat, int max_retries) {
  std::string prompt = render_mcqa_judge(query, response);
  return ask_until_parsed(prompt, chat, max_retries, parse_mcqa_verdict);
}

JudgeVerdict judge_freeform(const std::string& query, const std::string& response,
                            const std::string& ground_truth, const ChatFn& chat,
                            int max_retries) {
  std::string prompt = render_freeform_judge(query, response, ground_truth);
  return ask_until_parsed(prompt, chat, max_retries, parse_freeform_verdict);
}

SeVerdict check_se(const QuestionRecord& x0, const std::string& x, const ChatFn& chat,
                   int max_retries) {
  std::string prompt = render_se_checker(x0, x);
  ScoreParse parsed = ask_until_parsed(prompt, chat, max_retries, parse_se_score);
  if (!parsed.value) return SeVerdict{0, true};
  return SeVerdict{*parsed.value, false};
}

std::optional<int> check_sc(const std::string& x, const ChatFn& chat, int max_retries) {
  std::string prompt = render_sc_checker(x);
  return ask_until_parsed(prompt, chat, max_retries, parse_sc_score).value;
}

std::optional<int> score_editability(const std::string& concept_keyword, const ChatFn& chat,
                                     int max_retries, std::string* diagnostic) {
  std::string prompt = render_editability(concept_keyword);
  std::string last_raw;
  auto parse_and_keep = [&last_raw](const std::string& raw) {
    last_raw = raw;
    return parse_editability_score(raw);
  };
  ScoreParse parsed = ask_until_parsed(prompt, chat, max_retries, parse_and_keep);
  if (!parsed.value && diagnostic) {
    *diagnostic = "concept '" + concept_keyword + "' dropped: no editability score in '" +
                  last_raw + "' after " + std::to_string(max_retries + 1) + " attempts";
  }
  return parsed.value;
}

ChatClient::ChatClient(ChatEndpointConfig config)
    : config_(std::move(config)),
      tokens_(config_.rate.burst),
      last_refill_(std::chrono::steady_clock::now()) {}

void ChatClient::rate_acquire() {
  if (config_.rate.requests_per_second <= 0.0) return;
  for (;;) {
    double wait_s = 0.0;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto now = std::chrono::steady_clock::now();
      double elapsed = std::chrono::duration<double>(now - last_refill_).count();
      tokens_ = std::min(config_.rate.burst,
                         tokens_ + elapsed * config_.rate.requests_per_second);
      last_refill_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait_s = (1.0 - tokens_) / config_.rate.requests_per_second;
    }
    std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
  }
}

std::string ChatClient::complete(const std::string& prompt) {
  nlohmann::json messages = nlohmann::json::array();
  messages.push_back({{"role", "user"}, {"content", prompt}});
  nlohmann::json request{{"model", config_.model},
                         {"messages", std::move(messages)},
                         {"temperature", config_.temperature}};
  std::string body = request.dump();

  const char* credential =
      config_.credential_env.empty() ? nullptr : std::getenv(config_.credential_env.c_str());
  httplib::Headers headers;
  ChatExchange exchange;
  exchange.request_body = body;
  if (credential && *credential) {
    headers.emplace("Authorization", std::string("Bearer ") + credential);
    exchange.auth_header = "Bearer ***";
  }

  httplib::Client http(config_.host, config_.port);
  http.set_connection_timeout(0, config_.timeout_ms * 1000LL);
  http.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);

  std::string failure = "no attempt made";
  oracle_fault failure_kind = oracle_fault::transport;
  for (int attempt = 0; attempt <= config_.retry.max_retries; ++attempt) {
    if (attempt > 0) {
      double backoff = config_.retry.initial_backoff_s *
                       std::pow(config_.retry.backoff_multiplier, attempt - 1);
      backoff = std::min(backoff, config_.retry.max_backoff_s);
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      ++exchange.backoffs;
      exchange.backoff_total_s += backoff;
    }
    rate_acquire();
    exchange.attempts = attempt + 1;

    httplib::Result res = http.Post(config_.path, headers, body, "application/json");
    if (!res) {
      failure_kind = res.error() == httplib::Error::ConnectionTimeout ||
                             res.error() == httplib::Error::Read
                         ? oracle_fault::timeout
                         : oracle_fault::transport;
      failure = std::string("chat transport failure: ") + httplib::to_string(res.error());
      exchange.status = 0;
      exchange.response_body = "";
      continue;
    }

    exchange.status = res->status;
    exchange.response_body = res->body;
    if (res->status == 200) {
      nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
      std::string content;
      if (reply.is_object() && reply.contains("choices") && reply["choices"].is_array() &&
          !reply["choices"].empty() && reply["choices"][0].contains("message") &&
          reply["choices"][0]["message"].contains("content") &&
          reply["choices"][0]["message"]["content"].is_string()) {
        content = reply["choices"][0]["message"]["content"].get<std::string>();
      } else {
        std::lock_guard<std::mutex> lock(mu_);
        log_.push_back(exchange);
        throw oracle_error(oracle_fault::schema,
                           "chat response is not a chat completion: " + res->body);
      }
      std::lock_guard<std::mutex> lock(mu_);
      log_.push_back(exchange);
      return content;
    }
    if (res->status == 429 || res->status >= 500) {
      failure_kind = oracle_fault::transport;
      failure = "chat endpoint returned HTTP " + std::to_string(res->status);
      continue;
    }
    // Remaining 4xx are caller errors; retrying cannot help.
    std::lock_guard<std::mutex> lock(mu_);
    log_.push_back(exchange);
    throw oracle_error(oracle_fault::transport,
                       "chat endpoint rejected the request with HTTP " +
                           std::to_string(res->status));
  }

  {
    std::lock_guard<std::mutex> lock(mu_);
    log_.push_back(exchange);
  }
  throw oracle_error(failure_kind, failure + " after " +
                                       std::to_string(config_.retry.max_retries + 1) +
                                       " attempts");
}

ChatFn ChatClient::as_fn() {
  return [this](const std::string& prompt) { return complete(prompt); };
}

std::vector<ChatExchange> ChatClient::exchanges() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_;
}

} // namespace sled
