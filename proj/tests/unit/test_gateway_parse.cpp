#include <doctest.h>

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sled/gateway.hpp"
#include "sled/oracles.hpp"
#include "test_util.hpp"

using namespace sled;

namespace {

struct CorpusCase {
  std::string name;
  std::string role;
  std::string raw;
  std::string expect;
};

std::vector<CorpusCase> load_corpus() {
  std::ifstream in(sled_test::test_data_dir() / "corpus" / "malformed_outputs.jsonl");
  REQUIRE(in.good());
  std::vector<CorpusCase> cases;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    cases.push_back({j.at("case").get<std::string>(), j.at("role").get<std::string>(),
                     j.at("raw").get<std::string>(), j.at("expect").get<std::string>()});
  }
  return cases;
}

std::string run_case(const CorpusCase& c) {
  if (c.role == "mcqa") {
    JudgeVerdict v = parse_mcqa_verdict(c.raw);
    return v.parse_failed ? "parse_failure" : mcqa_type_name(v.type);
  }
  if (c.role == "freeform") {
    JudgeVerdict v = parse_freeform_verdict(c.raw);
    return v.parse_failed ? "parse_failure" : std::to_string(v.score);
  }
  ScoreParse parsed;
  if (c.role == "se")
    parsed = parse_se_score(c.raw);
  else if (c.role == "sc")
    parsed = parse_sc_score(c.raw);
  else if (c.role == "editability")
    parsed = parse_editability_score(c.raw);
  else
    return "unknown corpus role: " + c.role;
  return parsed.value ? std::to_string(*parsed.value) : "parse_failure";
}

// A chat stub that replays scripted outputs and records every prompt it saw.
struct ScriptedChat {
  std::vector<std::string> replies;
  std::vector<std::string> prompts;

  ChatFn fn() {
    return [this](const std::string& prompt) {
      prompts.push_back(prompt);
      size_t i = prompts.size() - 1;
      return i < replies.size() ? replies[i] : replies.back();
    };
  }
};

} // namespace

TEST_CASE("malformed-output corpus parses to the expected verdicts") {
  std::vector<CorpusCase> cases = load_corpus();
  REQUIRE(cases.size() == 34);
  for (const CorpusCase& c : cases) {
    CAPTURE(c.name);
    CAPTURE(c.raw);
    std::string got;
    REQUIRE_NOTHROW(got = run_case(c));
    CHECK(got == c.expect);
  }
}

TEST_CASE("corpus covers every parser role") {
  std::vector<CorpusCase> cases = load_corpus();
  for (const std::string role : {"mcqa", "freeform", "se", "sc", "editability"}) {
    int total = 0;
    int failures = 0;
    for (const CorpusCase& c : cases) {
      if (c.role != role) continue;
      ++total;
      if (c.expect == "parse_failure") ++failures;
    }
    CAPTURE(role);
    CHECK(total >= 5);
    CHECK(failures >= 1);
    CHECK(failures < total);
  }
}

TEST_CASE("mcqa verdict parsing") {
  SUBCASE("whole-output json reports the strict path") {
    JudgeVerdict v = parse_mcqa_verdict(R"({"Hallucination Type": "None"})");
    CHECK_FALSE(v.parse_failed);
    CHECK(v.type == mcqa_type::none);
    CHECK(v.path == parse_path::strict_json);
    CHECK(v.kind == verdict_kind::mcqa);
  }
  SUBCASE("embedded json reports the balanced-brace path") {
    JudgeVerdict v = parse_mcqa_verdict(
        R"(The answer contradicts the passage. {"Hallucination Type": "Faithfulness"})");
    CHECK_FALSE(v.parse_failed);
    CHECK(v.type == mcqa_type::faithfulness);
    CHECK(v.path == parse_path::balanced_braces);
  }
  SUBCASE("bare label reports the regex path") {
    JudgeVerdict v = parse_mcqa_verdict("Hallucination Type: Factuality");
    CHECK_FALSE(v.parse_failed);
    CHECK(v.type == mcqa_type::factuality);
    CHECK(v.path == parse_path::regex_fallback);
  }
  SUBCASE("underscore key and lowercase label still parse") {
    JudgeVerdict v = parse_mcqa_verdict("hallucination_type = other");
    CHECK_FALSE(v.parse_failed);
    CHECK(v.type == mcqa_type::other);
  }
  SUBCASE("raw text is kept for the trace") {
    JudgeVerdict v = parse_mcqa_verdict("gibberish");
    CHECK(v.parse_failed);
    CHECK(v.raw_text == "gibberish");
    CHECK(v.path == parse_path::failed);
  }
}

TEST_CASE("freeform verdict parsing") {
  SUBCASE("score range is a gate, not a retry into weaker extraction") {
    // Strict JSON finds 3.5; the gate must fail the parse outright instead of
    // letting the regex fallback fish a truncated "3" out of the same text.
    JudgeVerdict v = parse_freeform_verdict(R"({"score": 3.5})");
    CHECK(v.parse_failed);
    CHECK(v.path == parse_path::failed);
  }
  SUBCASE("out-of-range integers fail the same way") {
    CHECK(parse_freeform_verdict(R"({"score": 6})").parse_failed);
    CHECK(parse_freeform_verdict(R"({"score": 0})").parse_failed);
    CHECK(parse_freeform_verdict(R"({"score": -2})").parse_failed);
  }
  SUBCASE("all five in-range scores parse") {
    for (int s = 1; s <= 5; ++s) {
      JudgeVerdict v = parse_freeform_verdict("{\"score\": " + std::to_string(s) + "}");
      CHECK_FALSE(v.parse_failed);
      CHECK(v.score == s);
      CHECK(v.kind == verdict_kind::freeform);
    }
  }
  SUBCASE("labeled prose falls back to the regex path") {
    JudgeVerdict v = parse_freeform_verdict("My score: 2, the response botches the units.");
    CHECK_FALSE(v.parse_failed);
    CHECK(v.score == 2);
    CHECK(v.path == parse_path::regex_fallback);
  }
}

TEST_CASE("se and sc score parsing") {
  CHECK(parse_se_score(R"({"equivalence_score": "1"})").value == 1);
  CHECK(parse_se_score(R"({"equivalence_score": 0})").value == 0);
  CHECK_FALSE(parse_se_score(R"({"equivalence_score": 2})").value.has_value());
  CHECK_FALSE(parse_se_score(R"({"score": 1})").value.has_value());
  CHECK(parse_sc_score(R"({"fluency_score": 3})").value == 3);
  CHECK_FALSE(parse_sc_score(R"({"fluency_score": 0})").value.has_value());
  CHECK(parse_sc_score("fluency_score: 1").path == parse_path::regex_fallback);
}

TEST_CASE("editability score parsing") {
  SUBCASE("bare integer is the strict form") {
    ScoreParse p = parse_editability_score("4");
    CHECK(p.value == 4);
    CHECK(p.path == parse_path::strict_json);
  }
  SUBCASE("whitespace-padded integer is still strict") {
    CHECK(parse_editability_score(" \n 2 \n").path == parse_path::strict_json);
  }
  SUBCASE("first in-range standalone digit wins in prose") {
    ScoreParse p = parse_editability_score("Sure! Score: 4 (out of 5).");
    CHECK(p.value == 4);
    CHECK(p.path == parse_path::regex_fallback);
  }
  SUBCASE("digits glued to other digits never match") {
    CHECK_FALSE(parse_editability_score("confidence 95%").value.has_value());
    CHECK_FALSE(parse_editability_score("10").value.has_value());
  }
  SUBCASE("out-of-scale bare integer fails") {
    CHECK_FALSE(parse_editability_score("7").value.has_value());
    CHECK(parse_editability_score("7").path == parse_path::failed);
  }
}

TEST_CASE("judge_mcqa re-asks on parse failure and stops on success") {
  ScriptedChat chat;
  chat.replies = {"thinking out loud, no verdict",
                  R"({"Hallucination Type": "Factuality"})"};
  JudgeVerdict v = judge_mcqa("What is 2+2?", "5, because of inflation.", chat.fn(), 2);
  CHECK_FALSE(v.parse_failed);
  CHECK(v.type == mcqa_type::factuality);
  CHECK(chat.prompts.size() == 2);
  CHECK(chat.prompts[0] == chat.prompts[1]);
  CHECK(chat.prompts[0].find("What is 2+2?") != std::string::npos);
  CHECK(chat.prompts[0].find("5, because of inflation.") != std::string::npos);
}

TEST_CASE("judge_mcqa gives up after max_retries extra asks") {
  ScriptedChat chat;
  chat.replies = {"no verdict here"};
  JudgeVerdict v = judge_mcqa("q", "r", chat.fn(), 2);
  CHECK(v.parse_failed);
  CHECK(chat.prompts.size() == 3);
}

TEST_CASE("judge_freeform renders the ground truth into the prompt") {
  ScriptedChat chat;
  chat.replies = {R"({"score": 5})"};
  JudgeVerdict v = judge_freeform("Which enzyme?", "Amylase does it.", "(B) Lipase", chat.fn());
  CHECK_FALSE(v.parse_failed);
  CHECK(v.score == 5);
  CHECK(chat.prompts.size() == 1);
  CHECK(chat.prompts[0].find("Which enzyme?") != std::string::npos);
  CHECK(chat.prompts[0].find("Amylase does it.") != std::string::npos);
  CHECK(chat.prompts[0].find("(B) Lipase") != std::string::npos);
}

TEST_CASE("check_se verdicts") {
  QuestionRecord x0;
  x0.question_id = "q1";
  x0.subject = "Bio";
  x0.question = "Which organelle makes ATP?";
  x0.choices = {"Nucleus", "Mitochondrion", "Ribosome", "Golgi"};
  x0.answer_index = 1;

  SUBCASE("clean yes") {
    ScriptedChat chat;
    chat.replies = {R"({"equivalence_score": "1"})"};
    SeVerdict v = check_se(x0, "Name the ATP-producing organelle.", chat.fn());
    CHECK(v.value == 1);
    CHECK_FALSE(v.parse_failed);
    CHECK(chat.prompts[0].find("Which organelle makes ATP?") != std::string::npos);
    CHECK(chat.prompts[0].find("Name the ATP-producing organelle.") != std::string::npos);
  }
  SUBCASE("clean no") {
    ScriptedChat chat;
    chat.replies = {R"({"equivalence_score": "0"})"};
    SeVerdict v = check_se(x0, "What color is the sky?", chat.fn());
    CHECK(v.value == 0);
    CHECK_FALSE(v.parse_failed);
  }
  SUBCASE("persistent parse failure is a flagged SE=0, not a throw") {
    ScriptedChat chat;
    chat.replies = {"the two prompts feel similar to me"};
    SeVerdict v = check_se(x0, "anything", chat.fn(), 2);
    CHECK(v.value == 0);
    CHECK(v.parse_failed);
    CHECK(chat.prompts.size() == 3);
  }
  SUBCASE("retry recovers before the budget runs out") {
    ScriptedChat chat;
    chat.replies = {"hmm", "still thinking", R"({"equivalence_score": 1})"};
    SeVerdict v = check_se(x0, "anything", chat.fn(), 2);
    CHECK(v.value == 1);
    CHECK_FALSE(v.parse_failed);
    CHECK(chat.prompts.size() == 3);
  }
}

TEST_CASE("check_sc returns the fluency score or nothing") {
  ScriptedChat ok;
  ok.replies = {R"({"fluency_score": 2})"};
  CHECK(check_sc("Is this sentence fine?", ok.fn()) == 2);
  CHECK(ok.prompts[0].find("Is this sentence fine?") != std::string::npos);

  ScriptedChat bad;
  bad.replies = {"it reads okay I guess"};
  CHECK_FALSE(check_sc("x", bad.fn(), 1).has_value());
  CHECK(bad.prompts.size() == 2);
}

TEST_CASE("score_editability") {
  SUBCASE("prompt carries the keyword and the few-shot rubric") {
    ScriptedChat chat;
    chat.replies = {"5"};
    std::optional<int> score = score_editability("counterfactual", chat.fn());
    CHECK(score == 5);
    CHECK(chat.prompts.size() == 1);
    CHECK(chat.prompts[0].find("Concept: counterfactual") != std::string::npos);
    CHECK(chat.prompts[0].find("Concept: abridged -> Score: 5") != std::string::npos);
    CHECK(chat.prompts[0].find("Concept: chemisorptive -> Score: 1") != std::string::npos);
  }
  SUBCASE("persistent failure yields a drop with a diagnostic") {
    ScriptedChat chat;
    chat.replies = {"I would rather not rate that"};
    std::string diagnostic;
    std::optional<int> score = score_editability("abaxial", chat.fn(), 2, &diagnostic);
    CHECK_FALSE(score.has_value());
    CHECK(chat.prompts.size() == 3);
    CHECK(diagnostic.find("'abaxial'") != std::string::npos);
    CHECK(diagnostic.find("I would rather not rate that") != std::string::npos);
    CHECK(diagnostic.find("3 attempts") != std::string::npos);
  }
  SUBCASE("missing diagnostic pointer is fine") {
    ScriptedChat chat;
    chat.replies = {"nope"};
    CHECK_FALSE(score_editability("busy", chat.fn(), 0, nullptr).has_value());
  }
}

TEST_CASE("transport failures propagate out of the ops untouched") {
  ChatFn broken = [](const std::string&) -> std::string {
    throw oracle_error(oracle_fault::transport, "endpoint is down");
  };
  QuestionRecord x0;
  x0.question = "q";
  CHECK_THROWS_AS(judge_mcqa("q", "r", broken), oracle_error);
  CHECK_THROWS_AS(judge_freeform("q", "r", "t", broken), oracle_error);
  CHECK_THROWS_AS(check_se(x0, "x", broken), oracle_error);
  CHECK_THROWS_AS(check_sc("x", broken), oracle_error);
  CHECK_THROWS_AS(score_editability("k", broken), oracle_error);

  int calls = 0;
  ChatFn fails_then_ok = [&calls](const std::string&) -> std::string {
    if (++calls == 1) throw oracle_error(oracle_fault::timeout, "slow");
    return R"({"fluency_score": 1})";
  };
  // Parse retries never swallow transport errors; the first throw escapes.
  CHECK_THROWS_AS(check_sc("x", fails_then_ok, 5), oracle_error);
  CHECK(calls == 1);
}
