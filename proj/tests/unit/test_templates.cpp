#include <doctest.h>

#include <fstream>
#include <sstream>

#include "sled/templates.hpp"
#include "test_util.hpp"

using namespace sled;

namespace {

QuestionRecord fixture_question() {
  QuestionRecord r;
  r.question_id = "cli-7";
  r.subject = "Cli";
  r.question = "Which organ produces insulin";
  r.choices = {"Liver", "Pancreas", "Spleen", "Kidney"};
  r.answer_index = 1;
  return r;
}

std::string read_asset(const std::string& name) {
  std::ifstream in(std::filesystem::path(SLED_ASSETS_DIR) / "templates" / (name + ".txt"),
                   std::ios::binary);
  REQUIRE(in);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

} // namespace

TEST_CASE("render_template substitutes slots and brace escapes") {
  CHECK(render_template("hello {name}", {{"name", "world"}}) == "hello world");
  CHECK(render_template("{{\"k\": \"v\"}}", {}) == "{\"k\": \"v\"}");
  CHECK(render_template("{a}{a} {b}", {{"a", "x"}, {"b", "y"}}) == "xx y");
  CHECK(render_template("plain text", {}) == "plain text");
  CHECK(render_template("{odd key (0 + 1)}", {{"odd key (0 + 1)", "ok"}}) == "ok");
}

TEST_CASE("render_template rejects unbound and malformed markers") {
  CHECK_THROWS_AS(render_template("{missing}", {}), std::invalid_argument);
  CHECK_THROWS_AS(render_template("{unterminated", {}), std::invalid_argument);
  CHECK_THROWS_AS(render_template("stray } brace", {}), std::invalid_argument);
}

TEST_CASE("template catalog exposes the eight shipped templates verbatim") {
  auto names = template_names();
  REQUIRE(names.size() == 8);
  for (const std::string& name :
       {"editability", "freeform_attack", "freeform_judge", "mcqa_attack", "mcqa_judge",
        "sc_checker", "se_checker", "se_proposer_body"}) {
    CHECK(std::string(template_text(name)) == read_asset(name));
  }
  CHECK_THROWS_AS(template_text("nope"), std::invalid_argument);
}

TEST_CASE("proposer word lists match the published sizes") {
  CHECK(proposer_verbs().size() == 19);
  CHECK(proposer_styles().size() == 13);
  CHECK(proposer_tasks().size() == 14);
  CHECK(proposer_instruction_templates().size() == 10);
  CHECK(proposer_verbs().front() == "Generate");
  CHECK(proposer_verbs().back() == "Edit");
  CHECK(proposer_styles().front() == "creative");
  CHECK(proposer_tasks().back() == "reexpression");
}

TEST_CASE("draw_proposer_parts is deterministic and in-range") {
  Rng a = make_rng(99);
  Rng b = make_rng(99);
  for (int i = 0; i < 50; ++i) {
    ProposerDraw da = draw_proposer_parts(a);
    ProposerDraw db = draw_proposer_parts(b);
    CHECK(da.instruction_index == db.instruction_index);
    CHECK(da.verb == db.verb);
    CHECK(da.style == db.style);
    CHECK(da.task == db.task);
    CHECK(da.instruction_index >= 0);
    CHECK(da.instruction_index < 10);
  }
}

TEST_CASE("render_editability binds the concept slot") {
  std::string text = render_editability("contrastive framing");
  CHECK(text.find("You are given Concept: contrastive framing") != std::string::npos);
  CHECK(text.find("{concept}") == std::string::npos);
}

TEST_CASE("render_mcqa_attack binds subject, question, and choices") {
  auto q = fixture_question();
  std::string text = render_mcqa_attack(subject_display(q.subject), q.question, q.choices);
  CHECK(text.find("world's best expert in Clinical Knowledge") != std::string::npos);
  CHECK(text.find(q.question) != std::string::npos);
  CHECK(text.find("A. Liver") != std::string::npos);
  CHECK(text.find("D. Kidney") != std::string::npos);
  CHECK(text.find("The correct answer is option:") != std::string::npos);
  CHECK(text.find("{MMLU_SUBJECT}") == std::string::npos);
  CHECK(text.find("{CHOICES[0]}") == std::string::npos);

  std::string snake = render_mcqa_attack("clinical_knowledge", q.question, q.choices);
  CHECK(snake.find("expert in clinical knowledge") != std::string::npos);
}

TEST_CASE("render_mcqa_judge keeps the verdict format line literal") {
  std::string text = render_mcqa_judge("what is 2+2", "5, because of inflation");
  CHECK(text.find("User: what is 2+2") != std::string::npos);
  CHECK(text.find("Target LLM: \"5, because of inflation\"") != std::string::npos);
  CHECK(text.find(R"({"Hallucination Type": "Factuality" / "Faithfulness" / "Other" / "None"})") !=
        std::string::npos);
}

TEST_CASE("render_freeform_judge binds ground truth and keeps the score format") {
  std::string text = render_freeform_judge("q", "r", "the truth");
  CHECK(text.find("Ground Truth: \"the truth\"") != std::string::npos);
  CHECK(text.find(R"({"score": <1|2|3|4|5>})") != std::string::npos);
}

TEST_CASE("render_sc_checker binds the question") {
  std::string text = render_sc_checker("Is water wet");
  CHECK(text.find("Question: \"Is water wet\"") != std::string::npos);
  CHECK(text.find(R"({"fluency_score": "1"})") != std::string::npos);
}

TEST_CASE("render_se_checker binds both questions and the ground-truth letter") {
  auto q = fixture_question();
  std::string text = render_se_checker(q, "Insulin is produced by which organ");
  CHECK(text.find("expert in Clinical Knowledge") != std::string::npos);
  CHECK(text.find("Original Question: \"Which organ produces insulin\"") != std::string::npos);
  CHECK(text.find("New Question: \"Insulin is produced by which organ\"") != std::string::npos);
  CHECK(text.find("B. Pancreas") != std::string::npos);
  CHECK(text.find("is: B. Pancreas.") != std::string::npos);
  CHECK(text.find(R"({"equivalence_score": "1"})") != std::string::npos);
  CHECK(text.find("ground_truth_idx") == std::string::npos);
}

TEST_CASE("render_se_proposer composes the instruction line and the body") {
  auto q = fixture_question();
  ProposerDraw draw;
  draw.instruction_index = 0;
  draw.verb = "Generate";
  draw.style = "creative";
  draw.task = "rewording";
  std::string text = render_se_proposer(q, "indirect questioning", draw);
  CHECK(text.find("Generate a creative yet semantically equivalent rewording of the following "
                  "multiple-choice question, ensuring the original intent is preserved.") !=
        std::string::npos);
  CHECK(text.find("Concept for Editing: \"indirect questioning\"") != std::string::npos);
  CHECK(text.find("Original Question: \"Which organ produces insulin\"") != std::string::npos);
  CHECK(text.find("remain unchanged for both the Original and New versions: B. Pancreas.") !=
        std::string::npos);
  CHECK(text.find(R"({"new_question": "YOUR_NEW_QUESTION"})") != std::string::npos);
  CHECK(text.find("{verb}") == std::string::npos);
  CHECK(text.find("{instruction_template}") == std::string::npos);

  draw.instruction_index = 11;
  CHECK_THROWS_AS(render_se_proposer(q, "x", draw), std::invalid_argument);
}

TEST_CASE("every role template renders with no leftover slot markers") {
  auto q = fixture_question();
  ProposerDraw draw;
  draw.verb = "Craft";
  draw.style = "nuanced";
  draw.task = "restatement";
  for (const std::string& text : {
           render_editability("passive"),
           render_mcqa_attack(subject_display(q.subject), q.question, q.choices),
           render_freeform_attack(subject_display(q.subject), q.question, q.choices),
           render_mcqa_judge("q", "r"),
           render_freeform_judge("q", "r", "t"),
           render_sc_checker("q"),
           render_se_checker(q, "q2"),
           render_se_proposer(q, "passive", draw),
       }) {
    for (const std::string& marker :
         {"{concept}", "{query_x}", "{query_x0}", "{input_query}", "{target_response}",
          "{ground_truth}", "{MMLU_SUBJECT}", "{QUESTION_PROMPT_x}", "{instruction_template}",
          "{verb}", "{style}", "{task}", "{subject.replace('_', ' ')}"}) {
      CHECK(text.find(marker) == std::string::npos);
    }
  }
}
