#include "sled/templates.hpp"

#include <random>
#include <stdexcept>

#include <sled/template_assets.hpp>

namespace sled {

std::string render_template(std::string_view text,
                            const std::map<std::string, std::string>& slots) {
  std::string out;
  out.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '{') {
      if (i + 1 < text.size() && text[i + 1] == '{') {
        out.push_back('{');
        ++i;
        continue;
      }
      size_t close = text.find('}', i + 1);
      if (close == std::string_view::npos)
        throw std::invalid_argument("template has an unterminated slot marker");
      std::string key(text.substr(i + 1, close - i - 1));
      auto it = slots.find(key);
      if (it == slots.end())
        throw std::invalid_argument("template slot '" + key + "' is not bound");
      out += it->second;
      i = close;
      continue;
    }
    if (c == '}') {
      if (i + 1 < text.size() && text[i + 1] == '}') {
        out.push_back('}');
        ++i;
        continue;
      }
      throw std::invalid_argument("template has a stray '}' outside any slot");
    }
    out.push_back(c);
  }
  return out;
}

namespace {

const std::map<std::string, std::string_view>& catalog() {
  static const std::map<std::string, std::string_view> table = {
      {"editability", assets::k_editability},
      {"freeform_attack", assets::k_freeform_attack},
      {"freeform_judge", assets::k_freeform_judge},
      {"mcqa_attack", assets::k_mcqa_attack},
      {"mcqa_judge", assets::k_mcqa_judge},
      {"sc_checker", assets::k_sc_checker},
      {"se_checker", assets::k_se_checker},
      {"se_proposer_body", assets::k_se_proposer_body},
  };
  return table;
}

} // namespace

std::string_view template_text(const std::string& name) {
  auto it = catalog().find(name);
  if (it == catalog().end()) throw std::invalid_argument("unknown template '" + name + "'");
  return it->second;
}

std::vector<std::string> template_names() {
  std::vector<std::string> names;
  for (const auto& [name, text] : catalog()) names.push_back(name);
  return names;
}

std::string underscores_to_spaces(std::string s) {
  for (char& c : s) {
    if (c == '_') c = ' ';
  }
  return s;
}

const std::vector<std::string>& proposer_verbs() {
  static const std::vector<std::string> list = {
      "Generate", "Create", "Compose", "Craft", "Devise", "Formulate",
      "Design", "Construct", "Frame", "Author", "Develop",
      "Reformulate", "Rephrase", "Recast", "Rework", "Reimagine",
      "Revise", "Adapt", "Edit",
  };
  return list;
}

const std::vector<std::string>& proposer_styles() {
  static const std::vector<std::string> list = {
      "creative", "thoughtful", "diverse", "nuanced", "refined",
      "linguistically rich", "engaging", "expressive", "sophisticated",
      "insightful", "intelligent", "clever", "skillful",
  };
  return list;
}

const std::vector<std::string>& proposer_tasks() {
  static const std::vector<std::string> list = {
      "rewording", "rephrasing", "reformulation", "restatement",
      "rewriting", "recasting", "reworking", "paraphrase",
      "alternate phrasing", "semantic variation", "textual transformation",
      "question transformation", "rearticulation", "reexpression",
  };
  return list;
}

const std::vector<std::string>& proposer_instruction_templates() {
  static const std::vector<std::string> list = {
      "{verb} a {style} yet semantically equivalent {task} of the following multiple-choice "
      "question, ensuring the original intent is preserved.",
      "Your task is to {verb} a {style}, semantically equivalent {task} of the given "
      "multiple-choice question while keeping its meaning and answer intact.",
      "Please {verb} a {style} and semantically faithful {task} of the question below. Do not "
      "alter its intended meaning or correct answer.",
      "Given the multiple-choice question below, {verb} a {style} {task} that maintains semantic "
      "equivalence and preserves the original intent.",
      "{verb} a {style}, semantically consistent {task} of the question provided. Ensure the "
      "meaning and correct answer remain unchanged.",
      "{verb} a {style} {task} that preserves the original question's meaning and structure "
      "while ensuring semantic equivalence.",
      "From the question below, {verb} a {style} and meaning-preserving {task}. The rephrased "
      "version should remain semantically equivalent.",
      "Your goal is to {verb} a {style} yet semantically aligned {task} of the question. "
      "Maintain the original intent and correctness.",
      "Carefully {verb} a {style} and semantically equivalent {task}, keeping the answer "
      "consistent with the original multiple-choice question.",
      "{verb} a {style}, semantically coherent {task} of the following multiple-choice question, "
      "ensuring no change in meaning or answer.",
  };
  return list;
}

ProposerDraw draw_proposer_parts(Rng& rng) {
  auto pick = [&rng](size_t count) {
    return std::uniform_int_distribution<size_t>(0, count - 1)(rng);
  };
  ProposerDraw draw;
  draw.instruction_index = static_cast<int>(pick(proposer_instruction_templates().size()));
  draw.verb = proposer_verbs()[pick(proposer_verbs().size())];
  draw.style = proposer_styles()[pick(proposer_styles().size())];
  draw.task = proposer_tasks()[pick(proposer_tasks().size())];
  return draw;
}

std::string render_editability(const std::string& concept_keyword) {
  return render_template(assets::k_editability, {{"concept", concept_keyword}});
}

namespace {

std::string render_attack(std::string_view tpl, const std::string& subject,
                          const std::string& question, const std::array<std::string, 4>& choices) {
  return render_template(tpl, {
                                  {"MMLU_SUBJECT", underscores_to_spaces(subject)},
                                  {"QUESTION_PROMPT_x", question},
                                  {"CHOICES[0]", choices[0]},
                                  {"CHOICES[1]", choices[1]},
                                  {"CHOICES[2]", choices[2]},
                                  {"CHOICES[3]", choices[3]},
                              });
}

} // namespace

std::string render_mcqa_attack(const std::string& subject, const std::string& question,
                               const std::array<std::string, 4>& choices) {
  return render_attack(assets::k_mcqa_attack, subject, question, choices);
}

std::string render_freeform_attack(const std::string& subject, const std::string& question,
                                   const std::array<std::string, 4>& choices) {
  return render_attack(assets::k_freeform_attack, subject, question, choices);
}

std::string render_mcqa_judge(const std::string& input_query, const std::string& target_response) {
  return render_template(assets::k_mcqa_judge, {
                                                   {"input_query", input_query},
                                                   {"target_response", target_response},
                                               });
}

std::string render_freeform_judge(const std::string& input_query, const std::string& target_response,
                                  const std::string& ground_truth) {
  return render_template(assets::k_freeform_judge, {
                                                       {"input_query", input_query},
                                                       {"target_response", target_response},
                                                       {"ground_truth", ground_truth},
                                                   });
}

std::string render_sc_checker(const std::string& query_x) {
  return render_template(assets::k_sc_checker, {{"query_x", query_x}});
}

std::string render_se_checker(const QuestionRecord& x0, const std::string& query_x) {
  std::string truth_letter(1, static_cast<char>('A' + x0.answer_index));
  return render_template(
      assets::k_se_checker,
      {
          {"subject.replace('_', ' ')", underscores_to_spaces(subject_display(x0.subject))},
          {"query_x0", x0.question},
          {"query_x", query_x},
          {"choices[0]", x0.choices[0]},
          {"choices[1]", x0.choices[1]},
          {"choices[2]", x0.choices[2]},
          {"choices[3]", x0.choices[3]},
          {"chr(65 + ground_truth_idx)", truth_letter},
          {"choices[ground_truth_idx]", x0.choices[x0.answer_index]},
      });
}

std::string render_se_proposer(const QuestionRecord& x0, const std::string& concept_keyword,
                               const ProposerDraw& draw) {
  const auto& instructions = proposer_instruction_templates();
  if (draw.instruction_index < 0 ||
      draw.instruction_index >= static_cast<int>(instructions.size()))
    throw std::invalid_argument("proposer instruction index out of range");
  std::string instruction = render_template(instructions[draw.instruction_index],
                                            {
                                                {"verb", draw.verb},
                                                {"style", draw.style},
                                                {"task", draw.task},
                                            });
  std::string truth_letter(1, static_cast<char>('A' + x0.answer_index));
  return render_template(
      assets::k_se_proposer_body,
      {
          {"subject.replace('_', ' ')", underscores_to_spaces(subject_display(x0.subject))},
          {"instruction_template", instruction},
          {"concept", concept_keyword},
          {"query_x", x0.question},
          {"choices[0]", x0.choices[0]},
          {"choices[1]", x0.choices[1]},
          {"choices[2]", x0.choices[2]},
          {"choices[3]", x0.choices[3]},
          {"chr(65 + ground_truth_index)", truth_letter},
          {"choices[ground_truth_index]", x0.choices[x0.answer_index]},
      });
}

} // namespace sled
