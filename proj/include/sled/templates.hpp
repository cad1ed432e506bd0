#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sled/common.hpp"
#include "sled/dataset.hpp"

namespace sled {

// Prompt templates shipped as text assets and embedded at build time. Slot
// markers are {key}; literal braces are escaped as {{ and }}.
std::string render_template(std::string_view text,
                            const std::map<std::string, std::string>& slots);

std::string_view template_text(const std::string& name);
std::vector<std::string> template_names();

std::string underscores_to_spaces(std::string s);

// Word lists for the semantic-equivalence proposer prompt.
const std::vector<std::string>& proposer_verbs();
const std::vector<std::string>& proposer_styles();
const std::vector<std::string>& proposer_tasks();
const std::vector<std::string>& proposer_instruction_templates();

struct ProposerDraw {
  int instruction_index = 0;
  std::string verb;
  std::string style;
  std::string task;
};

ProposerDraw draw_proposer_parts(Rng& rng);

std::string render_editability(const std::string& concept_keyword);
std::string render_mcqa_attack(const std::string& subject, const std::string& question,
                               const std::array<std::string, 4>& choices);
std::string render_freeform_attack(const std::string& subject, const std::string& question,
                                   const std::array<std::string, 4>& choices);
std::string render_mcqa_judge(const std::string& input_query, const std::string& target_response);
std::string render_freeform_judge(const std::string& input_query, const std::string& target_response,
                                  const std::string& ground_truth);
std::string render_sc_checker(const std::string& query_x);
std::string render_se_checker(const QuestionRecord& x0, const std::string& query_x);
std::string render_se_proposer(const QuestionRecord& x0, const std::string& concept_keyword,
                               const ProposerDraw& draw);

} // namespace sled
