#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace sled {

struct QuestionRecord {
  std::string question_id;
  std::string subject;
  std::string question;
  std::array<std::string, 4> choices;
  int answer_index = 0;
};

// The 16 MMLU subject codes with their display names.
const std::vector<std::pair<std::string, std::string>>& mmlu_subjects();

bool is_known_subject(const std::string& code);

// Code -> display name ("Cli" -> "Clinical Knowledge"); unknown codes pass through.
std::string subject_display(const std::string& code);

// Returns an empty string when valid, otherwise a message naming the bad field.
std::string validate_question(const QuestionRecord& record);

std::vector<QuestionRecord> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::vector<QuestionRecord>& records, const std::filesystem::path& path);

} // namespace sled
