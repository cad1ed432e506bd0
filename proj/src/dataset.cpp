#include "sled/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace sled {

const std::vector<std::pair<std::string, std::string>>& mmlu_subjects() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"Cli", "Clinical Knowledge"},
      {"Bio", "College Biology"},
      {"Ana", "Anatomy"},
      {"Mat", "Mathematics"},
      {"CS", "College Computer Science"},
      {"ML", "Machine Learning"},
      {"Sec", "Computer Security"},
      {"Phy", "College Physics"},
      {"Che", "High School Chemistry"},
      {"Cpy", "Conceptual Physics"},
      {"Psy", "High School Psychology"},
      {"Soc", "Sociology"},
      {"Phi", "Philosophy"},
      {"Hi", "High School US History"},
      {"Law", "International Law"},
      {"Eco", "High School Microeconomics"},
  };
  return table;
}

bool is_known_subject(const std::string& code) {
  for (const auto& [abbr, name] : mmlu_subjects()) {
    if (abbr == code) return true;
  }
  return false;
}

std::string subject_display(const std::string& code) {
  for (const auto& [abbr, name] : mmlu_subjects()) {
    if (abbr == code) return name;
  }
  return code;
}

std::string validate_question(const QuestionRecord& record) {
  if (record.question_id.empty()) return "question_id: must be non-empty";
  if (!is_known_subject(record.subject))
    return "subject: unknown code '" + record.subject + "'";
  if (record.question.empty()) return "question: must be non-empty";
  for (size_t i = 0; i < record.choices.size(); ++i) {
    if (record.choices[i].empty())
      return "choices[" + std::to_string(i) + "]: must be non-empty";
  }
  if (record.answer_index < 0 || record.answer_index > 3)
    return "answer_index: must be in [0, 3], got " + std::to_string(record.answer_index);
  return "";
}

namespace {

QuestionRecord record_from_json(const nlohmann::json& j) {
  QuestionRecord record;
  if (!j.is_object()) throw std::runtime_error("record is not a JSON object");
  for (const char* field : {"question_id", "subject", "question", "choices", "answer_index"}) {
    if (!j.contains(field)) throw std::runtime_error(std::string("missing field '") + field + "'");
  }
  if (!j["question_id"].is_string()) throw std::runtime_error("question_id: expected string");
  if (!j["subject"].is_string()) throw std::runtime_error("subject: expected string");
  if (!j["question"].is_string()) throw std::runtime_error("question: expected string");
  if (!j["choices"].is_array() || j["choices"].size() != 4)
    throw std::runtime_error("choices: expected array of exactly 4 entries, got " +
                             std::to_string(j["choices"].is_array() ? j["choices"].size() : 0));
  if (!j["answer_index"].is_number_integer()) throw std::runtime_error("answer_index: expected integer");

  record.question_id = j["question_id"].get<std::string>();
  record.subject = j["subject"].get<std::string>();
  record.question = j["question"].get<std::string>();
  for (size_t i = 0; i < 4; ++i) {
    if (!j["choices"][i].is_string())
      throw std::runtime_error("choices[" + std::to_string(i) + "]: expected string");
    record.choices[i] = j["choices"][i].get<std::string>();
  }
  record.answer_index = j["answer_index"].get<int>();

  std::string problem = validate_question(record);
  if (!problem.empty()) throw std::runtime_error(problem);
  return record;
}

} // namespace

std::vector<QuestionRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path.string());

  std::vector<QuestionRecord> records;
  std::set<std::string> seen_ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    try {
      QuestionRecord record = record_from_json(j);
      if (!seen_ids.insert(record.question_id).second)
        throw std::runtime_error("duplicate question_id '" + record.question_id + "'");
      records.push_back(std::move(record));
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void save_dataset(const std::vector<QuestionRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open dataset file for writing: " + path.string());
  for (const QuestionRecord& record : records) {
    std::string problem = validate_question(record);
    if (!problem.empty())
      throw std::runtime_error("record '" + record.question_id + "': " + problem);
    nlohmann::json j{
        {"question_id", record.question_id},
        {"subject", record.subject},
        {"question", record.question},
        {"choices", record.choices},
        {"answer_index", record.answer_index},
    };
    out << j.dump() << "\n";
  }
}

} // namespace sled
