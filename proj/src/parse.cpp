#include "sled/parse.hpp"

#include <regex>

namespace sled {

std::optional<nlohmann::json> parse_strict_json(const std::string& text) {
  size_t begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return std::nullopt;
  size_t end = text.find_last_not_of(" \t\r\n");
  std::string trimmed = text.substr(begin, end - begin + 1);
  nlohmann::json j = nlohmann::json::parse(trimmed, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

std::optional<nlohmann::json> first_balanced_object(const std::string& text) {
  for (size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped)
          escaped = false;
        else if (c == '\\')
          escaped = true;
        else if (c == '"')
          in_string = false;
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        --depth;
        if (depth == 0) {
          nlohmann::json j =
              nlohmann::json::parse(text.substr(start, i - start + 1), nullptr, false);
          if (!j.is_discarded() && j.is_object()) return j;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

const char* parse_path_name(parse_path path) {
  switch (path) {
    case parse_path::strict_json: return "strict_json";
    case parse_path::balanced_braces: return "balanced_braces";
    case parse_path::regex_fallback: return "regex_fallback";
    case parse_path::failed: return "failed";
  }
  return "failed";
}

namespace {

std::optional<std::string> field_as_text(const nlohmann::json& j, const std::string& key) {
  if (!j.contains(key)) return std::nullopt;
  const nlohmann::json& v = j[key];
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (d == static_cast<long long>(d)) return std::to_string(static_cast<long long>(d));
    return std::to_string(d);
  }
  return std::nullopt;
}

} // namespace

ExtractedField extract_field(const std::string& text, const std::string& key,
                             const std::string& regex_pattern) {
  if (auto strict = parse_strict_json(text)) {
    if (auto value = field_as_text(*strict, key))
      return {*value, parse_path::strict_json};
  }
  if (auto scanned = first_balanced_object(text)) {
    if (auto value = field_as_text(*scanned, key))
      return {*value, parse_path::balanced_braces};
  }
  if (!regex_pattern.empty()) {
    std::regex re(regex_pattern, std::regex::icase);
    std::smatch match;
    if (std::regex_search(text, match, re) && match.size() >= 2)
      return {match[1].str(), parse_path::regex_fallback};
  }
  return {"", parse_path::failed};
}

} // namespace sled
