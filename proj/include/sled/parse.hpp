#pragma once

#include <optional>
#include <string>

#include <json.hpp>

namespace sled {

// Extraction order used everywhere model output is parsed: the whole output as
// strict JSON, then the first balanced-brace object that parses, then a
// role-specific regex fallback supplied by the caller.
std::optional<nlohmann::json> parse_strict_json(const std::string& text);
std::optional<nlohmann::json> first_balanced_object(const std::string& text);

enum class parse_path { strict_json, balanced_braces, regex_fallback, failed };
const char* parse_path_name(parse_path path);

struct ExtractedField {
  std::string value;
  parse_path path = parse_path::failed;
};

// Pulls a field out of model output. The field value may be a JSON string or a
// bare number; numbers are rendered back to text. `regex_pattern`, when
// non-empty, is tried last against the raw text and must expose the value as
// capture group 1.
ExtractedField extract_field(const std::string& text, const std::string& key,
                             const std::string& regex_pattern = "");

} // namespace sled
