#include "sled/dictionary.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sled/parse.hpp"
#include "sled/templates.hpp"

namespace sled {

EditDictionary assemble_dictionary(
    const LatentRep& z0,
    const std::vector<std::pair<std::string, LatentRep>>& concept_latents,
    const std::vector<std::string>& rephrasings, int layer) {
  if (concept_latents.empty())
    throw std::invalid_argument("dictionary needs at least one concept latent");
  if (rephrasings.size() != concept_latents.size())
    throw std::invalid_argument("rephrasings must align with concept latents: " +
                                std::to_string(rephrasings.size()) + " vs " +
                                std::to_string(concept_latents.size()));
  if (z0.layer != layer)
    throw std::invalid_argument("base latent layer " + std::to_string(z0.layer) +
                                " does not match dictionary layer " + std::to_string(layer));

  EditDictionary dictionary;
  dictionary.base = z0;
  dictionary.layer = layer;
  dictionary.entries.reserve(concept_latents.size());
  for (size_t i = 0; i < concept_latents.size(); ++i) {
    const auto& [keyword, concept_latent] = concept_latents[i];
    if (!concept_latent.values.same_shape(z0.values))
      throw std::invalid_argument("concept '" + keyword + "' latent shape " +
                                  std::to_string(concept_latent.token_count()) + "x" +
                                  std::to_string(concept_latent.hidden_dim()) +
                                  " does not match base " + std::to_string(z0.token_count()) +
                                  "x" + std::to_string(z0.hidden_dim()));
    if (concept_latent.layer != layer)
      throw std::invalid_argument("concept '" + keyword + "' latent layer " +
                                  std::to_string(concept_latent.layer) +
                                  " does not match dictionary layer " + std::to_string(layer));
    DictionaryEntry entry;
    entry.keyword = keyword;
    entry.rephrasing = rephrasings[i];
    entry.direction = concept_latent;
    for (size_t k = 0; k < entry.direction.values.data.size(); ++k)
      entry.direction.values.data[k] -= z0.values.data[k];
    dictionary.entries.push_back(std::move(entry));
  }
  return dictionary;
}

LatentRep apply_edit(const EditDictionary& dictionary, const EditStrength& delta) {
  if (static_cast<int>(delta.coefficients.size()) != dictionary.n())
    throw std::invalid_argument("edit strength has " +
                                std::to_string(delta.coefficients.size()) +
                                " coefficients but dictionary has " +
                                std::to_string(dictionary.n()) + " directions");
  LatentRep z = dictionary.base;
  for (int i = 0; i < dictionary.n(); ++i) {
    double coeff = delta.coefficients[i];
    if (coeff == 0.0) continue;
    const Mat& direction = dictionary.entries[i].direction.values;
    for (size_t k = 0; k < z.values.data.size(); ++k)
      z.values.data[k] += coeff * direction.data[k];
  }
  return z;
}

LatentRep fit_to_rows(const LatentRep& z, int target_rows,
                      const std::vector<double>& padding_row) {
  if (target_rows < 1) throw std::invalid_argument("target_rows must be >= 1");
  if (static_cast<int>(padding_row.size()) != z.hidden_dim())
    throw std::invalid_argument("padding row has dim " + std::to_string(padding_row.size()) +
                                " but latent has hidden dim " + std::to_string(z.hidden_dim()));
  if (z.token_count() == target_rows) return z;

  Mat values(target_rows, z.hidden_dim());
  int copy_rows = std::min(z.token_count(), target_rows);
  for (int r = 0; r < copy_rows; ++r)
    for (int c = 0; c < z.hidden_dim(); ++c) values(r, c) = z.values(r, c);
  for (int r = copy_rows; r < target_rows; ++r)
    for (int c = 0; c < z.hidden_dim(); ++c) values(r, c) = padding_row[c];
  return make_latent(std::move(values), z.layer);
}

namespace {

// Accepts a candidate rephrasing only when it ends with exactly one question
// mark and that is the only question mark in the text.
std::string check_rephrasing(const std::string& text) {
  size_t begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "empty rephrasing";
  size_t end = text.find_last_not_of(" \t\r\n");
  std::string trimmed = text.substr(begin, end - begin + 1);
  if (trimmed.back() != '?') return "rephrasing does not end with a question mark";
  if (trimmed.find('?') != trimmed.size() - 1)
    return "rephrasing contains a question mark before the end";
  return "";
}

std::string trim_copy(const std::string& text) {
  size_t begin = text.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  size_t end = text.find_last_not_of(" \t\r\n");
  return text.substr(begin, end - begin + 1);
}

} // namespace

ProposalOutcome propose_rephrasings(const QuestionRecord& x0,
                                    const std::vector<std::string>& concepts,
                                    const SEProposer& proposer, uint64_t rng_seed,
                                    int max_retries) {
  if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
  ProposalOutcome outcome;
  Rng rng = make_rng(rng_seed);
  for (const std::string& keyword : concepts) {
    std::string last_problem;
    bool accepted = false;
    for (int attempt = 0; attempt <= max_retries && !accepted; ++attempt) {
      ProposerDraw draw = draw_proposer_parts(rng);
      std::string prompt = render_se_proposer(x0, keyword, draw);
      std::string raw;
      try {
        raw = proposer(prompt);
      } catch (const std::exception& e) {
        last_problem = std::string("proposer call failed: ") + e.what();
        continue;
      }
      ExtractedField field = extract_field(
          raw, "new_question", R"re("new_question"\s*:\s*"((?:[^"\\]|\\.)*)")re");
      if (field.path == parse_path::failed) {
        last_problem = "no new_question payload in proposer output";
        continue;
      }
      std::string problem = check_rephrasing(field.value);
      if (!problem.empty()) {
        last_problem = problem;
        continue;
      }
      outcome.accepted.emplace_back(keyword, trim_copy(field.value));
      accepted = true;
    }
    if (!accepted)
      outcome.skipped.emplace_back(
          keyword, last_problem + " after " + std::to_string(max_retries + 1) + " attempts");
  }
  return outcome;
}

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_bytes(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::string direction_blob_name(int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "direction_%03d.f32le", index);
  return name;
}

} // namespace

void save_dictionary(const EditDictionary& dictionary, const std::filesystem::path& dir) {
  if (dictionary.n() < 1) throw std::invalid_argument("dictionary has no directions");
  std::filesystem::create_directories(dir);

  nlohmann::json manifest{
      {"layer", dictionary.layer},
      {"L", dictionary.token_count()},
      {"d", dictionary.hidden_dim()},
      {"n", dictionary.n()},
  };
  nlohmann::json keywords = nlohmann::json::array();
  nlohmann::json rephrasings = nlohmann::json::array();
  for (const DictionaryEntry& entry : dictionary.entries) {
    keywords.push_back(entry.keyword);
    rephrasings.push_back(entry.rephrasing);
  }
  manifest["keywords"] = std::move(keywords);
  manifest["rephrasings"] = std::move(rephrasings);

  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
  out.close();

  write_file_bytes(dir / "base.f32le", pack_f32le(dictionary.base.values.data));
  for (int i = 0; i < dictionary.n(); ++i)
    write_file_bytes(dir / direction_blob_name(i),
                     pack_f32le(dictionary.entries[i].direction.values.data));
}

EditDictionary load_dictionary(const std::filesystem::path& dir) {
  nlohmann::json manifest =
      nlohmann::json::parse(read_file_text(dir / "manifest.json"), nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object())
    throw std::runtime_error("dictionary manifest is not a JSON object: " + dir.string());
  for (const char* field : {"layer", "L", "d", "n", "keywords", "rephrasings"}) {
    if (!manifest.contains(field))
      throw std::runtime_error(std::string("dictionary manifest missing field '") + field + "'");
  }
  int layer = manifest["layer"].get<int>();
  int rows = manifest["L"].get<int>();
  int cols = manifest["d"].get<int>();
  int n = manifest["n"].get<int>();
  auto keywords = manifest["keywords"].get<std::vector<std::string>>();
  auto rephrasings = manifest["rephrasings"].get<std::vector<std::string>>();
  if (n < 1 || static_cast<int>(keywords.size()) != n ||
      static_cast<int>(rephrasings.size()) != n)
    throw std::runtime_error("dictionary manifest has inconsistent n / keywords / rephrasings");

  EditDictionary dictionary;
  dictionary.layer = layer;
  dictionary.base = latent_from_blob(read_file_bytes(dir / "base.f32le"), rows, cols, layer);
  dictionary.entries.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    DictionaryEntry entry;
    entry.keyword = keywords[static_cast<size_t>(i)];
    entry.rephrasing = rephrasings[static_cast<size_t>(i)];
    entry.direction =
        latent_from_blob(read_file_bytes(dir / direction_blob_name(i)), rows, cols, layer);
    dictionary.entries.push_back(std::move(entry));
  }
  return dictionary;
}

void save_concept_pool(const ConceptPool& pool, const std::filesystem::path& records_path,
                       const std::filesystem::path& embeddings_path) {
  validate_pool(pool);
  std::ofstream records(records_path, std::ios::binary);
  if (!records)
    throw std::runtime_error("cannot open pool records file for writing: " + records_path.string());
  for (const ConceptEntry& entry : pool.entries) {
    nlohmann::json j{{"keyword", entry.keyword}, {"style_flag", entry.style_flag}};
    records << j.dump() << "\n";
  }
  records.close();

  size_t dim = pool.entries.front().embedding.size();
  nlohmann::json header{{"count", pool.entries.size()}, {"dim", dim}};
  std::vector<double> flat;
  flat.reserve(pool.entries.size() * dim);
  for (const ConceptEntry& entry : pool.entries)
    flat.insert(flat.end(), entry.embedding.begin(), entry.embedding.end());

  std::ofstream embeddings(embeddings_path, std::ios::binary);
  if (!embeddings)
    throw std::runtime_error("cannot open pool embeddings file for writing: " +
                             embeddings_path.string());
  embeddings << header.dump() << "\n";
  std::vector<std::uint8_t> bytes = pack_f32le(flat);
  embeddings.write(reinterpret_cast<const char*>(bytes.data()),
                   static_cast<std::streamsize>(bytes.size()));
  if (!embeddings) throw std::runtime_error("short write to " + embeddings_path.string());
}

ConceptPool load_concept_pool(const std::filesystem::path& records_path,
                              const std::filesystem::path& embeddings_path) {
  ConceptPool pool;
  pool.source = records_path.string();

  std::ifstream records(records_path);
  if (!records)
    throw std::runtime_error("cannot open pool records file: " + records_path.string());
  std::string line;
  size_t line_no = 0;
  while (std::getline(records, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("keyword") ||
        !j.contains("style_flag") || !j["keyword"].is_string() ||
        !j["style_flag"].is_boolean())
      throw std::runtime_error("pool records line " + std::to_string(line_no) +
                               ": expected {\"keyword\": str, \"style_flag\": bool}");
    ConceptEntry entry;
    entry.keyword = j["keyword"].get<std::string>();
    entry.style_flag = j["style_flag"].get<bool>();
    pool.entries.push_back(std::move(entry));
  }

  std::ifstream embeddings(embeddings_path, std::ios::binary);
  if (!embeddings)
    throw std::runtime_error("cannot open pool embeddings file: " + embeddings_path.string());
  std::string header_line;
  if (!std::getline(embeddings, header_line))
    throw std::runtime_error("pool embeddings file has no header: " + embeddings_path.string());
  nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
  if (header.is_discarded() || !header.is_object() || !header.contains("count") ||
      !header.contains("dim"))
    throw std::runtime_error("pool embeddings header must declare {count, dim}");
  size_t count = header["count"].get<size_t>();
  size_t dim = header["dim"].get<size_t>();
  if (count != pool.entries.size())
    throw std::runtime_error("pool embeddings count " + std::to_string(count) +
                             " does not match " + std::to_string(pool.entries.size()) +
                             " records");

  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(embeddings)),
                                  std::istreambuf_iterator<char>());
  std::vector<double> flat = unpack_f32le(bytes);
  if (flat.size() != count * dim)
    throw std::runtime_error("pool embeddings payload has " + std::to_string(flat.size()) +
                             " values, expected " + std::to_string(count * dim));
  for (size_t i = 0; i < count; ++i)
    pool.entries[i].embedding.assign(flat.begin() + static_cast<ptrdiff_t>(i * dim),
                                     flat.begin() + static_cast<ptrdiff_t>((i + 1) * dim));

  validate_pool(pool);
  return pool;
}

} // namespace sled
