#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sled/dataset.hpp"
#include "sled/latent.hpp"
#include "sled/selection.hpp"
#include "sled/simplex.hpp"

namespace sled {

struct DictionaryEntry {
  std::string keyword;
  LatentRep direction;
  std::string rephrasing;
};

struct EditDictionary {
  LatentRep base;
  std::vector<DictionaryEntry> entries;
  int layer = 0;
  int n() const { return static_cast<int>(entries.size()); }
  int token_count() const { return base.token_count(); }
  int hidden_dim() const { return base.hidden_dim(); }
};

EditDictionary assemble_dictionary(
    const LatentRep& z0,
    const std::vector<std::pair<std::string, LatentRep>>& concept_latents,
    const std::vector<std::string>& rephrasings, int layer);

LatentRep apply_edit(const EditDictionary& dictionary, const EditStrength& delta);

// Right-pads with copies of padding_row or truncates so the latent has exactly
// target_rows rows.
LatentRep fit_to_rows(const LatentRep& z, int target_rows,
                      const std::vector<double>& padding_row);

// Raw model output for a rendered proposer prompt.
using SEProposer = std::function<std::string(const std::string&)>;

struct ProposalOutcome {
  std::vector<std::pair<std::string, std::string>> accepted;  // keyword, rephrasing
  std::vector<std::pair<std::string, std::string>> skipped;   // keyword, diagnostic
};

ProposalOutcome propose_rephrasings(const QuestionRecord& x0,
                                    const std::vector<std::string>& concepts,
                                    const SEProposer& proposer, uint64_t rng_seed,
                                    int max_retries = 2);

// Dictionary files are a directory holding manifest.json plus one
// little-endian float32 row-major blob for the base latent and each direction.
void save_dictionary(const EditDictionary& dictionary, const std::filesystem::path& dir);
EditDictionary load_dictionary(const std::filesystem::path& dir);

// Concept pools are line-delimited JSON records (keyword, style_flag) plus a
// sidecar embedding file: a one-line JSON header {count, dim} followed by
// count*dim little-endian float32 values, row-major.
void save_concept_pool(const ConceptPool& pool, const std::filesystem::path& records_path,
                       const std::filesystem::path& embeddings_path);
ConceptPool load_concept_pool(const std::filesystem::path& records_path,
                              const std::filesystem::path& embeddings_path);

} // namespace sled
