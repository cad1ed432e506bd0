#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sled/attack.hpp"
#include "sled/gateway.hpp"
#include "sled/simplex.hpp"

namespace sled {

// One attack trial as the campaign emits it. The SE/SC/PPL fields are filled
// only on the row holding the question's best-attack prompt; dataset-level
// SEE and SCE average over exactly those rows.
struct TrialOutcome {
  std::string question_id;
  int trial_index = 1;
  bool success = false;
  std::optional<int> se_error;   // SEE of the best-attack prompt, in {0,1}
  std::optional<int> sc_score;   // raw SC of the best-attack prompt, in {1,2,3}
  std::optional<double> ppl;     // sliding-window perplexity, when a sidecar served it
  std::string subject;
};

// Returns "" when valid, otherwise a message naming the bad field.
std::string validate_outcome(const TrialOutcome& outcome);

nlohmann::json outcome_to_json(const TrialOutcome& outcome);
// Throws std::runtime_error naming the first missing or mistyped field.
TrialOutcome outcome_from_json(const nlohmann::json& j);

std::vector<TrialOutcome> load_outcomes(const std::filesystem::path& path);
void save_outcomes(const std::vector<TrialOutcome>& outcomes, const std::filesystem::path& path);

// Success predicates. Parse-failure verdicts are never successes; callers
// tally them separately off verdict.parse_failed.
bool success_mcqa(const JudgeVerdict& verdict, int answered_option, int ground_truth_option);
bool success_freeform(const JudgeVerdict& verdict, int threshold = 3);

// Fraction of questions with any success among trials 1..k. Empty input has
// no defined value. Questions with fewer than k trials are scanned in full
// and flagged.
std::optional<double> asr_at_k(const std::vector<TrialOutcome>& outcomes, int k,
                               std::vector<std::string>* flags = nullptr);

// Semantic-equivalence error: 0 when the checker said equivalent (SE = 1),
// else 1. Scores outside {0,1} count as non-equivalent.
int see(int se_score);

// Sentence-coherence error from the judge scale, (SC - 1) / 2, clamped onto
// the 1..3 input range so the output stays in [0, 1].
double sce_judge(int sc_score);

// Perplexity-margin coherence error, max(ppl - gamma, 0).
double sce_ppl(double ppl, double gamma = 60.0);

// Standard deviation of resample means over `resamples` with-replacement
// resamples of the full list, seeded and reproducible.
double bootstrap_std(const std::vector<double>& values, int resamples, std::uint64_t seed);

std::vector<std::string> whitespace_words(const std::string& text);
long word_levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Word-level Levenshtein(a, b) divided by the word count of a. Rejects an
// `a` with no words.
double normalized_word_edit_distance(const std::string& a, const std::string& b);

// Number of coefficients strictly above tol.
int active_concepts(const EditStrength& delta, double tol = 1e-6);

// Per-concept usage counts over the best delta of each trace; the heat value
// plotted per cell is log1p of the count.
std::vector<long> concept_usage(const std::vector<AttackTrace>& traces, int num_concepts,
                                double tol = 1e-6);

struct EvalConfig {
  std::vector<int> ks{1, 5, 10, 30};
  int resamples = 10000;
  std::uint64_t seed = 0;
  double sce_gamma = 60.0;
};

// One (subject, metric, K) table cell. ASR, SEE, and SCE-judge are percents;
// SCE-ppl stays in raw perplexity-margin units.
struct MetricCell {
  std::string subject;  // "all" for the dataset-level row
  std::string metric;   // "asr", "see", "sce_judge", "sce_ppl"
  int k = 0;            // nonzero only for asr
  double mean = 0.0;
  double std_dev = 0.0;
  std::string unit = "percent";
  bool available = true;
  long questions = 0;
};

struct EvalReport {
  std::vector<MetricCell> cells;
  int resample_count = 10000;
  std::uint64_t seed = 0;
  std::vector<std::string> flags;
};

EvalReport build_report(const std::vector<TrialOutcome>& outcomes, const EvalConfig& config);

nlohmann::json report_to_json(const EvalReport& report);
std::string report_to_csv(const EvalReport& report);
void save_report_json(const EvalReport& report, const std::filesystem::path& path);
void save_report_csv(const EvalReport& report, const std::filesystem::path& path);

} // namespace sled
