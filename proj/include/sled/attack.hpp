#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sled/dictionary.hpp"
#include "sled/oracles.hpp"
#include "sled/simplex.hpp"

namespace sled {

struct PLDConfig {
  double step_size = 1.0;             // eta
  double initial_temperature = 0.01;  // T0
  double decay = 0.9;                 // gamma
  double budget = 1.0;                // epsilon
  int max_iters_per_init = 10;
  int num_inits = 10;                 // N
  gradient_mode mode = gradient_mode::exact;
  double fd_step = 1e-2;              // h for finite differences
  // When set, the run stops as soon as the best SE-accepted objective
  // reaches this value.
  std::optional<double> success_threshold;
};

// Throws std::invalid_argument on out-of-range fields.
void validate_pld_config(const PLDConfig& config);

double temperature(int k, double t0, double gamma);

struct PldStepResult {
  EditStrength delta;
  std::vector<double> noise;      // realized standard-normal draw
  bool gradient_discarded = false;  // non-finite gradient replaced by zero
};

PldStepResult pld_step(const EditStrength& delta, const std::vector<double>& gradient,
                       double eta, double temp, Rng& rng);

struct GumbelSample {
  Mat soft;               // T x V rows summing to 1
  std::vector<int> hard;  // argmax per row; straight-through consumers treat it as soft
  double gumbel_temperature = 1.0;
};

GumbelSample gumbel_soft_sample(const Mat& logits, double tau_gumbel, Rng& rng);

struct InitCandidate {
  int concept_index = 0;
  EditStrength delta;
  std::string prompt;
  double objective = std::numeric_limits<double>::infinity();
  bool objective_flagged = false;  // non-finite value mapped to +inf
};

// Evaluates every single-concept vertex and returns the config.num_inits
// best by objective, ties broken by lower concept index. Decoder failures
// exclude a concept; if every concept fails, throws the last oracle_error.
std::vector<InitCandidate> single_concept_init(const EditDictionary& dictionary,
                                               const OracleBundle& oracles,
                                               const PLDConfig& config,
                                               QueryCount* queries = nullptr,
                                               std::vector<std::string>* diagnostics = nullptr);

struct AttackContext {
  const EditDictionary* dictionary = nullptr;
  const OracleBundle* oracles = nullptr;
  const PLDConfig* config = nullptr;
  const QuestionRecord* x0 = nullptr;
  std::string current_prompt;
  QueryCount* queries = nullptr;
  std::vector<std::string>* flags = nullptr;
};

// Zero gradients (with a recorded flag) stand in for oracle faults, matching
// the safeguard's discard semantics.
std::vector<double> estimate_gradient(const EditStrength& delta, AttackContext& context,
                                      gradient_mode mode);

struct IterationRecord {
  int candidate_rank = 0;
  int concept_index = 0;
  int iteration = 0;
  std::vector<double> delta;
  std::string prompt;
  double objective = std::numeric_limits<double>::infinity();
  int se_verdict = 0;
  bool se_parse_failed = false;
  bool se_from_cache = false;
  double temp = 0.0;
  std::vector<double> noise;
  bool gradient_discarded = false;
  std::vector<std::string> flags;
};

struct AttackTrace {
  std::vector<IterationRecord> iterations;
  std::optional<EditStrength> best_delta;
  double best_objective = std::numeric_limits<double>::infinity();
  std::string best_prompt;
  std::uint64_t seed = 0;
  double budget = 1.0;
  // Campaigns stamp the run configuration hash here before persisting.
  std::string config_hash;
  QueryCount queries;
  std::vector<std::string> flags;
  bool completed = true;
  // Cursor for post-mortem resumption when an oracle outage cut the run short.
  int resume_candidate = 0;
  int resume_iteration = 0;
};

AttackTrace run_attack(const QuestionRecord& x0, const EditDictionary& dictionary,
                       const OracleBundle& oracles, const PLDConfig& config,
                       std::uint64_t rng_seed);

// Append-only JSONL: one header line, one line per iteration, one summary
// line. A missing summary marks an interrupted run.
void save_trace(const AttackTrace& trace, const std::filesystem::path& path);
AttackTrace load_trace(const std::filesystem::path& path);

} // namespace sled
